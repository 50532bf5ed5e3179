use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mfair::dataset::{write_interactions_tsv, FilterMode, Format, TargetMode, DEFAULT_TRAIN_FRACTION};
use mfair::harness::{
    compare_runs, load, prepare, run_experiment, ExperimentConfig, Prepared, RunReport,
};
use mfair::metrics::{Aggregation, BiasReport};
use mfair::mitigation::{mitigate_two_phase, Phases};
use mfair::recommenders::{read_lists_tsv, recommend, write_lists_tsv, Algorithm, RecommenderParams};

#[derive(Parser)]
#[command(name = "mfair", version, about = "Measure and mitigate geographic and popularity bias in recommendation lists")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, filter and split a dataset; print counts and target shares.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Directory for train.tsv, test.tsv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce vanilla top-n lists.
    Recommend {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 150)]
        topn: usize,
        /// Output list file (TSV).
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-rank a list file.
    Mitigate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        rerank: RerankArgs,
        /// Input list file (TSV).
        #[arg(long)]
        lists: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure bias and NDCG of a list file.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lists: PathBuf,
        #[arg(long, default_value_t = 20)]
        topk: usize,
        #[arg(long, default_value = "per_user")]
        aggregation: Aggregation,
        /// Write the report as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: ingest, recommend, mitigate, evaluate, report.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        rerank: RerankArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write vanilla.tsv and mitigated.tsv.
        #[arg(long)]
        save_lists: bool,
    },
    /// Compare two report.json files (b relative to a).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write the comparison as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// movielens_dat, bookcrossing_csv or generic_tsv.
    #[arg(long)]
    format: Format,
    /// Continent sidecar: item<TAB>CODE[,CODE...].
    #[arg(long)]
    continents: PathBuf,
    /// item or rating.
    #[arg(long, default_value = "item")]
    target: TargetMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    /// Drop users and items with fewer ratings (1 keeps everything).
    #[arg(long, default_value_t = 1)]
    min_ratings: usize,
    /// Iterate the activity filter to a fixed point.
    #[arg(long)]
    k_core: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// mostpop, random, userknn, itemknn, biasedmf or bpr.
    #[arg(long, default_value = "mostpop")]
    algo: Algorithm,
    #[arg(long, default_value_t = 50)]
    k_neighbors: usize,
    #[arg(long, default_value_t = 10)]
    factors: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    reg: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Pad short KNN lists with popular items.
    #[arg(long)]
    backfill: bool,
}

#[derive(Args)]
struct RerankArgs {
    #[arg(long, default_value_t = 150)]
    topn: usize,
    #[arg(long, default_value_t = 20)]
    topk: usize,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    /// visibility, exposure or both.
    #[arg(long, default_value = "both")]
    phases: Phases,
    /// Also re-check the demoted item before applying a swap.
    #[arg(long)]
    strict: bool,
    /// per_user or pooled.
    #[arg(long, default_value = "per_user")]
    aggregation: Aggregation,
}

impl DataArgs {
    fn config(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(&self.dataset, self.format, &self.continents);
        c.target_mode = self.target;
        c.seed = self.seed;
        c.train_fraction = self.train_fraction;
        c.min_ratings = self.min_ratings;
        c.filter_mode = if self.k_core {
            FilterMode::IterativeCore
        } else {
            FilterMode::SinglePass
        };
        c
    }

    fn prepare(&self, config: &ExperimentConfig) -> Result<Prepared> {
        let (data, continents, summary) = load(config)?;
        Ok(prepare(&data, &continents, config, summary)?)
    }
}

impl ModelArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.algorithm = self.algo;
        c.params = RecommenderParams {
            k_neighbors: self.k_neighbors,
            factors: self.factors,
            lr: self.lr,
            reg: self.reg,
            epochs: self.epochs,
            backfill: self.backfill,
        };
    }
}

impl RerankArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.n = self.topn;
        c.k = self.topk;
        c.eps = self.eps;
        c.phases = self.phases;
        c.strict = self.strict;
        c.aggregation = self.aggregation;
    }
}

fn write_json(path: &PathBuf, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { data, out } => {
            let config = data.config();
            let p = data.prepare(&config)?;
            let summary = json!({ "data": p.data, "targets": p.targets });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(dir) = out {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_interactions_tsv(&p.train, dir.join("train.tsv"))?;
                write_interactions_tsv(&p.test, dir.join("test.tsv"))?;
                write_json(&dir.join("summary.json"), &summary)?;
            }
        }
        Command::Recommend { data, model, topn, out } => {
            let mut config = data.config();
            model.apply(&mut config);
            let p = data.prepare(&config)?;
            let (lists, _) = recommend(config.algorithm, &p.train, &p.catalog, topn, config.seed, &config.params)
                .map_err(|e| e.in_stage("recommend"))?;
            write_lists_tsv(&lists, &out).map_err(|e| e.in_stage("report"))?;
            eprintln!("wrote {} lists to {}", lists.len(), out.display());
        }
        Command::Mitigate { data, rerank, lists, out } => {
            let mut config = data.config();
            rerank.apply(&mut config);
            let p = data.prepare(&config)?;
            let all = read_lists_tsv(&lists).map_err(|e| e.in_stage("load"))?;
            let total = all.len();
            let kept: Vec<_> = all.into_iter().filter(|l| l.len() >= config.k).collect();
            let (mitigated, stats) = mitigate_two_phase(&kept, &p.catalog, &p.targets, &config.mitigation())
                .map_err(|e| e.in_stage("mitigate"))?;
            write_lists_tsv(&mitigated, &out).map_err(|e| e.in_stage("report"))?;
            for s in &stats {
                eprintln!("{} phase: {} candidates, {} swaps applied", s.bias_type, s.candidates, s.applied.len());
            }
            if kept.len() < total {
                eprintln!("skipped {} lists shorter than k = {}", total - kept.len(), config.k);
            }
        }
        Command::Evaluate { data, lists, topk, aggregation, out } => {
            let config = data.config();
            let p = data.prepare(&config)?;
            let lists: Vec<_> = read_lists_tsv(&lists)
                .map_err(|e| e.in_stage("load"))?
                .into_iter()
                .filter(|l| l.len() >= topk)
                .collect();
            let report = BiasReport::compute(&lists, &p.catalog, &p.targets, Some(&p.test), topk, aggregation)
                .map_err(|e| e.in_stage("evaluate"))?;
            match out {
                Some(path) => write_json(&path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Run { data, model, rerank, out, save_lists } => {
            let mut config = data.config();
            model.apply(&mut config);
            rerank.apply(&mut config);
            config.out = Some(out.clone());
            config.save_lists = save_lists;
            let report = run_experiment(&config)?;
            let (v, m) = (&report.vanilla.total_bs, &report.mitigated().total_bs);
            println!("lists: {} ({} short lists dropped), swaps applied: {}", report.lists, report.short_lists_dropped, report.applied_swaps);
            println!("total continent VB {:.4} -> {:.4}, EB {:.4} -> {:.4}", v.continent_vb, m.continent_vb, v.continent_eb, m.continent_eb);
            println!("total popularity VB {:.4} -> {:.4}, EB {:.4} -> {:.4}", v.pop_vb, m.pop_vb, v.pop_eb, m.pop_eb);
            if let (Some(a), Some(b)) = (report.vanilla.ndcg, report.mitigated().ndcg) {
                println!("NDCG@{} {:.4} -> {:.4}", config.k, a, b);
            }
            println!("reports written to {}", out.display());
        }
        Command::Compare { a, b, out } => {
            let read = |p: &PathBuf| -> Result<RunReport> {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            };
            let cmp = compare_runs(&read(&a)?, &read(&b)?)?;
            print!("{}", cmp.render());
            if let Some(path) = out {
                write_json(&path, &cmp)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::FAILURE
        }
    }
}
