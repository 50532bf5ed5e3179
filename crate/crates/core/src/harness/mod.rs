//! End-to-end experiment runs: load, split, recommend, mitigate, measure.

mod report;

pub use report::{
    compare_runs, emit_report, parse_report_csv, report_rows, Comparison, ComparisonRow, CsvRow, ReportFormat,
};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_catalog, filter_k_core, filter_min_activity, load_continent_map, parse_interactions, split_train_test,
    ContinentMap, FilterMode, Format, InteractionSet, ItemCatalog, TargetDistribution, TargetMode,
    DEFAULT_TRAIN_FRACTION,
};
use crate::error::{Error, Result};
use crate::metrics::{Aggregation, BiasReport, BiasType};
use crate::mitigation::{mitigate_two_phase, MitigationConfig, Phases};
use crate::recommenders::{recommend, write_lists_tsv, Algorithm, FitReport, RecommendationList, RecommenderParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub format: Format,
    pub continents: PathBuf,
    pub algorithm: Algorithm,
    pub target_mode: TargetMode,
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub phases: Phases,
    pub out: Option<PathBuf>,
    pub train_fraction: f64,
    /// 1 disables activity filtering.
    pub min_ratings: usize,
    pub filter_mode: FilterMode,
    pub params: RecommenderParams,
    pub aggregation: Aggregation,
    pub strict: bool,
    /// Also write vanilla and mitigated lists as TSV.
    pub save_lists: bool,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>, format: Format, continents: impl Into<PathBuf>) -> Self {
        let m = MitigationConfig::default();
        Self {
            dataset: dataset.into(),
            format,
            continents: continents.into(),
            algorithm: Algorithm::MostPop,
            target_mode: m.target_mode,
            n: m.n,
            k: m.k,
            eps: m.eps,
            seed: 0,
            phases: m.phases,
            out: None,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            min_ratings: 1,
            filter_mode: FilterMode::SinglePass,
            params: RecommenderParams::default(),
            aggregation: m.aggregation,
            strict: m.strict,
            save_lists: false,
        }
    }

    pub fn mitigation(&self) -> MitigationConfig {
        MitigationConfig {
            k: self.k,
            n: self.n,
            eps: self.eps,
            target_mode: self.target_mode,
            phases: self.phases,
            strict: self.strict,
            aggregation: self.aggregation,
        }
    }

    pub fn info(&self) -> RunInfo {
        RunInfo {
            dataset: self.dataset.display().to_string(),
            format: self.format,
            algorithm: self.algorithm,
            target_mode: self.target_mode,
            n: self.n,
            k: self.k,
            eps: self.eps,
            seed: self.seed,
            phases: self.phases,
            train_fraction: self.train_fraction,
            min_ratings: self.min_ratings,
            filter_mode: self.filter_mode,
            aggregation: self.aggregation,
            strict: self.strict,
        }
    }
}

/// The configuration facts a report carries, used to check comparability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub dataset: String,
    pub format: Format,
    pub algorithm: Algorithm,
    pub target_mode: TargetMode,
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub phases: Phases,
    pub train_fraction: f64,
    pub min_ratings: usize,
    pub filter_mode: FilterMode,
    pub aggregation: Aggregation,
    pub strict: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub malformed: usize,
    pub implicit_skipped: usize,
    pub duplicates: usize,
    pub train_ratings: usize,
    pub test_ratings: usize,
    pub catalog_items: usize,
    pub dropped_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub bias_type: BiasType,
    pub candidates: usize,
    pub applied_swaps: usize,
    pub discarded: usize,
    pub penalty_applications: usize,
    pub report: BiasReport,
}

/// Seconds spent per stage. Kept out of the report so reports stay
/// byte-identical across runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub recommend: f64,
    pub mitigate: f64,
    pub evaluate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub info: RunInfo,
    pub data: DataSummary,
    pub targets: TargetDistribution,
    pub fit: FitReport,
    pub lists: usize,
    /// Lists shorter than k, left out of mitigation and measurement.
    pub short_lists_dropped: usize,
    pub vanilla: BiasReport,
    pub phases: Vec<PhaseReport>,
    pub applied_swaps: usize,
    #[serde(skip)]
    pub timings: Timings,
}

impl RunReport {
    /// The report after the last phase, or the vanilla one if no phase ran.
    pub fn mitigated(&self) -> &BiasReport {
        self.phases.last().map_or(&self.vanilla, |p| &p.report)
    }
}

/// Train/test split with the catalog and targets derived from it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: InteractionSet,
    pub test: InteractionSet,
    pub catalog: ItemCatalog,
    pub targets: TargetDistribution,
    pub data: DataSummary,
}

/// Filters, splits and derives the catalog and target distributions.
pub fn prepare(
    data: &InteractionSet,
    continents: &ContinentMap,
    config: &ExperimentConfig,
    mut summary: DataSummary,
) -> Result<Prepared> {
    let filtered = match (config.min_ratings, config.filter_mode) {
        (0 | 1, _) => data.clone(),
        (m, FilterMode::SinglePass) => filter_min_activity(data, m).map_err(|e| e.in_stage("filter"))?.0,
        (m, FilterMode::IterativeCore) => filter_k_core(data, m).map_err(|e| e.in_stage("filter"))?.0,
    };
    let (train, test) =
        split_train_test(&filtered, config.train_fraction, config.seed).map_err(|e| e.in_stage("split"))?;
    let catalog = build_catalog(&train, continents).map_err(|e| e.in_stage("catalog"))?;
    let targets =
        TargetDistribution::compute(&train, &catalog, config.target_mode).map_err(|e| e.in_stage("targets"))?;
    summary.users = filtered.users().len();
    summary.items = filtered.items().len();
    summary.ratings = filtered.len();
    summary.train_ratings = train.len();
    summary.test_ratings = test.len();
    summary.catalog_items = catalog.len();
    summary.dropped_items = catalog.dropped().len();
    Ok(Prepared {
        train,
        test,
        catalog,
        targets,
        data: summary,
    })
}

/// Reads the rating file and continent sidecar named in the config.
pub fn load(config: &ExperimentConfig) -> Result<(InteractionSet, ContinentMap, DataSummary)> {
    let parsed = parse_interactions(&config.dataset, config.format).map_err(|e| e.in_stage("load"))?;
    let continents = load_continent_map(&config.continents).map_err(|e| e.in_stage("load"))?;
    let summary = DataSummary {
        malformed: parsed.malformed,
        implicit_skipped: parsed.implicit_skipped,
        duplicates: parsed.duplicates,
        ..Default::default()
    };
    Ok((parsed.set, continents, summary))
}

/// Everything a run produces, including the lists themselves.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub vanilla: Vec<RecommendationList>,
    pub mitigated: Vec<RecommendationList>,
}

/// Recommends, mitigates and measures on prepared data.
pub fn run_prepared(prepared: &Prepared, config: &ExperimentConfig) -> Result<RunOutput> {
    let mitigation = config.mitigation();
    mitigation.validate().map_err(|e| e.in_stage("config"))?;
    let mut timings = Timings::default();

    let t = Instant::now();
    let (lists, fit) = recommend(
        config.algorithm,
        &prepared.train,
        &prepared.catalog,
        config.n,
        config.seed,
        &config.params,
    )
    .map_err(|e| e.in_stage("recommend"))?;
    timings.recommend = t.elapsed().as_secs_f64();
    let total = lists.len();
    let vanilla: Vec<RecommendationList> = lists.into_iter().filter(|l| l.len() >= config.k).collect();
    if vanilla.is_empty() {
        return Err(Error::Empty(format!("no list reaches k = {}", config.k)).in_stage("recommend"));
    }

    let t = Instant::now();
    let (mitigated, stats) = mitigate_two_phase(&vanilla, &prepared.catalog, &prepared.targets, &mitigation)
        .map_err(|e| e.in_stage("mitigate"))?;
    timings.mitigate = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let evaluate = |lists: &[RecommendationList]| {
        BiasReport::compute(
            lists,
            &prepared.catalog,
            &prepared.targets,
            Some(&prepared.test),
            config.k,
            config.aggregation,
        )
        .map_err(|e| e.in_stage("evaluate"))
    };
    let vanilla_report = evaluate(&vanilla)?;
    // rebuild intermediate lists phase by phase to measure each one
    let mut phases = Vec::with_capacity(stats.len());
    let mut current = vanilla.clone();
    for s in &stats {
        for swap in &s.applied {
            current[swap.list_index].entries.swap(swap.down.pos - 1, swap.up.pos - 1);
        }
        phases.push(PhaseReport {
            bias_type: s.bias_type,
            candidates: s.candidates,
            applied_swaps: s.applied.len(),
            discarded: s.discarded,
            penalty_applications: s.penalty_applications,
            report: evaluate(&current)?,
        });
    }
    debug_assert_eq!(current, mitigated);
    timings.evaluate = t.elapsed().as_secs_f64();

    let report = RunReport {
        info: config.info(),
        data: prepared.data.clone(),
        targets: prepared.targets.clone(),
        fit,
        lists: vanilla.len(),
        short_lists_dropped: total - vanilla.len(),
        vanilla: vanilla_report,
        applied_swaps: phases.iter().map(|p| p.applied_swaps).sum(),
        phases,
        timings,
    };
    Ok(RunOutput {
        report,
        vanilla,
        mitigated,
    })
}

/// Runs the full pipeline from files and, when `out` is set, writes
/// `report.json`, `report.csv`, `plotdata.csv` and `timings.json` there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let t = Instant::now();
    let (data, continents, summary) = load(config)?;
    let prepared = prepare(&data, &continents, config, summary)?;
    let load_secs = t.elapsed().as_secs_f64();
    let mut output = run_prepared(&prepared, config)?;
    output.report.timings.load = load_secs;
    if let Some(dir) = &config.out {
        write_outputs(&output, dir, config.save_lists).map_err(|e| e.in_stage("report"))?;
    }
    Ok(output.report)
}

pub fn write_outputs(output: &RunOutput, dir: &Path, save_lists: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::PlotData] {
        emit_report(&output.report, format, dir)?;
    }
    let path = dir.join("timings.json");
    fs::write(&path, serde_json::to_string_pretty(&output.report.timings)?)
        .map_err(|source| Error::Write { path, source })?;
    if save_lists {
        write_lists_tsv(&output.vanilla, dir.join("vanilla.tsv"))?;
        write_lists_tsv(&output.mitigated, dir.join("mitigated.tsv"))?;
    }
    Ok(())
}
