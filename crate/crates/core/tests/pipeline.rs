use mfair::dataset::{write_continent_map, write_interactions_tsv, Format};
use mfair::harness::{compare_runs, prepare, run_experiment, run_prepared, write_outputs, DataSummary, ExperimentConfig};
use mfair::metrics::{Aggregation, BiasReport};
use mfair::mitigation::mitigate_two_phase;
use mfair::recommenders::{read_lists_tsv, Algorithm};
use mfair::testkit::{synth_dataset, SynthSpec};

fn small_spec() -> SynthSpec {
    SynthSpec {
        n_users: 80,
        n_items: 120,
        ratings_per_user: 25,
        ..Default::default()
    }
}

fn config_on_disk(dir: &std::path::Path) -> ExperimentConfig {
    let (set, map) = synth_dataset(&small_spec()).unwrap();
    let (ratings, continents) = (dir.join("ratings.tsv"), dir.join("continents.tsv"));
    write_interactions_tsv(&set, &ratings).unwrap();
    write_continent_map(&map, &continents).unwrap();
    let mut config = ExperimentConfig::new(ratings, Format::GenericTsv, continents);
    config.n = 50;
    config.k = 10;
    config
}

#[test]
fn mitigation_lowers_geographic_bias_on_synthetic_data() {
    let (set, map) = synth_dataset(&small_spec()).unwrap();
    let mut config = ExperimentConfig::new("synthetic", Format::GenericTsv, "synthetic");
    config.n = 50;
    config.k = 10;
    let prepared = prepare(&set, &map, &config, DataSummary::default()).unwrap();
    let out = run_prepared(&prepared, &config).unwrap();
    let (v, m) = (&out.report.vanilla, out.report.mitigated());
    assert!(m.total_bs.continent_vb <= v.total_bs.continent_vb);
    assert!(m.total_bs.continent_eb <= v.total_bs.continent_eb);
    assert_eq!(out.report.phases.len(), 2);
}

#[test]
fn file_backed_runs_compare_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_on_disk(dir.path());
    config.eps = 0.0;
    let geo_only = run_experiment(&config).unwrap();
    config.eps = 1.0;
    let penalized = run_experiment(&config).unwrap();
    let cmp = compare_runs(&geo_only, &penalized).unwrap();
    let row = cmp.row("pop_vb", "total").unwrap();
    assert!((row.delta - (row.b - row.a)).abs() < 1e-12);
    assert!(cmp.render().contains("pop_vb"));

    config.k = 5;
    let other = run_experiment(&config).unwrap();
    assert!(compare_runs(&penalized, &other).is_err());
}

#[test]
fn saved_lists_reproduce_the_mitigated_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_on_disk(dir.path());
    config.algorithm = Algorithm::ItemKnn;
    let (data, map, summary) = mfair::harness::load(&config).unwrap();
    let prepared = prepare(&data, &map, &config, summary).unwrap();
    let out = run_prepared(&prepared, &config).unwrap();
    let results = dir.path().join("out");
    write_outputs(&out, &results, true).unwrap();
    for name in ["report.json", "report.csv", "plotdata.csv", "timings.json"] {
        assert!(results.join(name).exists(), "{name} missing");
    }

    let vanilla = read_lists_tsv(results.join("vanilla.tsv")).unwrap();
    assert_eq!(vanilla, out.vanilla);
    let (again, _) = mitigate_two_phase(&vanilla, &prepared.catalog, &prepared.targets, &config.mitigation()).unwrap();
    assert_eq!(again, read_lists_tsv(results.join("mitigated.tsv")).unwrap());
    let report = BiasReport::compute(&again, &prepared.catalog, &prepared.targets, Some(&prepared.test), config.k, Aggregation::PerUser).unwrap();
    assert_eq!(&report, out.report.mitigated());
}
