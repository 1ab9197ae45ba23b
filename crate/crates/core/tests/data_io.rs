mod common;

use fedkd::bench::{ExperimentConfig, MetricsRecord};
use fedkd::datagen::{build_federation, load_csv, write_csv, DatasetConfig, LabeledSet};
use fedkd::numerics::Matrix;
use proptest::prelude::*;

#[test]
fn generated_federation_survives_csv_round_trip() {
    let data = build_federation(&DatasetConfig::default(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (i, set) in data.clients.iter().enumerate() {
        let path = dir.path().join(format!("client{i}.csv"));
        write_csv(set, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.labels, set.labels);
        assert_eq!(back.domain_ids, set.domain_ids);
        assert!(back.features.max_abs_diff(&set.features).unwrap() <= 1e-9);
    }
}

#[test]
fn shipped_configs_round_trip_through_toml() {
    for name in [
        "cross_silo.toml",
        "cross_device.toml",
        "hetero.toml",
        "ablation.toml",
        "probe_domains.toml",
        "probe_overlap.toml",
        "comm.toml",
    ] {
        let cfg = common::config(name);
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg, "{name}");
        assert_eq!(back.hash(), cfg.hash(), "{name}");
    }
}

#[test]
fn metrics_lines_parse_back() {
    let cfg = ExperimentConfig::from_toml_str(
        "[experiment]\nname = \"io\"\nseeds = [0]\narms = [\"fedd3a\"]\n[federation]\nrounds = 2\n[dataset]\nclient_n = 60\nserver_n = 60\ntest_n = 30\n",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = fedkd::bench::RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        quiet: true,
    };
    let out = fedkd::bench::run_experiment(&cfg, &opts).unwrap();
    let text = std::fs::read_to_string(dir.path().join("io/metrics.jsonl")).unwrap();
    let parsed: Vec<MetricsRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, out.records);
    assert_eq!(parsed.len(), 2);
    let summary = std::fs::read_to_string(dir.path().join("io/summary.csv")).unwrap();
    assert!(summary.starts_with("row,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn arbitrary_sets_round_trip(
        values in prop::collection::vec(-1e6f64..1e6, 1..60),
        d in 1usize..6,
        seed in any::<u64>(),
    ) {
        let n = values.len() / d;
        prop_assume!(n > 0);
        let features = Matrix::from_vec(n, d, values[..n * d].to_vec()).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| ((seed >> (i % 60)) % 3) as usize).collect();
        let domains: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let set = LabeledSet::new(features, labels, domains, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_csv(&set, &path).unwrap();
        let back = load_csv(&path).unwrap();
        prop_assert_eq!(&back.labels, &set.labels);
        prop_assert_eq!(&back.domain_ids, &set.domain_ids);
        let scale = set.features.max_abs().max(1.0);
        prop_assert!(back.features.max_abs_diff(&set.features).unwrap() <= 1e-9 * scale);
    }
}
