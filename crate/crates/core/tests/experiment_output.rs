use haarfit::experiment::{
    emit_table, read_table, run_experiment, ExperimentConfig, TableFormat, RECORDS_SCHEMA,
};
use haarfit::kaczmarz::{fit, FitConfig};
use haarfit::sampling::{derive_seed, uniform_samples};

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        dim: 2,
        m_range: [3, 6],
        test_points: 20_000,
        fbm_levels: 10,
        seed: 17,
        ..ExperimentConfig::default()
    }
}

#[test]
fn json_output_validates_against_schema() {
    let records = run_experiment(&small_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.json");
    emit_table(&records, TableFormat::Json, &path).unwrap();
    let instance: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let schema: serde_json::Value = serde_json::from_str(RECORDS_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    assert!(validator.is_valid(&instance));

    let mut broken = instance.clone();
    broken[0]["err2"] = serde_json::json!(-1.0);
    assert!(!validator.is_valid(&broken));
    let mut extra = instance;
    extra[0]["note"] = serde_json::json!("x");
    assert!(!validator.is_valid(&extra));
}

#[test]
fn same_seed_and_config_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for format in [TableFormat::Csv, TableFormat::Json] {
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        emit_table(&run_experiment(&small_config()).unwrap(), format, &a).unwrap();
        emit_table(&run_experiment(&small_config()).unwrap(), format, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let back = read_table(format, std::fs::File::open(&a).unwrap()).unwrap();
        assert_eq!(back, run_experiment(&small_config()).unwrap());
    }
    let other = ExperimentConfig {
        seed: 18,
        ..small_config()
    };
    assert_ne!(
        run_experiment(&other).unwrap(),
        run_experiment(&small_config()).unwrap()
    );
}

#[test]
fn integral_error_matches_closed_form_contract() {
    let cfg = small_config();
    let records = run_experiment(&cfg).unwrap();
    let f = cfg.test_function().unwrap();
    let exact = f.exact_integral();
    for r in &records {
        // Rebuild the fit the harness performs at this scale.
        let fit_cfg = FitConfig {
            c1: cfg.c1,
            seed: derive_seed(cfg.seed, 1000 + r.m as u64),
            ..FitConfig::default()
        };
        let model = fit(
            uniform_samples(|x| f.eval_unchecked(x), cfg.dim, fit_cfg.seed),
            cfg.dim,
            r.m,
            &fit_cfg,
        )
        .unwrap();
        assert_eq!(model.weights.len() as u64, r.p);
        assert_eq!(r.err_int, (exact - model.integrate()).abs() / exact.abs());
    }
}

#[test]
fn emit_reports_path_on_failure() {
    let records = run_experiment(&ExperimentConfig {
        m_range: [3, 3],
        ..small_config()
    })
    .unwrap();
    let err = emit_table(&records, TableFormat::Csv, "/nonexistent-dir/table.csv").unwrap_err();
    assert!(
        err.to_string().contains("/nonexistent-dir/table.csv"),
        "{err}"
    );
}

#[test]
fn experiment_errors_decrease_with_scale() {
    let records = run_experiment(&ExperimentConfig {
        m_range: [3, 8],
        ..small_config()
    })
    .unwrap();
    assert!(
        records.windows(2).filter(|w| w[1].err2 > w[0].err2).count() <= 1,
        "{records:?}"
    );
    assert!(records.iter().all(|r| r.err_int <= r.err2));
}
