use qap_sdr::formulation::SdrVariant;
use qap_sdr::harness::{
    aggregate, read_csv_file, run_sweep, to_csv_string, write_csv_file, SweepConfig,
};
use qap_sdr::instance::{generate, ModelKind, ModelMeta};
use qap_sdr::io::{read_instance, write_instance};

fn config(kind: ModelKind) -> SweepConfig {
    let mut meta = ModelMeta::custom();
    meta.kind = kind;
    meta.lambda_profile = match kind {
        ModelKind::CorrelatedWigner => None,
        _ => Some(vec![1.0, 2.0, 3.0, 4.0]),
    };
    let mut cfg = SweepConfig::new(meta);
    cfg.n = 4;
    cfg.sigma_grid = vec![0.0, 0.1, 0.3];
    cfg.trials_per_sigma = 3;
    cfg.master_seed = 42;
    cfg
}

#[test]
fn sweep_is_byte_deterministic_across_threads() {
    let mut cfg = config(ModelKind::DiagGaussian);
    cfg.threads = Some(1);
    let one = to_csv_string(&run_sweep(&cfg).unwrap()).unwrap();
    cfg.threads = Some(3);
    let three = to_csv_string(&run_sweep(&cfg).unwrap()).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.lines().count(), 1 + 9);
}

#[test]
fn warm_start_keeps_outcomes() {
    let mut cfg = config(ModelKind::DiagPlusWigner);
    let cold = run_sweep(&cfg).unwrap();
    cfg.warm_start = true;
    let warm = run_sweep(&cfg).unwrap();
    for (c, w) in cold.iter().zip(&warm) {
        assert_eq!((c.sigma, c.trial, c.seed), (w.sigma, w.trial, w.seed));
        assert_eq!(c.exact, w.exact);
        assert!((c.corr - w.corr).abs() < 1e-3);
    }
}

#[test]
fn noise_free_rows_are_exact_and_certified() {
    for kind in [ModelKind::DiagGaussian, ModelKind::CorrelatedWigner] {
        for sdr in [SdrVariant::I, SdrVariant::II] {
            let mut cfg = config(kind);
            cfg.sdr_variant = sdr;
            cfg.sigma_grid = vec![0.0];
            let records = run_sweep(&cfg).unwrap();
            assert!(
                records
                    .iter()
                    .all(|r| r.exact && r.solver_status == "solved"),
                "{kind:?} {sdr}"
            );
            if kind == ModelKind::DiagGaussian {
                assert!(records.iter().all(|r| r.condition_holds));
            }
            assert_eq!(aggregate(&records)[0].rate, 1.0);
        }
    }
}

#[test]
fn csv_and_instance_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_sweep(&config(ModelKind::DiagGaussian)).unwrap();
    let path = dir.path().join("s.csv");
    write_csv_file(&records, &path).unwrap();
    assert_eq!(read_csv_file(&path).unwrap(), records);

    let mut meta = ModelMeta::custom();
    meta.kind = ModelKind::CorrelatedWigner;
    meta.sigma = 0.3;
    meta.seed = 5;
    let inst = generate(&meta, 5).unwrap();
    let ipath = dir.path().join("i.json");
    write_instance(&inst, &ipath).unwrap();
    let back = read_instance(&ipath).unwrap();
    assert_eq!(back.a, inst.a);
    assert_eq!(back.c, inst.c);
    assert_eq!(back.truth, inst.truth);
}

#[test]
fn config_json_defaults_and_rejections() {
    let cfg = SweepConfig::from_json(r#"{"model":{"kind":"correlated_wigner"}}"#).unwrap();
    assert_eq!(cfg.n, 10);
    assert_eq!(cfg.trials_per_sigma, 20);
    assert_eq!(cfg.sigma_grid.len(), 21);
    for bad in [
        r#"{"model":{"kind":"custom"}}"#,
        r#"{"model":{"kind":"diag_gaussian"},"trials_per_sigma":0}"#,
        r#"{"model":{"kind":"diag_gaussian"},"sigma_grid":[-0.1]}"#,
        r#"{"model":{"kind":"diag_gaussian"},"threads":0}"#,
        r#"{"model":{"kind":"diag_gaussian","lambda_profile":[1,2]},"n":4}"#,
    ] {
        assert!(SweepConfig::from_json(bad).is_err(), "{bad}");
    }
}
