use super::*;
use crate::config::parse_config;

fn settings(pairs: &[(&str, &str)]) -> Settings {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn catalog_has_every_experiment_once() {
    let list = list_experiments();
    assert_eq!(list.len(), 14);
    for e in Experiment::ALL {
        assert_eq!(Experiment::parse(e.name()).unwrap(), e);
        assert!(!e.anchor().is_empty());
        assert!(!e.description().is_empty());
    }
    let mut names: Vec<_> = list.iter().map(|c| c.name).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 14);
    assert!(matches!(Experiment::parse("nope"), Err(Error::UnknownExperiment(_))));
}

#[test]
fn defaults_are_sorted_and_parse() {
    for e in Experiment::ALL {
        let keys = e.keys();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{}", e.name());
        let spec = ExperimentSpec::with_overrides(e, &[]).unwrap();
        assert_eq!(spec.settings.len(), keys.len());
        assert_eq!(spec.workers, 1);
        assert_eq!(spec.out, PathBuf::from("out"));
    }
}

#[test]
fn later_layers_win() {
    let file = settings(&[("experiment", "extinction"), ("seed", "5"), ("particles", "300")]);
    let env = vec![
        ("SBMLAB_SEED".to_string(), "6".to_string()),
        ("SBMLAB_DT".to_string(), "1e-4".to_string()),
        ("SBMLAB_TOL_ABS".to_string(), "0.05".to_string()),
        ("UNRELATED".to_string(), "x".to_string()),
    ];
    let flags = settings(&[("seed", "7"), ("workers", "3")]);
    let spec = resolve_layers(vec![file], env, flags).unwrap();
    assert_eq!(spec.experiment, Experiment::Extinction);
    assert_eq!(spec.settings["seed"], "7");
    assert_eq!(spec.settings["dt"], "1e-4");
    assert_eq!(spec.settings["particles"], "300");
    assert_eq!(spec.settings["tol.abs"], "0.05");
    assert_eq!(spec.settings["replicates"], "10000");
    assert_eq!(spec.workers, 3);
}

#[test]
fn experiment_from_env_or_file() {
    let env = vec![("SBMLAB_EXPERIMENT".to_string(), "pde".to_string())];
    let spec = resolve_layers(vec![], env, Settings::new()).unwrap();
    assert_eq!(spec.experiment, Experiment::Pde);
    let a = settings(&[("experiment", "pde")]);
    let b = settings(&[("experiment", "qvar")]);
    assert_eq!(resolve_layers(vec![a, b], vec![], Settings::new()).unwrap().experiment, Experiment::Qvar);
    assert!(resolve_layers(vec![], vec![], Settings::new()).is_err());
}

#[test]
fn bad_settings_are_config_errors() {
    let cases: [&[(&str, &str)]; 5] = [
        &[("experiment", "pde"), ("seed", "1")],
        &[("experiment", "extinction"), ("workers", "0")],
        &[("experiment", "extinction"), ("replicates", "0")],
        &[("experiment", "extinction"), ("workers", "two")],
        &[("experiment", "warp")],
    ];
    for c in cases {
        let e = ExperimentSpec::resolve(&[settings(c)]).unwrap_err();
        assert_eq!(error_exit_code(&e), 4, "{c:?}: {e}");
    }
}

#[test]
fn getters_validate() {
    let spec = ExperimentSpec::with_overrides(
        Experiment::Exponent,
        &[("window", "0.3,0.04"), ("particles", "0"), ("dt", "-1"), ("trend", "maybe")],
    )
    .unwrap();
    assert!(spec.range("window").is_err());
    assert!(spec.count("particles").is_err());
    assert!(spec.positive("dt").is_err());
    assert!(spec.bool("trend").is_err());
    assert_eq!(spec.range("gamma_range").unwrap(), (2.3, 3.7));
    assert_eq!(spec.leap().unwrap().kappa, 6.5);
    assert_eq!(spec.table_file("fits"), "exponent_fits.csv");
}

#[test]
fn exit_codes() {
    assert_eq!(error_exit_code(&Error::config("x")), 4);
    assert_eq!(error_exit_code(&Error::StepTooLarge { product: 1.0 }), 4);
    assert_eq!(error_exit_code(&Error::Parse { line: 1, message: "x".into() }), 4);
    let io = Error::io(Path::new("/x"), std::io::Error::other("x"));
    assert_eq!(error_exit_code(&io), 5);
    assert_eq!(error_exit_code(&Error::NoZeroLevel), 3);
    let art = |verdicts| RunArtifact {
        manifest: Manifest {
            experiment: "pde".into(),
            spec: Settings::new(),
            code_version: "0".into(),
            wall_time_s: 0.0,
            workers: 1,
            discards: BTreeMap::new(),
            tables: vec![],
            verdicts: vec![],
        },
        tables: vec![],
        verdicts,
    };
    assert_eq!(art(vec![Verdict::at_least("a", 1.0, 0.0)]).exit_code(), 0);
    assert_eq!(art(vec![Verdict::at_least("a", -1.0, 0.0)]).exit_code(), 2);
    assert_eq!(art(vec![Verdict::at_least("a", f64::NAN, 0.0)]).exit_code(), 3);
}

#[test]
fn collect_until_keeps_in_order_and_counts_discards() {
    let c = collect_until(5, 100, |i| if i % 3 == 0 { Attempt::Discard("three") } else { Attempt::Keep(i) });
    let kept: Vec<u64> = c.kept.iter().map(|k| k.1).collect();
    assert_eq!(kept, vec![1, 2, 4, 5, 7]);
    assert_eq!(c.discards["three"], 3);
    let short = collect_until(10, 6, |i| if i < 3 { Attempt::Keep(i) } else { Attempt::Discard("late") });
    assert_eq!(short.kept.len(), 3);
    assert_eq!(short.discards["late"], 3);
}

#[test]
fn collect_until_ignores_pool_size() {
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let c = collect_until(40, 400, |i| if i % 7 < 2 { Attempt::Discard("x") } else { Attempt::Keep(i * i) });
            (c.kept, c.discards)
        })
    };
    assert_eq!(run(1), run(4));
}

fn small(e: Experiment, overrides: &[(&str, &str)], workers: usize, out: &Path) -> RunArtifact {
    let mut spec = ExperimentSpec::with_overrides(e, overrides).unwrap();
    spec.workers = workers;
    spec.out = out.to_path_buf();
    run_experiment(&spec).unwrap()
}

fn csvs(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect()
}

#[test]
fn pde_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = small(Experiment::Pde, &[], 1, dir.path());
    assert_eq!(a.exit_code(), 0, "{:?}", a.verdicts);
    assert!(a.verdict("sup_error").unwrap().measured < 1e-6);
    let m = Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.experiment, "pde");
    assert_eq!(m.tables, vec!["pde_solution.csv".to_string()]);
    assert_eq!(m.verdicts.len(), a.verdicts.len());
    assert!(dir.path().join("pde_solution.csv").exists());
}

#[test]
fn worker_count_never_changes_tables() {
    let runs: [(Experiment, &[(&str, &str)]); 3] = [
        (Experiment::Extinction, &[("particles", "200"), ("dt", "1e-4"), ("replicates", "300")]),
        (Experiment::CsbpLaw, &[("replicates", "500"), ("dr", "0.01")]),
        (Experiment::RangeInterval, &[("particles", "100"), ("replicates", "20"), ("dt", "1e-3")]),
    ];
    for (e, o) in runs {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = small(e, o, 1, a.path());
        let rb = small(e, o, 4, b.path());
        assert_eq!(csvs(a.path()), csvs(b.path()), "{}", e.name());
        assert_eq!(ra.verdicts, rb.verdicts);
        assert_eq!(ra.manifest.discards, rb.manifest.discards);
    }
}

#[test]
fn manifest_reproduces_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = small(Experiment::Qvar, &[("replicates", "3"), ("seed", "9")], 1, a.path());
    let layer = ExperimentSpec::from_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
    let mut out = Settings::new();
    out.insert("out".into(), b.path().display().to_string());
    let spec = resolve_layers(vec![layer], vec![], out).unwrap();
    assert_eq!(spec.settings, first.manifest.spec);
    let second = run_experiment(&spec).unwrap();
    assert_eq!(csvs(a.path()), csvs(b.path()));
    assert_eq!(first.verdicts, second.verdicts);
}

#[test]
fn config_file_layer() {
    let file = parse_config("experiment = cluster-tail\nreplicates = 20000 # quick\nparticles = 500\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut flags = Settings::new();
    flags.insert("out".into(), dir.path().display().to_string());
    let spec = resolve_layers(vec![file], vec![], flags).unwrap();
    let a = run_experiment(&spec).unwrap();
    let v = a.verdict("cluster_tail_r1").unwrap();
    assert!(v.measured > 3.0 && v.measured < 9.0, "{v}");
    assert!(a.table("tail").is_some());
}

#[test]
fn seed_changes_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    small(Experiment::CsbpLaw, &[("replicates", "200"), ("dr", "0.01"), ("seed", "1")], 1, a.path());
    small(Experiment::CsbpLaw, &[("replicates", "200"), ("dr", "0.01"), ("seed", "2")], 1, b.path());
    assert_ne!(csvs(a.path()), csvs(b.path()));
}

#[test]
fn mean_se_of_constant() {
    assert_eq!(mean_se(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    assert!(mean_se(&[]).0.is_nan());
}
