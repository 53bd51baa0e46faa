use sbmlab::config::{parse_config, render_config};
use sbmlab::csbp::{laplace_exact, solve_exit_pde};
use sbmlab::experiments::{resolve_layers, run_experiment, Experiment, ExperimentSpec};
use sbmlab::manifest::{Manifest, MANIFEST_FILE};
use sbmlab::table::Table;
use sbmlab::verdict::Outcome;

#[test]
fn config_round_trips_through_render() {
    let s = parse_config("experiment = csbp-law\nseed = 3\nlambdas = 1,6\n").unwrap();
    assert_eq!(parse_config(&render_config(&s)).unwrap(), s);
}

#[test]
fn tables_written_by_a_run_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec =
        ExperimentSpec::with_overrides(Experiment::CsbpLaw, &[("replicates", "2000"), ("dr", "0.005")]).unwrap();
    spec.out = dir.path().to_path_buf();
    let art = run_experiment(&spec).unwrap();
    let m = Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.tables.len(), art.tables.len());
    for (file, (_, table)) in m.tables.iter().zip(&art.tables) {
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(&Table::parse(&text).unwrap(), table);
    }
    let laplace = art.table("laplace").unwrap();
    let (r, l, emp) = (
        laplace.column("level").unwrap(),
        laplace.column("lambda").unwrap(),
        laplace.column("empirical").unwrap(),
    );
    for row in &laplace.rows {
        let parse = |i: usize| row[i].parse::<f64>().unwrap();
        let exact = laplace_exact(1.0, parse(r), parse(l));
        assert!((parse(emp) - exact).abs() < 0.05, "{row:?}");
    }
}

#[test]
fn pde_matches_closed_form_through_public_api() {
    let sol = solve_exit_pde(6.0, 1.0, -5.0, 1e-12).unwrap();
    for x in [-5.0, -2.0, 0.0, 0.5, 1.0] {
        let exact = 6.0 / (1.0 - x + 1.0f64).powi(2);
        assert!((sol.value_at(x) - exact).abs() < 1e-6);
    }
}

#[test]
fn small_extinction_run_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut flags = parse_config("experiment = extinction\nparticles = 300\ndt = 1e-4\nreplicates = 2000\n").unwrap();
    flags.insert("out".into(), dir.path().display().to_string());
    let spec = resolve_layers(vec![], vec![], flags).unwrap();
    let art = run_experiment(&spec).unwrap();
    for t in [1, 2, 4] {
        let v = art.verdict(&format!("extinction_finite_n_t{t}")).unwrap();
        assert_ne!(v.outcome, Outcome::Indeterminate);
        assert!((v.measured - v.target).abs() < 2.0 * v.tolerance, "{v}");
    }
}
