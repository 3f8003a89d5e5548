use m1bit::bench::{emit_image, emit_sweep, run_ct_method, run_sweep, CtConfig, CtMethod, CtScene, Experiment, SweepSpec};
use m1bit::ct::{PhantomKind, Sinogram};
use m1bit::io::{read_pgm16, read_problem, read_sinogram_csv, write_problem, write_sinogram_csv};
use m1bit::sensing::{SyntheticProblem, SyntheticProblemSpec};
use m1bit::solvers::{solve_model, Model, SolverParams};

fn small_ct() -> CtConfig {
    let mut cfg = CtConfig::default();
    cfg.size = 32;
    cfg.pixel_size = 8.0;
    cfg.geometry.n_views = 90;
    cfg.geometry.angular_step = 4.0;
    cfg.geometry.n_bins = 80;
    cfg.geometry.detector_pixel = 8.0;
    cfg.tv.max_outer = 40;
    cfg
}

#[test]
fn solving_a_reloaded_problem_gives_the_same_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticProblemSpec::new(60, 6, 40, 8, 20.0, 9);
    let prob = SyntheticProblem::generate(spec).unwrap();
    let path = dir.path().join("p.txt");
    write_problem(&path, &prob.matrix, &prob.obs, spec.seed).unwrap();
    let (u, obs, seed) = read_problem(&path).unwrap();
    assert_eq!(seed, 9);
    let params = SolverParams::default().with_defaults_for(40, 8);
    let a = solve_model(Model::Csc, &prob.matrix, &prob.obs, &params).unwrap();
    let b = solve_model(Model::Csc, &u, &obs, &params).unwrap();
    assert_eq!(a.x_hat, b.x_hat);
}

#[test]
fn ct_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_ct();
    let scene = CtScene::new(&cfg, PhantomKind::Head, 0.5, 0.0, 1).unwrap();

    let sino = scene.observed_sinogram();
    let spath = dir.path().join("s.csv");
    write_sinogram_csv(&spath, &sino.values, sino.n_views, sino.n_bins, &["head".into()]).unwrap();
    let (values, views, bins) = read_sinogram_csv(&spath).unwrap();
    assert_eq!(Sinogram::new(views, bins, values).unwrap(), sino);

    let ipath = dir.path().join("img.pgm");
    let top = scene.truth.values.iter().copied().fold(0.0, f64::max);
    emit_image(&scene.truth, &ipath, (0.0, top)).unwrap();
    let (back, meta) = read_pgm16(&ipath).unwrap();
    assert_eq!((meta.nx, meta.ny, meta.pixel_size), (32, 32, 8.0));
    let step = top / 65535.0;
    assert!(back.iter().zip(&scene.truth.values).all(|(a, b)| (a - b).abs() <= 0.5 * step + 1e-15));
}

#[test]
fn isd_runs_report_histories_and_stay_nonnegative() {
    let cfg = small_ct();
    let scene = CtScene::new(&cfg, PhantomKind::Knee, 0.5, 0.0, 1).unwrap();
    for method in [CtMethod::SartIsd, CtMethod::M1bitIsd] {
        let out = run_ct_method(&scene, &cfg, method, false).unwrap();
        let h = out.history.expect("isd history");
        assert!(!h.rounds.is_empty() && h.rounds.len() <= cfg.max_rounds);
        assert!(h.rounds.iter().all(|r| r.metric.is_some_and(f64::is_finite)));
        assert!(out.image.values.iter().all(|&v| v >= 0.0));
        assert_eq!(out.psi.unwrap().len(), scene.observed.obs.p.len());
    }
}

#[test]
fn sweep_artifacts_carry_the_spec_and_match_the_trial_log() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SweepSpec::preset(Experiment::TauSweep, 3, 4);
    spec.base = SyntheticProblemSpec::new(50, 5, 40, 8, 20.0, 4);
    spec.grid = vec![-0.5, 0.0];
    spec.mu_grid = vec![0.1];
    let res = run_sweep(&spec).unwrap();
    emit_sweep(&res, dir.path()).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("# experiment=tau_sweep"));
    assert!(summary.contains("seed=4 trials=3"));
    assert!(!summary.contains("wall"));

    // Recompute each mean from trials.csv.
    let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let rows: Vec<Vec<String>> = trials
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    for r in &res.rows {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|c| c[0] == r.method && c[1].parse::<f64>().unwrap() == r.value)
            .map(|c| c[5].parse().unwrap())
            .collect();
        assert_eq!(vals.len(), 3);
        let mean = vals.iter().sum::<f64>() / 3.0;
        assert!((mean - r.mean).abs() <= 1e-12);
    }
}
