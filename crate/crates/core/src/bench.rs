//! Parameter sweeps over synthetic problems and the CT overexposure
//! pipeline, with deterministic CSV artifacts.
//!
//! Every artifact starts with `#` lines holding the full specification, so
//! a result file is enough to regenerate it. Wall-clock times are kept out
//! of the CSVs (they go to a separate log) so that repeated runs produce
//! identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::ct::{
    add_projection_noise, apply_overexposure, fbp, ideal_observations, m1bitcsr_tv_isd, m1bitcsr_tv_reconstruct,
    make_phantom, rmse_hu, sart_isd, true_saturation_mask, FanBeamGeometry, FanBeamProjector, FbpFilter, ImageGrid,
    PhantomKind, SartParams, Sinogram, TvReconParams, DEFAULT_MU_WATER,
};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_file, write_pgm16, CsvTable, ImageMeta};
use crate::isd::{IsdConfig, IsdHistory, IsdMonitor};
use crate::linalg::pairwise_sum;
use crate::sensing::{snr_db, SyntheticProblem, SyntheticProblemSpec};
use crate::solvers::{default_hyperparams, solve_model, Model, SolverParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    TauSweep,
    GammaSweep,
    SaturationRatio,
    Sparsity,
    Measurements,
    CtKnee,
    CtHead,
    CtNoise,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::TauSweep,
        Experiment::GammaSweep,
        Experiment::SaturationRatio,
        Experiment::Sparsity,
        Experiment::Measurements,
        Experiment::CtKnee,
        Experiment::CtHead,
        Experiment::CtNoise,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown experiment '{s}'")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::TauSweep => "tau_sweep",
            Experiment::GammaSweep => "gamma_sweep",
            Experiment::SaturationRatio => "saturation_ratio",
            Experiment::Sparsity => "sparsity",
            Experiment::Measurements => "measurements",
            Experiment::CtKnee => "ct_knee",
            Experiment::CtHead => "ct_head",
            Experiment::CtNoise => "ct_noise",
        }
    }

    pub fn is_ct(&self) -> bool {
        matches!(self, Experiment::CtKnee | Experiment::CtHead | Experiment::CtNoise)
    }

    /// What the grid values mean.
    pub fn grid_label(&self) -> &'static str {
        match self {
            Experiment::TauSweep => "tau",
            Experiment::GammaSweep => "gamma",
            Experiment::SaturationRatio => "ratio",
            Experiment::Sparsity => "k",
            Experiment::Measurements => "m",
            Experiment::CtKnee | Experiment::CtHead => "kappa_frac",
            Experiment::CtNoise => "noise_sigma",
        }
    }
}

/// Solver settings used by the sweeps: looser than the library defaults so
/// that a `d = 1000` solve takes seconds rather than minutes.
pub fn bench_solver_params() -> SolverParams {
    SolverParams {
        theta1: 0.1,
        theta2: 1.0,
        fista_iters: 20,
        tol_primal: 1e-5,
        tol_dual: 1e-5,
        max_outer: 2000,
        ..SolverParams::default()
    }
}

/// Desk-scale CT settings shared by the CT experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct CtConfig {
    pub size: usize,
    pub pixel_size: f64,
    pub geometry: FanBeamGeometry,
    pub tv: TvReconParams,
    pub sart: SartParams,
    pub detect_fraction: f64,
    pub max_rounds: usize,
    pub mu_water: f64,
}

impl Default for CtConfig {
    fn default() -> Self {
        Self {
            size: 128,
            pixel_size: 2.0,
            geometry: FanBeamGeometry {
                n_bins: 310,
                detector_pixel: 2.0,
                ..FanBeamGeometry::default()
            },
            tv: TvReconParams {
                tv_weight: 0.01,
                theta1: 0.1,
                max_outer: 300,
                inner_iters: 5,
                ..TvReconParams::default()
            },
            sart: SartParams::default(),
            detect_fraction: crate::isd::DEFAULT_DETECT_FRACTION,
            max_rounds: crate::isd::DEFAULT_MAX_ROUNDS,
            mu_water: DEFAULT_MU_WATER,
        }
    }
}

impl CtConfig {
    pub fn grid(&self) -> Result<ImageGrid> {
        ImageGrid::zeros(self.size, self.size, self.pixel_size)
    }

    fn describe(&self) -> Vec<String> {
        let g = &self.geometry;
        let t = &self.tv;
        vec![
            format!(
                "grid={}x{} pixel_size={} views={} angular_step={} bins={} detector_pixel={} source_to_isocenter={} isocenter_to_detector={}",
                self.size, self.size, self.pixel_size, g.n_views, g.angular_step, g.n_bins, g.detector_pixel,
                g.source_to_isocenter, g.isocenter_to_detector
            ),
            format!(
                "tv_weight={} lambda={} gamma={} tau={} theta1={} theta2={} max_outer={} inner_iters={} tv_inner_iters={} tol={}",
                t.tv_weight,
                t.lambda.map_or("auto".to_string(), |v| v.to_string()),
                t.gamma, t.tau, t.theta1, t.theta2, t.max_outer, t.inner_iters, t.tv_inner_iters, t.tol
            ),
            format!(
                "sart_iters={} sart_relax={} detect_fraction={} max_rounds={} mu_water={}",
                self.sart.iters, self.sart.relax, self.detect_fraction, self.max_rounds, self.mu_water
            ),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Problem at which the grid is applied.
    pub base: SyntheticProblemSpec,
    pub methods: Vec<Model>,
    pub solver: SolverParams,
    /// Candidates for the sparsity weight, tuned on the lasso at each grid
    /// value with a held-out seed and shared by every method.
    pub mu_grid: Vec<f64>,
    /// Fixed pinball slope; `None` uses `-n/(5m)`.
    pub tau: Option<f64>,
    pub ct: CtConfig,
}

impl SweepSpec {
    /// Defaults for `experiment` at desk scale (20 trials).
    pub fn preset(experiment: Experiment, trials: usize, seed: u64) -> Self {
        let mut spec = Self {
            experiment,
            grid: vec![],
            trials,
            seed,
            base: SyntheticProblemSpec::new(1000, 100, 500, 100, 20.0, seed),
            methods: vec![Model::Csc],
            solver: bench_solver_params(),
            mu_grid: (0..8).map(|e| 10f64.powf(-3.0 + 0.5 * e as f64)).collect(),
            tau: None,
            ct: CtConfig::default(),
        };
        match experiment {
            Experiment::TauSweep => {
                spec.grid = vec![-1.0, -0.5, -0.2, -0.1, -0.04, 0.0];
            }
            Experiment::GammaSweep => {
                spec.base = SyntheticProblemSpec::new(1000, 100, 500, 400, 10.0, seed);
                spec.grid = vec![1e-4, 1e-2, 1e-1, 1.0, 10.0, 100.0];
                spec.methods = vec![Model::Csr];
            }
            Experiment::SaturationRatio => {
                spec.base = SyntheticProblemSpec::new(1000, 300, 500, 0, 10.0, seed);
                spec.grid = vec![0.0, 0.1, 0.2, 0.3, 0.4];
                spec.methods = vec![Model::Lasso, Model::Rdcs, Model::Csc, Model::Csr];
            }
            Experiment::Sparsity => {
                spec.base = SyntheticProblemSpec::new(1000, 300, 500, 100, 10.0, seed);
                spec.grid = vec![100.0, 200.0, 300.0, 400.0];
                spec.methods = vec![Model::Lasso, Model::Rdcs, Model::Csc, Model::Csr];
            }
            Experiment::Measurements => {
                spec.base = SyntheticProblemSpec::new(1000, 300, 500, 100, 10.0, seed);
                spec.grid = vec![500.0, 800.0, 1000.0, 1500.0];
                spec.methods = vec![Model::Lasso, Model::Csc];
            }
            Experiment::CtKnee | Experiment::CtHead => {
                spec.grid = vec![0.5];
                spec.trials = 1;
            }
            Experiment::CtNoise => {
                spec.grid = vec![0.0, 0.1];
                spec.trials = 1;
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidSpec("trials must be >= 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidSpec("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sweep grid"));
        }
        if !self.experiment.is_ct() {
            if self.methods.is_empty() {
                return Err(Error::InvalidSpec("no methods selected".into()));
            }
            if self.mu_grid.is_empty() || self.mu_grid.iter().any(|m| !(*m >= 0.0)) {
                return Err(Error::InvalidSpec("mu grid must be non-empty and >= 0".into()));
            }
            for &g in &self.grid {
                self.problem_at(g, 0)?.validate()?;
            }
            self.solver.validate()?;
        }
        Ok(())
    }

    /// Problem for grid value `g` and trial `t`; seeds are `seed + t`.
    pub fn problem_at(&self, g: f64, t: usize) -> Result<SyntheticProblemSpec> {
        let mut p = self.base;
        p.seed = self.seed.wrapping_add(t as u64);
        let even = |x: f64| -> usize {
            let n = x.round() as usize;
            n - n % 2
        };
        match self.experiment {
            Experiment::SaturationRatio => p.n = even(g * p.m as f64),
            Experiment::Sparsity => p.k = g.round() as usize,
            Experiment::Measurements => {
                let ratio = self.base.n as f64 / self.base.m as f64;
                p.m = g.round() as usize;
                p.n = even(ratio * p.m as f64);
            }
            _ => {}
        }
        if g < 0.0 && matches!(self.experiment, Experiment::Sparsity | Experiment::Measurements) {
            return Err(Error::InvalidSpec(format!("grid value {g} must be >= 0")));
        }
        Ok(p)
    }

    /// Solver parameters for one grid value, before `mu`.
    pub fn params_at(&self, g: f64, prob: &SyntheticProblemSpec) -> SolverParams {
        let h = default_hyperparams(prob.m, prob.n);
        let mut p = SolverParams {
            lambda: h.lambda,
            gamma: h.gamma,
            tau: self.tau.unwrap_or(h.tau),
            ..self.solver
        };
        match self.experiment {
            Experiment::TauSweep => p.tau = g,
            Experiment::GammaSweep => p.gamma = g,
            _ => {}
        }
        p
    }

    /// `#` header lines describing the whole specification.
    pub fn describe(&self) -> Vec<String> {
        let b = &self.base;
        let s = &self.solver;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut lines = vec![
            format!("experiment={}", self.experiment.name()),
            format!("seed={} trials={}", self.seed, self.trials),
            format!("{}={}", self.experiment.grid_label(), join(&self.grid)),
        ];
        if self.experiment.is_ct() {
            lines.extend(self.ct.describe());
        } else {
            let noise = match b.noise {
                crate::sensing::NoiseModel::None => "none".to_string(),
                crate::sensing::NoiseModel::Gaussian { target_ratio } => target_ratio.to_string(),
            };
            lines.push(format!("d={} k={} m={} n={} s_n={}", b.d, b.k, b.m, b.n, noise));
            lines.push(format!(
                "methods={}",
                self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
            ));
            lines.push(format!("mu_grid={} (tuned on lasso, seed+{HELD_OUT_SEED_OFFSET})", join(&self.mu_grid)));
            lines.push(format!(
                "tau={} c={} theta1={} theta2={} tol_primal={} tol_dual={} max_outer={} fista_iters={}",
                self.tau.map_or("auto".to_string(), |t| t.to_string()),
                s.c, s.theta1, s.theta2, s.tol_primal, s.tol_dual, s.max_outer, s.fista_iters
            ));
        }
        lines
    }
}

/// One solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub mu: f64,
    /// SNR in dB (synthetic) or RMSE in HU (CT); `None` when the solve failed.
    pub metric: Option<f64>,
    pub norm: Option<f64>,
    pub converged: bool,
    pub iters: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: String,
    pub value: f64,
    pub mean: f64,
    pub std: f64,
    pub mean_norm: f64,
    pub mean_wall_time: f64,
    /// Successful trials entering the mean.
    pub trials: usize,
    pub failed: usize,
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub header: Vec<String>,
    pub metric_name: &'static str,
    pub rows: Vec<SweepRow>,
    pub records: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn row(&self, method: &str, value: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.method == method && r.value == value)
    }

    /// Summary table; wall time is omitted (see [`SweepResult::timing_log`]).
    pub fn summary_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["method", "value", "mean", "std", "mean_norm", "trials", "failed", "unconverged"]);
        t.comments = self.header.clone();
        t.comments.push(format!("metric={}", self.metric_name));
        for r in &self.rows {
            t.push_row(vec![
                r.method.clone(),
                fmt_f64(r.value),
                fmt_f64(r.mean),
                fmt_f64(r.std),
                fmt_f64(r.mean_norm),
                r.trials.to_string(),
                r.failed.to_string(),
                r.unconverged.to_string(),
            ]);
        }
        t
    }

    pub fn trials_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["method", "value", "trial", "seed", "mu", "metric", "norm", "converged", "iters"]);
        t.comments = self.header.clone();
        t.comments.push(format!("metric={}", self.metric_name));
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt_f64);
        for r in &self.records {
            t.push_row(vec![
                r.method.clone(),
                fmt_f64(r.value),
                r.trial.to_string(),
                r.seed.to_string(),
                fmt_f64(r.mu),
                opt(r.metric),
                opt(r.norm),
                (r.converged as u8).to_string(),
                r.iters.to_string(),
            ]);
        }
        t
    }

    pub fn timing_log(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(s, "{} {} mean_wall_time={:.3}s", r.method, r.value, r.mean_wall_time);
        }
        s
    }
}

/// Mean and sample standard deviation by pairwise summation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (pairwise_sum(&sq) / (n - 1.0)).sqrt())
}

/// Aggregates per-trial records into one row per (method, value), in order
/// of first appearance.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SweepRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(m, v)| *m == r.method && v.to_bits() == r.value.to_bits()) {
            keys.push((r.method.clone(), r.value));
        }
    }
    keys.into_iter()
        .map(|(method, value)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.method == method && r.value.to_bits() == value.to_bits())
                .collect();
            let ok: Vec<&TrialRecord> = group.iter().copied().filter(|r| r.metric.is_some()).collect();
            let metrics: Vec<f64> = ok.iter().map(|r| r.metric.unwrap()).collect();
            let norms: Vec<f64> = ok.iter().filter_map(|r| r.norm).collect();
            let times: Vec<f64> = group.iter().map(|r| r.wall_time).collect();
            let (mean, std) = mean_std(&metrics);
            SweepRow {
                method,
                value,
                mean,
                std,
                mean_norm: mean_std(&norms).0,
                mean_wall_time: mean_std(&times).0,
                trials: ok.len(),
                failed: group.len() - ok.len(),
                unconverged: ok.iter().filter(|r| !r.converged).count(),
            }
        })
        .collect()
}

fn solve_trial(model: Model, prob: &SyntheticProblem, params: &SolverParams) -> (Option<f64>, Option<f64>, bool, usize, f64) {
    match solve_model(model, &prob.matrix, &prob.obs, params) {
        Ok(sol) => {
            let snr = snr_db(prob.x_true.as_slice(), sol.x_hat.as_slice()).ok();
            (snr, Some(sol.x_hat.norm()), sol.converged, sol.iters, sol.wall_time)
        }
        Err(e) => {
            log::warn!("{} failed: {e}", model.name());
            (None, None, false, 0, 0.0)
        }
    }
}

/// Offset of the tuning seed from the trial seeds.
pub const HELD_OUT_SEED_OFFSET: u64 = 1 << 32;

/// Lasso-tuned sparsity weight for one grid value.
fn tune_mu(spec: &SweepSpec, g: f64) -> Result<f64> {
    if spec.mu_grid.len() == 1 {
        return Ok(spec.mu_grid[0]);
    }
    let mut pspec = spec.problem_at(g, 0)?;
    pspec.seed = spec.seed.wrapping_add(HELD_OUT_SEED_OFFSET);
    let prob = SyntheticProblem::generate(pspec)?;
    let base = spec.params_at(g, &pspec);
    let mut best = (f64::NEG_INFINITY, spec.mu_grid[0]);
    for &mu in &spec.mu_grid {
        let (snr, ..) = solve_trial(Model::Lasso, &prob, &SolverParams { mu, ..base });
        if let Some(s) = snr {
            if s > best.0 {
                best = (s, mu);
            }
        }
    }
    log::info!("{}={g}: mu={} (lasso {:.3} dB)", spec.experiment.grid_label(), best.1, best.0);
    Ok(best.1)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    if spec.experiment.is_ct() {
        return run_ct_sweep(spec);
    }
    let mut records = Vec::new();
    // Grid values that leave the problem unchanged share one tuning.
    let mut tuned: Vec<(SyntheticProblemSpec, f64)> = Vec::new();
    for &g in &spec.grid {
        let key = spec.problem_at(g, 0)?;
        let mu = match tuned.iter().find(|(k, _)| *k == key) {
            Some(&(_, mu)) => mu,
            None => {
                let mu = tune_mu(spec, g)?;
                tuned.push((key, mu));
                mu
            }
        };
        for t in 0..spec.trials {
            let pspec = spec.problem_at(g, t)?;
            let prob = SyntheticProblem::generate(pspec)?;
            let params = SolverParams {
                mu,
                ..spec.params_at(g, &pspec)
            };
            for &model in &spec.methods {
                let (metric, norm, converged, iters, wall_time) = solve_trial(model, &prob, &params);
                records.push(TrialRecord {
                    method: model.name().to_string(),
                    value: g,
                    trial: t,
                    seed: pspec.seed,
                    mu,
                    metric,
                    norm,
                    converged,
                    iters,
                    wall_time,
                });
            }
        }
    }
    Ok(SweepResult {
        header: spec.describe(),
        metric_name: "snr_db",
        rows: aggregate(&records),
        records,
    })
}

/// Reconstruction method of a CT run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtMethod {
    Fbp,
    SartIsd,
    M1bitIsd,
    M1bitIdeal,
}

impl CtMethod {
    pub const ALL: [CtMethod; 4] = [CtMethod::Fbp, CtMethod::SartIsd, CtMethod::M1bitIsd, CtMethod::M1bitIdeal];

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown CT method '{s}'")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            CtMethod::Fbp => "fbp",
            CtMethod::SartIsd => "sart-isd",
            CtMethod::M1bitIsd => "m1bit-isd",
            CtMethod::M1bitIdeal => "m1bit-ideal",
        }
    }
}

/// A simulated overexposed scan.
pub struct CtScene {
    pub grid: ImageGrid,
    pub truth: ImageGrid,
    pub projector: FanBeamProjector,
    pub clean: Sinogram,
    /// Noisy line integrals before overexposure.
    pub measured: Sinogram,
    pub kappa: f64,
    pub observed: crate::ct::Overexposure,
    pub psi_true: Vec<bool>,
}

impl CtScene {
    /// Projects the phantom, adds noise (seeded), and applies the
    /// overexposure with `kappa = kappa_frac * max q`.
    pub fn new(cfg: &CtConfig, phantom: PhantomKind, kappa_frac: f64, noise_sigma: f64, seed: u64) -> Result<Self> {
        if !(kappa_frac > 0.0) || !kappa_frac.is_finite() {
            return Err(Error::InvalidSpec(format!("kappa fraction must be > 0, got {kappa_frac}")));
        }
        let grid = cfg.grid()?;
        let projector = FanBeamProjector::new(&grid, &cfg.geometry)?;
        let truth = make_phantom(phantom, &grid);
        let clean = projector.forward_project(&truth)?;
        let measured = add_projection_noise(&clean, noise_sigma, seed)?;
        let kappa = kappa_frac * clean.max().max(f64::MIN_POSITIVE);
        let observed = apply_overexposure(&measured, kappa)?;
        let psi_true = true_saturation_mask(&clean, &observed.s_ray)?;
        Ok(Self {
            grid,
            truth,
            projector,
            clean,
            measured,
            kappa,
            observed,
            psi_true,
        })
    }

    pub fn observed_sinogram(&self) -> Sinogram {
        Sinogram {
            values: self.observed.obs.p.clone(),
            ..self.clean.clone()
        }
    }
}

/// Image and diagnostics of one CT reconstruction.
#[derive(Debug, Clone)]
pub struct CtRunOutput {
    pub method: CtMethod,
    pub image: ImageGrid,
    pub rmse_hu: f64,
    pub history: Option<IsdHistory>,
    pub psi: Option<Vec<bool>>,
    pub converged: bool,
}

pub fn run_ct_method(scene: &CtScene, cfg: &CtConfig, method: CtMethod, noisy: bool) -> Result<CtRunOutput> {
    let truth = &scene.truth;
    let grid = &scene.grid;
    let metric = |x: &[f64]| {
        grid.with_values(x.to_vec())
            .and_then(|img| rmse_hu(truth, &img, cfg.mu_water))
            .unwrap_or(f64::NAN)
    };
    let mut isd_cfg = IsdConfig::new(scene.observed.s_ray.clone());
    isd_cfg.detect_fraction = cfg.detect_fraction;
    isd_cfg.max_rounds = cfg.max_rounds;
    let monitor = IsdMonitor {
        psi_true: Some(&scene.psi_true),
        metric: Some(&metric),
    };
    let p = &scene.observed.obs.p;
    let (image, history, psi, converged) = match method {
        CtMethod::Fbp => {
            let filter = if noisy { FbpFilter::Hann } else { FbpFilter::RamLak };
            (fbp(&scene.observed_sinogram(), &cfg.geometry, grid, filter)?, None, None, true)
        }
        CtMethod::SartIsd => {
            let r = sart_isd(&scene.projector, p, &isd_cfg, cfg.sart, monitor)?;
            let c = r.outcome.history.converged;
            (r.image, Some(r.outcome.history), Some(r.outcome.psi), c)
        }
        CtMethod::M1bitIsd => {
            let r = m1bitcsr_tv_isd(&scene.projector, p, &isd_cfg, &cfg.tv, monitor)?;
            let c = r.outcome.history.converged;
            (r.image, Some(r.outcome.history), Some(r.outcome.psi), c)
        }
        CtMethod::M1bitIdeal => {
            let obs = ideal_observations(p, &scene.observed.s_ray, &scene.psi_true);
            let sol = m1bitcsr_tv_reconstruct(&scene.projector, &obs, &cfg.tv, None)?;
            (grid.with_values(sol.x_hat.into_vec())?, None, Some(scene.psi_true.clone()), sol.converged)
        }
    };
    let rmse = rmse_hu(truth, &image, cfg.mu_water)?;
    Ok(CtRunOutput {
        method,
        image,
        rmse_hu: rmse,
        history,
        psi,
        converged,
    })
}

fn run_ct_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let phantom = match spec.experiment {
        Experiment::CtHead => PhantomKind::Head,
        _ => PhantomKind::Knee,
    };
    let mut records = Vec::new();
    for &g in &spec.grid {
        let (kappa_frac, sigma) = match spec.experiment {
            Experiment::CtNoise => (0.6, g),
            _ => (g, 0.0),
        };
        for t in 0..spec.trials {
            let seed = spec.seed.wrapping_add(t as u64);
            let scene = CtScene::new(&spec.ct, phantom, kappa_frac, sigma, seed)?;
            for method in CtMethod::ALL {
                let start = std::time::Instant::now();
                let out = run_ct_method(&scene, &spec.ct, method, sigma > 0.0);
                let (metric, converged) = match &out {
                    Ok(o) => (Some(o.rmse_hu), o.converged),
                    Err(e) => {
                        log::warn!("{} failed: {e}", method.name());
                        (None, false)
                    }
                };
                records.push(TrialRecord {
                    method: method.name().to_string(),
                    value: g,
                    trial: t,
                    seed,
                    mu: spec.ct.tv.tv_weight,
                    metric,
                    norm: None,
                    converged,
                    iters: out.as_ref().ok().and_then(|o| o.history.as_ref()).map_or(0, |h| h.rounds.len()),
                    wall_time: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(SweepResult {
        header: spec.describe(),
        metric_name: "rmse_hu",
        rows: aggregate(&records),
        records,
    })
}

/// Writes `summary.csv`, `trials.csv` and `timing.log` into `dir`.
pub fn emit_sweep(result: &SweepResult, dir: &Path) -> Result<()> {
    emit_csv(result, &dir.join("summary.csv"))?;
    result.trials_table().write(&dir.join("trials.csv"))?;
    write_file(&dir.join("timing.log"), result.timing_log().as_bytes())
}

/// Summary CSV of a sweep; an empty result gives the header only.
pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    result.summary_table().write(path)
}

/// 16-bit graymap of an attenuation image, windowed to `[lo, hi]`, with its
/// sidecar.
pub fn emit_image(img: &ImageGrid, path: &Path, window: (f64, f64)) -> Result<()> {
    let meta = ImageMeta {
        nx: img.nx,
        ny: img.ny,
        pixel_size: img.pixel_size,
        window_min: window.0,
        window_max: window.1,
    };
    write_pgm16(path, &img.values, &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: &str, value: f64, metric: Option<f64>) -> TrialRecord {
        TrialRecord {
            method: method.into(),
            value,
            trial: 0,
            seed: 0,
            mu: 0.1,
            metric,
            norm: metric.map(|m| m.abs()),
            converged: true,
            iters: 1,
            wall_time: 0.5,
        }
    }

    #[test]
    fn aggregates_match_direct_recomputation() {
        let vals = [1.5, -0.25, 3.0, 2.125];
        let mut recs: Vec<TrialRecord> = vals.iter().map(|&v| record("a", 0.2, Some(v))).collect();
        recs.push(record("a", 0.2, None));
        recs.push(record("b", 0.2, Some(7.0)));
        let rows = aggregate(&recs);
        assert_eq!(rows.len(), 2);
        let mean = vals.iter().sum::<f64>() / 4.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((rows[0].mean - mean).abs() < 1e-12);
        assert!((rows[0].std - var.sqrt()).abs() < 1e-12);
        assert_eq!((rows[0].trials, rows[0].failed), (4, 1));
        assert_eq!((rows[1].mean, rows[1].std), (7.0, 0.0));
    }

    #[test]
    fn empty_result_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let res = SweepResult {
            header: vec!["experiment=none".into()],
            metric_name: "snr_db",
            rows: vec![],
            records: vec![],
        };
        let path = dir.path().join("s.csv");
        emit_csv(&res, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, vec!["method,value,mean,std,mean_norm,trials,failed,unconverged"]);
    }

    #[test]
    fn presets_are_valid_and_named() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::parse(e.name()).unwrap(), e);
            let spec = SweepSpec::preset(e, 2, 1);
            spec.validate().unwrap();
        }
        assert!(Experiment::parse("nope").is_err());
        let mut bad = SweepSpec::preset(Experiment::TauSweep, 0, 1);
        assert!(bad.validate().is_err());
        bad.trials = 1;
        bad.grid.clear();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_maps_onto_problem_fields() {
        let s = SweepSpec::preset(Experiment::SaturationRatio, 1, 5);
        let p = s.problem_at(0.3, 2).unwrap();
        assert_eq!((p.n, p.m, p.seed), (150, 500, 7));
        let s = SweepSpec::preset(Experiment::Measurements, 1, 5);
        let p = s.problem_at(800.0, 0).unwrap();
        assert_eq!((p.m, p.n), (800, 160));
        let s = SweepSpec::preset(Experiment::TauSweep, 1, 5);
        let p = s.problem_at(-0.3, 0).unwrap();
        assert_eq!(s.params_at(-0.3, &p).tau, -0.3);
    }

    #[test]
    fn small_sweep_is_reproducible() {
        let mut spec = SweepSpec::preset(Experiment::SaturationRatio, 2, 3);
        spec.base = SyntheticProblemSpec::new(40, 4, 30, 0, 20.0, 3);
        spec.grid = vec![0.2];
        spec.mu_grid = vec![0.01, 0.1];
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a.summary_table().render(), b.summary_table().render());
        assert_eq!(a.trials_table().render(), b.trials_table().render());
        assert_eq!(a.rows.len(), 4);
        assert!(a.rows.iter().all(|r| r.trials == 2 && r.mean.is_finite()));
    }
}
