//! `m1bit`: sweeps over synthetic saturated-sensing problems, simulated CT
//! overexposure runs, and saturation detection on a measured sinogram.
//!
//! Every tunable can also come from a `key=value` file given with
//! `--config`; flags win over the file.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use m1bit::bench::{emit_image, emit_sweep, run_ct_method, run_sweep, CtConfig, CtMethod, CtScene, Experiment, SweepSpec};
use m1bit::ct::{estimate_view_thresholds, FanBeamProjector, PhantomKind, Sinogram};
use m1bit::io::{fmt_f64, read_config, read_sinogram_csv, write_file, write_sinogram_csv, CsvTable};
use m1bit::isd::{IsdConfig, IsdMonitor};
use m1bit::sensing::SyntheticProblemSpec;
use m1bit::solvers::Model;
use m1bit::{Error, Result};

#[derive(Parser)]
#[command(name = "m1bit", version, about = "Recovery from saturated measurements")]
struct Cli {
    /// key=value settings file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic and CT parameter sweeps.
    Synth {
        #[command(subcommand)]
        action: SynthAction,
    },
    /// One simulated overexposed CT scan.
    Ct {
        #[command(subcommand)]
        action: CtAction,
    },
    /// Flags the overexposed readings of a measured sinogram.
    Detect(DetectArgs),
}

#[derive(Subcommand)]
enum SynthAction {
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum CtAction {
    Run(CtRunArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// tau_sweep, gamma_sweep, saturation_ratio, sparsity, measurements,
    /// ct_knee, ct_head or ct_noise.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated grid values replacing the preset.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Comma-separated subset of csc, csr, lasso, rdcs.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mu_grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    s_n: Option<String>,
}

#[derive(Args)]
struct CtRunArgs {
    /// knee, head or shepp.
    #[arg(long)]
    phantom: Option<String>,
    /// Dynamic range as a fraction of the largest line integral.
    #[arg(long, allow_hyphen_values = true)]
    kappa_frac: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    noise_sigma: Option<String>,
    /// fbp, sart-isd, m1bit-isd or m1bit-ideal.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Sinogram CSV, one row of bins per view, zeros where overexposed.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// `auto` or a threshold shared by every view.
    #[arg(long, allow_hyphen_values = true)]
    s_beta: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Merged configuration; remembers which keys were read so that unknown
/// ones can be rejected.
struct Settings {
    map: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let map = match path {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            map,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.map.insert(key.to_string(), v);
        }
    }

    fn set_path(&mut self, key: &str, value: &Option<PathBuf>) {
        self.set(key, value.as_ref().map(|p| p.display().to_string()));
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.map.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::InvalidSpec(format!("missing --{}", key.replace('_', "-"))))
    }

    fn value<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse()
                            .map_err(|_| Error::InvalidSpec(format!("{key}: cannot parse {x:?}")))
                    })
                    .collect()
            })
            .transpose()
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.map.keys().filter(|k| !used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("unknown setting(s): {}", unknown.join(", "))))
        }
    }
}

/// CT geometry and reconstruction keys shared by every CT command.
fn ct_config(s: &Settings) -> Result<CtConfig> {
    let mut c = CtConfig::default();
    c.size = s.value("size", c.size)?;
    c.pixel_size = s.value("pixel_size", c.pixel_size)?;
    c.geometry.n_views = s.value("views", c.geometry.n_views)?;
    c.geometry.angular_step = s.value("angular_step", c.geometry.angular_step)?;
    c.geometry.n_bins = s.value("bins", c.geometry.n_bins)?;
    c.geometry.detector_pixel = s.value("detector_pixel", c.geometry.detector_pixel)?;
    c.geometry.source_to_isocenter = s.value("source_to_isocenter", c.geometry.source_to_isocenter)?;
    c.geometry.isocenter_to_detector = s.value("isocenter_to_detector", c.geometry.isocenter_to_detector)?;
    c.tv.tv_weight = s.value("tv_weight", c.tv.tv_weight)?;
    c.tv.theta1 = s.value("theta1", c.tv.theta1)?;
    c.tv.theta2 = s.value("theta2", c.tv.theta2)?;
    c.tv.max_outer = s.value("max_outer", c.tv.max_outer)?;
    c.tv.inner_iters = s.value("inner_iters", c.tv.inner_iters)?;
    c.tv.tv_inner_iters = s.value("tv_inner_iters", c.tv.tv_inner_iters)?;
    if let Some(l) = s.raw("lambda") {
        c.tv.lambda = Some(
            l.trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("lambda: cannot parse {l:?}")))?,
        );
    }
    c.sart.iters = s.value("sart_iters", c.sart.iters)?;
    c.sart.relax = s.value("sart_relax", c.sart.relax)?;
    c.detect_fraction = s.value("detect_fraction", c.detect_fraction)?;
    c.max_rounds = s.value("max_rounds", c.max_rounds)?;
    c.geometry.validate()?;
    if !(c.detect_fraction > 0.0) || c.max_rounds == 0 {
        return Err(Error::InvalidSpec("detect_fraction must be > 0 and max_rounds >= 1".into()));
    }
    Ok(c)
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir = PathBuf::from(s.required("out")?);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn sweep(args: SweepArgs, mut s: Settings) -> Result<()> {
    s.set("experiment", args.experiment);
    s.set("trials", args.trials);
    s.set("seed", args.seed);
    s.set_path("out", &args.out);
    s.set("grid", args.grid);
    s.set("methods", args.methods);
    s.set("mu_grid", args.mu_grid);
    s.set("tau", args.tau);
    s.set("d", args.d);
    s.set("k", args.k);
    s.set("m", args.m);
    s.set("n", args.n);
    s.set("s_n", args.s_n);

    let experiment = Experiment::parse(s.required("experiment")?)?;
    let trials = s.value("trials", 20usize)?;
    let seed = s.value("seed", 0u64)?;
    let mut spec = SweepSpec::preset(experiment, trials, seed);
    if let Some(g) = s.list("grid")? {
        spec.grid = g;
    }
    if let Some(mu) = s.list("mu_grid")? {
        spec.mu_grid = mu;
    }
    if let Some(m) = s.raw("methods") {
        spec.methods = m.split(',').map(|x| Model::parse(x.trim())).collect::<Result<_>>()?;
    }
    if let Some(t) = s.raw("tau") {
        spec.tau = Some(t.trim().parse().map_err(|_| Error::InvalidSpec(format!("tau: cannot parse {t:?}")))?);
    }
    let b = spec.base;
    let s_n = match b.noise {
        m1bit::sensing::NoiseModel::Gaussian { target_ratio } => target_ratio,
        m1bit::sensing::NoiseModel::None => f64::INFINITY,
    };
    let s_n = s.value("s_n", s_n)?;
    spec.base = SyntheticProblemSpec::new(s.value("d", b.d)?, s.value("k", b.k)?, s.value("m", b.m)?, s.value("n", b.n)?, s_n, seed);
    if s_n.is_infinite() {
        spec.base.noise = m1bit::sensing::NoiseModel::None;
    }
    spec.ct = ct_config(&s)?;
    let dir = out_dir(&s)?;
    s.finish()?;

    let result = run_sweep(&spec)?;
    emit_sweep(&result, &dir)?;
    for r in &result.rows {
        println!(
            "{:<12} {}={:<10} {}={:.4} (std {:.4}, {} ok, {} failed)",
            r.method,
            experiment.grid_label(),
            r.value,
            result.metric_name,
            r.mean,
            r.std,
            r.trials,
            r.failed
        );
    }
    Ok(())
}

fn ct_run(args: CtRunArgs, mut s: Settings) -> Result<()> {
    s.set("phantom", args.phantom);
    s.set("kappa_frac", args.kappa_frac);
    s.set("noise_sigma", args.noise_sigma);
    s.set("method", args.method);
    s.set("seed", args.seed);
    s.set_path("out", &args.out);

    let phantom = PhantomKind::parse(s.value("phantom", "knee".to_string())?.as_str())?;
    let kappa_frac = s.value("kappa_frac", 0.5)?;
    let sigma = s.value("noise_sigma", 0.0)?;
    let method = CtMethod::parse(s.value("method", "m1bit-isd".to_string())?.as_str())?;
    let seed = s.value("seed", 0u64)?;
    let cfg = ct_config(&s)?;
    let dir = out_dir(&s)?;
    s.finish()?;

    let scene = CtScene::new(&cfg, phantom, kappa_frac, sigma, seed)?;
    let out = run_ct_method(&scene, &cfg, method, sigma > 0.0)?;

    let mut header = vec![
        format!(
            "ct run phantom={} kappa_frac={kappa_frac} kappa={} noise_sigma={sigma} method={} seed={seed}",
            phantom.name(),
            fmt_f64(scene.kappa),
            method.name()
        ),
        format!("grid={}x{} pixel_size={}", cfg.size, cfg.size, cfg.pixel_size),
    ];
    let g = &cfg.geometry;
    header.push(format!(
        "views={} angular_step={} bins={} detector_pixel={} source_to_isocenter={} isocenter_to_detector={}",
        g.n_views, g.angular_step, g.n_bins, g.detector_pixel, g.source_to_isocenter, g.isocenter_to_detector
    ));
    header.push(format!(
        "tv_weight={} theta1={} max_outer={} inner_iters={} sart_iters={} detect_fraction={} max_rounds={}",
        cfg.tv.tv_weight, cfg.tv.theta1, cfg.tv.max_outer, cfg.tv.inner_iters, cfg.sart.iters, cfg.detect_fraction, cfg.max_rounds
    ));

    let mut metrics = CsvTable::new(&["method", "rmse_hu", "converged", "rounds", "true_saturated"]);
    metrics.comments = header.clone();
    metrics.push_row(vec![
        method.name().to_string(),
        fmt_f64(out.rmse_hu),
        (out.converged as u8).to_string(),
        out.history.as_ref().map_or(0, |h| h.rounds.len()).to_string(),
        scene.psi_true.iter().filter(|&&b| b).count().to_string(),
    ]);
    metrics.write(&dir.join("metrics.csv"))?;
    let obs = scene.observed_sinogram();
    write_sinogram_csv(&dir.join("sinogram.csv"), &obs.values, obs.n_views, obs.n_bins, &header)?;
    write_sinogram_csv(&dir.join("image.csv"), &out.image.values, out.image.ny, out.image.nx, &header)?;
    if let Some(h) = &out.history {
        let text = header.iter().map(|c| format!("# {c}\n")).collect::<String>() + &h.to_csv();
        write_file(&dir.join("history.csv"), text.as_bytes())?;
    }
    if let Some(psi) = &out.psi {
        write_mask(&dir.join("psi.csv"), psi, obs.n_bins, &header)?;
    }
    let top = scene.truth.values.iter().copied().fold(0.0, f64::max);
    emit_image(&out.image, &dir.join("image.pgm"), (0.0, 1.1 * top.max(1e-6)))?;
    println!("{} rmse={:.3} HU converged={}", method.name(), out.rmse_hu, out.converged);
    Ok(())
}

fn write_mask(path: &Path, mask: &[bool], bins: usize, comments: &[String]) -> Result<()> {
    let mut text: String = comments.iter().map(|c| format!("# {c}\n")).collect();
    for row in mask.chunks(bins.max(1)) {
        let cells: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

fn detect(args: DetectArgs, mut s: Settings) -> Result<()> {
    s.set_path("in", &args.input);
    s.set("s_beta", args.s_beta);
    s.set_path("out", &args.out);
    let input = PathBuf::from(s.required("in")?);
    let out = PathBuf::from(s.required("out")?);
    let s_beta = s.value("s_beta", "auto".to_string())?;
    let (values, views, bins) = read_sinogram_csv(&input)?;
    // The file fixes the sampling; the detector keeps its physical length
    // and the scan covers a full turn unless configured otherwise.
    let mut cfg = ct_config(&s)?;
    if s.raw("bins").is_none() && s.raw("detector_pixel").is_none() {
        cfg.geometry.detector_pixel = cfg.geometry.detector_length() / bins as f64;
    }
    if s.raw("views").is_none() && s.raw("angular_step").is_none() {
        cfg.geometry.angular_step = 360.0 / views as f64;
    }
    cfg.geometry.n_views = views;
    cfg.geometry.n_bins = bins;
    s.finish()?;

    let sino = Sinogram::new(views, bins, values)?;
    let per_view = if s_beta.trim() == "auto" {
        estimate_view_thresholds(&sino)?
    } else {
        let v: f64 = s_beta
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("s_beta must be 'auto' or a number, got {s_beta:?}")))?;
        if !(v >= 0.0) {
            return Err(Error::InvalidSpec("s_beta must be >= 0".into()));
        }
        vec![v; views]
    };
    let s_ray: Vec<f64> = per_view.iter().flat_map(|&t| std::iter::repeat(t).take(bins)).collect();
    let grid = cfg.grid()?;
    let proj = FanBeamProjector::new(&grid, &cfg.geometry)?;
    let mut isd = IsdConfig::new(s_ray);
    isd.detect_fraction = cfg.detect_fraction;
    isd.max_rounds = cfg.max_rounds;
    let res = m1bit::ct::sart_isd(&proj, &sino.values, &isd, cfg.sart, IsdMonitor::default())?;
    let header = vec![
        format!(
            "detect in={} s_beta={} views={views} bins={bins} grid={}x{} pixel_size={} detector_pixel={} angular_step={}",
            input.display(),
            s_beta.trim(),
            cfg.size,
            cfg.size,
            cfg.pixel_size,
            cfg.geometry.detector_pixel,
            cfg.geometry.angular_step
        ),
        format!(
            "sart_iters={} detect_fraction={} rounds={} converged={}",
            cfg.sart.iters,
            cfg.detect_fraction,
            res.outcome.history.rounds.len(),
            res.outcome.history.converged
        ),
    ];
    write_mask(&out, &res.outcome.psi, bins, &header)?;
    println!(
        "{} of {} readings flagged saturated",
        res.outcome.psi.iter().filter(|&&b| b).count(),
        res.outcome.psi.len()
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidSpec(_) | Error::Dimension(_) | Error::Parse(_) | Error::Geometry(_) => 2,
        Error::Solver(_) | Error::NonFinite(_) => 3,
        Error::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = Settings::load(cli.config.as_deref()).and_then(|s| match cli.command {
        Command::Synth {
            action: SynthAction::Sweep(a),
        } => sweep(a, s),
        Command::Ct {
            action: CtAction::Run(a),
        } => ct_run(a, s),
        Command::Detect(a) => detect(a, s),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
