//! Iterative saturation detection for lower-saturated, non-negative systems.
//!
//! A reading at or below its threshold is either a genuine zero (the ray
//! missed the object) or a lower-saturated one. Starting from "all such
//! readings saturated", each round reconstructs, re-projects, and keeps a
//! reading saturated only if the re-projection exceeds `s / detect_fraction`;
//! the others become analog zeros. Rounds repeat until the labels settle.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::LinearOperator;
use crate::sensing::{ObservationMode, SaturatedObservations, Side};

pub const DEFAULT_DETECT_FRACTION: f64 = 10.0;
pub const DEFAULT_MAX_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct IsdConfig {
    /// Lower threshold per reading.
    pub s_minus: Vec<f64>,
    /// A candidate stays saturated when its re-projection exceeds
    /// `s_minus / detect_fraction`.
    pub detect_fraction: f64,
    pub max_rounds: usize,
    /// Start each reconstruction from the previous round's estimate.
    pub warm_start: bool,
}

impl IsdConfig {
    pub fn new(s_minus: Vec<f64>) -> Self {
        Self {
            s_minus,
            detect_fraction: DEFAULT_DETECT_FRACTION,
            max_rounds: DEFAULT_MAX_ROUNDS,
            warm_start: true,
        }
    }

    pub fn uniform(m: usize, s_minus: f64) -> Self {
        Self::new(vec![s_minus; m])
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.s_minus.len() != m {
            return Err(Error::Dimension(format!(
                "{} thresholds for {m} readings",
                self.s_minus.len()
            )));
        }
        if !(self.detect_fraction > 0.0) {
            return Err(Error::InvalidSpec("detect_fraction must be > 0".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidSpec("max_rounds must be >= 1".into()));
        }
        if self.s_minus.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("thresholds"));
        }
        Ok(())
    }
}

/// Maps observations (with an optional warm start) to an estimate.
pub trait Reconstructor {
    fn reconstruct(&mut self, obs: &SaturatedObservations, warm: Option<&[f64]>) -> Result<Vec<f64>>;
}

impl<F> Reconstructor for F
where
    F: FnMut(&SaturatedObservations, Option<&[f64]>) -> Result<Vec<f64>>,
{
    fn reconstruct(&mut self, obs: &SaturatedObservations, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        self(obs, warm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsdRound {
    /// Labels used for this round's reconstruction.
    pub psi: Vec<bool>,
    /// Labels changed by the detection step after this reconstruction.
    pub flips: usize,
    /// Counts against the true labels of the labels used this round.
    pub false_detections: Option<usize>,
    pub missing_detections: Option<usize>,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IsdHistory {
    pub rounds: Vec<IsdRound>,
    /// True when the last round changed no label.
    pub converged: bool,
}

impl IsdHistory {
    pub const CSV_HEADER: &'static str = "round,flips,false,missing,metric";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let opt_count = |v: Option<usize>| v.map_or_else(|| "nan".to_string(), |c| c.to_string());
        for (k, r) in self.rounds.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                k + 1,
                r.flips,
                opt_count(r.false_detections),
                opt_count(r.missing_detections),
                r.metric.map_or_else(|| "nan".to_string(), fmt_f64)
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct IsdOutcome {
    pub x_hat: Vec<f64>,
    pub psi: Vec<bool>,
    /// Observations of the final round (analog zeros written in).
    pub observations: SaturatedObservations,
    pub history: IsdHistory,
}

/// A failed reconstruction, with the rounds completed before it.
#[derive(Debug)]
pub struct IsdFailure {
    pub error: Error,
    pub history: IsdHistory,
}

impl From<IsdFailure> for Error {
    fn from(f: IsdFailure) -> Self {
        f.error
    }
}

/// Optional ground truth for per-round diagnostics.
#[derive(Default)]
pub struct IsdMonitor<'a> {
    pub psi_true: Option<&'a [bool]>,
    pub metric: Option<&'a dyn Fn(&[f64]) -> f64>,
}

/// `(false, missing)`: readings labelled saturated that are not, and
/// saturated readings that were missed.
pub fn compare_indicators(psi_true: &[bool], psi_detected: &[bool]) -> Result<(usize, usize)> {
    if psi_true.len() != psi_detected.len() {
        return Err(Error::Dimension(format!(
            "indicators of lengths {} and {}",
            psi_true.len(),
            psi_detected.len()
        )));
    }
    let mut false_det = 0;
    let mut missing = 0;
    for (&t, &d) in psi_true.iter().zip(psi_detected) {
        match (t, d) {
            (false, true) => false_det += 1,
            (true, false) => missing += 1,
            _ => {}
        }
    }
    Ok((false_det, missing))
}

/// Observations for one round: candidates labelled saturated become lower
/// one-bit readings at their threshold, the other candidates analog zeros.
pub fn round_observations(p: &[f64], s_minus: &[f64], psi: &[bool]) -> SaturatedObservations {
    let m = p.len();
    let mut obs = SaturatedObservations {
        p: p.to_vec(),
        psi: psi.to_vec(),
        y: vec![None; m],
        s: s_minus.to_vec(),
        s_minus: s_minus.iter().copied().fold(f64::INFINITY, f64::min),
        s_plus: f64::INFINITY,
        mode: ObservationMode::ZeroFilled,
    };
    for i in 0..m {
        if p[i] <= s_minus[i] {
            obs.p[i] = 0.0;
            if psi[i] {
                obs.y[i] = Some(Side::Lower);
            }
        }
    }
    obs
}

/// Runs the detection loop on readings `p` measured through `op`.
pub fn run_isd<Op, R>(
    op: &Op,
    p: &[f64],
    cfg: &IsdConfig,
    recon: &mut R,
    monitor: IsdMonitor<'_>,
) -> std::result::Result<IsdOutcome, IsdFailure>
where
    Op: LinearOperator + ?Sized,
    R: Reconstructor + ?Sized,
{
    let m = p.len();
    let fail = |error: Error, history: &IsdHistory| IsdFailure {
        error,
        history: history.clone(),
    };
    let mut history = IsdHistory::default();
    if op.rows() != m {
        return Err(fail(
            Error::Dimension(format!("operator has {} rows, {m} readings", op.rows())),
            &history,
        ));
    }
    if let Err(e) = cfg.validate(m) {
        return Err(fail(e, &history));
    }
    if let Some(t) = monitor.psi_true {
        if t.len() != m {
            return Err(fail(Error::Dimension("true indicator length".into()), &history));
        }
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(fail(Error::NonFinite("readings"), &history));
    }

    let candidate: Vec<bool> = (0..m).map(|i| p[i] <= cfg.s_minus[i]).collect();
    let mut psi = candidate.clone();
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    seen.insert(psi.clone());
    let mut x_prev: Option<Vec<f64>> = None;

    loop {
        let obs = round_observations(p, &cfg.s_minus, &psi);
        let warm = if cfg.warm_start { x_prev.as_deref() } else { None };
        let x = match recon.reconstruct(&obs, warm) {
            Ok(x) => x,
            Err(e) => return Err(fail(e, &history)),
        };
        if x.len() != op.cols() {
            return Err(fail(
                Error::Dimension(format!("reconstruction has length {}, expected {}", x.len(), op.cols())),
                &history,
            ));
        }
        let q = op.apply_vec(&x);
        let mut next = psi.clone();
        let mut flips = 0;
        for i in 0..m {
            if candidate[i] {
                next[i] = q[i] > cfg.s_minus[i] / cfg.detect_fraction;
                if next[i] != psi[i] {
                    flips += 1;
                }
            }
        }
        let (false_detections, missing_detections) = match monitor.psi_true {
            Some(t) => {
                let (f, mi) = compare_indicators(t, &psi).expect("lengths checked");
                (Some(f), Some(mi))
            }
            None => (None, None),
        };
        history.rounds.push(IsdRound {
            psi: psi.clone(),
            flips,
            false_detections,
            missing_detections,
            metric: monitor.metric.map(|f| f(&x)),
        });
        log::info!("isd round {}: {} flips", history.rounds.len(), flips);

        if flips == 0 {
            history.converged = true;
            return Ok(IsdOutcome {
                x_hat: x,
                psi,
                observations: obs,
                history,
            });
        }
        let cycled = !seen.insert(next.clone());
        if cycled || history.rounds.len() >= cfg.max_rounds {
            if cycled {
                log::warn!("isd labels entered a cycle after {} rounds", history.rounds.len());
            }
            history.converged = false;
            return Ok(IsdOutcome {
                x_hat: x,
                psi,
                observations: obs,
                history,
            });
        }
        psi = next;
        x_prev = Some(x);
    }
}
