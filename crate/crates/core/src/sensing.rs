//! Measurement model with saturation, synthetic problem generation and the
//! SNR quality metric.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, LinearOperator};

/// RNG stream ids, one per generator, so each is a pure function of the seed.
const STREAM_SIGNAL: u64 = 0;
const STREAM_MATRIX: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Seeded ChaCha8 generator on a given stream.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A real signal of length `d >= 1` with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpec("signal must have length >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal"));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }
}

impl AsRef<[f64]> for Signal {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Dense `m x d` sensing matrix stored row-major: row `i` is the sensing
/// vector `u_i`, and measurement `i` is `u_i' x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SensingMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidSpec("sensing matrix needs m >= 1 and d >= 1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Self { rows: d, cols: d, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Sub-matrix keeping the listed rows in order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(Error::Dimension(format!("row {i} out of {}", self.rows)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::from_rows(idx.len(), self.cols, data)
    }
}

impl LinearOperator for SensingMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi != 0.0 {
                crate::linalg::axpy(yi, row, out);
            }
        }
    }
}

/// Which threshold a saturated reading hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    /// `y_i`: `+1` for upper, `-1` for lower saturation.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }
}

/// How saturated readings are reported by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationMode {
    /// Readings are clamped to the threshold they crossed.
    Clamped,
    /// Saturated readings are reported as zero (CT overexposure).
    ZeroFilled,
}

/// Observed readings `p`, saturation indicator `psi`, sides `y` (defined
/// where `psi` holds) and the active thresholds `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedObservations {
    pub p: Vec<f64>,
    pub psi: Vec<bool>,
    pub y: Vec<Option<Side>>,
    /// Active threshold per reading. In clamped mode only entries with
    /// `psi` set are meaningful (others hold 0); in zero-filled mode every
    /// entry carries its view's threshold.
    pub s: Vec<f64>,
    pub s_minus: f64,
    pub s_plus: f64,
    pub mode: ObservationMode,
}

impl SaturatedObservations {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn saturated_count(&self) -> usize {
        self.psi.iter().filter(|&&b| b).count()
    }

    /// Observations with every reading treated as analog.
    pub fn all_analog(p: Vec<f64>) -> Self {
        let m = p.len();
        Self {
            p,
            psi: vec![false; m],
            y: vec![None; m],
            s: vec![0.0; m],
            s_minus: f64::NEG_INFINITY,
            s_plus: f64::INFINITY,
            mode: ObservationMode::Clamped,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.p.len();
        if self.psi.len() != m || self.y.len() != m || self.s.len() != m {
            return Err(Error::Dimension(format!(
                "observation vectors disagree: p={m} psi={} y={} s={}",
                self.psi.len(),
                self.y.len(),
                self.s.len()
            )));
        }
        for i in 0..m {
            if self.psi[i] != self.y[i].is_some() {
                return Err(Error::InvalidSpec(format!(
                    "reading {i}: side must be set exactly when saturated"
                )));
            }
            if !self.p[i].is_finite() || (self.psi[i] && !self.s[i].is_finite()) {
                return Err(Error::NonFinite("observations"));
            }
        }
        Ok(())
    }

    /// Indices of analog (unsaturated) readings.
    pub fn analog_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.psi[i]).collect()
    }
}

/// Additive measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    /// Gaussian noise rescaled so that `sum q^2 / sum eps^2 == target_ratio`.
    Gaussian { target_ratio: f64 },
}

impl NoiseModel {
    /// Standard deviation that realizes the energy ratio for clean
    /// measurements `q` (before the exact rescale).
    pub fn sigma(&self, q: &[f64]) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { target_ratio } => {
                (dot(q, q) / (target_ratio * q.len() as f64)).sqrt()
            }
        }
    }
}

/// Parameters of one synthetic recovery instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticProblemSpec {
    pub d: usize,
    /// Sparsity `K`.
    pub k: usize,
    pub m: usize,
    /// Number of saturated readings, split evenly between the two sides.
    pub n: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl SyntheticProblemSpec {
    pub fn new(d: usize, k: usize, m: usize, n: usize, s_n: f64, seed: u64) -> Self {
        Self {
            d,
            k,
            m,
            n,
            noise: NoiseModel::Gaussian { target_ratio: s_n },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 {
            return Err(Error::InvalidSpec("d and m must be >= 1".into()));
        }
        if self.k > self.d {
            return Err(Error::InvalidSpec(format!("K={} exceeds d={}", self.k, self.d)));
        }
        if self.n > self.m {
            return Err(Error::InvalidSpec(format!("n={} exceeds m={}", self.n, self.m)));
        }
        if self.n % 2 != 0 {
            return Err(Error::InvalidSpec(format!("n={} must be even", self.n)));
        }
        if let NoiseModel::Gaussian { target_ratio } = self.noise {
            if !(target_ratio > 0.0) || !target_ratio.is_finite() {
                return Err(Error::InvalidSpec(format!("noise ratio must be positive, got {target_ratio}")));
            }
        }
        Ok(())
    }
}

/// Output of [`generate_true_signal`]; `degenerate_norm` is set when `K = 0`
/// and the unit-norm normalization is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueSignal {
    pub signal: Signal,
    pub degenerate_norm: bool,
}

/// `K`-sparse signal with a uniformly random support, standard normal
/// nonzeros, normalized to unit Euclidean norm.
pub fn generate_true_signal(spec: &SyntheticProblemSpec) -> Result<TrueSignal> {
    if spec.d == 0 {
        return Err(Error::InvalidSpec("d must be >= 1".into()));
    }
    if spec.k > spec.d {
        return Err(Error::InvalidSpec(format!("K={} exceeds d={}", spec.k, spec.d)));
    }
    let mut rng = seeded_rng(spec.seed, STREAM_SIGNAL);
    let mut x = vec![0.0; spec.d];
    if spec.k == 0 {
        return Ok(TrueSignal {
            signal: Signal(x),
            degenerate_norm: true,
        });
    }
    let support = index::sample(&mut rng, spec.d, spec.k);
    for i in support.iter() {
        x[i] = StandardNormal.sample(&mut rng);
    }
    let nrm = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nrm);
    Ok(TrueSignal {
        signal: Signal(x),
        degenerate_norm: false,
    })
}

/// `m x d` matrix of i.i.d. standard normal entries, drawn row by row.
pub fn generate_sensing_matrix(spec: &SyntheticProblemSpec) -> Result<SensingMatrix> {
    let mut rng = seeded_rng(spec.seed, STREAM_MATRIX);
    let data: Vec<f64> = (0..spec.m * spec.d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    SensingMatrix::from_rows(spec.m, spec.d, data)
}

/// Adds noise to clean measurements; Gaussian noise is rescaled so the
/// realized energy ratio equals the target exactly (up to rounding).
pub fn add_noise(q: &[f64], noise: NoiseModel, seed: u64) -> Vec<f64> {
    match noise {
        NoiseModel::None => q.to_vec(),
        NoiseModel::Gaussian { target_ratio } => {
            let mut rng = seeded_rng(seed, STREAM_NOISE);
            let mut eps: Vec<f64> = (0..q.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ee = dot(&eps, &eps);
            let qq = dot(q, q);
            if ee > 0.0 && qq > 0.0 {
                let scale = (qq / (target_ratio * ee)).sqrt();
                eps.iter_mut().for_each(|e| *e *= scale);
            } else {
                eps.iter_mut().for_each(|e| *e = 0.0);
            }
            q.iter().zip(&eps).map(|(a, b)| a + b).collect()
        }
    }
}

/// Thresholds leaving `n/2` readings below `s_minus` and `n/2` above
/// `s_plus`, each placed midway between the bounding order statistics.
///
/// Ties are ordered by index. If the two bounding order statistics are
/// equal the threshold is offset from the tied value by one machine
/// epsilon (relative), away from the interior, so tied readings stay analog.
pub fn choose_saturation_levels(q_noisy: &[f64], n: usize) -> Result<(f64, f64)> {
    let m = q_noisy.len();
    if n % 2 != 0 {
        return Err(Error::InvalidSpec(format!("n={n} must be even")));
    }
    if n > m {
        return Err(Error::InvalidSpec(format!("n={n} exceeds m={m}")));
    }
    if q_noisy.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurements"));
    }
    if n == 0 {
        return Ok((f64::NEG_INFINITY, f64::INFINITY));
    }
    if n == m {
        log::warn!("all {m} measurements saturated; no analog readings remain");
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| q_noisy[a].total_cmp(&q_noisy[b]).then(a.cmp(&b)));
    let half = n / 2;
    let eps_off = |v: f64| f64::EPSILON * v.abs().max(1.0);

    let lo_a = q_noisy[order[half - 1]];
    let lo_b = q_noisy[order[half]];
    let s_minus = if lo_a == lo_b {
        lo_a - eps_off(lo_a)
    } else {
        0.5 * (lo_a + lo_b)
    };
    let hi_a = q_noisy[order[m - half - 1]];
    let hi_b = q_noisy[order[m - half]];
    let s_plus = if hi_a == hi_b {
        hi_a + eps_off(hi_a)
    } else {
        0.5 * (hi_a + hi_b)
    };
    Ok((s_minus, s_plus))
}

/// Clamp readings to `[s_minus, s_plus]` and record which side saturated.
/// A reading exactly on a threshold counts as saturated.
pub fn saturate_measurements(q_noisy: &[f64], s_minus: f64, s_plus: f64) -> Result<SaturatedObservations> {
    if q_noisy.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurements"));
    }
    if s_minus.is_nan() || s_plus.is_nan() || s_minus > s_plus {
        return Err(Error::InvalidSpec(format!(
            "thresholds must satisfy s- <= s+, got ({s_minus}, {s_plus})"
        )));
    }
    let m = q_noisy.len();
    let mut obs = SaturatedObservations {
        p: Vec::with_capacity(m),
        psi: Vec::with_capacity(m),
        y: Vec::with_capacity(m),
        s: Vec::with_capacity(m),
        s_minus,
        s_plus,
        mode: ObservationMode::Clamped,
    };
    for &q in q_noisy {
        let (p, side) = if q >= s_plus {
            (s_plus, Some(Side::Upper))
        } else if q <= s_minus {
            (s_minus, Some(Side::Lower))
        } else {
            (q, None)
        };
        obs.p.push(p);
        obs.psi.push(side.is_some());
        obs.s.push(match side {
            Some(Side::Upper) => s_plus,
            Some(Side::Lower) => s_minus,
            None => 0.0,
        });
        obs.y.push(side);
    }
    Ok(obs)
}

/// `10 log10(||x||^2 / ||x - x_hat||^2)`; `+inf` for an exact recovery.
pub fn snr_db(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x_true.len() != x_hat.len() {
        return Err(Error::Dimension(format!(
            "snr of lengths {} and {}",
            x_true.len(),
            x_hat.len()
        )));
    }
    let sig = dot(x_true, x_true);
    if sig == 0.0 {
        return Err(Error::InvalidSpec("SNR undefined for a zero reference signal".into()));
    }
    let err: f64 = x_true.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (sig / err).log10())
}

/// A complete synthetic instance: truth, sensing matrix, clean and noisy
/// measurements, and the saturated observations.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub spec: SyntheticProblemSpec,
    pub x_true: Signal,
    pub matrix: SensingMatrix,
    pub q_clean: Vec<f64>,
    pub q_noisy: Vec<f64>,
    pub obs: SaturatedObservations,
}

impl SyntheticProblem {
    pub fn generate(spec: SyntheticProblemSpec) -> Result<Self> {
        spec.validate()?;
        let x_true = generate_true_signal(&spec)?.signal;
        let matrix = generate_sensing_matrix(&spec)?;
        let q_clean = matrix.apply_vec(x_true.as_slice());
        let q_noisy = add_noise(&q_clean, spec.noise, spec.seed);
        let (s_minus, s_plus) = choose_saturation_levels(&q_noisy, spec.n)?;
        let obs = saturate_measurements(&q_noisy, s_minus, s_plus)?;
        Ok(Self {
            spec,
            x_true,
            matrix,
            q_clean,
            q_noisy,
            obs,
        })
    }

    /// The analog rows and readings only (what a saturation-blind method
    /// keeps after dropping clipped readings).
    pub fn unsaturated_part(&self) -> Result<(SensingMatrix, Vec<f64>)> {
        let idx = self.obs.analog_indices();
        let u = self.matrix.select_rows(&idx)?;
        let p = idx.iter().map(|&i| self.obs.p[i]).collect();
        Ok((u, p))
    }
}
