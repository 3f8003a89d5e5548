//! Small dense-vector kernels and the linear-operator abstraction shared by
//! the dense sensing matrix and the fan-beam projector.

/// A real linear map `R^cols -> R^rows` with its transpose.
///
/// `apply` computes the measurements `q = U'x`, `adjoint` maps a
/// measurement-space vector back, `U a`.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn adjoint(&self, y: &[f64], out: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.apply(x, &mut out);
        out
    }

    fn adjoint_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        self.adjoint(y, &mut out);
        out
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        (**self).adjoint(y, out)
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// Largest eigenvalue of `U' diag(w) U` (with `U` acting as `op`) by power
/// iteration from a fixed deterministic start vector.
///
/// Power iteration approaches the top eigenvalue from below, so callers that
/// need a Lipschitz bound should inflate the result slightly.
pub fn power_iteration<Op: LinearOperator + ?Sized>(
    op: &Op,
    weights: Option<&[f64]>,
    iters: usize,
) -> f64 {
    let d = op.cols();
    if d == 0 || op.rows() == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start: a slowly varying positive ramp
    // plus an alternating component so neither smooth nor oscillating
    // eigenvectors are orthogonal to it.
    let mut v: Vec<f64> = (0..d)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.754_877_666).sin())
        .collect();
    let n0 = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut q = vec![0.0; op.rows()];
    let mut w = vec![0.0; d];
    let mut lambda = 0.0;
    for _ in 0..iters {
        op.apply(&v, &mut q);
        if let Some(wt) = weights {
            q.iter_mut().zip(wt).for_each(|(qi, wi)| *qi *= wi);
        }
        op.adjoint(&q, &mut w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &w);
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / nw);
    }
    lambda.max(0.0)
}

/// Pairwise (cascade) summation; order-independent of thread scheduling and
/// more accurate than a running sum for long vectors.
pub fn pairwise_sum(a: &[f64]) -> f64 {
    if a.len() <= 8 {
        return a.iter().sum();
    }
    let mid = a.len() / 2;
    pairwise_sum(&a[..mid]) + pairwise_sum(&a[mid..])
}
