//! Monic orthogonal polynomials of `e^{-V}` and the Christoffel-Darboux
//! kernel `K0`.
//!
//! The polynomials satisfy
//! `pi_{k+1}(x) = (x - alpha_k) pi_k(x) - beta_k pi_{k-1}(x)` with
//! `h_k = <pi_k, pi_k> = beta_k h_{k-1}` and `kappa_k = h_k^{-1/2}`.
//! Norms are stored as logarithms because `h_k` overflows `f64` long before
//! the recurrence tables used to build large quadrature rules run out.

use crate::error::{Error, Result};
use crate::quadrature::discretize_weight;
use crate::weight::{GaussianForm, WeightSpec};

/// Three-term recurrence for `pi_0 .. pi_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceTable {
    alpha: Vec<f64>,
    // beta[0] is unused and stored as 0
    beta: Vec<f64>,
    log_h: Vec<f64>,
}

/// Monomial coefficients used by the coefficient identities.
///
/// `b` holds `pi_n` in descending degree (`b[0] = 1`); `c_tilde` holds
/// `kappa_{n-1}^2 pi_{n-1}` padded to degree `n`, so `c_tilde[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    pub n: usize,
    pub b: Vec<f64>,
    pub c_tilde: Vec<f64>,
}

impl RecurrenceTable {
    /// Build from `alpha_0..alpha_N`, `beta_0..beta_N` (`beta_0` ignored)
    /// and `h_0`.
    pub fn from_coefficients(alpha: Vec<f64>, mut beta: Vec<f64>, h0: f64) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != beta.len() {
            return Err(Error::InvalidArgument("alpha and beta must have equal, nonzero length".into()));
        }
        if !(h0 > 0.0) || !h0.is_finite() {
            return Err(Error::PositivityLost { k: 0 });
        }
        beta[0] = 0.0;
        let mut log_h = Vec::with_capacity(alpha.len());
        log_h.push(h0.ln());
        for (k, &b) in beta.iter().enumerate().skip(1) {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::PositivityLost { k });
            }
            log_h.push(log_h[k - 1] + b.ln());
        }
        Ok(Self { alpha, beta, log_h })
    }

    /// Exact recurrence of a quadratic potential.
    pub fn gaussian_closed_form(form: GaussianForm, size: usize) -> Self {
        let alpha = vec![form.center; size + 1];
        let beta: Vec<f64> = (0..=size).map(|k| k as f64 / (2.0 * form.precision)).collect();
        let mut log_h = Vec::with_capacity(size + 1);
        log_h.push(form.log_mass);
        for k in 1..=size {
            log_h.push(log_h[k - 1] + beta[k].ln());
        }
        Self { alpha, beta, log_h }
    }

    /// Largest polynomial index `N` the table describes.
    pub fn size(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn log_h(&self, k: usize) -> f64 {
        self.log_h[k]
    }

    pub fn h(&self, k: usize) -> f64 {
        self.log_h[k].exp()
    }

    pub fn kappa(&self, k: usize) -> f64 {
        (-0.5 * self.log_h[k]).exp()
    }

    pub fn kappa_sq(&self, k: usize) -> f64 {
        (-self.log_h[k]).exp()
    }

    /// Truncate to indices `0..=size`.
    pub fn truncated(&self, size: usize) -> Self {
        let keep = (size + 1).min(self.alpha.len());
        Self {
            alpha: self.alpha[..keep].to_vec(),
            beta: self.beta[..keep].to_vec(),
            log_h: self.log_h[..keep].to_vec(),
        }
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k > self.size() {
            return Err(Error::IndexOutOfRange { k, max: self.size() });
        }
        Ok(())
    }

    /// `pi_0(x) .. pi_n(x)`. Caller guarantees `n <= size`.
    pub fn eval_all(&self, n: usize, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        self.eval_into(x, n, |_, v| out.push(v));
        out
    }

    /// Stream `(k, pi_k(x))` for `k = 0..=n`.
    pub(crate) fn eval_into(&self, x: f64, n: usize, mut sink: impl FnMut(usize, f64)) {
        let (mut prev, mut cur) = (0.0, 1.0);
        sink(0, cur);
        for k in 0..n {
            let next = (x - self.alpha[k]) * cur - self.beta[k] * prev;
            prev = cur;
            cur = next;
            sink(k + 1, cur);
        }
    }

    /// `(pi_{n-1}(x), pi_n(x), pi_{n-1}'(x), pi_n'(x))` for `n >= 1`.
    fn eval_pair_with_derivative(&self, n: usize, x: f64) -> (f64, f64, f64, f64) {
        let (mut p_prev, mut p) = (0.0, 1.0);
        let (mut d_prev, mut d) = (0.0, 0.0);
        for k in 0..n {
            let shift = x - self.alpha[k];
            let p_next = shift * p - self.beta[k] * p_prev;
            let d_next = p + shift * d - self.beta[k] * d_prev;
            p_prev = p;
            p = p_next;
            d_prev = d;
            d = d_next;
        }
        (p_prev, p, d_prev, d)
    }
}

/// Smallest polynomial degree the Stieltjes discretization is built for.
/// Every table of size up to 256 comes from the same discrete measure, so
/// tables of different sizes agree exactly on their common coefficients.
const MIN_DISCRETIZATION_DEGREE: usize = 514;

/// Recurrence coefficients of `e^{-V}` for `pi_0..pi_N` by the discretized
/// Stieltjes procedure, run in orthonormal form to avoid overflow.
pub fn build_recurrence(weight: &WeightSpec, size: usize) -> Result<RecurrenceTable> {
    if size == 0 {
        return Err(Error::InvalidArgument("recurrence size must be at least 1".into()));
    }
    let measure = discretize_weight(weight, (2 * size + 2).max(MIN_DISCRETIZATION_DEGREE))?;
    let xs = measure.nodes();
    let ws = measure.weights();
    let h0: f64 = ws.iter().sum();

    let mut alpha = Vec::with_capacity(size + 1);
    let mut beta: Vec<f64> = vec![0.0];
    let mut p_prev = vec![0.0; xs.len()];
    let mut p: Vec<f64> = vec![1.0 / h0.sqrt(); xs.len()];
    let mut u = vec![0.0; xs.len()];
    for k in 0..=size {
        let a: f64 = xs.iter().zip(ws).zip(&p).map(|((x, w), pk)| w * x * pk * pk).sum();
        alpha.push(a);
        if k == size {
            break;
        }
        let sqrt_beta = beta[k].sqrt();
        let mut norm = 0.0;
        for i in 0..xs.len() {
            u[i] = (xs[i] - a) * p[i] - sqrt_beta * p_prev[i];
            norm += ws[i] * u[i] * u[i];
        }
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::PositivityLost { k: k + 1 });
        }
        beta.push(norm);
        let inv = 1.0 / norm.sqrt();
        for i in 0..xs.len() {
            p_prev[i] = p[i];
            p[i] = u[i] * inv;
        }
    }
    RecurrenceTable::from_coefficients(alpha, beta, h0)
}

/// Recurrence for building large quadrature rules: the closed form for
/// quadratic potentials, Stieltjes otherwise.
pub fn quadrature_recurrence(weight: &WeightSpec, size: usize) -> Result<RecurrenceTable> {
    match weight.gaussian_form() {
        Some(form) => Ok(RecurrenceTable::gaussian_closed_form(form, size)),
        None => build_recurrence(weight, size),
    }
}

/// `pi_k(x)` by forward recurrence.
pub fn eval_monic(table: &RecurrenceTable, k: usize, x: f64) -> Result<f64> {
    table.check_index(k)?;
    let mut last = 1.0;
    table.eval_into(x, k, |_, v| last = v);
    Ok(last)
}

/// Monomial coefficients of `pi_n` and of `kappa_{n-1}^2 pi_{n-1}`.
pub fn extract_coeffs(table: &RecurrenceTable, n: usize) -> Result<PolyCoeffs> {
    table.check_index(n)?;
    if n == 0 {
        return Err(Error::InvalidArgument("coefficients need n >= 1".into()));
    }
    // ascending coefficients of pi_k
    let mut prev: Vec<f64> = vec![];
    let mut cur: Vec<f64> = vec![1.0];
    for k in 0..n {
        let mut next = vec![0.0; k + 2];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= table.alpha[k] * c;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] -= table.beta[k] * c;
        }
        prev = cur;
        cur = next;
    }
    let b: Vec<f64> = cur.iter().rev().copied().collect();
    let kappa_sq = table.kappa_sq(n - 1);
    let mut c_tilde = vec![0.0];
    c_tilde.extend(prev.iter().rev().map(|c| kappa_sq * c));
    Ok(PolyCoeffs { n, b, c_tilde })
}

/// Whether `(x, y)` is close enough to the diagonal to need the confluent
/// form of the Christoffel-Darboux quotient.
pub(crate) fn near_diagonal(x: f64, y: f64) -> bool {
    (x - y).abs() < 1e-8 * (1.0 + x.abs())
}

/// `K0(x,y) e^{V(x)}`, the polynomial part of the kernel.
pub(crate) fn cd_kernel_k0_scaled(table: &RecurrenceTable, n: usize, x: f64, y: f64) -> f64 {
    let kappa_sq = table.kappa_sq(n - 1);
    if near_diagonal(x, y) {
        let (pm, pn, dm, dn) = table.eval_pair_with_derivative(n, x);
        kappa_sq * (dn * pm - dm * pn)
    } else {
        let (xm, xn, _, _) = table.eval_pair_with_derivative(n, x);
        let (ym, yn, _, _) = table.eval_pair_with_derivative(n, y);
        kappa_sq * (xn * ym - xm * yn) / (x - y)
    }
}

/// Christoffel-Darboux kernel
/// `K0(x,y) = e^{-V(x)} kappa_{n-1}^2 (pi_n(x) pi_{n-1}(y) - pi_{n-1}(x) pi_n(y)) / (x - y)`,
/// with the weight on the first argument only. Near the diagonal the
/// confluent form `e^{-V(x)} kappa_{n-1}^2 (pi_n'(x) pi_{n-1}(x) - pi_{n-1}'(x) pi_n(x))`
/// is used.
pub fn cd_kernel_k0(table: &RecurrenceTable, weight: &WeightSpec, n: usize, x: f64, y: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("K0 needs n >= 1".into()));
    }
    table.check_index(n)?;
    Ok(weight.density(x) * cd_kernel_k0_scaled(table, n, x, y))
}

/// Sum form `e^{-V(x)} sum_{k<n} kappa_k^2 pi_k(x) pi_k(y)` of `K0`.
pub fn cd_kernel_k0_sum(table: &RecurrenceTable, weight: &WeightSpec, n: usize, x: f64, y: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("K0 needs n >= 1".into()));
    }
    table.check_index(n - 1)?;
    let px = table.eval_all(n - 1, x);
    let py = table.eval_all(n - 1, y);
    let s: f64 = (0..n).map(|k| table.kappa_sq(k) * px[k] * py[k]).sum();
    Ok(weight.density(x) * s)
}
