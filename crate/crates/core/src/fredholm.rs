//! Law of the largest eigenvalue, `P(lambda_max <= s) = det(1 - K|_(s, inf))`,
//! by Nystrom discretization on Gauss-Legendre nodes of `[s, T]`.
//!
//! The kernel is not symmetric and its entries grow like `e^{a_1 y}`. Before
//! taking the determinant it is conjugated by the diagonal
//! `d(x) = e^{(V(x) + a_+ x) / 2}`, `a_+ = max(0, a_1)`, which leaves the
//! determinant unchanged and keeps the matrix entries of moderate size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, Lu, Matrix};
use crate::orthopoly::cd_kernel_k0_scaled;
use crate::quadrature::legendre_rule;
use crate::source_kernel::KernelModel;

/// Largest overshoot outside `[0, 1]` that is clamped instead of reported.
pub const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FredholmConfig {
    /// Starting Nystrom size.
    pub nodes: usize,
    /// Largest Nystrom size tried while doubling.
    pub max_nodes: usize,
    /// Skip doubling and use `nodes` as given.
    pub fixed_nodes: bool,
    /// Truncation point `T`; chosen from the tail mass when `None`.
    pub truncation: Option<f64>,
    /// Bound on `int_T^{T+8} K(x,x) dx` when placing `T`.
    pub tail_tolerance: f64,
    /// Largest change under doubling `m` accepted as converged.
    pub tolerance: f64,
}

impl Default for FredholmConfig {
    fn default() -> Self {
        Self { nodes: 60, max_nodes: 480, fixed_nodes: false, truncation: None, tail_tolerance: 1e-12, tolerance: 1e-8 }
    }
}

impl FredholmConfig {
    /// The same configuration pinned to `m` nodes.
    pub fn with_nodes(self, m: usize) -> Self {
        Self { nodes: m, fixed_nodes: true, ..self }
    }

    fn validate(&self, s: f64) -> Result<()> {
        if self.nodes < 4 {
            return Err(Error::InvalidArgument(format!("Nystrom size must be at least 4 (got {})", self.nodes)));
        }
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("evaluation point must be finite (got {s})")));
        }
        if let Some(t) = self.truncation {
            if !(t > s) {
                return Err(Error::InvalidArgument(format!("truncation T = {t} must exceed s = {s}")));
            }
        }
        if !(self.tail_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tail tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FredholmValue {
    pub cdf: f64,
    /// Nystrom size of the reported value.
    pub nodes: usize,
    pub truncation: f64,
    /// Change between `nodes` and `2 * nodes` (`NaN` when not doubled).
    pub change: f64,
}

/// `int_lo^hi K(x,x) dx` by a 64-node Gauss-Legendre rule.
pub fn diagonal_mass(model: &KernelModel, lo: f64, hi: f64) -> Result<f64> {
    let rule = legendre_rule(lo, hi, 64)?;
    let mut total = 0.0;
    for (x, w) in rule.iter() {
        total += w * model.kernel_k(x, x)?;
    }
    Ok(total)
}

/// Doubling search for `T = s + L`, `L = 4, 8, ...`, until the mass on
/// `[T, T + 8]` drops below `tolerance`.
pub fn place_truncation(model: &KernelModel, s: f64, tolerance: f64) -> Result<f64> {
    let mut length = 4.0;
    let mut tail = f64::NAN;
    for _ in 0..12 {
        let t = s + length;
        tail = diagonal_mass(model, t, t + 8.0)?.abs();
        if tail < tolerance {
            return Ok(t);
        }
        length *= 2.0;
    }
    Err(Error::FredholmTruncation { truncation: s + length / 2.0, tail })
}

/// `det(I - sqrt(w) K sqrt(w))` on `m` Gauss-Legendre nodes of `[s, t]`.
pub fn nystrom_determinant(model: &KernelModel, s: f64, t: f64, m: usize) -> Result<f64> {
    let rule = legendre_rule(s, t, m)?;
    let xs = rule.nodes();
    let n = model.n();
    let tilt = model.max_positive_source();
    let weight = model.weight();

    let u: Vec<Vec<f64>> = xs.iter().map(|&x| model.b_lu().solve(&model.vector_t(x))).collect();
    let w: Vec<Vec<f64>> = xs.iter().map(|&y| model.vector_w(y)).collect::<Result<_>>()?;
    // x-side and y-side halves of the balancing exponent, with sqrt(w_i)
    let left: Vec<f64> = rule.iter().map(|(x, wt)| 0.5 * wt.ln() - 0.5 * weight.eval(x) + 0.5 * tilt * x).collect();
    let right: Vec<f64> = rule.iter().map(|(y, wt)| 0.5 * wt.ln() - 0.5 * weight.eval(y) - 0.5 * tilt * y).collect();

    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| {
                    let scaled = cd_kernel_k0_scaled(model.table(), n, xs[i], xs[j]) + dot(&w[j], &u[i]);
                    let entry = (left[i] + right[j]).exp() * scaled;
                    if i == j {
                        1.0 - entry
                    } else {
                        -entry
                    }
                })
                .collect()
        })
        .collect();
    let a = Matrix::from_rows(&rows);
    if !a.max_abs().is_finite() {
        return Err(Error::NonFinite { node: f64::NAN });
    }
    Ok(Lu::factor(&a, "Nystrom matrix").map(|lu| lu.det()).unwrap_or(0.0))
}

fn clamp(value: f64) -> Result<f64> {
    if value < -RANGE_SLACK || value > 1.0 + RANGE_SLACK || !value.is_finite() {
        return Err(Error::FredholmRange { value });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// `P(lambda_max <= s)` with the sizes used.
pub fn lmax_cdf_detailed(model: &KernelModel, s: f64, cfg: &FredholmConfig) -> Result<FredholmValue> {
    cfg.validate(s)?;
    let t = match cfg.truncation {
        Some(t) => t,
        None => place_truncation(model, s, cfg.tail_tolerance)?,
    };
    let mut m = cfg.nodes;
    let mut current = nystrom_determinant(model, s, t, m)?;
    if cfg.fixed_nodes {
        return Ok(FredholmValue { cdf: clamp(current)?, nodes: m, truncation: t, change: f64::NAN });
    }
    loop {
        if 2 * m > cfg.max_nodes {
            return Err(Error::FredholmUnconverged { max_nodes: m, change: f64::NAN });
        }
        let next = nystrom_determinant(model, s, t, 2 * m)?;
        let change = (next - current).abs();
        if change <= cfg.tolerance {
            return Ok(FredholmValue { cdf: clamp(current)?, nodes: m, truncation: t, change });
        }
        if 4 * m > cfg.max_nodes {
            return Err(Error::FredholmUnconverged { max_nodes: 2 * m, change });
        }
        m *= 2;
        current = next;
    }
}

/// `P(lambda_max <= s)`.
pub fn lmax_cdf(model: &KernelModel, s: f64, cfg: &FredholmConfig) -> Result<f64> {
    Ok(lmax_cdf_detailed(model, s, cfg)?.cdf)
}

/// Smallest `s` with `P(lambda_max <= s) >= p`, by bisection to `1e-9`.
pub fn lmax_quantile(model: &KernelModel, p: f64, cfg: &FredholmConfig) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability must lie in (0, 1) (got {p})")));
    }
    let cdf = |s: f64| lmax_cdf(model, s, cfg);
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut step = 1.0;
    while cdf(lo)? >= p {
        hi = lo;
        lo -= step;
        step *= 2.0;
        if step > 1e4 {
            return Err(Error::InvalidArgument("quantile bracket not found below".into()));
        }
    }
    step = 1.0;
    while cdf(hi)? < p {
        lo = hi;
        hi += step;
        step *= 2.0;
        if step > 1e4 {
            return Err(Error::InvalidArgument("quantile bracket not found above".into()));
        }
    }
    while hi - lo > 1e-9 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source_kernel::SourceSpec;
    use crate::weight::WeightSpec;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn model(n: usize, a: &[f64]) -> KernelModel {
        KernelModel::build(SourceSpec::new(n, a.to_vec()).unwrap(), WeightSpec::gaussian()).unwrap()
    }

    fn rank_one_exact(s: f64) -> f64 {
        // lambda = 1/2 + N(0, 1/2)
        Normal::new(0.0, 1.0).unwrap().cdf(2f64.sqrt() * (s - 0.5))
    }

    #[test]
    fn rank_one_closed_form() {
        let m = model(1, &[1.0]);
        let cfg = FredholmConfig::default();
        for s in [-1.0, 0.0, 0.5, 1.0, 2.5] {
            let v = lmax_cdf(&m, s, &cfg).unwrap();
            assert!((v - rank_one_exact(s)).abs() < 1e-8, "s = {s}: {v}");
        }
        assert!((lmax_cdf(&m, 0.5, &cfg).unwrap() - 0.5).abs() < 1e-8);
        assert!((lmax_cdf(&m, 2.5, &cfg).unwrap() - 0.99766).abs() < 1e-5);
    }

    #[test]
    fn monotone_and_limits() {
        let m = model(4, &[1.0, -0.5]);
        let cfg = FredholmConfig::default();
        let mut last = -1.0;
        for i in 0..=16 {
            let s = -2.0 + 0.5 * i as f64;
            let v = lmax_cdf(&m, s, &cfg).unwrap();
            assert!(v >= last - 1e-9, "s = {s}");
            last = v;
        }
        assert!(lmax_cdf(&m, -4.0, &cfg).unwrap() < 1e-6);
        assert!(lmax_cdf(&m, 9.0, &cfg).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn doubling_is_stable_at_reported_size() {
        let m = model(3, &[2.0]);
        let cfg = FredholmConfig::default();
        let v = lmax_cdf_detailed(&m, 1.5, &cfg).unwrap();
        let doubled = lmax_cdf(&m, 1.5, &FredholmConfig { truncation: Some(v.truncation), ..cfg.with_nodes(2 * v.nodes) }).unwrap();
        assert!((v.cdf - doubled).abs() <= 1e-8);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let m = model(1, &[1.0]);
        let q = lmax_quantile(&m, 0.5, &FredholmConfig::default()).unwrap();
        assert!((q - 0.5).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_config() {
        let m = model(1, &[1.0]);
        assert!(lmax_cdf(&m, 0.0, &FredholmConfig::default().with_nodes(2)).is_err());
        assert!(lmax_cdf(&m, 0.0, &FredholmConfig { truncation: Some(-1.0), ..Default::default() }).is_err());
    }
}
