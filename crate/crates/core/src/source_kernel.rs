//! Correlation kernel of the unitary ensemble `e^{-Tr(V(M) - A M)}` with a
//! rank-`r` external source `A = diag(a_1, ..., a_r, 0, ..., 0)`,
//! written through ordinary orthogonal polynomials:
//!
//! ```text
//! K(x,y) = K0(x,y) + e^{-V(x)} w(y)^t B^{-1} t(x)
//! t(z)   = (pi_{n-r}(z), ..., pi_{n-1}(z))^t
//! v(z)   = (e^{a_1 z}, ..., e^{a_r z})^t
//! w(y)^t = v(y)^t - int K0(s,y) v(s)^t ds
//! B      = int t(s) v(s)^t e^{-V(s)} ds
//! ```
//!
//! Both `B` and `w` are driven by one table of moments
//! `mu_{k,j} = int pi_k(s) e^{a_j s} e^{-V(s)} ds`, `k < n`:
//! `B_{ij} = mu_{n-r+i, j}` and
//! `w_j(y) = e^{a_j y} - sum_k kappa_k^2 pi_k(y) mu_{k,j}`.
//!
//! The shared Gauss rule for `e^{-V}` is sized by doubling stability of these
//! moments. The rule itself loses relative accuracy on them, though: `mu_{k,j}`
//! shrinks roughly like `a_j^k / k!` while the quadrature terms do not. For
//! even `V` the moments are therefore taken from the series
//! `mu_{k,j} = sqrt(h_k h_0) [exp(a_j J) e_0]_k` in the Jacobi matrix `J`,
//! whose terms all share one sign.

use crate::error::{Error, Result};
use crate::linalg::{det, dot, Lu, Matrix};
use crate::orthopoly::{cd_kernel_k0_scaled, quadrature_recurrence, RecurrenceTable};
use crate::quadrature::{custom_weight_rule, default_rule_size, QuadratureRule};
use crate::weight::{WeightSpec, OVERFLOW_GUARD};

/// Relative separation below which two source eigenvalues count as equal.
pub const SOURCE_SEPARATION: f64 = 1e-6;
/// Condition estimate of `B` above which a warning is attached.
pub const CONDITION_WARNING: f64 = 1e12;
/// Condition estimate of `B` treated as singular to working precision.
pub const CONDITION_SINGULAR: f64 = 1e15;
/// Doubling-stability tolerance for quadrature-defined integrals.
pub const DOUBLING_TOLERANCE: f64 = 1e-10;
/// Largest Gauss rule tried before giving up on doubling stability.
pub const MAX_RULE_SIZE: usize = 3200;

/// Matrix dimension `n` and the distinct nonzero source eigenvalues
/// `a_1 > a_2 > ... > a_r`; the remaining `n - r` eigenvalues are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    n: usize,
    a: Vec<f64>,
}

impl SourceSpec {
    /// Sources may be given in any order; they are stored descending.
    pub fn new(n: usize, sources: Vec<f64>) -> Result<Self> {
        let r = sources.len();
        if r == 0 {
            return Err(Error::InvalidSource("at least one source eigenvalue is required".into()));
        }
        if r > n {
            return Err(Error::InvalidSource(format!("rank r = {r} exceeds dimension n = {n}")));
        }
        if sources.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidSource("source eigenvalues must be finite".into()));
        }
        if let Some(a) = sources.iter().find(|a| a.abs() < SOURCE_SEPARATION) {
            return Err(Error::InvalidSource(format!(
                "source eigenvalues must be nonzero (got {a}); shift A by -a_1 I and V(x) by -a_1 x instead"
            )));
        }
        let mut a = sources;
        a.sort_by(|x, y| y.total_cmp(x));
        for pair in a.windows(2) {
            if (pair[0] - pair[1]).abs() < SOURCE_SEPARATION * pair[0].abs().max(1.0) {
                return Err(Error::InvalidSource(format!(
                    "source eigenvalues must be distinct ({} and {} coincide)",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self { n, a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.a.len()
    }

    pub fn sources(&self) -> &[f64] {
        &self.a
    }

    /// Source eigenvalues padded with `n - r` zeros.
    pub fn padded(&self) -> Vec<f64> {
        let mut all = self.a.clone();
        all.resize(self.n, 0.0);
        all
    }
}

/// `v(z) = (e^{a_1 z}, ..., e^{a_r z})`.
pub fn vector_v(spec: &SourceSpec, z: f64) -> Result<Vec<f64>> {
    let exponent = spec.a.iter().map(|a| a * z).fold(f64::NEG_INFINITY, f64::max);
    if exponent > OVERFLOW_GUARD {
        return Err(Error::OverflowGuard { exponent });
    }
    Ok(spec.a.iter().map(|a| (a * z).exp()).collect())
}

/// Moments `mu_{k,j} = int pi_k e^{a_j s} e^{-V}` for `k < rows`.
fn source_moments(spec: &SourceSpec, table: &RecurrenceTable, rule: &QuadratureRule, rows: usize) -> Result<Matrix> {
    let r = spec.r();
    let flat = rule.sum_vec(rows * r, |s, out| {
        let v: Vec<f64> = spec.a.iter().map(|a| (a * s).exp()).collect();
        table.eval_into(s, rows - 1, |k, p| {
            for j in 0..r {
                out[k * r + j] = p * v[j];
            }
        });
    });
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { node: f64::NAN });
    }
    Ok(Matrix::from_fn(rows, r, |k, j| flat[k * r + j]))
}

/// How the source moments of a model were evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    /// Power series of `exp(a J)`; used for even potentials.
    Series,
    /// The shared Gauss rule.
    Quadrature,
}

/// Largest Jacobi matrix tried by [`series_moments`].
const MAX_SERIES_DIMENSION: usize = 1024;

fn is_even(weight: &WeightSpec) -> bool {
    weight.coefficients().iter().skip(1).step_by(2).all(|&c| c == 0.0)
}

/// `[exp(b J) e_0]_k` for `k < rows`, `b >= 0`, where `J` is the Jacobi
/// matrix of `table` truncated to `dim`. `None` if the series has not
/// settled before truncation can reach the wanted rows.
fn exp_jacobi_column(table: &RecurrenceTable, dim: usize, b: f64, rows: usize) -> Option<Vec<f64>> {
    let alpha = table.alpha();
    let off: Vec<f64> = table.beta()[..dim].iter().map(|v| v.sqrt()).collect();
    let mut v = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    v[0] = 1.0;
    let mut sum = v[..rows].to_vec();
    let mut prev_small = false;
    // J^m e_0 is exact in rows k < rows while m + k < 2 dim - 1
    let last = 2 * dim - rows - 1;
    for m in 1..last {
        let support = (m + 1).min(dim);
        let scale = b / m as f64;
        for k in 0..support {
            let mut acc = alpha[k] * v[k];
            if k > 0 {
                acc += off[k] * v[k - 1];
            }
            if k + 1 < dim {
                acc += off[k + 1] * v[k + 1];
            }
            next[k] = scale * acc;
        }
        std::mem::swap(&mut v, &mut next);
        let mut small = true;
        for k in 0..rows {
            sum[k] += v[k];
            if !(v[k].abs() <= 1e-18 * sum[k].abs()) {
                small = false;
            }
        }
        if !sum.iter().all(|x| x.is_finite()) {
            return None;
        }
        if small && prev_small && m >= rows {
            return Some(sum);
        }
        prev_small = small;
    }
    None
}

/// Moments `mu_{k,j}`, `k < rows`, from the `exp(a J)` series for even
/// potentials; `None` when the series is unavailable.
pub fn series_moments(spec: &SourceSpec, weight: &WeightSpec, rows: usize) -> Result<Option<Matrix>> {
    if !is_even(weight) || rows == 0 {
        return Ok(None);
    }
    let mut dim = (2 * rows + 16).max(64);
    while dim <= MAX_SERIES_DIMENSION {
        let table = quadrature_recurrence(weight, dim)?;
        let mut mu = Matrix::zeros(rows, spec.r());
        let mut ok = true;
        for (j, &a) in spec.a.iter().enumerate() {
            let Some(c) = exp_jacobi_column(&table, dim, a.abs(), rows) else {
                ok = false;
                break;
            };
            for k in 0..rows {
                // odd rows flip with the sign of a for an even weight
                let sign = if a < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
                mu[(k, j)] = sign * (0.5 * (table.log_h(k) + table.log_h(0))).exp() * c[k];
            }
        }
        if ok && mu.max_abs().is_finite() {
            return Ok(Some(mu));
        }
        dim *= 2;
    }
    Ok(None)
}

/// `B = int t(s) v(s)^t e^{-V(s)} ds` with its LU factorization and
/// 1-norm condition estimate.
pub fn matrix_b(
    spec: &SourceSpec,
    weight: &WeightSpec,
    table: &RecurrenceTable,
    rule: &QuadratureRule,
) -> Result<(Matrix, Lu, f64)> {
    check_source_guard(spec, weight)?;
    if table.size() < spec.n() {
        return Err(Error::TableTooShort { needed: spec.n(), available: table.size() });
    }
    let mu = source_moments(spec, table, rule, spec.n())?;
    factor_b(spec, &mu)
}

fn factor_b(spec: &SourceSpec, mu: &Matrix) -> Result<(Matrix, Lu, f64)> {
    let (n, r) = (spec.n(), spec.r());
    let b = Matrix::from_fn(r, r, |i, j| mu[(n - r + i, j)]);
    let lu = Lu::factor(&b, "B").map_err(|_| Error::SingularB { condition: f64::INFINITY })?;
    let condition = lu.condition_estimate();
    if !(condition <= CONDITION_SINGULAR) {
        return Err(Error::SingularB { condition });
    }
    Ok((b, lu, condition))
}

fn check_source_guard(spec: &SourceSpec, weight: &WeightSpec) -> Result<()> {
    for &a in spec.sources() {
        weight.check_overflow_guard(a)?;
    }
    Ok(())
}

/// How the shared quadrature rule of a [`KernelModel`] is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    /// Starting rule size; defaults to [`default_rule_size`].
    pub rule_size: Option<usize>,
    pub max_rule_size: usize,
    pub tolerance: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { rule_size: None, max_rule_size: MAX_RULE_SIZE, tolerance: DOUBLING_TOLERANCE }
    }
}

/// Scale-free doubling change of the source moments: each entry is
/// compared against its Cauchy-Schwarz bound `sqrt(h_k) ||e^{a_j s}||`.
fn moment_change(spec: &SourceSpec, table: &RecurrenceTable, coarse: &QuadratureRule, fine: &QuadratureRule, rows: usize) -> Result<f64> {
    let a = source_moments(spec, table, coarse, rows)?;
    let b = source_moments(spec, table, fine, rows)?;
    let exp_norms: Vec<f64> = spec.a.iter().map(|aj| fine.sum(|s| (2.0 * aj * s).exp()).sqrt()).collect();
    let mut change: f64 = 0.0;
    for k in 0..rows {
        let hk = table.h(k).sqrt();
        for (j, en) in exp_norms.iter().enumerate() {
            change = change.max((a[(k, j)] - b[(k, j)]).abs() / (hk * en));
        }
    }
    Ok(change)
}

/// Precomputed ingredients for pointwise evaluation of `K(x,y)`.
#[derive(Debug, Clone)]
pub struct KernelModel {
    spec: SourceSpec,
    weight: WeightSpec,
    table: RecurrenceTable,
    rule: QuadratureRule,
    rule_size: usize,
    doubling_change: f64,
    moments: Matrix,
    moment_method: MomentMethod,
    b: Matrix,
    lu: Lu,
    condition: f64,
    warnings: Vec<String>,
}

impl KernelModel {
    pub fn build(spec: SourceSpec, weight: WeightSpec) -> Result<Self> {
        Self::build_with(spec, weight, ModelOptions::default())
    }

    pub fn build_with(spec: SourceSpec, weight: WeightSpec, options: ModelOptions) -> Result<Self> {
        check_source_guard(&spec, &weight)?;
        let n = spec.n();
        let table = quadrature_recurrence(&weight, n)?;

        let mut m = options.rule_size.unwrap_or_else(|| default_rule_size(n, spec.r(), weight.degree()));
        let (rule, change) = loop {
            let qtable = quadrature_recurrence(&weight, 2 * m)?;
            let coarse = custom_weight_rule(&qtable, m)?;
            let fine = custom_weight_rule(&qtable, 2 * m)?;
            let change = moment_change(&spec, &table, &coarse, &fine, n + 1)?;
            if change <= options.tolerance {
                break (coarse, change);
            }
            if 2 * m > options.max_rule_size {
                return Err(Error::QuadratureUnconverged { max_nodes: 2 * m, change });
            }
            m *= 2;
        };

        let (moments, moment_method) = match series_moments(&spec, &weight, n)? {
            Some(mu) => (mu, MomentMethod::Series),
            None => (source_moments(&spec, &table, &rule, n)?, MomentMethod::Quadrature),
        };
        let (b, lu, condition) = factor_b(&spec, &moments)?;
        let mut warnings = Vec::new();
        if condition > CONDITION_WARNING {
            warnings.push(format!("B is ill-conditioned (condition estimate {condition:.3e})"));
        }
        Ok(Self {
            spec,
            weight,
            table,
            rule,
            rule_size: m,
            doubling_change: change,
            moments,
            moment_method,
            b,
            lu,
            condition,
            warnings,
        })
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn table(&self) -> &RecurrenceTable {
        &self.table
    }

    /// The shared Gauss rule for `e^{-V}`.
    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn rule_size(&self) -> usize {
        self.rule_size
    }

    /// Doubling change of the moments at the selected rule size.
    pub fn doubling_change(&self) -> f64 {
        self.doubling_change
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn r(&self) -> usize {
        self.spec.r()
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn b_lu(&self) -> &Lu {
        &self.lu
    }

    /// 1-norm condition estimate of `B`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `mu_{k,j}` for `k < n`.
    pub fn moments(&self) -> &Matrix {
        &self.moments
    }

    pub fn moment_method(&self) -> MomentMethod {
        self.moment_method
    }

    /// `mu_{k,j}` for `k < rows`, by the same method as [`KernelModel::moments`].
    pub fn moments_up_to(&self, rows: usize) -> Result<Matrix> {
        if rows <= self.n() {
            return Ok(Matrix::from_fn(rows, self.r(), |k, j| self.moments[(k, j)]));
        }
        if self.moment_method == MomentMethod::Series {
            if let Some(mu) = series_moments(&self.spec, &self.weight, rows)? {
                return Ok(mu);
            }
        }
        let table = quadrature_recurrence(&self.weight, rows)?;
        source_moments(&self.spec, &table, &self.rule, rows)
    }

    /// `t(z) = (pi_{n-r}(z), ..., pi_{n-1}(z))`.
    pub fn vector_t(&self, z: f64) -> Vec<f64> {
        let (n, r) = (self.n(), self.r());
        let mut t = Vec::with_capacity(r);
        self.table.eval_into(z, n - 1, |k, p| {
            if k >= n - r {
                t.push(p);
            }
        });
        t
    }

    /// `w(y) = v(y) - int K0(s,y) v(s) ds`.
    pub fn vector_w(&self, y: f64) -> Result<Vec<f64>> {
        let mut w = vector_v(&self.spec, y)?;
        let r = self.r();
        self.table.eval_into(y, self.n() - 1, |k, p| {
            let c = self.table.kappa_sq(k) * p;
            for j in 0..r {
                w[j] -= c * self.moments[(k, j)];
            }
        });
        Ok(w)
    }

    /// `K0(x,y)`.
    pub fn kernel_k0(&self, x: f64, y: f64) -> f64 {
        self.weight.density(x) * cd_kernel_k0_scaled(&self.table, self.n(), x, y)
    }

    /// `K0(x,y) e^{V(x)}`.
    pub fn kernel_k0_scaled(&self, x: f64, y: f64) -> f64 {
        cd_kernel_k0_scaled(&self.table, self.n(), x, y)
    }

    /// `w(y)^t B^{-1} t(x) = (K(x,y) - K0(x,y)) e^{V(x)}`.
    pub fn correction_scaled(&self, x: f64, y: f64) -> Result<f64> {
        let w = self.vector_w(y)?;
        let u = self.lu.solve(&self.vector_t(x));
        Ok(dot(&w, &u))
    }

    /// `K(x,y) e^{V(x)}`.
    pub fn kernel_k_scaled(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.kernel_k0_scaled(x, y) + self.correction_scaled(x, y)?)
    }

    /// `K(x,y) = K0(x,y) + e^{-V(x)} w(y)^t B^{-1} t(x)`.
    pub fn kernel_k(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.weight.density(x) * self.kernel_k_scaled(x, y)?)
    }

    /// `K(x,y)` through the bordered determinant
    /// `(K - K0) e^{V(x)} = -det[[0, w(y)^t], [t(x), B]] / det B`.
    pub fn kernel_k_det_form(&self, x: f64, y: f64) -> Result<f64> {
        let r = self.r();
        let w = self.vector_w(y)?;
        let t = self.vector_t(x);
        let bordered = Matrix::from_fn(r + 1, r + 1, |i, j| match (i, j) {
            (0, 0) => 0.0,
            (0, j) => w[j - 1],
            (i, 0) => t[i - 1],
            (i, j) => self.b[(i - 1, j - 1)],
        });
        let correction = -det(&bordered) / self.lu.det();
        Ok(self.weight.density(x) * (self.kernel_k0_scaled(x, y) + correction))
    }

    /// `int K(x,x) dx` by the shared rule.
    pub fn trace(&self) -> Result<f64> {
        let mut total = 0.0;
        for (s, w) in self.rule.iter() {
            total += w * self.kernel_k_scaled(s, s)?;
        }
        Ok(total)
    }

    /// `int K(x,s) K(s,y) ds` by the shared rule.
    pub fn reproduce(&self, x: f64, y: f64) -> Result<f64> {
        let mut total = 0.0;
        for (s, w) in self.rule.iter() {
            total += w * self.kernel_k(x, s)? * self.kernel_k_scaled(s, y)?;
        }
        Ok(total)
    }

    /// Largest tilt `max(0, a_1)` of the source exponentials.
    pub fn max_positive_source(&self) -> f64 {
        self.spec.sources()[0].max(0.0)
    }
}
