//! Brute-force kernel from the Gram matrix of the two function families of
//! the joint eigenvalue density.
//!
//! The density is proportional to `det[phi_i(x_j)] det[psi_i(x_j)] prod e^{-V(x_j)}`
//! with `phi` spanning polynomials of degree `< n` and
//! `psi = (e^{a_1 s}, ..., e^{a_r s}, 1, s, ..., s^{n-r-1})` — the zero
//! eigenvalues of the source contribute the confluent monomial rows. With
//! `G_{ij} = int phi_i psi_j e^{-V}` the kernel is
//! `K(x,y) = e^{-V(x)} psi(y)^t G^{-1} phi(x)`.
//!
//! Nothing here touches `B`, `w` or the Christoffel-Darboux formula, so it
//! serves as an independent reference for [`crate::source_kernel`].

use crate::error::{Error, Result};
use crate::linalg::{dot, Lu, Matrix};
use crate::orthopoly::{build_recurrence, quadrature_recurrence, RecurrenceTable};
use crate::quadrature::{custom_weight_rule, default_rule_size, QuadratureRule};
use crate::source_kernel::{SourceSpec, CONDITION_SINGULAR, DOUBLING_TOLERANCE, MAX_RULE_SIZE};
use crate::weight::{WeightSpec, OVERFLOW_GUARD};

/// Polynomial family used for `phi`. The kernel depends only on its span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiBasis {
    /// Monic orthogonal polynomials of the weight (well conditioned).
    #[default]
    Monic,
    /// Raw monomials `1, s, ..., s^{n-1}`.
    Monomial,
}

#[derive(Debug, Clone)]
pub struct GramOracle {
    n: usize,
    sources: Vec<f64>,
    weight: WeightSpec,
    basis: PhiBasis,
    table: RecurrenceTable,
    rule: QuadratureRule,
    gram: Matrix,
    lu: Lu,
    condition: f64,
}

fn eval_phi(basis: PhiBasis, table: &RecurrenceTable, n: usize, x: f64, out: &mut [f64]) {
    match basis {
        PhiBasis::Monic => table.eval_into(x, n - 1, |k, v| out[k] = v),
        PhiBasis::Monomial => {
            let mut p = 1.0;
            for o in out.iter_mut().take(n) {
                *o = p;
                p *= x;
            }
        }
    }
}

fn eval_psi(sources: &[f64], y: f64, out: &mut [f64]) {
    let r = sources.len();
    for (o, a) in out.iter_mut().zip(sources) {
        *o = (a * y).exp();
    }
    let mut p = 1.0;
    for o in out.iter_mut().skip(r) {
        *o = p;
        p *= y;
    }
}

fn gram_entries(n: usize, sources: &[f64], basis: PhiBasis, table: &RecurrenceTable, rule: &QuadratureRule) -> Matrix {
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; n];
    let flat = rule.sum_vec(n * n, |s, out| {
        eval_phi(basis, table, n, s, &mut phi);
        eval_psi(sources, s, &mut psi);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = phi[i] * psi[j];
            }
        }
    });
    Matrix::from_fn(n, n, |i, j| flat[i * n + j])
}

/// Doubling change of `G`, each entry scaled by `||phi_i|| ||psi_j||`.
fn gram_change(
    n: usize,
    sources: &[f64],
    basis: PhiBasis,
    table: &RecurrenceTable,
    coarse: &QuadratureRule,
    fine: &QuadratureRule,
) -> f64 {
    let g1 = gram_entries(n, sources, basis, table, coarse);
    let g2 = gram_entries(n, sources, basis, table, fine);
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; n];
    let norms = fine.sum_vec(2 * n, |s, out| {
        eval_phi(basis, table, n, s, &mut phi);
        eval_psi(sources, s, &mut psi);
        for i in 0..n {
            out[i] = phi[i] * phi[i];
            out[n + i] = psi[i] * psi[i];
        }
    });
    let mut change: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let scale = (norms[i] * norms[n + j]).sqrt();
            change = change.max((g1[(i, j)] - g2[(i, j)]).abs() / scale);
        }
    }
    change
}

/// Factorize a Gram matrix computed with `rule`, a Gauss rule for `e^{-V}`.
pub fn build_gram(spec: &SourceSpec, weight: &WeightSpec, rule: &QuadratureRule, basis: PhiBasis) -> Result<GramOracle> {
    factor_gram(spec.n(), spec.sources(), weight, rule, basis)
}

fn factor_gram(n: usize, sources: &[f64], weight: &WeightSpec, rule: &QuadratureRule, basis: PhiBasis) -> Result<GramOracle> {
    for &a in sources {
        weight.check_overflow_guard(a)?;
    }
    let table = build_recurrence(weight, n)?;
    let gram = gram_entries(n, sources, basis, &table, rule);
    if !gram.max_abs().is_finite() {
        return Err(Error::NonFinite { node: f64::NAN });
    }
    let lu = Lu::factor(&gram, "Gram matrix").map_err(|_| Error::SingularGram { condition: f64::INFINITY })?;
    let condition = lu.condition_estimate();
    if !(condition <= CONDITION_SINGULAR) {
        return Err(Error::SingularGram { condition });
    }
    Ok(GramOracle {
        n,
        sources: sources.to_vec(),
        weight: weight.clone(),
        basis,
        table,
        rule: rule.clone(),
        gram,
        lu,
        condition,
    })
}

/// Pick a rule by doubling until `G` is stable, then factorize.
fn adaptive(n: usize, sources: &[f64], weight: &WeightSpec, basis: PhiBasis) -> Result<GramOracle> {
    if n == 0 {
        return Err(Error::InvalidArgument("oracle needs n >= 1".into()));
    }
    for &a in sources {
        weight.check_overflow_guard(a)?;
    }
    let table = build_recurrence(weight, n)?;
    let mut m = default_rule_size(n, sources.len(), weight.degree());
    loop {
        let qtable = quadrature_recurrence(weight, 2 * m)?;
        let coarse = custom_weight_rule(&qtable, m)?;
        let fine = custom_weight_rule(&qtable, 2 * m)?;
        let change = gram_change(n, sources, basis, &table, &coarse, &fine);
        if change <= DOUBLING_TOLERANCE {
            return factor_gram(n, sources, weight, &coarse, basis);
        }
        if 2 * m > MAX_RULE_SIZE {
            return Err(Error::QuadratureUnconverged { max_nodes: 2 * m, change });
        }
        m *= 2;
    }
}

impl GramOracle {
    /// Build with its own Gauss rule, doubled until `G` is stable.
    pub fn new(spec: &SourceSpec, weight: &WeightSpec, basis: PhiBasis) -> Result<Self> {
        adaptive(spec.n(), spec.sources(), weight, basis)
    }

    /// The source-free ensemble (`A = 0`), where `G` is a Hankel-type
    /// moment matrix and the kernel is `K0`.
    pub fn unperturbed(n: usize, weight: &WeightSpec, basis: PhiBasis) -> Result<Self> {
        adaptive(n, &[], weight, basis)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sources(&self) -> &[f64] {
        &self.sources
    }

    pub fn basis(&self) -> PhiBasis {
        self.basis
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// `K(x,y) e^{V(x)} = psi(y)^t G^{-1} phi(x)`.
    pub fn kernel_scaled(&self, x: f64, y: f64) -> Result<f64> {
        let n = self.n;
        let exponent = self.sources.iter().map(|a| a * y).fold(f64::NEG_INFINITY, f64::max);
        if exponent > OVERFLOW_GUARD {
            return Err(Error::OverflowGuard { exponent });
        }
        let mut phi = vec![0.0; n];
        let mut psi = vec![0.0; n];
        eval_phi(self.basis, &self.table, n, x, &mut phi);
        eval_psi(&self.sources, y, &mut psi);
        Ok(dot(&psi, &self.lu.solve(&phi)))
    }

    /// `K(x,y) = e^{-V(x)} psi(y)^t G^{-1} phi(x)`.
    pub fn kernel(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.weight.density(x) * self.kernel_scaled(x, y)?)
    }

    /// `int K(x,x) dx` by the oracle's own rule.
    pub fn trace(&self) -> Result<f64> {
        let mut total = 0.0;
        for (s, w) in self.rule.iter() {
            total += w * self.kernel_scaled(s, s)?;
        }
        Ok(total)
    }

    /// `int K(x,s) K(s,y) ds` by the oracle's own rule.
    pub fn reproduce(&self, x: f64, y: f64) -> Result<f64> {
        let mut total = 0.0;
        for (s, w) in self.rule.iter() {
            total += w * self.kernel(x, s)? * self.kernel_scaled(s, y)?;
        }
        Ok(total)
    }
}

/// `K(x,y)` from the Gram construction.
pub fn oracle_k(oracle: &GramOracle, x: f64, y: f64) -> Result<f64> {
    oracle.kernel(x, y)
}
