//! Gauss quadrature rules.
//!
//! A [`QuadratureRule`] approximates `int f(s) omega(s) ds` by
//! `sum_i w_i f(x_i)`, where `omega` depends on the rule kind:
//!
//! | kind | `omega` |
//! |------|---------|
//! | [`RuleKind::HermiteBased`] | `e^{-s^2}` |
//! | [`RuleKind::CustomWeight`] | `e^{-V(s)}` for the weight whose recurrence built the rule |
//! | [`RuleKind::Discretized`] | `e^{-V(s)}`, absorbed into composite Legendre weights |
//! | [`RuleKind::LegendreInterval`] | indicator of `[lo, hi]` |

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_ql;
use crate::orthopoly::RecurrenceTable;
use crate::weight::WeightSpec;

/// Nodes per panel in composite Legendre discretizations.
const PANEL_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    HermiteBased,
    CustomWeight,
    LegendreInterval,
    Discretized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: RuleKind,
}

impl QuadratureRule {
    /// Validate and build a rule. Nodes must be strictly increasing and
    /// weights strictly positive.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, kind: RuleKind) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::InvalidArgument("rule needs matching, nonempty nodes and weights".into()));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("quadrature nodes must be strictly increasing".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("quadrature weights must be positive and finite".into()));
        }
        Ok(Self { nodes, weights, kind })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// `sum_i w_i f(x_i)` without the finiteness check.
    pub fn sum(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Vector-valued version of [`QuadratureRule::sum`]: `f` writes
    /// `len` values for each node into the provided buffer.
    pub fn sum_vec(&self, len: usize, mut f: impl FnMut(f64, &mut [f64])) -> Vec<f64> {
        let mut acc = vec![0.0; len];
        let mut buf = vec![0.0; len];
        for (x, w) in self.iter() {
            f(x, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += w * b;
            }
        }
        acc
    }
}

/// `sum_i w_i f(x_i)`, failing on the first node where `f` is not finite.
pub fn integrate_weighted(f: impl Fn(f64) -> f64, rule: &QuadratureRule) -> Result<f64> {
    let mut total = 0.0;
    for (x, w) in rule.iter() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite { node: x });
        }
        total += w * v;
    }
    Ok(total)
}

/// Golub-Welsch: Gauss rule from the Jacobi matrix with diagonal `alpha`,
/// off-diagonal `sqrt(beta_1..beta_{m-1})` and zeroth moment `mu0`.
///
/// Nodes whose weight underflows to zero are dropped.
fn golub_welsch(alpha: &[f64], beta: &[f64], mu0: f64, kind: RuleKind) -> Result<QuadratureRule> {
    let off: Vec<f64> = beta.iter().map(|b| b.sqrt()).collect();
    let (nodes, first) = tridiagonal_ql(alpha, &off)?;
    let (nodes, weights): (Vec<f64>, Vec<f64>) = nodes
        .into_iter()
        .zip(first)
        .map(|(x, z)| (x, mu0 * z * z))
        .filter(|&(_, w)| w > 0.0)
        .unzip();
    QuadratureRule::new(nodes, weights, kind)
}

/// `m`-node Gauss-Hermite rule for `e^{-s^2}`.
pub fn gauss_hermite_rule(m: usize) -> Result<QuadratureRule> {
    if m == 0 {
        return Err(Error::InvalidArgument("rule size must be positive".into()));
    }
    let alpha = vec![0.0; m];
    let beta: Vec<f64> = (1..m).map(|k| k as f64 / 2.0).collect();
    golub_welsch(&alpha, &beta, std::f64::consts::PI.sqrt(), RuleKind::HermiteBased)
}

/// `m`-node Gauss rule for the weight whose recurrence is `table`.
pub fn custom_weight_rule(table: &RecurrenceTable, m: usize) -> Result<QuadratureRule> {
    if m == 0 {
        return Err(Error::InvalidArgument("rule size must be positive".into()));
    }
    if table.size() < m {
        return Err(Error::TableTooShort { needed: m, available: table.size() });
    }
    golub_welsch(&table.alpha()[..m], &table.beta()[1..m], table.h(0), RuleKind::CustomWeight)
}

/// `m`-node Gauss-Legendre rule on `[lo, hi]`.
pub fn legendre_rule(lo: f64, hi: f64, m: usize) -> Result<QuadratureRule> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid interval [{lo}, {hi}]")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("rule size must be positive".into()));
    }
    let (z, w) = legendre_reference(m);
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    QuadratureRule::new(
        z.iter().map(|t| c + h * t).collect(),
        w.iter().map(|v| h * v).collect(),
        RuleKind::LegendreInterval,
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending, by Newton
/// iteration on the Legendre three-term recurrence.
fn legendre_reference(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = mf * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        // recompute the derivative at the converged root
        let (mut p1, mut p2) = (1.0, 0.0);
        for j in 1..=m {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
        }
        if z * z < 1.0 {
            dp = mf * (z * p1 - p2) / (z * z - 1.0);
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[m - 1 - i] = z;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule on `[lo, hi]` with `panels` equal panels of
/// `per_panel` nodes each.
pub fn composite_legendre(lo: f64, hi: f64, panels: usize, per_panel: usize) -> Result<QuadratureRule> {
    if panels == 0 {
        return Err(Error::InvalidArgument("need at least one panel".into()));
    }
    let width = (hi - lo) / panels as f64;
    let (z, w) = legendre_reference(per_panel);
    let mut nodes = Vec::with_capacity(panels * per_panel);
    let mut weights = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let a = lo + p as f64 * width;
        let c = a + 0.5 * width;
        for (t, v) in z.iter().zip(&w) {
            nodes.push(c + 0.5 * width * t);
            weights.push(0.5 * width * v);
        }
    }
    QuadratureRule::new(nodes, weights, RuleKind::LegendreInterval)
}

/// Fine discrete approximation of the measure `e^{-V(s)} ds` accurate for
/// polynomials of degree up to `degree` (times mild exponentials).
///
/// Composite Gauss-Legendre on [`WeightSpec::effective_support`] with the
/// density folded into the weights; nodes whose density underflows are
/// dropped.
pub fn discretize_weight(weight: &WeightSpec, degree: usize) -> Result<QuadratureRule> {
    let (lo, hi) = weight.effective_support(degree);
    let total = (6 * degree + 6 * PANEL_NODES).max(2048);
    let panels = total.div_ceil(PANEL_NODES);
    let base = composite_legendre(lo, hi, panels, PANEL_NODES)?;
    let (nodes, weights): (Vec<f64>, Vec<f64>) = base
        .iter()
        .map(|(x, w)| (x, w * weight.density(x)))
        .filter(|&(_, w)| w > 0.0)
        .unzip();
    QuadratureRule::new(nodes, weights, RuleKind::Discretized)
}

/// Initial node count for the integrals defining `B`, `w` and the traces:
/// `max(200, 4n + 4r + 2 deg V)`.
pub fn default_rule_size(n: usize, r: usize, degree: usize) -> usize {
    (4 * n + 4 * r + 2 * degree).max(200)
}

/// Largest entrywise change between two vectors of integrals, relative to
/// `max(|a_i|, floor)`.
pub fn relative_change(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
