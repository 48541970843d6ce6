//! Coefficient identities behind the kernel formula, stated in real form.
//!
//! With `pi_n(z) = b_0 z^n + ... + b_n` and
//! `kappa_{n-1}^2 pi_{n-1}(z) = c_0 z^n + ... + c_n` (`b_0 = 1`, `c_0 = 0`) the
//! truncations are `P^j(z) = b_0 z^j + ... + b_j` and
//! `Q^j(z) = c_0 z^j + ... + c_j`. Then
//!
//! ```text
//! row_j(z) = P^j(z) kappa_{n-1}^2 pi_{n-1}(z) - Q^j(z) pi_n(z)
//! ```
//!
//! is a polynomial of degree `< n`, orthogonal to `pi_0 .. pi_{n-j-2}`, with
//! `<row_j, pi_{n-j-1}> = 1`. Stacking rows `j = r-1, ..., 0` gives
//! `E(z) x(z) = S t(z)` with `S` upper triangular and diagonal
//! `kappa_{n-r}^2, ..., kappa_{n-1}^2`, and integrating against the source
//! exponentials gives `Q = S B`.
//!
//! Everything here runs through monomial coefficients, which lose accuracy
//! quickly, so `n` is capped at [`MAX_COEFFICIENT_DEGREE`].

use crate::error::{Error, Result};
use crate::linalg::{det, dot, Matrix};
use crate::orthopoly::{extract_coeffs, quadrature_recurrence, PolyCoeffs, RecurrenceTable};
use crate::quadrature::QuadratureRule;
use crate::source_kernel::KernelModel;

pub const MAX_COEFFICIENT_DEGREE: usize = 12;

/// Truncation polynomials `P^j`, `Q^j` for `j = 0..=r`, `r <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationSet {
    n: usize,
    r: usize,
    coeffs: PolyCoeffs,
}

fn horner_prefix(c: &[f64], j: usize, z: f64) -> f64 {
    c[..=j].iter().fold(0.0, |acc, &v| acc * z + v)
}

impl TruncationSet {
    pub fn new(table: &RecurrenceTable, n: usize, r: usize) -> Result<Self> {
        if n > MAX_COEFFICIENT_DEGREE {
            return Err(Error::CoefficientInstability { n });
        }
        if r > n {
            return Err(Error::InvalidArgument(format!("truncation order r = {r} exceeds n = {n}")));
        }
        Ok(Self { n, r, coeffs: extract_coeffs(table, n)? })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `b_0 .. b_n`.
    pub fn b(&self) -> &[f64] {
        &self.coeffs.b
    }

    /// `c_0 .. c_n`.
    pub fn c(&self) -> &[f64] {
        &self.coeffs.c_tilde
    }

    fn check_j(&self, j: usize) -> Result<()> {
        if j > self.r {
            return Err(Error::IndexOutOfRange { k: j, max: self.r });
        }
        Ok(())
    }

    pub fn p(&self, j: usize, z: f64) -> Result<f64> {
        self.check_j(j)?;
        Ok(horner_prefix(&self.coeffs.b, j, z))
    }

    pub fn q(&self, j: usize, z: f64) -> Result<f64> {
        self.check_j(j)?;
        Ok(horner_prefix(&self.coeffs.c_tilde, j, z))
    }

    /// The 2-vector `x(z) = (pi_n(z), kappa_{n-1}^2 pi_{n-1}(z))`.
    pub fn x(&self, table: &RecurrenceTable, z: f64) -> (f64, f64) {
        let p = table.eval_all(self.n, z);
        (p[self.n], table.kappa_sq(self.n - 1) * p[self.n - 1])
    }

    /// `r x 2` matrix `E(z)`, row `i` holding `(-Q^j(z), P^j(z))` for
    /// `j = r - 1 - i`.
    pub fn e_matrix(&self, z: f64) -> Result<Matrix> {
        let r = self.r;
        let mut rows = Vec::with_capacity(r);
        for i in 0..r {
            let j = r - 1 - i;
            rows.push(vec![-self.q(j, z)?, self.p(j, z)?]);
        }
        Ok(Matrix::from_rows(&rows))
    }

    /// `2 x 2` matrix `D(z) = [[1, 0], [-Q^r(z), P^r(z)]]`.
    pub fn d_matrix(&self, z: f64) -> Result<Matrix> {
        let r = self.r;
        Ok(Matrix::from_rows(&[vec![1.0, 0.0], vec![-self.q(r, z)?, self.p(r, z)?]]))
    }

    /// `row_j(z) = P^j(z) kappa_{n-1}^2 pi_{n-1}(z) - Q^j(z) pi_n(z)`.
    pub fn row(&self, table: &RecurrenceTable, j: usize, z: f64) -> Result<f64> {
        let (xn, xc) = self.x(table, z);
        Ok(self.p(j, z)? * xc - self.q(j, z)? * xn)
    }
}

/// `row_j(z)` for the degree-`n` pair of `table`.
pub fn row_identity(table: &RecurrenceTable, n: usize, j: usize, z: f64) -> Result<f64> {
    TruncationSet::new(table, n, j + 1)?.row(table, j, z)
}

/// Double-double value `hi + lo`, enough to keep the cancellations in the
/// truncation rows from leaking into the low basis components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn new(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (hi, lo) = two_sum(s, e + self.lo + o.lo);
        Dd { hi, lo }
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn mul(self, c: f64) -> Dd {
        let p = self.hi * c;
        let e = self.hi.mul_add(c, -p) + self.lo * c;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Multiply a polynomial given in the monic basis by `z`, using
/// `z pi_k = pi_{k+1} + alpha_k pi_k + beta_k pi_{k-1}`.
fn times_z(u: &[Dd], table: &RecurrenceTable) -> Vec<Dd> {
    let len = u.len();
    let mut out = vec![Dd::default(); len + 1];
    for (m, slot) in out.iter_mut().enumerate() {
        let mut acc = Dd::default();
        if m > 0 {
            acc = acc.add(u[m - 1]);
        }
        if m < len {
            acc = acc.add(u[m].mul(table.alpha()[m]));
        }
        if m + 1 < len {
            acc = acc.add(u[m + 1].mul(table.beta()[m + 1]));
        }
        *slot = acc;
    }
    out
}

/// `(c_0 z^j + ... + c_j) pi_base` in the monic basis, by Horner.
fn horner_times_basis(c: &[f64], j: usize, base: usize, table: &RecurrenceTable) -> Vec<Dd> {
    let mut u = vec![Dd::default(); base + 1];
    u[base] = Dd::new(c[0]);
    for &cl in &c[1..=j] {
        u = times_z(&u, table);
        u[base] = u[base].add(Dd::new(cl));
    }
    u
}

impl TruncationSet {
    /// Coefficients of `row_j` in the monic basis `pi_0 .. pi_{n+j-1}`.
    ///
    /// The table must reach index `n + j` and be the one the coefficients
    /// were extracted from. Components below `n - j - 1` vanish exactly in
    /// exact arithmetic even with rounded `b`, `c`: a perturbation of the
    /// `z^{j-l}` coefficient only touches components `>= n - j - 1 + l`.
    fn row_coefficients(&self, table: &RecurrenceTable, j: usize) -> Result<Vec<Dd>> {
        self.check_j(j)?;
        let n = self.n;
        if table.size() < n + j {
            return Err(Error::TableTooShort { needed: n + j, available: table.size() });
        }
        let kappa_sq = table.kappa_sq(n - 1);
        let first: Vec<Dd> = horner_times_basis(&self.coeffs.b, j, n - 1, table).iter().map(|d| d.mul(kappa_sq)).collect();
        let second = horner_times_basis(&self.coeffs.c_tilde, j, n, table);
        // the top component of `second` carries c_0 = 0
        let mut out = vec![Dd::default(); n + j];
        for (k, v) in out.iter_mut().enumerate() {
            let f = first.get(k).copied().unwrap_or_default();
            let s = second.get(k).copied().unwrap_or_default();
            *v = f.add(s.neg());
        }
        Ok(out)
    }

    /// `row_j = sum_k coefficient_k pi_k`, `k < n + j`.
    pub fn row_expansion(&self, table: &RecurrenceTable, j: usize) -> Result<Vec<f64>> {
        Ok(self.row_coefficients(table, j)?.iter().map(|d| d.value()).collect())
    }
}

/// `<row_j, pi_k>`: `0` for `k <= n-j-2` and `1` for `k = n-j-1`.
///
/// Evaluated exactly through the monic-basis expansion of `row_j`; `table`
/// must reach index `n + j`.
pub fn projection_identity(table: &RecurrenceTable, n: usize, j: usize, k: usize) -> Result<f64> {
    if k >= n {
        return Err(Error::IndexOutOfRange { k, max: n - 1 });
    }
    let set = TruncationSet::new(table, n, j + 1)?;
    let c = set.row_coefficients(table, j)?;
    Ok(c[k].value() * table.h(k))
}

/// `<row_j, pi_k>` by a Gauss rule for `e^{-V}`, evaluating `row_j`
/// pointwise from the monomial coefficients.
pub fn quadrature_projection(set: &TruncationSet, table: &RecurrenceTable, rule: &QuadratureRule, j: usize, k: usize) -> Result<f64> {
    let mut total = 0.0;
    for (s, w) in rule.iter() {
        let pk = table.eval_all(k, s)[k];
        total += w * set.row(table, j, s)? * pk;
    }
    Ok(total)
}

/// `Q` together with `S` obtained two ways: `Q B^{-1}`, and from the
/// components of each row along `pi_{n-r}, ..., pi_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QsMatrices {
    pub q: Matrix,
    pub s_recovered: Matrix,
    pub s_projected: Matrix,
    /// Largest `|<row, pi_k>| / (||row|| ||pi_k||)` over components that must vanish.
    pub zero_components: f64,
}

impl QsMatrices {
    /// Largest magnitude below the diagonal of `Q B^{-1}`.
    pub fn lower_residual(&self) -> f64 {
        let r = self.s_recovered.rows();
        let mut worst: f64 = 0.0;
        for i in 0..r {
            for c in 0..i {
                worst = worst.max(self.s_recovered[(i, c)].abs());
            }
        }
        worst
    }
}

/// `Q_{il} = int row_{r-1-i}(s) e^{a_l s} e^{-V(s)} ds` and the two forms of `S`.
///
/// The integral is taken term by term over the monic-basis expansion of the
/// row against the model's moments `mu_{k,l}`, which keeps every entry
/// accurate to working precision; a direct quadrature of the row loses as
/// much as the moments shrink.
pub fn build_qs(model: &KernelModel) -> Result<QsMatrices> {
    let (n, r) = (model.n(), model.r());
    let table = quadrature_recurrence(model.weight(), n + r)?;
    let set = TruncationSet::new(&table, n, r)?;
    let mu = model.moments_up_to(n + r - 1)?;

    let mut q = Matrix::zeros(r, r);
    let mut s_projected = Matrix::zeros(r, r);
    let mut zero_components: f64 = 0.0;
    for i in 0..r {
        let j = r - 1 - i;
        let c = set.row_coefficients(&table, j)?;
        let norm: f64 = c.iter().enumerate().map(|(k, v)| v.value().powi(2) * table.h(k)).sum::<f64>().sqrt();
        for k in 0..n - j - 1 {
            zero_components = zero_components.max(c[k].value().abs() * table.h(k).sqrt() / norm);
        }
        for l in 0..r {
            let mut acc = Dd::default();
            for (k, v) in c.iter().enumerate() {
                let p = v.mul(mu[(k, l)]);
                acc = acc.add(p);
            }
            q[(i, l)] = acc.value();
        }
        for col in 0..r {
            s_projected[(i, col)] = c[n - r + col].value();
        }
    }

    let lu = model.b_lu();
    let mut s_rows = Vec::with_capacity(r);
    for i in 0..r {
        s_rows.push(lu.solve_transpose(q.row(i)));
    }
    let s_recovered = Matrix::from_rows(&s_rows);
    Ok(QsMatrices { q, s_recovered, s_projected, zero_components })
}

/// One line of an identity report.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    /// Measured discrepancy (absolute or relative, per check).
    pub error: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    fn new(name: impl Into<String>, error: f64, tolerance: f64) -> Self {
        Self { name: name.into(), error, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

/// Coefficient identities for one model: projection contract, triangular
/// `S` with the right diagonal, `Q = S B`, the determinant product, and
/// `E(z) x(z) = S t(z)` at sample points.
pub fn coefficient_checks(model: &KernelModel) -> Result<Vec<IdentityCheck>> {
    let (n, r) = (model.n(), model.r());
    let ext = quadrature_recurrence(model.weight(), n + r)?;
    let table = &ext;
    let set = TruncationSet::new(table, n, r)?;

    let (mut zero_err, mut one_err): (f64, f64) = (0.0, 0.0);
    for j in 0..r {
        for k in 0..n - j {
            let v = projection_identity(table, n, j, k)?;
            if k + 1 == n - j {
                one_err = one_err.max((v - 1.0).abs());
            } else {
                zero_err = zero_err.max(v.abs());
            }
        }
    }

    let qs = build_qs(model)?;
    let mut diag_err: f64 = 0.0;
    for i in 0..r {
        let expected = table.kappa_sq(n - r + i);
        diag_err = diag_err.max((qs.s_recovered[(i, i)] - expected).abs() / expected);
    }
    let scale = qs.s_recovered.max_abs().max(1e-300);
    let qsb = qs.q.sub(&qs.s_projected.matmul(model.b())).max_abs() / qs.q.max_abs();
    let s_agree = qs.s_recovered.sub(&qs.s_projected).max_abs() / scale;

    let det_q = det(&qs.q);
    let det_s: f64 = (0..r).map(|i| table.kappa_sq(n - r + i)).product();
    let det_err = (det_q - det_s * model.b_lu().det()).abs() / det_q.abs();

    let mut ex_err: f64 = 0.0;
    for &z in &[-1.5, -0.3, 0.0, 0.7, 2.0] {
        let e = set.e_matrix(z)?;
        let (xn, xc) = set.x(table, z);
        let st = qs.s_projected.matvec(&model.vector_t(z));
        for i in 0..r {
            let ex = dot(e.row(i), &[xn, xc]);
            let row_scale = st[i].abs().max(set.row(table, r - 1 - i, z)?.abs()).max(1.0);
            ex_err = ex_err.max((ex - st[i]).abs() / row_scale);
        }
    }

    Ok(vec![
        IdentityCheck::new("projection zeros <row_j, pi_k> = 0", zero_err, 1e-9),
        IdentityCheck::new("projection unit <row_j, pi_{n-j-1}> = 1", one_err, 1e-9),
        IdentityCheck::new("S lower triangle vanishes", qs.lower_residual() / scale, 1e-9),
        IdentityCheck::new("S diagonal equals kappa^2", diag_err, 1e-9),
        IdentityCheck::new("S from Q B^-1 equals S by projection", s_agree, 1e-9),
        IdentityCheck::new("Q = S B", qsb, 1e-9),
        IdentityCheck::new("det Q = det S det B", det_err, 1e-8),
        IdentityCheck::new("E(z) x(z) = S t(z)", ex_err, 1e-9),
    ])
}

/// Projection-kernel properties of a model: trace, reproducing property on
/// a spot grid, orthogonality of `w` to `pi_0 .. pi_{n-1}`, and agreement of
/// the two evaluation paths.
pub fn kernel_checks(model: &KernelModel) -> Result<Vec<IdentityCheck>> {
    let n = model.n();
    let trace_err = (model.trace()? - n as f64).abs();

    let spots = [-1.5, -0.5, 0.0, 0.8, 1.6];
    let mut repro_err: f64 = 0.0;
    for &x in &spots {
        for &y in &spots {
            repro_err = repro_err.max((model.reproduce(x, y)? - model.kernel_k(x, y)?).abs());
        }
    }

    // <w_j, pi_k> relative to ||w_j||
    let r = model.r();
    let table = model.table();
    let mut dots = vec![0.0; r * n];
    let mut norms = vec![0.0; r];
    for (s, wt) in model.rule().iter() {
        let w = model.vector_w(s)?;
        let p = table.eval_all(n - 1, s);
        for j in 0..r {
            norms[j] += wt * w[j] * w[j];
            for k in 0..n {
                dots[j * n + k] += wt * w[j] * p[k] * table.kappa(k);
            }
        }
    }
    let mut orth_err: f64 = 0.0;
    for j in 0..r {
        for k in 0..n {
            orth_err = orth_err.max(dots[j * n + k].abs() / norms[j].sqrt());
        }
    }

    let mut det_form_err: f64 = 0.0;
    if model.condition() <= 1e8 {
        for &x in &spots {
            for &y in &spots {
                let k1 = model.kernel_k(x, y)?;
                let k2 = model.kernel_k_det_form(x, y)?;
                det_form_err = det_form_err.max((k1 - k2).abs() / k1.abs().max(1.0));
            }
        }
    }

    Ok(vec![
        IdentityCheck::new("trace int K(x,x) dx = n", trace_err, 1e-8),
        IdentityCheck::new("reproducing int K(x,s) K(s,y) ds = K(x,y)", repro_err, 1e-7),
        IdentityCheck::new("w orthogonal to pi_0..pi_{n-1}", orth_err, 1e-9),
        IdentityCheck::new("bordered determinant form agrees", det_form_err, 1e-9),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::build_recurrence;
    use crate::source_kernel::SourceSpec;
    use crate::weight::WeightSpec;
    use std::f64::consts::PI;

    fn model(weight: WeightSpec, n: usize, a: &[f64]) -> KernelModel {
        KernelModel::build(SourceSpec::new(n, a.to_vec()).unwrap(), weight).unwrap()
    }

    #[test]
    fn row_examples() {
        let table = build_recurrence(&WeightSpec::gaussian(), 6).unwrap();
        // j = 0 collapses to kappa_{n-1}^2 pi_{n-1}
        for &z in &[-1.0, 0.3, 2.0] {
            let p = table.eval_all(4, z);
            assert!((row_identity(&table, 5, 0, z).unwrap() - table.kappa_sq(4) * p[4]).abs() < 1e-12);
        }
        assert!((row_identity(&table, 2, 1, 0.0).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-14);
        assert!(matches!(row_identity(&table, 13, 0, 0.0), Err(Error::CoefficientInstability { n: 13 })));
    }

    #[test]
    fn projection_contract() {
        for weight in [WeightSpec::gaussian(), WeightSpec::quartic()] {
            let table = build_recurrence(&weight, 15).unwrap();
            let rule = crate::quadrature::custom_weight_rule(&table, 15).unwrap();
            for n in 1..=12 {
                let set = TruncationSet::new(&table, n, n.min(3)).unwrap();
                for j in 0..n.min(3) {
                    // pointwise rows projected by a Gauss rule have no
                    // component below degree n - j - 1
                    let scale = table.kappa(n - j - 1);
                    for k in 0..n - j - 1 {
                        let v = quadrature_projection(&set, &table, &rule, j, k).unwrap() * table.kappa(k);
                        assert!(v.abs() < 1e-9 * scale, "n={n} j={j} k={k}: {v}");
                    }
                }
                for j in 0..n.min(3) {
                    for k in 0..n - j {
                        let v = projection_identity(&table, n, j, k).unwrap();
                        let expect = if k + 1 == n - j { 1.0 } else { 0.0 };
                        assert!((v - expect).abs() < 1e-9, "n={n} j={j} k={k}: {v}");
                    }
                }
            }
        }
        let table = build_recurrence(&WeightSpec::gaussian(), 1).unwrap();
        assert!((projection_identity(&table, 1, 0, 0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn qs_examples() {
        let m = model(WeightSpec::gaussian(), 4, &[1.5]);
        let qs = build_qs(&m).unwrap();
        let k = m.table().kappa_sq(3);
        assert!((qs.s_recovered[(0, 0)] - k).abs() < 1e-10 * k);
        assert!((qs.q[(0, 0)] - k * m.b()[(0, 0)]).abs() < 1e-10 * qs.q[(0, 0)].abs());

        let m = model(WeightSpec::gaussian(), 3, &[1.0, -1.0]);
        let qs = build_qs(&m).unwrap();
        assert!(qs.s_recovered[(1, 0)].abs() < 1e-9);
        // h_1 = h_2 = sqrt(pi)/2
        assert!((qs.s_recovered[(0, 0)] - 2.0 / PI.sqrt()).abs() < 1e-9);
        assert!((qs.s_recovered[(1, 1)] - 2.0 / PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn all_checks_pass_on_defaults() {
        for (w, n, a) in [
            (WeightSpec::gaussian(), 6, vec![1.0, -0.5]),
            (WeightSpec::quartic(), 6, vec![2.0, -1.0]),
            (WeightSpec::gaussian(), 8, vec![2.0, 1.0, -0.5]),
        ] {
            let m = model(w, n, &a);
            for c in coefficient_checks(&m).unwrap().iter().chain(&kernel_checks(&m).unwrap()) {
                assert!(c.passed(), "n={n}: {} error {:e}", c.name, c.error);
            }
        }
    }

    #[test]
    fn coefficient_checks_hold_at_the_cap() {
        for w in [WeightSpec::gaussian(), WeightSpec::quartic()] {
            let m = model(w, 12, &[2.0, 1.0, -0.5]);
            for c in coefficient_checks(&m).unwrap() {
                assert!(c.passed(), "{} error {:e}", c.name, c.error);
            }
        }
    }
}
