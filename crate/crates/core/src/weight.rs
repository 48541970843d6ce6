//! The potential `V` of the weight `e^{-V}`.

use std::fmt;

use crate::error::{Error, Result};

/// Largest exponent `max_s (a s - V(s))` accepted before evaluating
/// `e^{a s - V(s)}` directly in `f64`.
pub const OVERFLOW_GUARD: f64 = 700.0;

/// Potential `V(x) = sum_k v_k x^k` of even degree `d >= 2` with `v_d > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    coefficients: Vec<f64>,
}

/// Closed form of a quadratic potential `V(x) = v2 x^2 + v1 x + v0`,
/// whose orthogonal polynomials are shifted and scaled Hermite polynomials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianForm {
    /// Recurrence center `alpha_k = -v1 / (2 v2)` for every `k`.
    pub center: f64,
    /// Leading coefficient `v2`; `beta_k = k / (2 v2)`.
    pub precision: f64,
    /// `ln h_0 = ln int e^{-V}`.
    pub log_mass: f64,
}

impl WeightSpec {
    /// Build from ascending coefficients `v_0, v_1, ..., v_d`.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidWeight("coefficients must be finite".into()));
        }
        if coefficients.len() < 3 {
            return Err(Error::InvalidWeight(format!(
                "degree must be an even number >= 2 (got {} coefficient(s))",
                coefficients.len()
            )));
        }
        let degree = coefficients.len() - 1;
        if degree % 2 != 0 {
            return Err(Error::InvalidWeight(format!("degree must be even (got degree {degree})")));
        }
        if coefficients[degree] <= 0.0 {
            return Err(Error::InvalidWeight(format!(
                "leading coefficient must be positive (got {})",
                coefficients[degree]
            )));
        }
        let spec = Self { coefficients };
        if spec.max_tilted_exponent(0.0) > OVERFLOW_GUARD {
            return Err(Error::InvalidWeight("e^{-V} overflows: min V is below -700".into()));
        }
        Ok(spec)
    }

    /// `V(x) = x^2`.
    pub fn gaussian() -> Self {
        Self { coefficients: vec![0.0, 0.0, 1.0] }
    }

    /// `V(x) = x^4`.
    pub fn quartic() -> Self {
        Self { coefficients: vec![0.0, 0.0, 0.0, 0.0, 1.0] }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `e^{-V(x)}`.
    pub fn density(&self, x: f64) -> f64 {
        (-self.eval(x)).exp()
    }

    pub fn gaussian_form(&self) -> Option<GaussianForm> {
        if self.degree() != 2 {
            return None;
        }
        let (v0, v1, v2) = (self.coefficients[0], self.coefficients[1], self.coefficients[2]);
        Some(GaussianForm {
            center: -v1 / (2.0 * v2),
            precision: v2,
            log_mass: -v0 + v1 * v1 / (4.0 * v2) + 0.5 * (std::f64::consts::PI / v2).ln(),
        })
    }

    /// True exactly for `V(x) = x^2`.
    pub fn is_standard_gaussian(&self) -> bool {
        self.coefficients == [0.0, 0.0, 1.0]
    }

    /// Radius beyond which `a s - V(s) <= -v_d |s|^d / 2`.
    fn growth_radius(&self, a: f64) -> f64 {
        let d = self.degree();
        let lower: f64 = self.coefficients[..d].iter().map(|c| c.abs()).sum::<f64>() + a.abs();
        (2.0 * lower / self.coefficients[d]).max(1.0)
    }

    /// Maximizer and maximum of `a s - V(s)` over the real line.
    pub fn tilted_maximum(&self, a: f64) -> (f64, f64) {
        let f = |s: f64| a * s - self.eval(s);
        let radius = self.growth_radius(a);
        let steps = 4000;
        let h = 2.0 * radius / steps as f64;
        let (mut best_s, mut best) = (0.0, f(0.0));
        for i in 0..=steps {
            let s = -radius + i as f64 * h;
            let v = f(s);
            if v > best {
                best = v;
                best_s = s;
            }
        }
        // golden-section refinement on the bracketing cell pair
        let (mut lo, mut hi) = (best_s - h, best_s + h);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        for _ in 0..80 {
            if f(c) > f(d) {
                hi = d;
            } else {
                lo = c;
            }
            c = hi - g * (hi - lo);
            d = lo + g * (hi - lo);
        }
        let s = 0.5 * (lo + hi);
        if f(s) > best {
            (s, f(s))
        } else {
            (best_s, best)
        }
    }

    /// `max_s (a s - V(s))`.
    pub fn max_tilted_exponent(&self, a: f64) -> f64 {
        self.tilted_maximum(a).1
    }

    /// Reject tilts `a` for which `e^{a s - V(s)}` could overflow.
    pub fn check_overflow_guard(&self, a: f64) -> Result<()> {
        let exponent = self.max_tilted_exponent(a);
        if exponent > OVERFLOW_GUARD {
            return Err(Error::OverflowGuard { exponent });
        }
        Ok(())
    }

    /// Interval outside of which `p(s)^2 e^{-V(s)}` is negligible for every
    /// normalized polynomial `p` of degree at most `degree / 2`.
    ///
    /// The bound asks `V(s) - min V - degree * ln(1 + |s|) >= 60`, and adds
    /// ten percent of headroom on each side.
    pub fn effective_support(&self, degree: usize) -> (f64, f64) {
        let (center, neg_min) = self.tilted_maximum(0.0);
        let v_min = -neg_min;
        let excess = |s: f64| self.eval(s) - v_min - degree as f64 * (1.0 + s.abs()).ln();
        let walk = |dir: f64| {
            let mut step = 0.25;
            let mut s = center + dir * step;
            while excess(s) < 60.0 {
                step *= 1.1;
                s += dir * step;
            }
            s
        };
        let hi = walk(1.0);
        let lo = walk(-1.0);
        let pad = 0.1 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, &c) in self.coefficients.iter().enumerate().rev() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c} x")?,
                _ => write!(f, "{c} x^{k}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}
