//! Direct sampling of the Gaussian ensemble `e^{-Tr(M^2 - A M)}`.
//!
//! Completing the square, `M = A/2 + H` with `H` distributed as
//! `e^{-Tr H^2}`: diagonal entries `N(0, 1/2)`, real and imaginary parts of
//! the off-diagonal entries `N(0, 1/4)`.
//!
//! Sample `i` draws from `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(i)`, so batches are reproducible regardless of how the work
//! is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, Matrix};
use crate::quadrature::legendre_rule;
use crate::source_kernel::{KernelModel, SourceSpec};
use crate::weight::WeightSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub seed: u64,
    pub n: usize,
    /// Source eigenvalues padded with zeros to length `n`.
    pub source: Vec<f64>,
    /// One row per sample, sorted descending.
    pub eigenvalues: Vec<Vec<f64>>,
}

impl SampleBatch {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn largest(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().map(|row| row[0])
    }
}

/// The random matrix `A/2 + H` for sample `index`, as real and imaginary parts.
pub fn draw_matrix(source: &[f64], seed: u64, index: u64) -> (Matrix, Matrix) {
    let n = source.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let diag = Normal::new(0.0, 0.5f64.sqrt()).expect("valid normal");
    let off = Normal::new(0.0, 0.5).expect("valid normal");
    let mut re = Matrix::zeros(n, n);
    let mut im = Matrix::zeros(n, n);
    for i in 0..n {
        re[(i, i)] = 0.5 * source[i] + diag.sample(&mut rng);
        for j in i + 1..n {
            let (x, y) = (off.sample(&mut rng), off.sample(&mut rng));
            re[(i, j)] = x;
            re[(j, i)] = x;
            im[(i, j)] = y;
            im[(j, i)] = -y;
        }
    }
    (re, im)
}

/// `count` spectra of `A/2 + H`; the weight must be exactly `V(x) = x^2`.
pub fn sample_spectra(spec: &SourceSpec, weight: &WeightSpec, count: usize, seed: u64) -> Result<SampleBatch> {
    if !weight.is_standard_gaussian() {
        return Err(Error::NonGaussianWeight);
    }
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let source = spec.padded();
    let eigenvalues: Vec<Vec<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let (re, im) = draw_matrix(&source, seed, i);
            let mut ev = hermitian_eigenvalues(&re, &im)?;
            ev.reverse();
            Ok(ev)
        })
        .collect::<Result<_>>()?;
    Ok(SampleBatch { seed, n: spec.n(), source, eigenvalues })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Counts divided by `N` times the bin width, comparable to `K(x,x)`.
    pub density: Vec<f64>,
    pub samples: usize,
}

impl Histogram {
    pub fn width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    /// `sum density * width`; equals `n` when the range holds every eigenvalue.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.width()
    }
}

/// Equal-width histogram of all eigenvalues. Without a range, the bins span
/// the sample extremes, so the total mass is exactly `n`.
pub fn empirical_density(batch: &SampleBatch, bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if bins < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 bins (got {bins})")));
    }
    let all = batch.eigenvalues.iter().flatten().copied();
    let (lo, hi) = match range {
        Some((lo, hi)) if lo < hi => (lo, hi),
        Some((lo, hi)) => return Err(Error::InvalidArgument(format!("invalid histogram range [{lo}, {hi}]"))),
        None => {
            let (mn, mx) = all.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let pad = 1e-9 * (mx - mn).max(1.0);
            (mn - pad, mx + pad)
        }
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in all {
        if v >= lo && v < hi {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let scale = 1.0 / (batch.count() as f64 * width);
    let density = counts.iter().map(|&c| c as f64 * scale).collect();
    Ok(Histogram { edges, counts, density, samples: batch.count() })
}

/// Fraction of samples whose largest eigenvalue is `<= s`.
pub fn empirical_lmax_cdf(batch: &SampleBatch, s: f64) -> f64 {
    let below = batch.largest().filter(|&v| v <= s).count();
    below as f64 / batch.count() as f64
}

/// Binned comparison of a histogram with `N int_bin K(x,x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityComparison {
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    /// Multinomial standard deviation `sqrt(N n p (1 - p))` per bin.
    pub sigma: Vec<f64>,
    /// Bins with at least `min_expected` expected counts.
    pub tested: Vec<bool>,
    /// Largest `|observed - expected| / sigma` over tested bins.
    pub worst: f64,
}

impl DensityComparison {
    pub fn passed(&self, sigmas: f64) -> bool {
        self.worst <= sigmas
    }
}

pub fn compare_density(hist: &Histogram, model: &KernelModel, min_expected: f64) -> Result<DensityComparison> {
    let total = (hist.samples * model.n()) as f64;
    let bins = hist.counts.len();
    let mut observed = Vec::with_capacity(bins);
    let mut expected = Vec::with_capacity(bins);
    let mut sigma = Vec::with_capacity(bins);
    let mut tested = Vec::with_capacity(bins);
    let mut worst: f64 = 0.0;
    for b in 0..bins {
        let rule = legendre_rule(hist.edges[b], hist.edges[b + 1], 16)?;
        let mut mass = 0.0;
        for (x, w) in rule.iter() {
            mass += w * model.kernel_k(x, x)?;
        }
        let e = hist.samples as f64 * mass;
        let p = (e / total).clamp(0.0, 1.0);
        let sd = (total * p * (1.0 - p)).sqrt();
        let o = hist.counts[b] as f64;
        let test = e >= min_expected;
        if test {
            worst = worst.max((o - e).abs() / sd);
        }
        observed.push(o);
        expected.push(e);
        sigma.push(sd);
        tested.push(test);
    }
    Ok(DensityComparison { observed, expected, sigma, tested, worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(n: usize, a: &[f64], count: usize, seed: u64) -> SampleBatch {
        sample_spectra(&SourceSpec::new(n, a.to_vec()).unwrap(), &WeightSpec::gaussian(), count, seed).unwrap()
    }

    #[test]
    fn rank_one_moments() {
        let b = batch(1, &[1.0], 20000, 7);
        let xs: Vec<f64> = b.largest().collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        // standard errors: 0.005 for the mean, 0.005 for the variance
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        assert!((var - 0.5).abs() < 0.025, "var {var}");
        let median = empirical_lmax_cdf(&b, 0.5);
        assert!((median - 0.5).abs() < 3.0 * 0.0036);
    }

    #[test]
    fn trace_of_square_without_source() {
        // E Tr H^2 = n^2 / 2; u = (0,0) is not a valid source, so draw
        // matrices directly
        let count = 20000;
        let mut total = 0.0;
        for i in 0..count {
            let (re, im) = draw_matrix(&[0.0, 0.0], 11, i);
            for r in 0..2 {
                for c in 0..2 {
                    total += re[(r, c)].powi(2) + im[(r, c)].powi(2);
                }
            }
        }
        let mean = total / count as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean Tr M^2 = {mean}");
    }

    #[test]
    fn deterministic_and_sorted() {
        let a = batch(3, &[1.0, -0.5], 50, 42);
        let b = batch(3, &[1.0, -0.5], 50, 42);
        assert_eq!(a, b);
        assert_ne!(a, batch(3, &[1.0, -0.5], 50, 43));
        for row in &a.eigenvalues {
            assert!(row.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn histogram_mass_and_cdf_limits() {
        let b = batch(3, &[1.0], 200, 1);
        let h = empirical_density(&b, 20, None).unwrap();
        assert!((h.total_mass() - 3.0).abs() < 1e-12);
        assert_eq!(h.counts.iter().sum::<usize>(), 600);
        assert_eq!(empirical_lmax_cdf(&b, -100.0), 0.0);
        assert_eq!(empirical_lmax_cdf(&b, 100.0), 1.0);
        assert!(empirical_density(&b, 5, None).is_err());
    }

    #[test]
    fn rejects_non_gaussian() {
        let spec = SourceSpec::new(2, vec![1.0]).unwrap();
        assert_eq!(sample_spectra(&spec, &WeightSpec::quartic(), 10, 0), Err(Error::NonGaussianWeight));
    }

    #[test]
    fn density_matches_kernel() {
        let spec = SourceSpec::new(2, vec![1.0]).unwrap();
        let b = sample_spectra(&spec, &WeightSpec::gaussian(), 5000, 3).unwrap();
        let model = KernelModel::build(spec, WeightSpec::gaussian()).unwrap();
        let h = empirical_density(&b, 24, Some((-3.0, 3.5))).unwrap();
        let cmp = compare_density(&h, &model, 5.0).unwrap();
        assert!(cmp.passed(3.0), "worst {}", cmp.worst);
    }
}
