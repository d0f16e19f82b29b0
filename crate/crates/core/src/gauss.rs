//! Closed-form quantities for diagonal-covariance Gaussians.
//!
//! Variances are carried as natural-log variances; `exp` is applied where a
//! variance is consumed. All sums run in `f64`.

use std::f64::consts::{E, PI};

use crate::error::{check_dims, Error, Result};

/// A Gaussian with diagonal covariance, parameterized by its mean and the
/// natural log of each per-dimension variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::usage("a Gaussian needs at least one dimension"));
        }
        check_dims(mean.len(), log_var.len())?;
        if let Some(x) = mean.iter().chain(&log_var).find(|x| !x.is_finite()) {
            return Err(Error::usage(format!("non-finite Gaussian parameter {x}")));
        }
        Ok(DiagGaussian { mean, log_var })
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![0.0; dim])
    }

    /// Gaussian with the same variance in every dimension.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::usage(format!("variance must be positive, got {variance}")));
        }
        let log_var = vec![variance.ln(); mean.len()];
        Self::new(mean, log_var)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }

    pub fn variance(&self, d: usize) -> f64 {
        self.log_var[d].exp()
    }

    /// Log density at `x`.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut acc = 0.0;
        for ((&xi, &m), &lv) in x.iter().zip(&self.mean).zip(&self.log_var) {
            let diff = xi - m;
            acc += lv + diff * diff * (-lv).exp();
        }
        -0.5 * (self.dim() as f64 * (2.0 * PI).ln() + acc)
    }
}

/// `log ∫ N_a(x) N_b(x) dx`, the log expected-likelihood kernel.
pub fn log_el_kernel(a: &DiagGaussian, b: &DiagGaussian) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(log_el_kernel_unchecked(a, b))
}

/// `KL(a || b)`.
pub fn kl_diag(a: &DiagGaussian, b: &DiagGaussian) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(kl_diag_unchecked(a, b))
}

/// Differential entropy.
pub fn entropy(a: &DiagGaussian) -> f64 {
    let half_log_det: f64 = 0.5 * a.log_var.iter().sum::<f64>();
    0.5 * a.dim() as f64 * (2.0 * PI * E).ln() + half_log_det
}

pub(crate) fn log_el_kernel_unchecked(a: &DiagGaussian, b: &DiagGaussian) -> f64 {
    let mut acc = 0.0;
    for d in 0..a.dim() {
        let s = a.log_var[d].exp() + b.log_var[d].exp();
        let diff = a.mean[d] - b.mean[d];
        acc += s.ln() + diff * diff / s;
    }
    -0.5 * (a.dim() as f64 * (2.0 * PI).ln() + acc)
}

pub(crate) fn kl_diag_unchecked(a: &DiagGaussian, b: &DiagGaussian) -> f64 {
    let mut acc = 0.0;
    for d in 0..a.dim() {
        let (la, lb) = (a.log_var[d], b.log_var[d]);
        let diff = a.mean[d] - b.mean[d];
        // v_a / v_b and diff^2 / v_b without forming either variance alone.
        let inv_vb = (-lb).exp();
        acc += (lb - la) + (la - lb).exp() + diff * diff * inv_vb - 1.0;
    }
    0.5 * acc
}

/// Per-dimension partial derivatives of a pairwise Gaussian quantity.
///
/// The callback receives `(d, d/dmean_a, d/dlogvar_a, d/dmean_b, d/dlogvar_b)`
/// already multiplied by `upstream`.
pub(crate) fn log_el_kernel_grad(
    a: &DiagGaussian,
    b: &DiagGaussian,
    upstream: f64,
    mut sink: impl FnMut(usize, f64, f64, f64, f64),
) {
    for d in 0..a.dim() {
        let va = a.log_var[d].exp();
        let vb = b.log_var[d].exp();
        let s = va + vb;
        let diff = a.mean[d] - b.mean[d];
        let dmean = -diff / s;
        // d/ds of -1/2 (log s + diff^2 / s)
        let ds = -0.5 * (1.0 / s - diff * diff / (s * s));
        sink(
            d,
            upstream * dmean,
            upstream * ds * va,
            -upstream * dmean,
            upstream * ds * vb,
        );
    }
}

/// Same callback contract as [`log_el_kernel_grad`], for `KL(a || b)`.
pub(crate) fn kl_diag_grad(
    a: &DiagGaussian,
    b: &DiagGaussian,
    upstream: f64,
    mut sink: impl FnMut(usize, f64, f64, f64, f64),
) {
    for d in 0..a.dim() {
        let ratio = (a.log_var[d] - b.log_var[d]).exp();
        let inv_vb = (-b.log_var[d]).exp();
        let diff = a.mean[d] - b.mean[d];
        let dmean = diff * inv_vb;
        sink(
            d,
            upstream * dmean,
            upstream * 0.5 * (ratio - 1.0),
            -upstream * dmean,
            upstream * 0.5 * (1.0 - ratio - diff * diff * inv_vb),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn g(mean: &[f64], var: &[f64]) -> DiagGaussian {
        DiagGaussian::new(mean.to_vec(), var.iter().map(|v| v.ln()).collect()).unwrap()
    }

    fn random_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> DiagGaussian {
        let mean = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let log_var = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        DiagGaussian::new(mean, log_var).unwrap()
    }

    /// Trapezoidal rule for ∫ N(x; m1, v1) N(x; m2, v2) dx in one dimension.
    fn overlap_1d(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
        let pdf = |x: f64, m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        let span = 14.0 * v1.max(v2).sqrt();
        let lo = m1.min(m2) - span;
        let hi = m1.max(m2) + span;
        let n = 40_000;
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = lo + h * i as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * pdf(x, m1, v1) * pdf(x, m2, v2);
        }
        acc * h
    }

    #[test]
    fn log_el_kernel_closed_forms() {
        let a = DiagGaussian::standard(1).unwrap();
        let b = g(&[1.0], &[1.0]);
        let expect = -0.5 * (4.0 * PI).ln();
        assert!((log_el_kernel(&a, &a).unwrap() - expect).abs() < 1e-12);
        assert!((expect - -1.26551).abs() < 1e-5);
        assert!((log_el_kernel(&a, &b).unwrap() - (expect - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn log_el_kernel_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let dim = rng.random_range(1..=3);
            let a = random_gaussian(&mut rng, dim);
            let b = random_gaussian(&mut rng, dim);
            let quad: f64 = (0..dim)
                .map(|d| overlap_1d(a.mean[d], a.variance(d), b.mean[d], b.variance(d)).ln())
                .sum();
            let exact = log_el_kernel(&a, &b).unwrap();
            assert!((quad - exact).abs() < 1e-6, "{quad} vs {exact}");
        }
    }

    #[test]
    fn kl_closed_forms() {
        let a = DiagGaussian::standard(1).unwrap();
        let b = g(&[1.0], &[1.0]);
        assert_eq!(kl_diag(&a, &a).unwrap(), 0.0);
        assert!((kl_diag(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        let odd = g(&[0.3, -1.2], &[0.7, 2.5]);
        assert_eq!(kl_diag(&odd, &odd).unwrap(), 0.0);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let dim = rng.random_range(1..=3);
            let a = random_gaussian(&mut rng, dim);
            let b = random_gaussian(&mut rng, dim);
            let n = 20_000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut x = vec![0.0; dim];
            for _ in 0..n {
                for d in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    x[d] = a.mean[d] + a.variance(d).sqrt() * z;
                }
                let r = a.log_pdf(&x) - b.log_pdf(&x);
                sum += r;
                sum_sq += r * r;
            }
            let mean = sum / n as f64;
            let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
            let exact = kl_diag(&a, &b).unwrap();
            assert!((mean - exact).abs() <= 4.0 * se + 1e-9, "{mean} ± {se} vs {exact}");
        }
    }

    #[test]
    fn kl_asymmetry_witness() {
        let narrow = g(&[0.0], &[1.0]);
        let wide = g(&[0.0], &[9.0]);
        let forward = kl_diag(&narrow, &wide).unwrap();
        let backward = kl_diag(&wide, &narrow).unwrap();
        assert!((forward - backward).abs() > 0.1);
        assert!(forward < backward);
    }

    #[test]
    fn entropy_closed_forms() {
        let h1 = 0.5 * (2.0 * PI * E).ln();
        assert!((entropy(&DiagGaussian::standard(1).unwrap()) - h1).abs() < 1e-12);
        assert!((entropy(&DiagGaussian::standard(2).unwrap()) - 2.0 * h1).abs() < 1e-12);
        assert!((entropy(&g(&[0.0], &[4.0])) - 2.11208).abs() < 1e-5);
        assert!((h1 - 1.41894).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = DiagGaussian::standard(1).unwrap();
        let b = DiagGaussian::standard(2).unwrap();
        assert!(matches!(log_el_kernel(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(kl_diag(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(DiagGaussian::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(DiagGaussian::new(vec![], vec![]).is_err());
    }

    #[test]
    fn grads_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..20 {
            let a = random_gaussian(&mut rng, 3);
            let b = random_gaussian(&mut rng, 3);
            type F = fn(&DiagGaussian, &DiagGaussian) -> f64;
            let cases: [(F, bool); 2] = [(log_el_kernel_unchecked, true), (kl_diag_unchecked, false)];
            for (f, is_el) in cases {
                let mut grads = vec![[0.0; 4]; 3];
                let sink = |d: usize, am: f64, al: f64, bm: f64, bl: f64| grads[d] = [am, al, bm, bl];
                if is_el {
                    log_el_kernel_grad(&a, &b, 1.0, sink);
                } else {
                    kl_diag_grad(&a, &b, 1.0, sink);
                }
                for d in 0..3 {
                    for slot in 0..4 {
                        let bump = |delta: f64| {
                            let (mut a2, mut b2) = (a.clone(), b.clone());
                            match slot {
                                0 => a2.mean[d] += delta,
                                1 => a2.log_var[d] += delta,
                                2 => b2.mean[d] += delta,
                                _ => b2.log_var[d] += delta,
                            }
                            f(&a2, &b2)
                        };
                        let fd = (bump(h) - bump(-h)) / (2.0 * h);
                        assert!((fd - grads[d][slot]).abs() < 1e-6, "slot {slot}: {fd} vs {}", grads[d][slot]);
                    }
                }
            }
        }
    }

    fn arb_gaussian(dim: usize) -> impl Strategy<Value = DiagGaussian> {
        (
            proptest::collection::vec(-5.0f64..5.0, dim),
            proptest::collection::vec(-3.0f64..3.0, dim),
        )
            .prop_map(|(m, l)| DiagGaussian::new(m, l).unwrap())
    }

    fn pair() -> impl Strategy<Value = (DiagGaussian, DiagGaussian)> {
        (1usize..6).prop_flat_map(|d| (arb_gaussian(d), arb_gaussian(d)))
    }

    proptest! {
        #[test]
        fn log_el_kernel_is_symmetric((a, b) in pair()) {
            let ab = log_el_kernel(&a, &b).unwrap();
            let ba = log_el_kernel(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
        }

        #[test]
        fn kl_is_nonnegative((a, b) in pair()) {
            prop_assert!(kl_diag(&a, &b).unwrap() >= -1e-12);
        }

        #[test]
        fn translation_invariance((a, b) in pair(), shift in -10.0f64..10.0) {
            let moved = |x: &DiagGaussian| {
                DiagGaussian::new(x.mean.iter().map(|m| m + shift).collect(), x.log_var.clone()).unwrap()
            };
            let (a2, b2) = (moved(&a), moved(&b));
            prop_assert!((log_el_kernel(&a, &b).unwrap() - log_el_kernel(&a2, &b2).unwrap()).abs() < 1e-9);
            prop_assert!((kl_diag(&a, &b).unwrap() - kl_diag(&a2, &b2).unwrap()).abs() < 1e-9);
            prop_assert_eq!(entropy(&a), entropy(&a2));
        }
    }
}
