//! Upper bound on the safety probability far away from all observations, the
//! largest covariance level that keeps it below the safe-set threshold, and the
//! resulting exploration radius.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::{radius_for_delta, KernelFamily};

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Number of observations.
    pub n: usize,
    /// Bound on every covariance between the test point and the data.
    pub delta: f64,
    /// Observation noise standard deviation.
    pub sigma: f64,
    pub k_scale: f64,
    pub threshold: f64,
}

impl BoundInputs {
    pub fn delta_max(&self) -> f64 {
        delta_max(self.k_scale, self.n, self.sigma)
    }
}

fn delta_max(k_scale: f64, n: usize, sigma: f64) -> f64 {
    k_scale.sqrt() * sigma / (n as f64).sqrt()
}

fn bound_argument(n: usize, delta: f64, sigma: f64, k_scale: f64, t: f64) -> f64 {
    let nf = n as f64;
    let s2 = sigma * sigma;
    (nf * delta / s2 - t) / (k_scale - nf * delta * delta / s2).sqrt()
}

/// `Phi((N delta / sigma^2 - T) / sqrt(k_scale - N delta^2 / sigma^2))`.
pub fn safety_probability_bound(b: &BoundInputs) -> Result<f64> {
    if b.n == 0 || !(b.sigma > 0.0) || !(b.k_scale > 0.0) {
        return Err(Error::Input("need N >= 1, sigma > 0 and k_scale > 0".into()));
    }
    let dm = b.delta_max();
    if !(b.delta > 0.0 && b.delta < dm) {
        return Err(Error::Input(format!("delta must lie in (0, {dm}), got {}", b.delta)));
    }
    Ok(phi(bound_argument(b.n, b.delta, b.sigma, b.k_scale, b.threshold)))
}

/// Why no covariance level can push the bound below `Phi(sqrt(beta))`, or
/// `None` when one exists.
pub fn feasibility_failure(beta: f64, t: f64, k_scale: f64) -> Option<String> {
    let sb = beta.max(0.0).sqrt();
    if t >= 0.0 {
        if sb > 0.0 {
            None
        } else {
            Some(format!("T = {t} >= 0 needs beta > 0"))
        }
    } else if sb > t.abs() / k_scale.sqrt() {
        None
    } else {
        Some(format!(
            "T = {t} < 0 needs sqrt(beta) = {sb} > |T| / sqrt(k_scale) = {}",
            t.abs() / k_scale.sqrt()
        ))
    }
}

/// Largest `delta` in `(0, sqrt(k_scale) sigma / sqrt(N))` whose bound stays at
/// or below `Phi(sqrt(beta))`; `None` when no such level exists.
pub fn find_delta(beta: f64, t: f64, k_scale: f64, n: usize, sigma: f64) -> Option<f64> {
    if n == 0 || !(sigma > 0.0) || !(k_scale > 0.0) || beta < 0.0 || feasibility_failure(beta, t, k_scale).is_some() {
        return None;
    }
    let target = beta.sqrt();
    let dm = delta_max(k_scale, n, sigma);
    let arg = |d: f64| bound_argument(n, d, sigma, k_scale, t);
    // The argument rises on the whole interval unless T > sqrt(N k) / sigma;
    // past its peak it falls towards -inf, so the feasible set reaches delta_max.
    if t > (n as f64 * k_scale).sqrt() / sigma {
        let d = dm * (1.0 - 1e-10);
        return (arg(d) <= target).then_some(d);
    }
    let (mut lo, mut hi) = (0.0_f64, dm);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if arg(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then_some(lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exploration {
    pub delta: f64,
    /// Radius in lengthscale units.
    pub unit_radius: f64,
    /// Bound value at `delta`.
    pub bound: f64,
}

impl Exploration {
    pub fn radius(&self, lengthscale: f64) -> f64 {
        self.unit_radius * lengthscale
    }
}

/// Covariance level, radius in lengthscale units and bound value for the
/// given safe-set setting.
pub fn exploration(family: KernelFamily, beta: f64, t: f64, n: usize, sigma: f64, k_scale: f64) -> Result<Exploration> {
    let delta = find_delta(beta, t, k_scale, n, sigma).ok_or_else(|| {
        Error::NoBound(feasibility_failure(beta, t, k_scale).unwrap_or_else(|| "no feasible delta".into()))
    })?;
    let rel = delta / k_scale;
    // kernel values never exceed k_scale, so every distance qualifies
    let unit_radius = if rel >= 1.0 { 0.0 } else { radius_for_delta(family, rel)? };
    let bound = safety_probability_bound(&BoundInputs { n, delta, sigma, k_scale, threshold: t })?;
    Ok(Exploration { delta, unit_radius, bound })
}

/// `lengthscale * radius_for_delta(family, delta* / k_scale)`.
pub fn exploration_radius(
    family: KernelFamily,
    lengthscale: f64,
    beta: f64,
    t: f64,
    n: usize,
    sigma: f64,
    k_scale: f64,
) -> Result<f64> {
    Ok(exploration(family, beta, t, n, sigma, k_scale)?.radius(lengthscale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1(delta: f64, t: f64) -> BoundInputs {
        BoundInputs { n: 10, delta, sigma: 0.1, k_scale: 1.0, threshold: t }
    }

    #[test]
    fn example_bound() {
        let v = safety_probability_bound(&ex1(0.002, 0.0)).unwrap();
        assert!((v - 0.9775).abs() < 5e-4, "{v}");
        // direct substitution: (10*0.002/0.01) / sqrt(1 - 10*0.002^2/0.01)
        let arg = 2.0 / (1.0f64 - 0.004).sqrt();
        assert!((v - phi(arg)).abs() < 1e-15);
    }

    #[test]
    fn small_delta_limit() {
        let v = safety_probability_bound(&ex1(1e-12, 0.0)).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn threshold_one_substitution() {
        let v = safety_probability_bound(&ex1(0.002, 1.0)).unwrap();
        assert!((v - phi((2.0 - 1.0) / (1.0f64 - 0.004).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn delta_outside_interval_rejected() {
        assert!(safety_probability_bound(&ex1(0.0, 0.0)).is_err());
        assert!(safety_probability_bound(&ex1(0.1f64.sqrt() * 0.1, 0.0)).is_err());
        assert!(safety_probability_bound(&ex1(0.05, 0.0)).is_err());
    }

    #[test]
    fn example_delta_and_radius() {
        let d = find_delta(4.0, 0.0, 1.0, 10, 0.1).unwrap();
        // closed form for T = 0: 1000 d / sqrt(1 - 1000 d^2) = 2
        assert!((d - 2.0 / 1_004_000f64.sqrt()).abs() < 1e-9);
        assert!((d - 0.002).abs() < 0.0002);
        let r = exploration_radius(KernelFamily::Matern52, 0.1256, 4.0, 0.0, 10, 0.1, 1.0).unwrap();
        assert!((r - 0.5633).abs() < 0.002, "{r}");
    }

    #[test]
    fn negative_threshold_beyond_beta_has_no_delta() {
        assert_eq!(find_delta(4.0, -5.0, 1.0, 10, 0.1), None);
        assert!(matches!(
            exploration_radius(KernelFamily::Rbf, 1.0, 4.0, -5.0, 10, 0.1, 1.0),
            Err(Error::NoBound(_))
        ));
        assert!(feasibility_failure(4.0, -5.0, 1.0).unwrap().contains("needs sqrt(beta)"));
        assert!(find_delta(4.0, -1.5, 1.0, 10, 0.1).is_some());
    }

    #[test]
    fn tiny_beta_gives_tiny_delta() {
        let beta = 1e-8;
        let d = find_delta(beta, 0.0, 1.0, 10, 0.1).unwrap();
        assert!(d > 0.0 && d < 1e-6);
        let b = safety_probability_bound(&ex1(d, 0.0)).unwrap();
        assert!(b <= phi(beta.sqrt()) + 1e-15);
        assert!(safety_probability_bound(&ex1(d + 1e-8, 0.0)).unwrap() > phi(beta.sqrt()));
    }

    #[test]
    fn delta_is_the_largest_feasible() {
        for (beta, t) in [(4.0, 0.0), (9.0, 0.5), (1.0, -0.5), (2.0, 3.0)] {
            let d = find_delta(beta, t, 1.0, 10, 0.1).unwrap();
            let target = phi(beta.sqrt());
            assert!(safety_probability_bound(&ex1(d, t)).unwrap() <= target);
            assert!(safety_probability_bound(&ex1(d + 1e-8, t)).unwrap() > target);
        }
    }

    #[test]
    fn radius_scales_with_lengthscale() {
        let a = exploration_radius(KernelFamily::Matern32, 0.3, 4.0, 0.0, 10, 0.1, 1.0).unwrap();
        let b = exploration_radius(KernelFamily::Matern32, 0.6, 4.0, 0.0, 10, 0.1, 1.0).unwrap();
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn rbf_radius_closed_form() {
        let d = find_delta(4.0, 0.0, 1.0, 10, 0.1).unwrap();
        let r = exploration_radius(KernelFamily::Rbf, 0.1256, 4.0, 0.0, 10, 0.1, 1.0).unwrap();
        assert!((r - (2.0 * (1.0 / d).ln()).sqrt() * 0.1256).abs() < 1e-12);
    }

    #[test]
    fn bound_monotone_on_grids() {
        let dm = 0.1 / 10f64.sqrt();
        for t in [-1.0, 0.0, 0.5, 2.0] {
            let mut prev = 0.0;
            for i in 1..100 {
                let v = safety_probability_bound(&ex1(dm * i as f64 / 100.0, t)).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
        for i in 1..10 {
            let d = dm * i as f64 / 10.0;
            let mut prev = 1.0;
            for k in -20..20 {
                let v = safety_probability_bound(&ex1(d, k as f64 * 0.25)).unwrap();
                assert!(v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn scaled_kernel_uses_relative_delta() {
        let e = exploration(KernelFamily::Matern52, 4.0, 0.0, 10, 0.1, 2.0).unwrap();
        assert!((e.unit_radius - radius_for_delta(KernelFamily::Matern52, e.delta / 2.0).unwrap()).abs() < 1e-15);
        assert!(e.bound <= phi(2.0));
    }
}
