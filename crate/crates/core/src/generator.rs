//! Seeded random liquidation instances.
//!
//! Impacts, holdings and prices are drawn per asset; the balance sheet is
//! then chosen so that the fund starts above its first leverage cap but the
//! half-sale plan brings it back below. Prices are set a random margin above
//! the larger of two per-asset thresholds: the one that makes the half-sale
//! plan maximize the shock capacity, and the one that makes the half sale
//! reduce first-period leverage. The withdrawal `delta` is a fixed fraction
//! of the shock capacity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liquidation::{check_assumptions, shock_capacity, LiquidationParams};

/// Attempts before generation gives up.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSettings {
    pub m: usize,
    pub pi: f64,
    pub delta_frac: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// When set, `gamma_i = r lambda_i` with `r` uniform in the range;
    /// otherwise `gamma_i` is uniform in `[0.1, lambda_i)`, which keeps every
    /// quadratic convex.
    pub gamma_ratio: Option<(f64, f64)>,
    /// Relative price margin above the per-asset threshold.
    pub price_margin: (f64, f64),
    /// Fraction of the half-sale leverage improvement by which the initial
    /// position exceeds the first cap.
    pub theta: (f64, f64),
}

impl GeneratorSettings {
    /// Convex family: `gamma < lambda`.
    pub fn new(m: usize, pi: f64, delta_frac: f64, rho1: f64, rho2: f64) -> Self {
        Self {
            m,
            pi,
            delta_frac,
            rho1,
            rho2,
            gamma_ratio: None,
            price_margin: (0.2, 1.0),
            theta: (0.3, 0.7),
        }
    }

    /// Family with `gamma / lambda` in `[1.5, 2.5]`, for which the second
    /// leverage constraint and the objective are indefinite.
    pub fn nonconvex(m: usize, pi: f64, delta_frac: f64, rho1: f64, rho2: f64) -> Self {
        Self {
            gamma_ratio: Some((1.5, 2.5)),
            price_margin: (0.4, 1.2),
            ..Self::new(m, pi, delta_frac, rho1, rho2)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::InvalidArgument(format!("pi = {} must lie in [0, 1]", self.pi)));
        }
        if !(0.0..1.0).contains(&self.delta_frac) {
            return Err(Error::InvalidArgument(format!(
                "delta_frac = {} must lie in [0, 1)",
                self.delta_frac
            )));
        }
        if !(self.rho1 > 0.0 && self.rho2 > 0.0) {
            return Err(Error::InvalidArgument("leverage caps must be positive".into()));
        }
        let ranges = [
            ("price_margin", Some(self.price_margin)),
            ("theta", Some(self.theta)),
            ("gamma_ratio", self.gamma_ratio),
        ];
        for (name, r) in ranges {
            if let Some((a, b)) = r {
                if !(a.is_finite() && b.is_finite() && a > 0.0 && a <= b) {
                    return Err(Error::InvalidArgument(format!("{name} range ({a}, {b}) is invalid")));
                }
            }
        }
        if !(self.theta.1 < 1.0) {
            return Err(Error::InvalidArgument("theta must stay below 1".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    if a == b {
        a
    } else {
        rng.gen_range(a..b)
    }
}

/// Price above which the half-sale plan maximizes the shock capacity for a
/// single asset.
fn capacity_threshold(lam: f64, gam: f64, x: f64, rho2: f64) -> f64 {
    let k = rho2 * (lam - gam) + lam + gam;
    if k > 0.0 {
        (rho2 + 1.0) * lam * x + gam * x
    } else if k == 0.0 {
        rho2 * gam * x
    } else {
        0.5 * (rho2 + 1.0) * (lam + gam) * x
    }
}

/// Per-asset coefficient of `s^2` in the half-sale leverage improvement
/// `sum p0 s - c s^2`, `s = x0/2`.
fn half_sale_curvature(lam: f64, gam: f64, rho1: f64) -> f64 {
    (rho1 + 1.0) * lam + (1.5 * rho1 + 0.5) * gam
}

fn draw(rng: &mut ChaCha8Rng, s: &GeneratorSettings) -> LiquidationParams {
    let m = s.m;
    let mut lambda = Vec::with_capacity(m);
    let mut gamma = Vec::with_capacity(m);
    let mut x0 = Vec::with_capacity(m);
    let mut p0 = Vec::with_capacity(m);
    let mut improvement = 0.0;
    for _ in 0..m {
        let lam = rng.gen_range(0.5..2.0);
        let gam = match s.gamma_ratio {
            Some(r) => uniform(rng, r) * lam,
            None => rng.gen_range(0.1..lam),
        };
        let x = rng.gen_range(0.5..2.0);
        let half = 0.5 * x;
        let need = capacity_threshold(lam, gam, x, s.rho2).max(half_sale_curvature(lam, gam, s.rho1) * half);
        let price = (1.0 + uniform(rng, s.price_margin)) * need;
        improvement += price * half - half_sale_curvature(lam, gam, s.rho1) * half * half;
        lambda.push(lam);
        gamma.push(gam);
        x0.push(x);
        p0.push(price);
    }
    let theta = uniform(rng, s.theta);
    let value: f64 = p0.iter().zip(&x0).map(|(p, x)| p * x).sum();
    let e0 = (value - theta * improvement) / (s.rho1 + 1.0);
    LiquidationParams {
        m,
        lambda,
        gamma,
        p0,
        x0,
        e0,
        l0: value - e0,
        rho1: s.rho1,
        rho2: s.rho2,
        pi: s.pi,
        delta: 0.0,
    }
}

/// Draws instances until one satisfies every standing assumption and has a
/// positive shock capacity, then sets `delta = delta_frac * delta_max`.
pub fn generate_instance(seed: u64, settings: &GeneratorSettings) -> Result<LiquidationParams> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_issue = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let mut p = draw(&mut rng, settings);
        if let Err(e) = p.validate() {
            last_issue = e.to_string();
            continue;
        }
        let cap = match shock_capacity(&p) {
            Ok(c) => c,
            Err(e) => {
                last_issue = e.to_string();
                continue;
            }
        };
        if !(cap.delta_max > 0.0) {
            last_issue = format!("shock capacity {:.6e} is not positive", cap.delta_max);
            continue;
        }
        p.delta = settings.delta_frac * cap.delta_max;
        let report = check_assumptions(&p);
        if !report.all_hold() {
            last_issue = format!(
                "assumption check failed: {} / {} / {}",
                report.initial_leverage.detail, report.half_sale.detail, report.slater.detail
            );
            continue;
        }
        return Ok(p);
    }
    Err(Error::Validation(format!(
        "no valid instance after {MAX_ATTEMPTS} draws (seed {seed}); last issue: {last_issue}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liquidation::build_qcqp;

    #[test]
    fn same_seed_same_instance() {
        let s = GeneratorSettings::new(3, 0.3, 0.8, 18.0, 18.0);
        assert_eq!(generate_instance(7, &s).unwrap(), generate_instance(7, &s).unwrap());
        assert_ne!(generate_instance(7, &s).unwrap(), generate_instance(8, &s).unwrap());
    }

    #[test]
    fn zero_fraction_removes_the_shock() {
        let s = GeneratorSettings::new(2, 0.3, 0.0, 18.0, 18.0);
        let p = generate_instance(1, &s).unwrap();
        assert_eq!(p.delta, 0.0);
        let inst = build_qcqp(&p).unwrap();
        assert_eq!(inst.constraints[1].constant, p.l0 - p.rho2 * p.e0);
    }

    #[test]
    fn default_family_is_convex_and_capacity_closed_form() {
        let s = GeneratorSettings::new(4, 0.3, 0.8, 18.0, 18.0);
        for seed in 0..5 {
            let p = generate_instance(seed, &s).unwrap();
            assert!(p.gamma.iter().zip(&p.lambda).all(|(g, l)| g < l));
            assert!(crate::liquidation::capacity_conditions(&p).iter().all(|&b| b));
        }
    }

    #[test]
    fn nonconvex_family_has_indefinite_second_constraint() {
        let s = GeneratorSettings::nonconvex(1, 0.3, 0.8, 18.0, 18.0);
        let p = generate_instance(3, &s).unwrap();
        let inst = build_qcqp(&p).unwrap();
        assert!(crate::spectral::min_eigenvalue(&inst.constraints[1].quad).unwrap() < 0.0);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut s = GeneratorSettings::new(0, 0.3, 0.8, 18.0, 18.0);
        assert!(generate_instance(0, &s).is_err());
        s.m = 1;
        s.delta_frac = 1.0;
        assert!(generate_instance(0, &s).is_err());
    }
}
