//! Gamma factors in shape-rate form, plus the special functions and the
//! log-space quadrature used for exact ELBO terms.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Trigamma function: recurrence up to x >= 10, then the asymptotic series.
pub fn trigamma(x: f64) -> f64 {
    if x <= 0.0 && x.floor() == x {
        return f64::INFINITY;
    }
    if x < 0.0 {
        // reflection: ψ1(1 - x) + ψ1(x) = π² / sin²(πx)
        let s = (std::f64::consts::PI * x).sin();
        return -trigamma(1.0 - x) + (std::f64::consts::PI / s).powi(2);
    }
    let mut acc = 0.0;
    let mut z = x;
    while z < 10.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let w = 1.0 / (z * z);
    let series = 1.0 / z
        + w / 2.0
        + w / z * (1.0 / 6.0 - w * (1.0 / 30.0 - w * (1.0 / 42.0 - w * (1.0 / 30.0 - w * 5.0 / 66.0))));
    acc + series
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite() {
            Ok(Self { shape, rate })
        } else {
            Err(Error::invalid(format!("invalid Gamma parameters shape={shape}, rate={rate}")))
        }
    }

    /// Exponential distribution with the given rate.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(1.0, rate)
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    pub fn mean_log(&self) -> f64 {
        digamma(self.shape) - self.rate.ln()
    }

    /// E[1/x]; infinite for shape <= 1.
    pub fn mean_inverse(&self) -> f64 {
        if self.shape > 1.0 {
            self.rate / (self.shape - 1.0)
        } else {
            f64::INFINITY
        }
    }

    pub fn entropy(&self) -> f64 {
        let a = self.shape;
        a - self.rate.ln() + ln_gamma(a) + (1.0 - a) * digamma(a)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }

    /// E_q[ln p(x)] for p = Gamma(`prior_shape`, `prior_rate`) with fixed
    /// hyperparameters.
    pub fn cross_entropy_term(&self, prior: &GammaParams) -> f64 {
        prior.shape * prior.rate.ln() - ln_gamma(prior.shape) + (prior.shape - 1.0) * self.mean_log()
            - prior.rate * self.mean()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = rand_distr::Gamma::new(self.shape, 1.0 / self.rate).expect("validated parameters");
        // Tiny shapes can underflow to zero; keep draws in the support.
        g.sample(rng).max(f64::MIN_POSITIVE)
    }

    /// Natural parameters for the sufficient statistics (ln x, x).
    pub(crate) fn natural(&self) -> [f64; 2] {
        [self.shape - 1.0, -self.rate]
    }

    pub(crate) fn from_natural(eta: [f64; 2]) -> Option<Self> {
        let (shape, rate) = (eta[0] + 1.0, -eta[1]);
        (shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()).then_some(Self { shape, rate })
    }

    /// E_q[g(x)] by trapezoid quadrature in t = ln x over the region where
    /// the log-density is within 36 nats of its peak.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        const DROP: f64 = 36.0;
        const MIN_T: f64 = -700.0;
        let (a, b) = (self.shape, self.rate);
        let t0 = (a / b).ln();
        let x0 = a / b;
        let h = |t: f64| a * (t - t0) - b * (t.exp() - x0);
        let mut lo = 1.0 / a.sqrt();
        while h(t0 - lo) > -DROP && t0 - lo > MIN_T {
            lo *= 1.5;
        }
        let mut hi = 1.0 / a.sqrt();
        while h(t0 + hi) > -DROP {
            hi *= 1.5;
        }
        let start = (t0 - lo).max(MIN_T);
        // about four nodes per standard deviation of the peak in t, and never
        // coarser than 0.25 in t where the right tail falls off sharply
        let nodes = (((t0 + hi - start) * a.sqrt().max(1.0) * 4.0).ceil() as usize).clamp(48, 20_000);
        let step = (t0 + hi - start) / (nodes - 1) as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..nodes {
            let t = start + step * i as f64;
            let w = h(t).exp() * if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            if w > 0.0 {
                num += w * g(t.exp());
                den += w;
            }
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trigamma_values() {
        // ψ1(1) = π²/6, ψ1(1/2) = π²/2, ψ1(x+1) = ψ1(x) - 1/x²
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
        for x in [0.01, 0.3, 2.5, 7.0, 40.0, 1e4] {
            assert!((trigamma(x + 1.0) - (trigamma(x) - 1.0 / (x * x))).abs() < 1e-10 * trigamma(x));
        }
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for x in [0.2, 1.3, 9.0, 250.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((fd - trigamma(x)).abs() < 1e-6 * trigamma(x), "{x}");
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for (a, b) in [(0.3, 2.0), (1.0, 1.0), (4.0, 0.5), (2500.0, 30.0), (1e5, 1e3)] {
            let q = GammaParams::new(a, b).unwrap();
            assert!((q.expect(|x| x) - q.mean()).abs() < 1e-9 * q.mean(), "{a} {b}");
            assert!((q.expect(f64::ln) - q.mean_log()).abs() < 1e-9 * (1.0 + q.mean_log().abs()));
            let m2 = q.expect(|x| x * x);
            assert!((m2 - (q.variance() + q.mean().powi(2))).abs() < 1e-8 * m2);
        }
    }

    #[test]
    fn entropy_against_quadrature() {
        for (a, b) in [(0.7, 3.0), (12.0, 0.1)] {
            let q = GammaParams::new(a, b).unwrap();
            let h = -q.expect(|x| q.ln_pdf(x));
            assert!((h - q.entropy()).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_entropy_term_against_quadrature() {
        let q = GammaParams::new(3.0, 2.0).unwrap();
        let p = GammaParams::new(1.5, 0.2).unwrap();
        assert!((q.cross_entropy_term(&p) - q.expect(|x| p.ln_pdf(x))).abs() < 1e-9);
    }

    #[test]
    fn natural_round_trip_and_sampling() {
        let q = GammaParams::new(2.5, 4.0).unwrap();
        assert_eq!(GammaParams::from_natural(q.natural()).unwrap(), q);
        assert!(GammaParams::from_natural([-1.5, -1.0]).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let mean = (0..n).map(|_| q.sample(&mut rng)).sum::<f64>() / n as f64;
        let se = (q.variance() / n as f64).sqrt();
        assert!((mean - q.mean()).abs() < 4.0 * se);
        assert!(GammaParams::new(0.0, 1.0).is_err());
    }
}
