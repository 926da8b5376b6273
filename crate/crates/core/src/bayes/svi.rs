//! Stochastic variational updates for a single positive scalar with a Gamma
//! variational factor.
//!
//! The target is an unnormalised log-density split into a part that is linear
//! in the sufficient statistics T = (ln x, x), known exactly, and a non-linear
//! remainder f. Cov_q(T, f) is the score-function gradient of E_q[f] in
//! natural coordinates and Cov_q(T, T) is the Fisher matrix, so solving the
//! batch estimates of both gives the natural-gradient fixed point. Centering
//! f by its batch mean is the control variate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gamma::GammaParams;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SviConfig {
    pub steps: usize,
    pub samples_per_step: usize,
    pub step_size: f64,
    /// Robbins-Monro schedule: rho_t = step_size * (1 + t / decay_offset)^-decay_exponent.
    pub decay_offset: f64,
    pub decay_exponent: f64,
    /// Coordinate rounds using Laplace approximations before SVI starts.
    pub init_rounds: usize,
    /// Record the ELBO every this many steps; 0 disables the trace.
    pub elbo_every: usize,
}

impl Default for SviConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            samples_per_step: 16,
            step_size: 0.05,
            decay_offset: 100.0,
            decay_exponent: 0.7,
            init_rounds: 30,
            elbo_every: 1,
        }
    }
}

impl SviConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_step < 3 {
            return Err(Error::config("samples_per_step must be at least 3"));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::config("step_size must lie in (0, 1]"));
        }
        if !(self.decay_offset > 0.0) || !(0.5..=1.0).contains(&self.decay_exponent) {
            return Err(Error::config("decay_offset must be positive and decay_exponent in [0.5, 1]"));
        }
        Ok(())
    }

    pub(crate) fn rho(&self, t: usize) -> f64 {
        self.step_size * (1.0 + t as f64 / self.decay_offset).powf(-self.decay_exponent)
    }

    pub(crate) fn records(&self, t: usize) -> bool {
        self.elbo_every > 0 && t.is_multiple_of(self.elbo_every)
    }
}

/// Unnormalised log-density `lin[0] ln x + lin[1] x + nonlinear(x)`.
pub(crate) struct Target<'a> {
    pub lin: [f64; 2],
    pub nonlinear: &'a dyn Fn(f64) -> f64,
}

impl Target<'_> {
    fn eval(&self, x: f64) -> f64 {
        self.lin[0] * x.ln() + self.lin[1] * x + (self.nonlinear)(x)
    }
}

/// Gamma matching the mode and curvature of the target in t = ln x.
pub(crate) fn laplace(target: &Target<'_>) -> Option<GammaParams> {
    let h = |t: f64| target.eval(t.exp()) + t;
    let (mut best_t, mut best) = (0.0, f64::NEG_INFINITY);
    let mut t = -25.0;
    while t <= 25.0 {
        let v = h(t);
        if v > best {
            best = v;
            best_t = t;
        }
        t += 0.25;
    }
    if !best.is_finite() {
        return None;
    }
    // golden-section refinement inside the bracketing grid cell pair
    let (mut lo, mut hi) = (best_t - 0.25, best_t + 0.25);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..80 {
        if hc > hd {
            hi = d;
            d = c;
            hd = hc;
            c = hi - g * (hi - lo);
            hc = h(c);
        } else {
            lo = c;
            c = d;
            hc = hd;
            d = lo + g * (hi - lo);
            hd = h(d);
        }
    }
    let t = (lo + hi) / 2.0;
    let delta = 1e-2;
    let curvature = -(h(t + delta) - 2.0 * h(t) + h(t - delta)) / (delta * delta);
    let shape = if curvature.is_finite() && curvature > 1e-3 { curvature } else { 1.0 };
    GammaParams::new(shape, shape / t.exp()).ok()
}

/// One Gamma factor under damped stochastic natural-gradient updates.
pub(crate) struct GammaSvi {
    q: GammaParams,
}

impl GammaSvi {
    pub fn new(q: GammaParams) -> Self {
        Self { q }
    }

    pub fn q(&self) -> GammaParams {
        self.q
    }

    /// Moves the natural parameters a fraction `rho` towards the batch
    /// estimate of the fixed point.
    pub fn step<R: Rng + ?Sized>(&mut self, target: &Target<'_>, samples: usize, rho: f64, rng: &mut R) {
        let Some(proposal) = self.proposal(target, samples, rng) else {
            return;
        };
        let current = self.q.natural();
        let mut frac = rho;
        // Halve the move until it stays in the family.
        for _ in 0..30 {
            let eta = [
                current[0] + frac * (proposal[0] - current[0]),
                current[1] + frac * (proposal[1] - current[1]),
            ];
            if let Some(q) = GammaParams::from_natural(eta) {
                self.q = q;
                return;
            }
            frac *= 0.5;
        }
    }

    fn proposal<R: Rng + ?Sized>(&self, target: &Target<'_>, samples: usize, rng: &mut R) -> Option<[f64; 2]> {
        let mut xs = Vec::with_capacity(samples);
        for _ in 0..samples {
            let x = self.q.sample(rng);
            let f = (target.nonlinear)(x);
            if !f.is_finite() {
                return None;
            }
            xs.push((x.ln(), x, f));
        }
        let n = samples as f64;
        let (ml, mx, mf) = xs.iter().fold((0.0, 0.0, 0.0), |(a, b, c), s| (a + s.0 / n, b + s.1 / n, c + s.2 / n));
        let (mut sll, mut slx, mut sxx, mut slf, mut sxf) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(l, x, f) in &xs {
            let (dl, dx, df) = (l - ml, x - mx, f - mf);
            sll += dl * dl;
            slx += dl * dx;
            sxx += dx * dx;
            slf += dl * df;
            sxf += dx * df;
        }
        let det = sll * sxx - slx * slx;
        if !(det > 0.0) {
            return None;
        }
        let coef = [(sxx * slf - slx * sxf) / det, (sll * sxf - slx * slf) / det];
        let proposal = [target.lin[0] + coef[0], target.lin[1] + coef[1]];
        proposal.iter().all(|v| v.is_finite()).then_some(proposal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::ln_gamma;

    #[test]
    fn laplace_is_exact_for_gamma_targets() {
        let target = Target {
            lin: [3.0, -2.0],
            nonlinear: &|_| 0.0,
        };
        let q = laplace(&target).unwrap();
        assert!((q.shape - 4.0).abs() < 1e-4 && (q.rate - 2.0).abs() < 1e-4, "{q:?}");
    }

    #[test]
    fn in_family_target_is_a_fixed_point() {
        // The non-linear part is itself Gamma-shaped: the regression recovers
        // it with zero residual from any batch.
        let target = Target {
            lin: [0.0, -1.0],
            nonlinear: &|x: f64| 4.0 * x.ln() - 2.0 * x,
        };
        let mut svi = GammaSvi::new(GammaParams::new(1.0, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        svi.step(&target, 16, 1.0, &mut rng);
        let q = svi.q();
        assert!((q.shape - 5.0).abs() < 1e-6 && (q.rate - 3.0).abs() < 1e-6, "{q:?}");
    }

    #[test]
    fn lgamma_target_matches_quadrature_optimum() {
        // f(x) = 30 x ln 2 - 10 lgamma(x) - x: compare against a direct
        // maximisation of the quadrature ELBO over (shape, rate).
        let nl = |x: f64| -10.0 * ln_gamma(x);
        let target = Target {
            lin: [0.0, 30.0 * 2f64.ln() - 1.0],
            nonlinear: &nl,
        };
        let elbo = |q: GammaParams| q.expect(|x| target.eval(x)) + q.entropy();
        let mut svi = GammaSvi::new(laplace(&target).unwrap());
        let start = elbo(svi.q());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SviConfig::default();
        for t in 0..2000 {
            svi.step(&target, 16, cfg.rho(t), &mut rng);
        }
        let q = svi.q();
        assert!(elbo(q) >= start - 1e-6);
        // local perturbations do not improve on the fitted factor
        for (da, db) in [(1.02, 1.0), (0.98, 1.0), (1.0, 1.02), (1.0, 0.98), (1.02, 1.02), (0.98, 0.98)] {
            let p = GammaParams::new(q.shape * da, q.rate * db).unwrap();
            assert!(elbo(p) <= elbo(q) + 1e-4, "{da} {db}");
        }
    }
}
