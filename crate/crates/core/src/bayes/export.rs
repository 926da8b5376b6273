//! Posterior draws for density plots.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::gamma::GammaParams;
use super::length::{LengthTestPosterior, LengthTrainPosterior};
use super::lexical::{LexicalTestPosterior, LexicalTrainPosterior};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedVariable {
    pub name: String,
    /// Gamma factor of the underlying scalar.
    pub posterior: GammaParams,
    /// Draws are `scale * x` with x from the factor.
    pub scale: f64,
    pub mean: f64,
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PosteriorExport {
    pub variables: Vec<ExportedVariable>,
}

/// A named scalar: (name, factor, scale).
pub type Variable = (String, GammaParams, f64);

impl PosteriorExport {
    pub fn draw(variables: Vec<Variable>, samples: usize, seed: u64) -> Self {
        let variables = variables
            .into_iter()
            .map(|(name, posterior, scale)| {
                let mut rng = super::fit_rng(seed, &name);
                let samples = (0..samples).map(|_| scale * posterior.sample(&mut rng)).collect();
                ExportedVariable {
                    mean: scale * posterior.mean(),
                    name,
                    posterior,
                    scale,
                    samples,
                }
            })
            .collect();
        Self { variables }
    }

    pub fn get(&self, name: &str) -> Option<&ExportedVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Long format: one `variable,sample` row per draw.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variable", "sample"])?;
        for v in &self.variables {
            for s in &v.samples {
                w.write_record([v.name.as_str(), &s.to_string()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

impl LengthTrainPosterior {
    pub fn variables(&self) -> Vec<Variable> {
        vec![
            ("length.alpha".into(), self.alpha, 1.0),
            ("length.beta".into(), self.beta, 1.0),
        ]
    }
}

impl LengthTestPosterior {
    /// eta, each s_g, and each group mean rate s_g * mu.
    pub fn variables(&self) -> Vec<Variable> {
        let mut vars = vec![("length.eta".to_string(), self.eta, 1.0)];
        for (g, p) in &self.groups {
            vars.push((format!("length.s.{g}"), p.scale, 1.0));
            vars.push((format!("length.rate.{g}"), p.scale, self.mu));
        }
        vars
    }
}

impl LexicalTrainPosterior {
    /// `prefix` distinguishes bigram from skip-bigram fits.
    pub fn variables(&self, prefix: &str) -> Vec<Variable> {
        vec![
            (format!("{prefix}.alpha"), self.alpha, 1.0),
            (format!("{prefix}.beta"), self.beta, 1.0),
        ]
    }
}

impl LexicalTestPosterior {
    pub fn variables(&self, prefix: &str) -> Vec<Variable> {
        let mut vars = vec![
            (format!("{prefix}.eta_s"), self.eta_unigram, 1.0),
            (format!("{prefix}.eta_m"), self.eta_pair, 1.0),
        ];
        for (g, p) in &self.groups {
            vars.push((format!("{prefix}.s.{g}"), p.unigram_scale, 1.0));
            vars.push((format!("{prefix}.m.{g}"), p.pair_scale, 1.0));
        }
        vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_scaled_and_reproducible() {
        let q = GammaParams::new(50.0, 10.0).unwrap();
        let a = PosteriorExport::draw(vec![("x".into(), q, 2.0)], 1000, 7);
        let b = PosteriorExport::draw(vec![("x".into(), q, 2.0)], 1000, 7);
        assert_eq!(a, b);
        let v = a.get("x").unwrap();
        assert_eq!(v.samples.len(), 1000);
        assert_eq!(v.mean, 10.0);
        let avg = v.samples.iter().sum::<f64>() / 1000.0;
        // sd of the scaled mean estimate: 2 * sqrt(0.5) / sqrt(1000)
        assert!((avg - 10.0).abs() < 4.0 * 2.0 * 0.5f64.sqrt() / 1000f64.sqrt());
    }

    #[test]
    fn csv_long_format() {
        let q = GammaParams::new(1.0, 1.0).unwrap();
        let e = PosteriorExport::draw(vec![("a".into(), q, 1.0), ("b".into(), q, 1.0)], 3, 0);
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "variable,sample");
        assert_eq!(lines.len(), 7);
        assert!(lines[4].starts_with("b,"));
    }
}
