//! Parametric toy signals with a closed-form noise-free pattern per scenario.
//!
//! Attribute 0 sets the frequency of a row sinusoid, attribute 1 the column
//! position of a Gaussian ridge, and any further attribute the frequency of a
//! faint diagonal cosine. Pixels are clamped into `[0, 1]`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttributeSchema, Dataset, Sample, Scenario, Signal, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    pub sizes: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub per_scenario: usize,
    pub noise_amp: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            sizes: vec![3, 3],
            height: 16,
            width: 16,
            per_scenario: 10,
            noise_amp: 0.05,
            seed: 7,
        }
    }
}

impl ToySpec {
    pub fn generate(&self) -> Result<Dataset> {
        let schema = AttributeSchema::from_sizes(&self.sizes)?;
        generate_toy_dataset(
            &schema,
            self.height,
            self.width,
            self.per_scenario,
            self.noise_amp,
            self.seed,
        )
    }
}

fn pattern_value(schema: &AttributeSchema, h: usize, w: usize, y: &Scenario, r: usize, u: usize) -> f64 {
    let (hf, wf) = (h as f64, w as f64);
    let (rf, uf) = (r as f64, u as f64);
    let l1 = y.get(0) as f64;
    let b1 = 0.5 + 0.5 * (2.0 * PI * (l1 + 1.0) * rf / hf).sin();
    let l2 = y.get(1) as f64;
    let centre = (l2 + 0.5) * wf / schema.attributes[1].size as f64;
    let sigma = wf / 8.0;
    let b2 = (-(uf - centre).powi(2) / (2.0 * sigma * sigma)).exp();
    let mut x = 0.5 * b1 + 0.5 * b2;
    for p in 2..schema.len() {
        let lp = y.get(p) as f64;
        x += 0.1 * (2.0 * PI * (lp + 1.0) * (rf + uf) / (hf + wf)).cos();
    }
    x
}

/// Noise-free pattern for `scenario`, clamped into `[0, 1]`.
pub fn toy_clean_pattern(
    schema: &AttributeSchema,
    height: usize,
    width: usize,
    scenario: &Scenario,
) -> Result<Signal> {
    schema.check(scenario)?;
    let values: Vec<f64> = (0..height)
        .flat_map(|r| (0..width).map(move |u| (r, u)))
        .map(|(r, u)| pattern_value(schema, height, width, scenario, r, u))
        .collect();
    Signal::from_f64(height, width, &values)
}

/// Generates `per_scenario` noisy samples for every scenario of the schema.
///
/// All samples start tagged [`Split::Train`]; use `split_dataset` to stratify.
pub fn generate_toy_dataset(
    schema: &AttributeSchema,
    height: usize,
    width: usize,
    per_scenario: usize,
    noise_amp: f64,
    seed: u64,
) -> Result<Dataset> {
    schema.validate()?;
    if height < 8 || width < 8 {
        return Err(Error::Schema(format!(
            "toy signals must be at least 8x8, got {height}x{width}"
        )));
    }
    if per_scenario == 0 {
        return Err(Error::Argument("per_scenario must be at least 1".into()));
    }
    if !noise_amp.is_finite() {
        return Err(Error::Argument(format!("noise amplitude {noise_amp} is not finite")));
    }
    if !(0.0..=0.2).contains(&noise_amp) {
        return Err(Error::Argument(format!(
            "noise amplitude {noise_amp} outside [0, 0.2]"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_amp > 0.0 {
        Some(Uniform::new_inclusive(-noise_amp, noise_amp).expect("valid noise range"))
    } else {
        None
    };
    let mut samples = Vec::new();
    for scenario in schema.all_scenarios() {
        for rep in 0..per_scenario {
            let mut values = Vec::with_capacity(height * width);
            for r in 0..height {
                for u in 0..width {
                    let eps = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                    values.push(pattern_value(schema, height, width, &scenario, r, u) + eps);
                }
            }
            samples.push(Sample {
                id: format!("s{}_{rep:04}", scenario.tag()),
                signal: Signal::from_f64(height, width, &values)?,
                scenario: scenario.clone(),
                split: Split::Train,
                synthetic: false,
            });
        }
    }
    Ok(Dataset {
        schema: schema.clone(),
        height,
        width,
        samples,
        unseen: BTreeSet::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid33() -> AttributeSchema {
        AttributeSchema::from_sizes(&[3, 3]).unwrap()
    }

    #[test]
    fn closed_form_pixel_value() {
        let ds = generate_toy_dataset(&grid33(), 16, 16, 1, 0.0, 1).unwrap();
        let s = ds.samples_of(&Scenario::new([0, 0])).next().unwrap();
        // B1 = 0.5, B2 = exp(-(1 - 2.6667)^2 / 8) = 0.70668
        let expected = 0.5 * 0.5 + 0.5 * (-(1.0f64 - 16.0 / 6.0).powi(2) / 8.0).exp();
        assert!((f64::from(s.signal.get(0, 1)) - 0.6034).abs() < 1e-4);
        assert!((f64::from(s.signal.get(0, 1)) - expected).abs() < 1e-6);
    }

    #[test]
    fn counts_and_determinism() {
        let a = generate_toy_dataset(&grid33(), 16, 16, 10, 0.05, 3).unwrap();
        let b = generate_toy_dataset(&grid33(), 16, 16, 10, 0.05, 3).unwrap();
        assert_eq!(a.samples.len(), 90);
        assert_eq!(a, b);
        let c = generate_toy_dataset(&grid33(), 16, 16, 10, 0.05, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            generate_toy_dataset(&grid33(), 4, 16, 1, 0.0, 0),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            generate_toy_dataset(&grid33(), 16, 16, 1, f64::NAN, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            generate_toy_dataset(&grid33(), 16, 16, 0, 0.0, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn third_attribute_contributes_diagonal_term() {
        let schema = AttributeSchema::from_sizes(&[2, 2, 2]).unwrap();
        let a = toy_clean_pattern(&schema, 16, 16, &Scenario::new([0, 0, 0])).unwrap();
        let b = toy_clean_pattern(&schema, 16, 16, &Scenario::new([0, 0, 1])).unwrap();
        assert_ne!(a, b);
    }
}
