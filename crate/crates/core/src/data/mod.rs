//! Sample and scenario data model, toy signal generator, splits, and the
//! on-disk dataset format.

mod manifest;
mod split;
mod toy;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{load_dataset, save_dataset, MANIFEST_FILE, MANIFEST_VERSION};
pub use split::{hold_out_unseen, split_dataset, DEFAULT_TRAIN_FRACTION};
pub use toy::{generate_toy_dataset, toy_clean_pattern, ToySpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub size: usize,
}

/// Ordered attribute list; the order is shared by every scenario, latent
/// partition and report derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub attributes: Vec<Attribute>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let schema = AttributeSchema { attributes };
        schema.validate()?;
        Ok(schema)
    }

    /// Convenience constructor naming attributes `a0`, `a1`, ...
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        Self::new(
            sizes
                .iter()
                .enumerate()
                .map(|(i, &size)| Attribute {
                    name: format!("a{i}"),
                    size,
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 attributes, got {}",
                self.attributes.len()
            )));
        }
        for a in &self.attributes {
            if a.size < 2 {
                return Err(Error::Schema(format!(
                    "attribute `{}` has {} categories, need at least 2",
                    a.name, a.size
                )));
            }
        }
        Ok(())
    }

    /// Number of attributes, `P`.
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.size).collect()
    }

    pub fn check(&self, scenario: &Scenario) -> Result<()> {
        if scenario.len() != self.len() {
            return Err(Error::Schema(format!(
                "scenario {scenario} has {} entries, schema has {} attributes",
                scenario.len(),
                self.len()
            )));
        }
        for (p, (&c, a)) in scenario.0.iter().zip(&self.attributes).enumerate() {
            if c >= a.size {
                return Err(Error::Schema(format!(
                    "scenario {scenario}: category {c} out of range for attribute {p} (`{}`, size {})",
                    a.name, a.size
                )));
            }
        }
        Ok(())
    }

    /// Every scenario of the full grid, in lexicographic order.
    pub fn all_scenarios(&self) -> Vec<Scenario> {
        let sizes = self.sizes();
        let total: usize = sizes.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut cur = vec![0usize; sizes.len()];
        for _ in 0..total {
            out.push(Scenario(cur.clone()));
            for p in (0..sizes.len()).rev() {
                cur[p] += 1;
                if cur[p] < sizes[p] {
                    break;
                }
                cur[p] = 0;
            }
        }
        out
    }
}

/// One category index per attribute (0-based).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scenario(pub Vec<usize>);

impl Scenario {
    pub fn new(categories: impl Into<Vec<usize>>) -> Self {
        Scenario(categories.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, p: usize) -> usize {
        self.0[p]
    }

    pub fn categories(&self) -> &[usize] {
        &self.0
    }

    /// Copy with attribute `p` set to `category`.
    pub fn with(&self, p: usize, category: usize) -> Scenario {
        let mut c = self.0.clone();
        c[p] = category;
        Scenario(c)
    }

    pub fn tag(&self) -> String {
        self.0
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.tag().replace('-', ","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Single-channel `H x W` image, row-major, stored at the on-disk precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Signal {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "signal of {}x{} needs {} values, got {}",
                height,
                width,
                height * width,
                data.len()
            )));
        }
        Ok(Signal {
            height,
            width,
            data,
        })
    }

    /// Clamps into `[0, 1]` while narrowing to `f32`.
    pub fn from_f64(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            height,
            width,
            values.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn get(&self, r: usize, u: usize) -> f32 {
        self.data[r * self.width + u]
    }

    /// First out-of-range or non-finite pixel, if any.
    pub fn first_invalid(&self) -> Option<(usize, f32)> {
        self.data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
            .map(|(i, v)| (i, *v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub signal: Signal,
    pub scenario: Scenario,
    pub split: Split,
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub height: usize,
    pub width: usize,
    pub samples: Vec<Sample>,
    pub unseen: BTreeSet<Scenario>,
}

impl Dataset {
    /// Scenarios that have at least one sample.
    pub fn existing_scenarios(&self) -> BTreeSet<Scenario> {
        self.samples.iter().map(|s| s.scenario.clone()).collect()
    }

    pub fn samples_of(&self, scenario: &Scenario) -> impl Iterator<Item = &Sample> + '_ {
        let scenario = scenario.clone();
        self.samples.iter().filter(move |s| s.scenario == scenario)
    }

    pub fn split_samples(&self, split: Split) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn find(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Copy restricted to the given split; schema and unseen set are kept.
    pub fn filter_split(&self, split: Split) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            height: self.height,
            width: self.width,
            samples: self.split_samples(split).cloned().collect(),
            unseen: self.unseen.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let mut ids = BTreeSet::new();
        for s in &self.samples {
            self.schema.check(&s.scenario)?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::format(&s.id, "duplicate sample id"));
            }
            if s.signal.height() != self.height || s.signal.width() != self.width {
                return Err(Error::format(
                    &s.id,
                    format!(
                        "signal is {}x{}, dataset is {}x{}",
                        s.signal.height(),
                        s.signal.width(),
                        self.height,
                        self.width
                    ),
                ));
            }
            if let Some((i, v)) = s.signal.first_invalid() {
                return Err(Error::format(&s.id, format!("pixel {i} = {v} outside [0,1]")));
            }
            if self.unseen.contains(&s.scenario) {
                return Err(Error::format(
                    &s.id,
                    format!("sample carries unseen scenario {}", s.scenario),
                ));
            }
        }
        for u in &self.unseen {
            self.schema.check(u)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_rejects_degenerate_shapes() {
        assert!(matches!(AttributeSchema::from_sizes(&[3]), Err(Error::Schema(_))));
        assert!(matches!(AttributeSchema::from_sizes(&[3, 1]), Err(Error::Schema(_))));
        assert!(AttributeSchema::from_sizes(&[2, 2]).is_ok());
    }

    #[test]
    fn all_scenarios_is_lexicographic_grid() {
        let s = AttributeSchema::from_sizes(&[2, 3]).unwrap();
        let all = s.all_scenarios();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], Scenario::new([0, 0]));
        assert_eq!(all[1], Scenario::new([0, 1]));
        assert_eq!(all[5], Scenario::new([1, 2]));
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn scenario_check_reports_out_of_range() {
        let s = AttributeSchema::from_sizes(&[2, 3]).unwrap();
        assert!(s.check(&Scenario::new([1, 2])).is_ok());
        assert!(s.check(&Scenario::new([2, 0])).is_err());
        assert!(s.check(&Scenario::new([0])).is_err());
    }
}
