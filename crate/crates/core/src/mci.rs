//! Structured signal selection.
//!
//! A minimum-complete-information quad is four scenarios forming a closed
//! rectangle in attribute space: two attributes vary over two categories each
//! and every other attribute is fixed. Exchanging the varying categories among
//! members never leaves the quad, so every synthetic sample produced inside a
//! quad has a real reference.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeSchema, Scenario};
use crate::error::{Error, Result};

/// Relationship between two scenarios by number of shared attribute categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairType {
    /// All `P` attributes shared.
    Identical,
    /// `P - 1` shared.
    Adjacent,
    /// `P - 2` shared.
    Diagonal,
    Other,
}

/// Attribute indices on which the two scenarios agree, ascending.
pub fn shared_attributes(a: &Scenario, b: &Scenario) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::Schema(format!(
            "scenarios {a} and {b} have different lengths"
        )));
    }
    Ok((0..a.len()).filter(|&p| a.get(p) == b.get(p)).collect())
}

pub fn pair_type(a: &Scenario, b: &Scenario) -> Result<PairType> {
    let shared = shared_attributes(a, b)?.len();
    let p = a.len();
    Ok(if shared == p {
        PairType::Identical
    } else if shared + 1 == p {
        PairType::Adjacent
    } else if shared + 2 == p {
        PairType::Diagonal
    } else {
        PairType::Other
    })
}

/// Four scenarios in role order `(a,x), (a,y), (b,x), (b,y)` over the varying
/// attribute pair `(first, second)`, with `a < b` and `x < y`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuadTemplate {
    pub members: [Scenario; 4],
    pub varying: (usize, usize),
}

impl QuadTemplate {
    /// Adjacent member pairs `(i, j, k)` sharing varying attribute `k`.
    pub fn adjacent_pairs(&self) -> [(usize, usize, usize); 4] {
        let (va, vb) = self.varying;
        [(0, 1, va), (2, 3, va), (0, 2, vb), (1, 3, vb)]
    }

    /// The two diagonal member pairs (no varying attribute shared).
    pub fn diagonal_pairs(&self) -> [(usize, usize); 2] {
        [(0, 3), (1, 2)]
    }

    pub fn member_index(&self, scenario: &Scenario) -> Option<usize> {
        self.members.iter().position(|m| m == scenario)
    }

    pub fn contains(&self, scenario: &Scenario) -> bool {
        self.member_index(scenario).is_some()
    }
}

/// Checks the quad relations in the given member order, accepting either
/// assignment of the two varying attributes to the relation roles.
pub fn is_valid_quad(
    y1: &Scenario,
    y2: &Scenario,
    y3: &Scenario,
    y4: &Scenario,
    schema: &AttributeSchema,
) -> bool {
    let ys = [y1, y2, y3, y4];
    if ys.iter().any(|y| schema.check(y).is_err()) {
        return false;
    }
    let varying: Vec<usize> = (0..schema.len())
        .filter(|&p| ys.iter().any(|y| y.get(p) != y1.get(p)))
        .collect();
    if varying.len() != 2 {
        return false;
    }
    let two_each = varying.iter().all(|&p| {
        let cats: BTreeSet<usize> = ys.iter().map(|y| y.get(p)).collect();
        cats.len() == 2
    });
    if !two_each {
        return false;
    }
    let relations = |a: usize, b: usize| {
        y1.get(a) == y2.get(a)
            && y1.get(b) == y3.get(b)
            && y4.get(a) == y3.get(a)
            && y4.get(b) == y2.get(b)
    };
    relations(varying[0], varying[1]) || relations(varying[1], varying[0])
}

/// All quads whose four members lie in `scenarios`, over every varying
/// attribute pair, in lexicographic order of their member lists.
pub fn enumerate_quads(scenarios: &BTreeSet<Scenario>, schema: &AttributeSchema) -> Vec<QuadTemplate> {
    let p = schema.len();
    let mut out = Vec::new();
    for va in 0..p {
        for vb in va + 1..p {
            // Group by the fixed attributes, then by (va, vb) categories.
            let mut groups: BTreeMap<Vec<usize>, BTreeSet<(usize, usize)>> = BTreeMap::new();
            for y in scenarios.iter().filter(|y| y.len() == p) {
                let key: Vec<usize> = (0..p)
                    .filter(|&q| q != va && q != vb)
                    .map(|q| y.get(q))
                    .collect();
                groups.entry(key).or_default().insert((y.get(va), y.get(vb)));
            }
            for (key, cells) in groups {
                let rows: BTreeSet<usize> = cells.iter().map(|c| c.0).collect();
                let cols: BTreeSet<usize> = cells.iter().map(|c| c.1).collect();
                let build = |ca: usize, cb: usize| {
                    let mut v = Vec::with_capacity(p);
                    let mut fixed = key.iter();
                    for q in 0..p {
                        v.push(if q == va {
                            ca
                        } else if q == vb {
                            cb
                        } else {
                            *fixed.next().expect("fixed attribute")
                        });
                    }
                    Scenario(v)
                };
                for &a in &rows {
                    for &b in rows.range(a + 1..) {
                        for &x in &cols {
                            for &y in cols.range(x + 1..) {
                                let corners = [(a, x), (a, y), (b, x), (b, y)];
                                if corners.iter().all(|c| cells.contains(c)) {
                                    out.push(QuadTemplate {
                                        members: corners.map(|(ca, cb)| build(ca, cb)),
                                        varying: (va, vb),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort();
    out
}

/// A scenario-level recipe for composing an unseen scenario: take the code of
/// a `source` sample and replace its segment `attribute` with the same segment
/// of a `partner` sample.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReferencePlan {
    pub source: Scenario,
    pub partner: Scenario,
    pub attribute: usize,
    pub expected: Scenario,
}

impl ReferencePlan {
    /// Symbolic result of the exchange on scenarios.
    pub fn execute(&self) -> Scenario {
        self.source.with(self.attribute, self.partner.get(self.attribute))
    }
}

/// Every diagonal `(source, partner, attribute)` triple over `existing` whose
/// exchange yields `target`. An empty result means the target is infeasible.
pub fn plan_unseen_references(
    existing: &BTreeSet<Scenario>,
    target: &Scenario,
    schema: &AttributeSchema,
) -> Vec<ReferencePlan> {
    if schema.check(target).is_err() || existing.contains(target) {
        return Vec::new();
    }
    let mut plans = Vec::new();
    for p in 0..schema.len() {
        let sources = existing
            .iter()
            .filter(|s| s.len() == target.len() && s.get(p) != target.get(p) && s.with(p, target.get(p)) == *target);
        for source in sources {
            for partner in existing.iter().filter(|y| y.len() == target.len() && y.get(p) == target.get(p)) {
                if pair_type(source, partner).ok() == Some(PairType::Diagonal) {
                    plans.push(ReferencePlan {
                        source: source.clone(),
                        partner: partner.clone(),
                        attribute: p,
                        expected: target.clone(),
                    });
                }
            }
        }
    }
    plans
}

/// Target categories that no existing scenario carries.
pub fn missing_categories(existing: &BTreeSet<Scenario>, target: &Scenario) -> Vec<(usize, usize)> {
    (0..target.len())
        .filter(|&p| !existing.iter().any(|y| y.len() == target.len() && y.get(p) == target.get(p)))
        .map(|p| (p, target.get(p)))
        .collect()
}

/// Uniform, seed-deterministic sampling of quads with replacement.
///
/// The draw at `step` depends only on `(seed, step)`, so a stream can be
/// resumed at any step.
#[derive(Debug, Clone)]
pub struct BatchScheduler {
    quads: Vec<QuadTemplate>,
    seed: u64,
}

impl BatchScheduler {
    pub fn new(quads: Vec<QuadTemplate>, seed: u64) -> Result<Self> {
        if quads.is_empty() {
            return Err(Error::Scheduling("cannot schedule an empty quad list".into()));
        }
        Ok(BatchScheduler { quads, seed })
    }

    pub fn quads(&self) -> &[QuadTemplate] {
        &self.quads
    }

    /// Random stream private to `step`.
    pub fn rng_at(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step);
        rng
    }

    /// Quad index drawn at `step` plus the step's stream, positioned after the draw.
    pub fn draw_with_rng(&self, step: u64) -> (usize, ChaCha8Rng) {
        let mut rng = self.rng_at(step);
        let idx = rng.random_range(0..self.quads.len());
        (idx, rng)
    }

    pub fn draw(&self, step: u64) -> &QuadTemplate {
        &self.quads[self.draw_with_rng(step).0]
    }

    /// Infinite stream starting at `step`.
    pub fn stream_from(&self, step: u64) -> impl Iterator<Item = &QuadTemplate> + '_ {
        (step..).map(move |s| self.draw(s))
    }
}
