//! Loss terms: reconstruction, exchange, generation (exchange-to-reference,
//! cycle, adversarial), the discriminator objective, and the weighted total.
//!
//! All L1 terms are pixel means. The adversarial split follows the usual
//! convention: the discriminator is trained to score real samples high and
//! synthetic samples low, the generator minimizes `-log Q(synthetic)`.

use serde::{Deserialize, Serialize};

use crate::codec::{ModelState, Network, Component};
use crate::data::{Sample, Signal};
use crate::error::{Error, Result};
use crate::mci::{shared_attributes, QuadTemplate};
use crate::nn::{Binding, ParamSet, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.2,
            lambda: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.lambda];
        if all.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric(format!("non-finite loss weight in {self:?}")));
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::Argument(format!(
                "alpha and beta must be positive, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if self.gamma < 0.0 || self.lambda < 0.0 {
            return Err(Error::Argument(format!(
                "gamma and lambda must be nonnegative, got {} and {}",
                self.gamma, self.lambda
            )));
        }
        Ok(())
    }
}

/// Unweighted loss components of one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub recon: f64,
    pub exc: f64,
    pub exc_gen: f64,
    pub cyc: f64,
    pub adv: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub j_recon: f64,
    pub j_exc: f64,
    pub j_exc_gen: f64,
    pub j_cyc: f64,
    pub j_adv: f64,
    pub j_gen: f64,
    pub j_all: f64,
    pub j_disc: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.j_recon,
            self.j_exc,
            self.j_exc_gen,
            self.j_cyc,
            self.j_adv,
            self.j_gen,
            self.j_all,
            self.j_disc,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        [
            self.j_recon,
            self.j_exc,
            self.j_exc_gen,
            self.j_cyc,
            self.j_adv,
            self.j_gen,
            self.j_all,
            self.j_disc,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `exc_gen + gamma * cyc + lambda * adv`.
pub fn generation_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    c.exc_gen + w.gamma * c.cyc + w.lambda * c.adv
}

/// `recon + alpha * exc + beta * (exc_gen + gamma * cyc + lambda * adv)`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    let parts = [c.recon, c.exc, c.exc_gen, c.cyc, c.adv];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss component in {c:?}")));
    }
    Ok(c.recon + w.alpha * c.exc + w.beta * generation_loss(c, w))
}

/// One synthesis item: `source` code with segment `attribute` taken from
/// `partner`, compared against `reference`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct GenItem {
    pub source: usize,
    pub partner: usize,
    pub attribute: usize,
    pub reference: usize,
}

/// Which rows a generator evaluation contains; indices refer to `members`.
#[derive(Debug, Default)]
pub(crate) struct GraphPlan<'a> {
    pub members: Vec<&'a Signal>,
    pub recon: Vec<usize>,
    pub exc: Vec<(usize, usize, usize)>,
    pub gen: Vec<GenItem>,
}

/// Four samples filling the roles of a quad template.
#[derive(Debug, Clone)]
pub struct QuadSamples<'a> {
    pub template: QuadTemplate,
    pub members: [&'a Sample; 4],
}

impl<'a> QuadSamples<'a> {
    pub fn new(template: QuadTemplate, members: [&'a Sample; 4]) -> Result<Self> {
        for (m, s) in template.members.iter().zip(&members) {
            if &s.scenario != m {
                return Err(Error::Pairing(format!(
                    "sample `{}` has scenario {}, quad slot expects {m}",
                    s.id, s.scenario
                )));
            }
        }
        Ok(QuadSamples { template, members })
    }
}

impl<'a> GraphPlan<'a> {
    /// Recon on every member, exchange on every adjacent pair, and synthesis on
    /// both diagonal pairs for each attribute in `gen_attrs` (both varying
    /// attributes when `None`).
    pub fn from_quads(quads: &[QuadSamples<'a>], gen_attrs: Option<usize>) -> Result<Self> {
        let mut plan = GraphPlan::default();
        for q in quads {
            let base = plan.members.len();
            plan.members.extend(q.members.iter().map(|s| &s.signal));
            plan.recon.extend(base..base + 4);
            for (i, j, k) in q.template.adjacent_pairs() {
                plan.exc.push((base + i, base + j, k));
            }
            let (va, vb) = q.template.varying;
            let attrs: Vec<usize> = match gen_attrs {
                None => vec![va, vb],
                Some(p) if p == va || p == vb => vec![p],
                Some(p) => {
                    return Err(Error::Pairing(format!(
                        "attribute {p} is not a varying attribute of the quad ({va}, {vb})"
                    )))
                }
            };
            for (i, t) in q.template.diagonal_pairs() {
                for &p in &attrs {
                    let y = q.template.members[i].with(p, q.template.members[t].get(p));
                    let reference = q
                        .template
                        .member_index(&y)
                        .expect("quads are closed under exchange");
                    plan.gen.push(GenItem {
                        source: base + i,
                        partner: base + t,
                        attribute: p,
                        reference: base + reference,
                    });
                }
            }
        }
        Ok(plan)
    }
}

/// Loss nodes of a generator evaluation; absent blocks contribute zero.
pub(crate) struct GeneratorGraph {
    pub recon: Option<Var>,
    pub exc: Option<Var>,
    pub exc_gen: Option<Var>,
    pub cyc: Option<Var>,
    pub adv: Option<Var>,
    pub total: Var,
    pub members: Var,
    pub synthetic: Option<Var>,
}

impl GeneratorGraph {
    pub fn components(&self, tape: &Tape) -> LossComponents {
        let v = |x: Option<Var>| x.map_or(0.0, |x| tape.value(x).item());
        LossComponents {
            recon: v(self.recon),
            exc: v(self.exc),
            exc_gen: v(self.exc_gen),
            cyc: v(self.cyc),
            adv: v(self.adv),
        }
    }
}

fn row_target(members: &[&Signal], idx: usize) -> Tensor {
    let s = members[idx];
    Tensor::from_vec(&[1, 1, s.height(), s.width()], s.to_f64())
}

/// Weighted sum of per-row L1 means of `out` against member targets.
fn row_l1(tape: &mut Tape, out: Var, start: usize, targets: &[(usize, f64)], members: &[&Signal]) -> Var {
    let mut terms = Vec::with_capacity(targets.len());
    for (r, &(member, weight)) in targets.iter().enumerate() {
        let row = tape.slice_rows(out, start + r, 1);
        let l = tape.l1_mean(row, row_target(members, member));
        terms.push((l, weight));
    }
    tape.weighted_sum(&terms)
}

pub(crate) fn build_generator_graph(
    tape: &mut Tape,
    net: &Network,
    plan: &GraphPlan,
    weights: &LossWeights,
) -> Result<GeneratorGraph> {
    let cfg = net.config();
    let p_count = cfg.attributes();
    let bounds = cfg.segment_bounds();
    let (h, w) = (cfg.height, cfg.width);
    let mut data = Vec::with_capacity(plan.members.len() * h * w);
    for s in &plan.members {
        if s.height() != h || s.width() != w {
            return Err(Error::Shape(format!(
                "signal is {}x{}, model expects {h}x{w}",
                s.height(),
                s.width()
            )));
        }
        data.extend(s.data().iter().map(|&v| f64::from(v)));
    }
    for &(_, _, k) in &plan.exc {
        if k >= p_count {
            return Err(Error::Pairing(format!("attribute {k} out of range")));
        }
    }
    let x = tape.constant(Tensor::from_vec(&[plan.members.len(), 1, h, w], data));
    let z = net.encode(tape, x);

    // Decode batch rows: recon, then exchange pairs (two slots each), then synthesis.
    let mut sources: Vec<Vec<usize>> = Vec::new();
    let swap = |own: usize, donor: usize, k: usize| -> Vec<usize> {
        (0..p_count).map(|s| if s == k { donor } else { own }).collect()
    };
    for &m in &plan.recon {
        sources.push(vec![m; p_count]);
    }
    for &(i, j, k) in &plan.exc {
        sources.push(swap(i, j, k));
        sources.push(swap(j, i, k));
    }
    for g in &plan.gen {
        sources.push(swap(g.source, g.partner, g.attribute));
    }
    let mut terms: Vec<(Var, f64)> = Vec::new();
    let mut graph = GeneratorGraph {
        recon: None,
        exc: None,
        exc_gen: None,
        cyc: None,
        adv: None,
        total: x,
        members: x,
        synthetic: None,
    };
    if sources.is_empty() {
        graph.total = tape.weighted_sum(&[]);
        return Ok(graph);
    }
    let codes = tape.segment_gather(z, sources, bounds.clone());
    let out = net.decode(tape, codes);

    let mut row = 0;
    if !plan.recon.is_empty() {
        let n = plan.recon.len() as f64;
        let targets: Vec<(usize, f64)> = plan.recon.iter().map(|&m| (m, 1.0 / n)).collect();
        let v = row_l1(tape, out, row, &targets, &plan.members);
        graph.recon = Some(v);
        terms.push((v, 1.0));
        row += plan.recon.len();
    }
    if !plan.exc.is_empty() {
        let n = plan.exc.len() as f64;
        let targets: Vec<(usize, f64)> = plan
            .exc
            .iter()
            .flat_map(|&(i, j, _)| [(i, 1.0 / n), (j, 1.0 / n)])
            .collect();
        let v = row_l1(tape, out, row, &targets, &plan.members);
        graph.exc = Some(v);
        terms.push((v, weights.alpha));
        row += 2 * plan.exc.len();
    }
    if !plan.gen.is_empty() {
        let n = plan.gen.len() as f64;
        let targets: Vec<(usize, f64)> = plan.gen.iter().map(|g| (g.reference, 1.0 / n)).collect();
        let exc_gen = row_l1(tape, out, row, &targets, &plan.members);
        let synthetic = tape.slice_rows(out, row, plan.gen.len());

        // Cycle: re-encode each synthetic sample and take the exchanged
        // segment back from the source code.
        let zs = net.encode(tape, synthetic);
        let zz = tape.concat_rows(&[z, zs]);
        let offset = plan.members.len();
        let cyc_sources: Vec<Vec<usize>> = plan
            .gen
            .iter()
            .enumerate()
            .map(|(r, g)| swap(offset + r, g.source, g.attribute))
            .collect();
        let cyc_codes = tape.segment_gather(zz, cyc_sources, bounds);
        let cyc_out = net.decode(tape, cyc_codes);
        let cyc_targets: Vec<(usize, f64)> = plan.gen.iter().map(|g| (g.source, 1.0 / n)).collect();
        let cyc = row_l1(tape, cyc_out, 0, &cyc_targets, &plan.members);

        let logits = net.discriminator_logits(tape, synthetic);
        let adv = tape.softplus_mean(logits, -1.0);

        graph.exc_gen = Some(exc_gen);
        graph.cyc = Some(cyc);
        graph.adv = Some(adv);
        graph.synthetic = Some(synthetic);
        terms.push((exc_gen, weights.beta));
        terms.push((cyc, weights.beta * weights.gamma));
        terms.push((adv, weights.beta * weights.lambda));
    }
    graph.total = tape.weighted_sum(&terms);
    Ok(graph)
}

/// `-mean(log Q(real)) - mean(log(1 - Q(synthetic)))` on constant inputs.
pub(crate) fn build_discriminator_graph(tape: &mut Tape, net: &Network, real: &Tensor, synthetic: &Tensor) -> Result<Var> {
    if real.rows() == 0 || synthetic.rows() == 0 {
        return Err(Error::Argument("discriminator loss needs non-empty batches".into()));
    }
    if real.shape()[1..] != synthetic.shape()[1..] {
        return Err(Error::Shape(format!(
            "real batch {:?} and synthetic batch {:?} differ",
            real.shape(),
            synthetic.shape()
        )));
    }
    let mut data = real.data().to_vec();
    data.extend_from_slice(synthetic.data());
    let mut shape = real.shape().to_vec();
    shape[0] = real.rows() + synthetic.rows();
    let x = tape.constant(Tensor::from_vec(&shape, data));
    let logits = net.discriminator_logits(tape, x);
    let lr = tape.slice_rows(logits, 0, real.rows());
    let lf = tape.slice_rows(logits, real.rows(), synthetic.rows());
    let a = tape.softplus_mean(lr, -1.0);
    let b = tape.softplus_mean(lf, 1.0);
    Ok(tape.weighted_sum(&[(a, 1.0), (b, 1.0)]))
}

fn frozen_eval<T>(state: &ModelState, f: impl FnOnce(&mut Tape, &Network) -> Result<T>) -> Result<T> {
    let mut tape = Tape::new();
    let binding = state.bind_frozen(&mut tape);
    let net = Network::new(&state.config, &binding);
    f(&mut tape, &net)
}

/// Pixel-mean `|x - decode(encode(x))|`.
pub fn loss_recon(state: &ModelState, x: &Signal) -> Result<f64> {
    let plan = GraphPlan {
        members: vec![x],
        recon: vec![0],
        ..Default::default()
    };
    frozen_eval(state, |tape, net| {
        let g = build_generator_graph(tape, net, &plan, &LossWeights::default())?;
        Ok(g.components(tape).recon)
    })
}

/// Sum of both exchange reconstruction terms for a pair sharing attribute `k`.
pub fn loss_exc(state: &ModelState, x_i: &Sample, x_j: &Sample, k: usize) -> Result<f64> {
    let shared = shared_attributes(&x_i.scenario, &x_j.scenario)?;
    if !shared.contains(&k) {
        return Err(Error::Pairing(format!(
            "samples `{}` {} and `{}` {} do not share attribute {k}",
            x_i.id, x_i.scenario, x_j.id, x_j.scenario
        )));
    }
    let plan = GraphPlan {
        members: vec![&x_i.signal, &x_j.signal],
        exc: vec![(0, 1, k)],
        ..Default::default()
    };
    frozen_eval(state, |tape, net| {
        let g = build_generator_graph(tape, net, &plan, &LossWeights::default())?;
        Ok(g.components(tape).exc)
    })
}

/// Generation terms of one quad with exchanged attribute `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenTerms {
    pub exc_gen: f64,
    pub cyc: f64,
    pub adv: f64,
}

pub fn loss_gen(state: &ModelState, quad: &QuadSamples, p: usize) -> Result<GenTerms> {
    let mut plan = GraphPlan::from_quads(std::slice::from_ref(quad), Some(p))?;
    plan.recon.clear();
    plan.exc.clear();
    frozen_eval(state, |tape, net| {
        let g = build_generator_graph(tape, net, &plan, &LossWeights::default())?;
        let c = g.components(tape);
        Ok(GenTerms {
            exc_gen: c.exc_gen,
            cyc: c.cyc,
            adv: c.adv,
        })
    })
}

pub fn loss_discriminator(state: &ModelState, real: &[&[f64]], synthetic: &[&[f64]]) -> Result<f64> {
    let (h, w) = (state.config.height, state.config.width);
    let stack = |imgs: &[&[f64]]| -> Result<Tensor> {
        let mut data = Vec::with_capacity(imgs.len() * h * w);
        for img in imgs {
            if img.len() != h * w {
                return Err(Error::Shape(format!("image has {} values, expected {}", img.len(), h * w)));
            }
            data.extend_from_slice(img);
        }
        Ok(Tensor::from_vec(&[imgs.len(), 1, h, w], data))
    };
    if real.is_empty() || synthetic.is_empty() {
        return Err(Error::Argument("discriminator loss needs non-empty batches".into()));
    }
    let (r, s) = (stack(real)?, stack(synthetic)?);
    frozen_eval(state, |tape, net| {
        let v = build_discriminator_graph(tape, net, &r, &s)?;
        Ok(tape.value(v).item())
    })
}

/// A scalar objective evaluated on one quad, for gradient inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Recon,
    Exc,
    ExcGen,
    Cycle,
    Adversarial,
    Total,
    Discriminator,
}

impl Objective {
    pub const ALL: [Objective; 7] = [
        Objective::Recon,
        Objective::Exc,
        Objective::ExcGen,
        Objective::Cycle,
        Objective::Adversarial,
        Objective::Total,
        Objective::Discriminator,
    ];
}

fn objective_on_tape(
    tape: &mut Tape,
    state: &ModelState,
    binding: &Binding,
    quad: &QuadSamples,
    objective: Objective,
    weights: &LossWeights,
) -> Result<Var> {
    let net = Network::new(&state.config, binding);
    let plan = GraphPlan::from_quads(std::slice::from_ref(quad), None)?;
    let g = build_generator_graph(tape, &net, &plan, weights)?;
    let pick = |v: Option<Var>| v.ok_or_else(|| Error::Argument("objective block is empty".into()));
    match objective {
        Objective::Recon => pick(g.recon),
        Objective::Exc => pick(g.exc),
        Objective::ExcGen => pick(g.exc_gen),
        Objective::Cycle => pick(g.cyc),
        Objective::Adversarial => pick(g.adv),
        Objective::Total => Ok(g.total),
        Objective::Discriminator => {
            let real = tape.value(g.members).clone();
            let fake = tape.value(pick(g.synthetic)?).clone();
            build_discriminator_graph(tape, &net, &real, &fake)
        }
    }
}

/// Forward value of `objective` on `quad`.
pub fn objective_value(state: &ModelState, quad: &QuadSamples, objective: Objective, weights: &LossWeights) -> Result<f64> {
    let mut tape = Tape::new();
    let binding = state.bind_frozen(&mut tape);
    let v = objective_on_tape(&mut tape, state, &binding, quad, objective, weights)?;
    Ok(tape.value(v).item())
}

/// Value and gradients of `objective` with respect to every parameter.
///
/// Generator objectives see the discriminator as frozen; the discriminator
/// objective sees synthetic samples as constants. Parameters an objective
/// does not reach get zero gradients.
pub fn objective_gradients(
    state: &ModelState,
    quad: &QuadSamples,
    objective: Objective,
    weights: &LossWeights,
) -> Result<(f64, ParamSet)> {
    let mut tape = Tape::new();
    let binding = match objective {
        Objective::Discriminator => Binding::new(&mut tape, &state.params, |_| true),
        _ => Binding::new(&mut tape, &state.params, |n| Component::of(n).is_generator()),
    };
    let v = objective_on_tape(&mut tape, state, &binding, quad, objective, weights)?;
    let mut grads = tape.backward(v);
    let mut out = binding.gradients(&tape, &mut grads);
    for (name, t) in state.params.iter() {
        if out.get(name).is_none() {
            out.insert(name.clone(), Tensor::zeros(t.shape()));
        }
    }
    Ok((tape.value(v).item(), out))
}
