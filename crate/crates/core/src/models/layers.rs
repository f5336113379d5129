//! Single message-passing layers on the tape.
//!
//! Euclidean layers take and return node matrices. Hyperbolic layers take
//! points on the ball; intermediate ones return points on the ball and
//! final ones return tangent-space logits. `act = None` marks the final
//! layer (no nonlinearity, no dropout, no closing exponential map).

use rand::RngCore;

use super::batch::GraphBatch;
use crate::diffcore::{Tape, Var};
use crate::error::Result;
use crate::manifold::radial::RadialMap;

/// Nonlinearity plus dropout of an intermediate layer.
pub struct Activation<'a> {
    pub dropout: f64,
    pub rng: Option<&'a mut dyn RngCore>,
}

impl Activation<'_> {
    /// Evaluation-mode activation: ReLU only.
    pub fn eval() -> Self {
        Self { dropout: 0.0, rng: None }
    }

    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let r = tape.relu(x);
        let rng = self.rng.as_mut().map(|r| &mut **r as &mut dyn RngCore);
        tape.dropout(r, self.dropout, rng)
    }
}

fn activate(tape: &mut Tape, x: Var, act: Option<&mut Activation<'_>>) -> Result<Var> {
    match act {
        Some(a) => a.apply(tape, x),
        None => Ok(x),
    }
}

/// Weights of one attention head.
#[derive(Debug, Clone, Copy)]
pub struct HeadParams {
    pub w1: Var,
    pub w2: Var,
    /// Score vector, `head_dim x 1`. Unused by hyperbolic heads.
    pub a: Option<Var>,
}

/// Layer output plus per-head attention columns aligned with
/// `batch.with_self`.
pub struct AttentionOutput {
    pub out: Var,
    pub attention: Vec<Var>,
}

/// Symmetric-normalized convolution over neighbors and self.
pub fn gcn_layer(tape: &mut Tape, batch: &GraphBatch, h: Var, w: Var, act: Option<&mut Activation<'_>>) -> Result<Var> {
    let e = &batch.with_self;
    let hw = tape.matmul(h, w)?;
    let msgs = tape.gather_rows(hw, &e.sources)?;
    let coeff = tape.constant(batch.gcn_coeff.clone());
    let weighted = tape.mul_rows(msgs, coeff)?;
    let agg = tape.segment_sum(weighted, &e.segments)?;
    activate(tape, agg, act)
}

/// Self transform plus transformed mean of neighbors (self excluded from
/// the mean). Isolated nodes get a zero neighbor term.
pub fn sage_layer(
    tape: &mut Tape,
    batch: &GraphBatch,
    h: Var,
    w1: Var,
    w2: Var,
    act: Option<&mut Activation<'_>>,
) -> Result<Var> {
    let e = &batch.neighbors;
    let own = tape.matmul(h, w1)?;
    let msgs = tape.gather_rows(h, &e.sources)?;
    let mean = tape.segment_mean(msgs, &e.segments)?;
    let nb = tape.matmul(mean, w2)?;
    let sum = tape.add(own, nb)?;
    activate(tape, sum, act)
}

const GAT_SLOPE: f64 = 0.2;

/// Dual-transform attention; heads are concatenated.
pub fn gat_layer(
    tape: &mut Tape,
    batch: &GraphBatch,
    h: Var,
    heads: &[HeadParams],
    act: Option<&mut Activation<'_>>,
) -> Result<AttentionOutput> {
    let e = &batch.with_self;
    let mut outs = Vec::with_capacity(heads.len());
    let mut attention = Vec::with_capacity(heads.len());
    for head in heads {
        let a = head.a.expect("euclidean attention head needs a score vector");
        let target = tape.matmul(h, head.w1)?;
        let source = tape.matmul(h, head.w2)?;
        let st = tape.matmul(target, a)?;
        let ss = tape.matmul(source, a)?;
        let st = tape.gather_rows(st, &e.targets)?;
        let ss = tape.gather_rows(ss, &e.sources)?;
        let raw = tape.add(st, ss)?;
        let scores = tape.leaky_relu(raw, GAT_SLOPE);
        let alpha = tape.segment_softmax(scores, &e.segments)?;
        let msgs = tape.gather_rows(source, &e.sources)?;
        let weighted = tape.mul_rows(msgs, alpha)?;
        outs.push(tape.segment_sum(weighted, &e.segments)?);
        attention.push(alpha);
    }
    let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    Ok(AttentionOutput {
        out: activate(tape, cat, act)?,
        attention,
    })
}

/// Maps raw features onto the ball.
pub fn to_ball(tape: &mut Tape, x: Var, c: f64) -> Var {
    let p = tape.radial(x, RadialMap::Exp0 { c });
    tape.radial(p, RadialMap::Project { c })
}

/// Unweighted Klein-model mean of ball points over `with_self` groups.
fn klein_aggregate(tape: &mut Tape, batch: &GraphBatch, points: Var, c: f64) -> Result<Var> {
    let e = &batch.with_self;
    let k = tape.radial(points, RadialMap::PoincareToKlein { c });
    let msgs = tape.gather_rows(k, &e.sources)?;
    let mean = tape.segment_mean(msgs, &e.segments)?;
    let p = tape.radial(mean, RadialMap::KleinToPoincare { c });
    Ok(tape.radial(p, RadialMap::Project { c }))
}

/// Closes a hyperbolic layer: tangent output, or activation then back to
/// the ball.
fn close_hyperbolic(tape: &mut Tape, t: Var, c: f64, act: Option<&mut Activation<'_>>) -> Result<Var> {
    match act {
        None => Ok(t),
        Some(a) => {
            let r = a.apply(tape, t)?;
            Ok(to_ball(tape, r, c))
        }
    }
}

/// Klein-mean aggregation followed by a tangent-space transform.
pub fn hgcn_layer(
    tape: &mut Tape,
    batch: &GraphBatch,
    h: Var,
    w: Var,
    c: f64,
    act: Option<&mut Activation<'_>>,
) -> Result<Var> {
    let agg = klein_aggregate(tape, batch, h, c)?;
    let t = tape.radial(agg, RadialMap::Log0 { c });
    let z = tape.matmul(t, w)?;
    close_hyperbolic(tape, z, c, act)
}

/// Tangent self path plus Klein-mean of the transformed neighborhood.
pub fn hsage_layer(
    tape: &mut Tape,
    batch: &GraphBatch,
    h: Var,
    w1: Var,
    w2: Var,
    c: f64,
    act: Option<&mut Activation<'_>>,
) -> Result<Var> {
    let t = tape.radial(h, RadialMap::Log0 { c });
    let own = tape.matmul(t, w1)?;
    let u = tape.matmul(t, w2)?;
    let up = to_ball(tape, u, c);
    let agg = klein_aggregate(tape, batch, up, c)?;
    let nb = tape.radial(agg, RadialMap::Log0 { c });
    let sum = tape.add(own, nb)?;
    close_hyperbolic(tape, sum, c, act)
}

/// Attention from negative hyperbolic distances; heads concatenated in the
/// tangent space before the closing map.
pub fn hgat_layer(
    tape: &mut Tape,
    batch: &GraphBatch,
    h: Var,
    heads: &[HeadParams],
    c: f64,
    act: Option<&mut Activation<'_>>,
) -> Result<AttentionOutput> {
    let e = &batch.with_self;
    let t = tape.radial(h, RadialMap::Log0 { c });
    let mut outs = Vec::with_capacity(heads.len());
    let mut attention = Vec::with_capacity(heads.len());
    for head in heads {
        let target = tape.matmul(t, head.w1)?;
        let source = tape.matmul(t, head.w2)?;
        let tp = to_ball(tape, target, c);
        let sp = to_ball(tape, source, c);
        let tp = tape.gather_rows(tp, &e.targets)?;
        let sp = tape.gather_rows(sp, &e.sources)?;
        let d = tape.poincare_distance(tp, sp, c)?;
        let scores = tape.scale(d, -1.0);
        let alpha = tape.segment_softmax(scores, &e.segments)?;
        let msgs = tape.gather_rows(source, &e.sources)?;
        let weighted = tape.mul_rows(msgs, alpha)?;
        let agg = tape.segment_sum(weighted, &e.segments)?;
        outs.push(tape.add(target, agg)?);
        attention.push(alpha);
    }
    let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    Ok(AttentionOutput {
        out: close_hyperbolic(tape, cat, c, act)?,
        attention,
    })
}
