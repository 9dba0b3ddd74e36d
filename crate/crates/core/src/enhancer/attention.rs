use rand::Rng;

use crate::encoder::EdgeGraph;
use crate::nn::{Linear, Mlp, ParamStore, Tape, Var, LEAKY_SLOPE};
use crate::{Error, Result};

/// Self-attention over each point's k-NN neighbourhood with a residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct PsaLayer {
    pub logits: Mlp,
    pub value: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct PsaOutput {
    /// `[N, C]`.
    pub feats: Var,
    /// `[N·k, 1]` attention weights, each group of `k` rows sums to one.
    pub attention: Var,
}

impl PsaLayer {
    pub fn new(store: &mut ParamStore, name: &str, c: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            logits: Mlp::new(store, &format!("{name}.logits"), &[2 * c + 3, c, 1], false, rng)?,
            value: Linear::new(store, &format!("{name}.value"), c, c, rng)?,
        })
    }

    /// `f_i + Σ_j softmax_j(MLP[f_i, f_j − f_i, p_j − p_i]) · W f_j`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        points: Var,
        graph: &EdgeGraph,
        feats: Var,
    ) -> Result<PsaOutput> {
        if tape.value(points).rows() != tape.value(feats).rows() {
            return Err(Error::Shape(format!(
                "{} points with {} feature rows",
                tape.value(points).rows(),
                tape.value(feats).rows()
            )));
        }
        let fi = tape.gather_rows(feats, &graph.centers)?;
        let fj = tape.gather_rows(feats, &graph.neighbors)?;
        let df = tape.sub(fj, fi)?;
        let pi = tape.gather_rows(points, &graph.centers)?;
        let pj = tape.gather_rows(points, &graph.neighbors)?;
        let dp = tape.sub(pj, pi)?;
        let e = tape.concat(&[fi, df, dp])?;
        let logits = self.logits.forward(tape, store, e)?;
        let attention = tape.softmax_groups(logits, graph.k)?;
        let values = self.value.forward(tape, store, fj)?;
        let agg = tape.weighted_sum_groups(attention, values, graph.k)?;
        let feats = tape.add(feats, agg)?;
        Ok(PsaOutput { feats, attention })
    }
}

/// Per-point per-channel softmax gate across scales, driven by the summed features.
#[derive(Debug, Clone, PartialEq)]
pub struct PskGate {
    pub squeeze: Linear,
    pub heads: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct GateOutput {
    pub fused: Var,
    /// One `[N, C]` logit block per scale.
    pub logits: Vec<Var>,
}

impl PskGate {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c: usize,
        scales: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let squeeze = Linear::new(store, &format!("{name}.squeeze"), c, c, rng)?;
        let heads = (0..scales)
            .map(|s| Linear::new(store, &format!("{name}.head.{s}"), c, c, rng))
            .collect::<Result<_>>()?;
        Ok(Self { squeeze, heads })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, feats: &[Var]) -> Result<GateOutput> {
        if feats.len() != self.heads.len() {
            return Err(Error::Shape(format!(
                "gate built for {} scales, got {}",
                self.heads.len(),
                feats.len()
            )));
        }
        let mut desc = feats[0];
        for &f in &feats[1..] {
            desc = tape.add(desc, f)?;
        }
        let h = self.squeeze.forward(tape, store, desc)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        let logits = self
            .heads
            .iter()
            .map(|head| head.forward(tape, store, h))
            .collect::<Result<Vec<_>>>()?;
        let fused = tape.scale_gate(&logits, feats)?;
        Ok(GateOutput { fused, logits })
    }
}
