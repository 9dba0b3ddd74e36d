//! Coarse-to-fine refinement.
//!
//! The coarse completion and the partial input are merged, lifted to
//! per-point features, passed through neighbourhood self-attention at several
//! scales, fused by a per-channel gate, and expanded into offset candidates
//! around every point. FPS picks the final `n_fine` points.

mod attention;

pub use attention::{PsaLayer, PsaOutput, PskGate, GateOutput};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EdgeGraph;
use crate::geom::{fps_points, Point, PointCloud};
use crate::nn::{Mlp, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinerConfig {
    pub n_fine: usize,
    pub k_attn: usize,
    pub scales: Vec<usize>,
    pub c_feat: usize,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        Self {
            n_fine: 2048,
            k_attn: 16,
            scales: vec![8, 16],
            c_feat: 128,
        }
    }
}

impl RefinerConfig {
    pub fn toy() -> Self {
        Self {
            n_fine: 512,
            k_attn: 8,
            scales: vec![4, 8],
            c_feat: 16,
        }
    }

    pub fn validate(&self, coarse_points: usize) -> Result<()> {
        if self.n_fine < coarse_points {
            return Err(Error::Config(format!(
                "n_fine = {} is smaller than the {coarse_points} coarse points",
                self.n_fine
            )));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| s == 0) {
            return Err(Error::Config("refiner scales must be non-empty and positive".into()));
        }
        if self.k_attn < 2 || self.c_feat == 0 {
            return Err(Error::Config(format!(
                "refiner needs k_attn ≥ 2 and c_feat ≥ 1, got {} and {}",
                self.k_attn, self.c_feat
            )));
        }
        Ok(())
    }
}

/// Layer descriptors of the refiner.
#[derive(Debug, Clone, PartialEq)]
pub struct Refiner {
    config: RefinerConfig,
    lift: Mlp,
    scale_attn: Vec<PsaLayer>,
    gate: PskGate,
    attn: PsaLayer,
    duplicates: String,
    max_replicas: usize,
    offset: Mlp,
}

/// Outputs of [`Refiner::refine`].
#[derive(Debug, Clone)]
pub struct RefineOutput {
    /// `[n_fine, 3]`.
    pub fine: Var,
    /// `[n_union·R, 3]` replicated points plus offsets.
    pub candidates: Var,
    /// Rows of `candidates` kept by FPS.
    pub selected: Vec<usize>,
    pub replicas: usize,
}

impl Refiner {
    /// `coarse_points` sizes the table of duplicate embeddings.
    pub fn new(
        config: &RefinerConfig,
        coarse_points: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate(coarse_points)?;
        let c = config.c_feat;
        let lift = Mlp::new(store, "ref.lift", &[3, c, c], true, rng)?;
        let scale_attn = config
            .scales
            .iter()
            .enumerate()
            .map(|(i, _)| PsaLayer::new(store, &format!("ref.psa.{i}"), c, rng))
            .collect::<Result<Vec<_>>>()?;
        let gate = PskGate::new(store, "ref.gate", c, config.scales.len(), rng)?;
        let attn = PsaLayer::new(store, "ref.attn", c, rng)?;
        let max_replicas = config.n_fine.div_ceil(coarse_points.max(1));
        let duplicates = "ref.dup".to_string();
        store.insert(&duplicates, ParamStore::uniform(vec![max_replicas, c], 1.0, rng))?;
        let offset = Mlp::new(store, "ref.offset", &[2 * c, c, 3], false, rng)?;
        let last = offset.layers.last().expect("two layers");
        for name in [&last.weight, &last.bias] {
            store
                .get_mut(name)
                .expect("just registered")
                .data_mut()
                .fill(0.0);
        }
        Ok(Self {
            config: config.clone(),
            lift,
            scale_attn,
            gate,
            attn,
            duplicates,
            max_replicas,
            offset,
        })
    }

    pub fn config(&self) -> &RefinerConfig {
        &self.config
    }

    /// Parameter names of the final offset layer.
    pub fn offset_head(&self) -> [&str; 2] {
        let last = self.offset.layers.last().expect("two layers");
        [&last.weight, &last.bias]
    }

    /// Refines `coarse: [M, 3]` using the observed `partial` cloud.
    pub fn refine(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        coarse: Var,
        partial: &PointCloud,
    ) -> Result<RefineOutput> {
        let cfg = &self.config;
        let observed = tape.constant(Tensor::matrix(partial.len(), 3, partial.to_flat())?);
        let union = tape.concat_rows(&[coarse, observed])?;
        let union_pts = rows_to_points(tape.value(union));
        let n = union_pts.len();
        let replicas = cfg.n_fine.div_ceil(n);
        if replicas > self.max_replicas {
            return Err(Error::InvalidArgument(format!(
                "{n} merged points need {replicas} replicas, the refiner has {}",
                self.max_replicas
            )));
        }

        let feats = self.lift.forward(tape, store, union)?;
        let mut per_scale = Vec::with_capacity(cfg.scales.len());
        for (layer, &k) in self.scale_attn.iter().zip(&cfg.scales) {
            let graph = EdgeGraph::build(&union_pts, k)?;
            per_scale.push(layer.forward(tape, store, union, &graph, feats)?.feats);
        }
        let fused = self.gate.forward(tape, store, &per_scale)?.fused;
        let graph = EdgeGraph::build(&union_pts, cfg.k_attn)?;
        let attended = self.attn.forward(tape, store, union, &graph, fused)?.feats;

        let point_rows: Vec<usize> = (0..n * replicas).map(|i| i / replicas).collect();
        let replica_rows: Vec<usize> = (0..n * replicas).map(|i| i % replicas).collect();
        let dup = tape.param(store, &self.duplicates)?;
        let f = tape.gather_rows(attended, &point_rows)?;
        let d = tape.gather_rows(dup, &replica_rows)?;
        let h = tape.concat(&[f, d])?;
        let offsets = self.offset.forward(tape, store, h)?;
        let anchors = tape.gather_rows(union, &point_rows)?;
        let candidates = tape.add(anchors, offsets)?;
        let selected = fps_points(&rows_to_points(tape.value(candidates)), cfg.n_fine)?;
        let fine = tape.gather_rows(candidates, &selected)?;
        Ok(RefineOutput {
            fine,
            candidates,
            selected,
            replicas,
        })
    }
}

/// Chamfer distance between the refined output and the ground truth.
pub fn loss_fine(tape: &mut Tape, fine: Var, target: &PointCloud) -> Result<Var> {
    let y = tape.constant(Tensor::matrix(target.len(), 3, target.to_flat())?);
    tape.chamfer(fine, y)
}

pub(crate) fn rows_to_points(t: &Tensor) -> Vec<Point> {
    t.data()
        .chunks_exact(3)
        .map(|c| Point::new(c[0], c[1], c[2]))
        .collect()
}
