//! Point-cloud encoder.
//!
//! A global code `g` comes from a stack of IRIF convolution layers (or, in
//! the ablation mode, from a plain coordinate MLP). Per-point features `f_i`
//! come from two edge-convolution blocks over a static k-NN graph. The rows
//! `[g, f_i]` form the feature matrix `F`, and `v = maxpool(MLP(F))`.

mod edge;
mod riconv;

pub use edge::EdgeGraph;
pub use riconv::{LayerFeatureBundle, LayerPlan, RiconvLayer, RiconvPlan};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::PointCloud;
use crate::nn::{Linear, Mlp, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// How the global code is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    #[default]
    RotationInvariant,
    /// Shared MLP on raw coordinates followed by max pooling.
    RawCoordinates,
}

/// Geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RiconvLayerConfig {
    pub n_ref: usize,
    pub k: usize,
    /// Width of the previous layer's features, zero for the first layer.
    pub c_in: usize,
    /// Width of the lifted IRIF features.
    pub c_mid: usize,
    pub c_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub n_refs: Vec<usize>,
    pub k: usize,
    pub c_mid: usize,
    pub widths: Vec<usize>,
    pub lra_k: usize,
    pub g_dim: usize,
    pub edge_k: usize,
    pub edge_widths: Vec<usize>,
    pub v_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            mode: EncoderMode::RotationInvariant,
            n_refs: vec![256, 128, 64, 16],
            k: 16,
            c_mid: 64,
            widths: vec![64, 128, 256, 256],
            lra_k: crate::ri::DEFAULT_LRA_K,
            g_dim: 256,
            edge_k: 16,
            edge_widths: vec![64, 128],
            v_dim: 512,
        }
    }
}

impl EncoderConfig {
    /// Reduced widths for 512-point clouds and quick runs.
    pub fn toy() -> Self {
        Self {
            mode: EncoderMode::RotationInvariant,
            n_refs: vec![64, 32, 16, 8],
            k: 8,
            c_mid: 8,
            widths: vec![16, 16, 32, 32],
            lra_k: crate::ri::DEFAULT_LRA_K,
            g_dim: 32,
            edge_k: 8,
            edge_widths: vec![16, 32],
            v_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_refs.is_empty() || self.n_refs.len() != self.widths.len() {
            return bad(format!(
                "encoder needs one width per layer ({} reference counts, {} widths)",
                self.n_refs.len(),
                self.widths.len()
            ));
        }
        if self.n_refs.iter().any(|&n| n == 0) || self.n_refs.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!("reference counts {:?} must be positive and non-increasing", self.n_refs));
        }
        if self.k < 2 {
            return bad(format!("encoder k = {} must be at least 2", self.k));
        }
        if self.lra_k < 3 {
            return bad(format!("lra_k = {} must be at least 3", self.lra_k));
        }
        if self.edge_k == 0 || self.edge_widths.is_empty() {
            return bad("edge features need k ≥ 1 and at least one block".into());
        }
        let widths = self.widths.iter().chain(&self.edge_widths);
        if self.c_mid == 0 || self.g_dim == 0 || self.v_dim == 0 || widths.into_iter().any(|&w| w == 0) {
            return bad("encoder widths must be positive".into());
        }
        Ok(())
    }

    pub fn layer_configs(&self) -> Vec<RiconvLayerConfig> {
        let mut c_in = 0;
        self.n_refs
            .iter()
            .zip(&self.widths)
            .map(|(&n_ref, &c_out)| {
                let cfg = RiconvLayerConfig {
                    n_ref,
                    k: self.k,
                    c_in,
                    c_mid: self.c_mid,
                    c_out,
                };
                c_in = c_out;
                cfg
            })
            .collect()
    }

    /// Width of the feature matrix rows, `g_dim + last edge width`.
    pub fn feature_width(&self) -> usize {
        self.g_dim + self.edge_widths.last().copied().unwrap_or(0)
    }

    /// Smallest cloud the encoder accepts.
    pub fn min_points(&self) -> usize {
        let edge = self.edge_k + 1;
        match self.mode {
            EncoderMode::RotationInvariant => {
                edge.max(self.n_refs[0]).max(self.k + 1).max(self.lra_k)
            }
            EncoderMode::RawCoordinates => edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum GlobalBranch {
    Invariant { layers: Vec<RiconvLayer>, head: Linear },
    Raw { mlp: Mlp, head: Linear },
}

/// Layer descriptors of the encoder; the weights live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    global: GlobalBranch,
    edge: Vec<Mlp>,
    fuse: Mlp,
}

/// Per-cloud geometry that does not depend on the weights.
#[derive(Debug, Clone)]
pub struct EncoderGeometry {
    pub points: Tensor,
    pub riconv: Option<RiconvPlan>,
    pub edge: EdgeGraph,
}

/// Outputs of [`Encoder::embed`].
#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    /// Global code `[1, g_dim]`.
    pub g: Var,
    /// Per-point edge features `[N, e]`.
    pub f: Var,
    /// Feature matrix `[N, g_dim + e]`.
    pub features: Var,
    /// Pooled code `[1, v_dim]`.
    pub v: Var,
}

impl Encoder {
    pub fn new(config: &EncoderConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let global = match config.mode {
            EncoderMode::RotationInvariant => {
                let layers = config
                    .layer_configs()
                    .iter()
                    .enumerate()
                    .map(|(i, cfg)| RiconvLayer::new(*cfg, store, &format!("enc.ri.{i}"), rng))
                    .collect::<Result<Vec<_>>>()?;
                let last = config.widths[config.widths.len() - 1];
                let head = Linear::new(store, "enc.ri.head", last, config.g_dim, rng)?;
                GlobalBranch::Invariant { layers, head }
            }
            EncoderMode::RawCoordinates => {
                let mut widths = vec![3];
                widths.extend(&config.widths);
                let mlp = Mlp::new(store, "enc.raw.mlp", &widths, true, rng)?;
                let last = config.widths[config.widths.len() - 1];
                let head = Linear::new(store, "enc.raw.head", last, config.g_dim, rng)?;
                GlobalBranch::Raw { mlp, head }
            }
        };
        let mut edge = Vec::new();
        let mut cin = 3;
        for (b, &w) in config.edge_widths.iter().enumerate() {
            edge.push(Mlp::new(store, &format!("enc.edge.{b}"), &[2 * cin, w], true, rng)?);
            cin = w;
        }
        let fw = config.feature_width();
        let fuse = Mlp::new(store, "enc.fuse", &[fw, config.v_dim, config.v_dim], false, rng)?;
        Ok(Self {
            config: config.clone(),
            global,
            edge,
            fuse,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// The convolution layers, empty in raw-coordinate mode.
    pub fn riconv_layers(&self) -> &[RiconvLayer] {
        match &self.global {
            GlobalBranch::Invariant { layers, .. } => layers,
            GlobalBranch::Raw { .. } => &[],
        }
    }

    /// Precomputes sampling, neighbourhoods and IRIF tuples for `cloud`.
    pub fn geometry(&self, cloud: &PointCloud) -> Result<EncoderGeometry> {
        let cfg = &self.config;
        if cloud.len() < cfg.min_points() {
            return Err(Error::InvalidArgument(format!(
                "encoder needs at least {} points, got {}",
                cfg.min_points(),
                cloud.len()
            )));
        }
        let riconv = match cfg.mode {
            EncoderMode::RotationInvariant => {
                Some(RiconvPlan::build(cloud, &cfg.layer_configs(), cfg.lra_k)?)
            }
            EncoderMode::RawCoordinates => None,
        };
        Ok(EncoderGeometry {
            points: Tensor::matrix(cloud.len(), 3, cloud.to_flat())?,
            riconv,
            edge: EdgeGraph::build(cloud.points(), cfg.edge_k)?,
        })
    }

    /// Global code `[1, g_dim]`.
    pub fn global_code(&self, tape: &mut Tape, store: &ParamStore, geo: &EncoderGeometry) -> Result<Var> {
        match (&self.global, &geo.riconv) {
            (GlobalBranch::Invariant { layers, head }, Some(plan)) => {
                let mut prev = None;
                for (layer, lp) in layers.iter().zip(&plan.layers) {
                    prev = Some(layer.forward(tape, store, lp, prev)?.feats);
                }
                let last = prev.expect("at least one layer");
                let pooled = tape.maxpool_rows(last)?;
                head.forward(tape, store, pooled)
            }
            (GlobalBranch::Raw { mlp, head }, _) => {
                let x = tape.constant(geo.points.clone());
                let h = mlp.forward(tape, store, x)?;
                let pooled = tape.maxpool_rows(h)?;
                head.forward(tape, store, pooled)
            }
            (GlobalBranch::Invariant { .. }, None) => Err(Error::InvalidArgument(
                "geometry was built without convolution plans".into(),
            )),
        }
    }

    /// Per-point edge features `[N, last edge width]`.
    pub fn edge_features(&self, tape: &mut Tape, store: &ParamStore, geo: &EncoderGeometry) -> Result<Var> {
        let mut f = tape.constant(geo.points.clone());
        for block in &self.edge {
            f = geo.edge.forward(tape, store, block, f)?;
        }
        Ok(f)
    }

    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, geo: &EncoderGeometry) -> Result<Embedding> {
        let g = self.global_code(tape, store, geo)?;
        let f = self.edge_features(tape, store, geo)?;
        let n = geo.points.rows();
        let g_rows = tape.gather_rows(g, &vec![0; n])?;
        let features = tape.concat(&[g_rows, f])?;
        let v = self.pool(tape, store, features)?;
        Ok(Embedding { g, f, features, v })
    }

    /// `maxpool(MLP(F))`.
    pub fn pool(&self, tape: &mut Tape, store: &ParamStore, features: Var) -> Result<Var> {
        let h = self.fuse.forward(tape, store, features)?;
        tape.maxpool_rows(h)
    }
}
