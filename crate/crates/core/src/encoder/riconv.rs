use rand::Rng;

use super::RiconvLayerConfig;
use crate::geom::{fps, knn_points, sq_dist, Point, PointCloud};
use crate::nn::{Mlp, ParamStore, Tape, Tensor, Var, LEAKY_SLOPE};
use crate::ri::{compute_lras, irif, order_neighbors, IrifTuple};
use crate::{Error, Result};

/// Window of the cyclic convolution over ordered neighbours.
const CONV_WINDOW: usize = 3;

/// Sampled references and their IRIF tuples for one layer.
#[derive(Debug, Clone)]
pub struct LayerPlan {
    /// Cloud indices of the references.
    pub refs: Vec<usize>,
    pub ref_points: Vec<Point>,
    /// Cloud index of each neighbour row, `k` rows per reference in clockwise order.
    pub neighbors: Vec<usize>,
    /// `[n_ref·k, 8]` tuples aligned with `neighbors`.
    pub irif: Tensor,
    /// For each neighbour row, the position of its nearest reference in the previous layer.
    pub prev_rows: Option<Vec<usize>>,
}

/// Plans for the whole stack. References of every layer are prefixes of one FPS run.
#[derive(Debug, Clone)]
pub struct RiconvPlan {
    pub layers: Vec<LayerPlan>,
}

impl RiconvPlan {
    pub fn build(cloud: &PointCloud, cfgs: &[RiconvLayerConfig], lra_k: usize) -> Result<Self> {
        let first = cfgs.first().ok_or_else(|| Error::Config("no convolution layers".into()))?;
        for c in cfgs {
            if c.n_ref > cloud.len() || c.k >= cloud.len() {
                return Err(Error::InvalidArgument(format!(
                    "layer with {} references and k = {} on {} points",
                    c.n_ref,
                    c.k,
                    cloud.len()
                )));
            }
        }
        let lras = compute_lras(cloud, lra_k)?;
        let order = fps(cloud, first.n_ref)?;
        let pts = cloud.points();
        let mut layers: Vec<LayerPlan> = Vec::with_capacity(cfgs.len());
        for cfg in cfgs {
            let refs = order[..cfg.n_ref].to_vec();
            let mut neighbors = Vec::with_capacity(cfg.n_ref * cfg.k);
            let mut data = Vec::with_capacity(cfg.n_ref * cfg.k * IrifTuple::WIDTH);
            for &r in &refs {
                let nbrs = knn_points(pts, r, cfg.k)?;
                let ordered = order_neighbors(cloud, r, &lras, &nbrs.neighbor_idxs)?;
                for t in irif(cloud, &ordered)? {
                    data.extend_from_slice(&t.to_array());
                }
                neighbors.extend(ordered.ordered_neighbors.iter().map(|n| n.0));
            }
            let prev_rows = layers
                .last()
                .map(|prev| nearest_rows(pts, &neighbors, &prev.refs));
            layers.push(LayerPlan {
                irif: Tensor::matrix(neighbors.len(), IrifTuple::WIDTH, data)?,
                ref_points: refs.iter().map(|&r| pts[r]).collect(),
                refs,
                neighbors,
                prev_rows,
            });
        }
        Ok(Self { layers })
    }
}

/// For each query, the position in `refs` of the nearest reference (ties: earlier position).
fn nearest_rows(pts: &[Point], queries: &[usize], refs: &[usize]) -> Vec<usize> {
    queries
        .iter()
        .map(|&q| {
            let mut best = (f64::INFINITY, 0);
            for (pos, &r) in refs.iter().enumerate() {
                let d = sq_dist(&pts[q], &pts[r]);
                if d < best.0 {
                    best = (d, pos);
                }
            }
            best.1
        })
        .collect()
}

/// Output of one convolution layer.
#[derive(Debug, Clone)]
pub struct LayerFeatureBundle {
    pub ref_idxs: Vec<usize>,
    pub ref_points: Vec<Point>,
    /// `[n_ref, c_out]`.
    pub feats: Var,
}

/// IRIF lift MLP followed by a cyclic convolution across ordered neighbours and max pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct RiconvLayer {
    pub config: RiconvLayerConfig,
    pub lift: Mlp,
    pub kernel: String,
    pub bias: String,
}

impl RiconvLayer {
    pub fn new(
        config: RiconvLayerConfig,
        store: &mut ParamStore,
        name: &str,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if config.k < 2 || config.c_mid == 0 || config.c_out == 0 {
            return Err(Error::Config(format!("invalid layer {config:?}")));
        }
        let lift = Mlp::new(
            store,
            &format!("{name}.lift"),
            &[IrifTuple::WIDTH, config.c_mid, config.c_mid],
            true,
            rng,
        )?;
        let cin = config.c_mid + config.c_in;
        let bound = (6.0 / (CONV_WINDOW * cin + config.c_out) as f64).sqrt();
        let kernel = format!("{name}.conv.w");
        let bias = format!("{name}.conv.b");
        store.insert(&kernel, ParamStore::uniform(vec![CONV_WINDOW, cin, config.c_out], bound, rng))?;
        store.insert(&bias, Tensor::zeros(vec![config.c_out]))?;
        Ok(Self {
            config,
            lift,
            kernel,
            bias,
        })
    }

    /// Runs the layer; `prev` are the previous layer's `[n_prev, c_in]` features.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        plan: &LayerPlan,
        prev: Option<Var>,
    ) -> Result<LayerFeatureBundle> {
        let cfg = &self.config;
        if plan.refs.len() != cfg.n_ref || plan.neighbors.len() != cfg.n_ref * cfg.k {
            return Err(Error::Shape(format!(
                "plan with {} references and {} rows for layer {cfg:?}",
                plan.refs.len(),
                plan.neighbors.len()
            )));
        }
        let x = tape.constant(plan.irif.clone());
        let lifted = self.lift.forward(tape, store, x)?;
        let g = match (prev, &plan.prev_rows, cfg.c_in) {
            (_, _, 0) => lifted,
            (Some(p), Some(rows), _) => {
                let fetched = tape.gather_rows(p, rows)?;
                tape.concat(&[lifted, fetched])?
            }
            _ => {
                return Err(Error::Shape(format!(
                    "layer expects {} previous feature channels",
                    cfg.c_in
                )))
            }
        };
        let kernel = tape.param(store, &self.kernel)?;
        let bias = tape.param(store, &self.bias)?;
        let conv = tape.conv1d_cyclic(g, kernel, bias, cfg.k)?;
        let pooled = tape.max_groups(conv, cfg.k)?;
        let feats = tape.leaky_relu(pooled, LEAKY_SLOPE)?;
        Ok(LayerFeatureBundle {
            ref_idxs: plan.refs.clone(),
            ref_points: plan.ref_points.clone(),
            feats,
        })
    }
}
