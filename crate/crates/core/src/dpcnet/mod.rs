//! Dual-path completion network.
//!
//! Training runs two paths through one shared encoder and decoder. The
//! reconstruction path encodes the complete cloud `Y`, infers the prior
//! `λ(v_r|Y)` and decodes a sample from it. The completion path encodes the
//! partial cloud `X`, infers the posterior `φ(v_c|X)` and decodes from it,
//! with a KL term tying `φ` to `λ`. Only the two distribution heads differ.
//! The coarse completion is then refined by the [`crate::enhancer`].
//!
//! Inference uses the completion path alone with the posterior mean.

mod frame;

pub use frame::PoseFrame;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoder::{Embedding, Encoder, EncoderConfig, EncoderGeometry, EncoderMode};
use crate::enhancer::{loss_fine, rows_to_points, Refiner, RefinerConfig};
use crate::geom::PointCloud;
use crate::nn::{adam_step, AdamState, LatentVar, Linear, Mlp, ParamStore, SampleMode, Tape, Tensor, Var};
use crate::{seed, Error, Result};

/// Argument order of the completion-path KL term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL[λ ‖ φ]`.
    #[default]
    LambdaPhi,
    /// `KL[φ ‖ λ]`.
    PhiLambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub latent_dim: usize,
    pub coarse_points: usize,
    pub decoder_hidden: Vec<usize>,
    pub refiner: RefinerConfig,
    pub kl_direction: KlDirection,
    /// Run both paths in a pose frame estimated from the partial input.
    pub canonical_frame: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            latent_dim: 64,
            coarse_points: 1024,
            decoder_hidden: vec![1024],
            refiner: RefinerConfig::default(),
            kl_direction: KlDirection::LambdaPhi,
            canonical_frame: true,
        }
    }
}

impl ModelConfig {
    /// Reduced dimensions for 512-point clouds.
    pub fn toy() -> Self {
        Self {
            encoder: EncoderConfig::toy(),
            latent_dim: 8,
            coarse_points: 128,
            decoder_hidden: vec![64],
            refiner: RefinerConfig::toy(),
            kl_direction: KlDirection::LambdaPhi,
            canonical_frame: true,
        }
    }

    /// Same sizes with the convolution stack and pose frame replaced by a coordinate MLP.
    pub fn raw_ablation(mut self) -> Self {
        self.encoder.mode = EncoderMode::RawCoordinates;
        self.canonical_frame = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.latent_dim == 0 || self.coarse_points == 0 || self.decoder_hidden.contains(&0) {
            return Err(Error::Config("latent, coarse and decoder sizes must be positive".into()));
        }
        self.refiner.validate(self.coarse_points)
    }
}

/// Non-negative weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w_rec: f64,
    pub w_com: f64,
    pub w_fine: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_rec: 1.0,
            w_com: 1.0,
            w_fine: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_rec, self.w_com, self.w_fine];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights {all:?} must be finite and non-negative")));
        }
        Ok(())
    }
}

/// Loss values of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainBatchReport {
    pub l_rec: f64,
    pub l_com: f64,
    pub l_fine: f64,
    pub total: f64,
    pub kl_rec: f64,
    pub kl_com: f64,
    pub cd_rec: f64,
    pub cd_com: f64,
}

/// Reconstruction-path results recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ReconstructionOutput {
    pub embedding: Embedding,
    pub prior: LatentVar,
    pub coarse: Var,
    pub kl: Var,
    pub cd: Var,
    pub loss: Var,
}

/// How the completion path draws its latent.
#[derive(Debug, Clone, Copy)]
pub enum CompletionMode<'a> {
    /// `z ~ φ`, with the loss against `target` and its prior `λ`.
    Training { target: &'a PointCloud, prior: LatentVar },
    /// No loss; `z` is the posterior mean or a seeded sample.
    Inference(SampleMode),
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionOutput {
    pub embedding: Embedding,
    pub posterior: LatentVar,
    pub coarse: Var,
    pub kl: Option<Var>,
    pub cd: Option<Var>,
    pub loss: Option<Var>,
}

/// All loss terms of one training example on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TrainingGraph {
    pub reconstruction: ReconstructionOutput,
    pub completion: CompletionOutput,
    pub fine: Var,
    pub l_fine: Var,
    pub total: Var,
}

/// Coarse and fine completions in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub coarse: PointCloud,
    pub fine: PointCloud,
}

/// Intermediate encoder outputs for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub g: Vec<f64>,
    pub v: Vec<f64>,
    /// `[N, width]` in input point order.
    pub features: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    mean: Linear,
    log_variance: Linear,
}

impl Head {
    fn new(store: &mut ParamStore, name: &str, v_dim: usize, latent: usize) -> Result<Self> {
        Ok(Self {
            mean: Linear::zeros(store, &format!("{name}.mean"), v_dim, latent)?,
            log_variance: Linear::zeros(store, &format!("{name}.logvar"), v_dim, latent)?,
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, v: Var) -> Result<LatentVar> {
        Ok(LatentVar {
            mean: self.mean.forward(tape, store, v)?,
            log_variance: self.log_variance.forward(tape, store, v)?,
        })
    }
}

/// The completion network: layer descriptors plus one shared parameter store.
#[derive(Debug, Clone)]
pub struct Ricnet {
    config: ModelConfig,
    encoder: Encoder,
    prior: Head,
    posterior: Head,
    decoder: Mlp,
    refiner: Refiner,
    params: ParamStore,
}

impl Ricnet {
    /// Builds the network with freshly initialised weights.
    pub fn new(config: &ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(init_seed, &[seed::tag::INIT]));
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&config.encoder, &mut params, &mut rng)?;
        let v_dim = config.encoder.v_dim;
        let prior = Head::new(&mut params, "prior", v_dim, config.latent_dim)?;
        let posterior = Head::new(&mut params, "post", v_dim, config.latent_dim)?;
        let mut widths = vec![config.latent_dim + v_dim];
        widths.extend(&config.decoder_hidden);
        widths.push(config.coarse_points * 3);
        let decoder = Mlp::new(&mut params, "dec", &widths, false, &mut rng)?;
        let refiner = Refiner::new(&config.refiner, config.coarse_points, &mut params, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            encoder,
            prior,
            posterior,
            decoder,
            refiner,
            params,
        })
    }

    /// Rebuilds a network around stored weights, checking every name and shape.
    pub fn from_params(config: &ModelConfig, params: ParamStore) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        let expected: BTreeMap<&str, &[usize]> = net.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let got: BTreeMap<&str, &[usize]> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != got {
            let missing: Vec<&&str> = expected.keys().filter(|k| !got.contains_key(*k)).collect();
            let extra: Vec<&&str> = got.keys().filter(|k| !expected.contains_key(*k)).collect();
            return Err(Error::Checkpoint(format!(
                "parameters do not match the model config (missing {missing:?}, unexpected {extra:?}, or shape mismatch)"
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn refiner(&self) -> &Refiner {
        &self.refiner
    }

    /// Frame in which both paths run for an example with partial input `x`.
    pub fn frame_for(&self, x: &PointCloud) -> Result<PoseFrame> {
        if self.config.canonical_frame {
            PoseFrame::estimate(x)
        } else {
            Ok(PoseFrame::identity())
        }
    }

    pub fn geometry(&self, cloud: &PointCloud) -> Result<EncoderGeometry> {
        self.encoder.geometry(cloud)
    }

    pub fn embed(&self, tape: &mut Tape, geo: &EncoderGeometry) -> Result<Embedding> {
        self.encoder.embed(tape, &self.params, geo)
    }

    /// `λ(v_r|Y)`.
    pub fn infer_prior(&self, tape: &mut Tape, v_r: Var) -> Result<LatentVar> {
        self.prior.forward(tape, &self.params, v_r)
    }

    /// `φ(v_c|X)`.
    pub fn infer_post(&self, tape: &mut Tape, v_c: Var) -> Result<LatentVar> {
        self.posterior.forward(tape, &self.params, v_c)
    }

    /// `MLP([z, v]) → [M_c, 3]`.
    pub fn decode(&self, tape: &mut Tape, z: Var, v: Var) -> Result<Var> {
        let zv = tape.concat(&[z, v])?;
        let flat = self.decoder.forward(tape, &self.params, zv)?;
        tape.reshape(flat, vec![self.config.coarse_points, 3])
    }

    /// Reconstruction path on a complete cloud given in the working frame.
    pub fn forward_reconstruction(
        &self,
        tape: &mut Tape,
        y: &PointCloud,
        noise_seed: u64,
    ) -> Result<ReconstructionOutput> {
        let embedding = self.embed(tape, &self.geometry(y)?)?;
        let prior = self.infer_prior(tape, embedding.v)?;
        let z = tape.sample_latent(&prior, noise_seed, SampleMode::Sample)?;
        let coarse = self.decode(tape, z, embedding.v)?;
        let kl = tape.kl_to_standard(prior.mean, prior.log_variance)?;
        let target = tape.constant(cloud_tensor(y)?);
        let cd = tape.chamfer(coarse, target)?;
        let loss = tape.weighted_sum(&[(1.0, kl), (1.0, cd)])?;
        Ok(ReconstructionOutput {
            embedding,
            prior,
            coarse,
            kl,
            cd,
            loss,
        })
    }

    /// Completion path on a partial cloud given in the working frame.
    pub fn forward_completion(
        &self,
        tape: &mut Tape,
        x: &PointCloud,
        mode: CompletionMode<'_>,
        noise_seed: u64,
    ) -> Result<CompletionOutput> {
        let embedding = self.embed(tape, &self.geometry(x)?)?;
        let posterior = self.infer_post(tape, embedding.v)?;
        let sample = match mode {
            CompletionMode::Training { .. } => SampleMode::Sample,
            CompletionMode::Inference(s) => s,
        };
        let z = tape.sample_latent(&posterior, noise_seed, sample)?;
        let coarse = self.decode(tape, z, embedding.v)?;
        let (kl, cd, loss) = match mode {
            CompletionMode::Training { target, prior } => {
                let (p, q) = match self.config.kl_direction {
                    KlDirection::LambdaPhi => (prior, posterior),
                    KlDirection::PhiLambda => (posterior, prior),
                };
                let kl = tape.kl_diag(p.mean, p.log_variance, q.mean, q.log_variance)?;
                let y = tape.constant(cloud_tensor(target)?);
                let cd = tape.chamfer(coarse, y)?;
                let loss = tape.weighted_sum(&[(1.0, kl), (1.0, cd)])?;
                (Some(kl), Some(cd), Some(loss))
            }
            CompletionMode::Inference(_) => (None, None, None),
        };
        Ok(CompletionOutput {
            embedding,
            posterior,
            coarse,
            kl,
            cd,
            loss,
        })
    }

    /// Records both paths, the refiner and the weighted joint loss for one
    /// example already mapped into its working frame.
    pub fn training_graph(
        &self,
        tape: &mut Tape,
        x: &PointCloud,
        y: &PointCloud,
        weights: &LossWeights,
        noise_seed: u64,
    ) -> Result<TrainingGraph> {
        let reconstruction = self.forward_reconstruction(tape, y, seed::derive(noise_seed, &[0]))?;
        let mode = CompletionMode::Training {
            target: y,
            prior: reconstruction.prior,
        };
        let completion = self.forward_completion(tape, x, mode, seed::derive(noise_seed, &[1]))?;
        let refined = self.refiner.refine(tape, &self.params, completion.coarse, x)?;
        let l_fine = loss_fine(tape, refined.fine, y)?;
        let l_com = completion.loss.expect("training mode");
        let total = tape.weighted_sum(&[
            (weights.w_rec, reconstruction.loss),
            (weights.w_com, l_com),
            (weights.w_fine, l_fine),
        ])?;
        Ok(TrainingGraph {
            reconstruction,
            completion,
            fine: refined.fine,
            l_fine,
            total,
        })
    }

    /// Loss values for a paired example without updating anything.
    pub fn losses(
        &self,
        x: &PointCloud,
        y: &PointCloud,
        weights: &LossWeights,
        noise_seed: u64,
    ) -> Result<TrainBatchReport> {
        let frame = self.frame_for(x)?;
        let (xl, yl) = (frame.to_local(x)?, frame.to_local(y)?);
        let mut tape = Tape::new();
        let g = self.training_graph(&mut tape, &xl, &yl, weights, noise_seed)?;
        report(&tape, &g)
    }

    /// One joint-loss Adam step on a paired example given in world coordinates.
    pub fn train_step(
        &mut self,
        x: &PointCloud,
        y: &PointCloud,
        opt: &mut AdamState,
        weights: &LossWeights,
        noise_seed: u64,
    ) -> Result<TrainBatchReport> {
        weights.validate()?;
        let frame = self.frame_for(x)?;
        let (xl, yl) = (frame.to_local(x)?, frame.to_local(y)?);
        let mut tape = Tape::new();
        let g = self.training_graph(&mut tape, &xl, &yl, weights, noise_seed)?;
        let rep = report(&tape, &g)?;
        let grads = tape.backward(g.total)?;
        adam_step(&mut self.params, &tape.param_grads(&grads), opt)?;
        Ok(rep)
    }

    /// Completes a partial cloud with the posterior mean.
    pub fn complete(&self, partial: &PointCloud) -> Result<Completion> {
        self.complete_with(partial, SampleMode::Mean, 0)
    }

    pub fn complete_with(&self, partial: &PointCloud, mode: SampleMode, noise_seed: u64) -> Result<Completion> {
        let frame = self.frame_for(partial)?;
        let xl = frame.to_local(partial)?;
        let mut tape = Tape::new();
        let out = self.forward_completion(&mut tape, &xl, CompletionMode::Inference(mode), noise_seed)?;
        let refined = self.refiner.refine(&mut tape, &self.params, out.coarse, &xl)?;
        let coarse = to_cloud(tape.value(out.coarse))?;
        let fine = to_cloud(tape.value(refined.fine))?;
        Ok(Completion {
            coarse: frame.to_world(&coarse)?,
            fine: frame.to_world(&fine)?,
        })
    }

    /// Encoder outputs for `cloud` in its own working frame.
    pub fn features(&self, cloud: &PointCloud) -> Result<FeatureDump> {
        let local = self.frame_for(cloud)?.to_local(cloud)?;
        let mut tape = Tape::new();
        let e = self.embed(&mut tape, &self.geometry(&local)?)?;
        Ok(FeatureDump {
            g: tape.value(e.g).data().to_vec(),
            v: tape.value(e.v).data().to_vec(),
            features: tape.value(e.features).clone(),
        })
    }
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).data()[0]
}

fn report(tape: &Tape, g: &TrainingGraph) -> Result<TrainBatchReport> {
    let r = TrainBatchReport {
        l_rec: scalar(tape, g.reconstruction.loss),
        l_com: scalar(tape, g.completion.loss.expect("training mode")),
        l_fine: scalar(tape, g.l_fine),
        total: scalar(tape, g.total),
        kl_rec: scalar(tape, g.reconstruction.kl),
        kl_com: scalar(tape, g.completion.kl.expect("training mode")),
        cd_rec: scalar(tape, g.reconstruction.cd),
        cd_com: scalar(tape, g.completion.cd.expect("training mode")),
    };
    if !r.total.is_finite() {
        return Err(Error::NonFinite(format!("training loss is {}", r.total)));
    }
    Ok(r)
}

fn cloud_tensor(c: &PointCloud) -> Result<Tensor> {
    Tensor::matrix(c.len(), 3, c.to_flat())
}

fn to_cloud(t: &Tensor) -> Result<PointCloud> {
    PointCloud::new(rows_to_points(t))
}

#[cfg(test)]
mod tests;
