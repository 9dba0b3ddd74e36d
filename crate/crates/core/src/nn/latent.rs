use rand_distr::{Distribution, StandardNormal};

use super::{Tape, Var};
use crate::{seed, Error, Result};

/// Diagonal Gaussian `N(mean, diag(exp(log_variance)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLatent {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

/// A Gaussian latent recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentVar {
    pub mean: Var,
    pub log_variance: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Reparameterised draw.
    Sample,
    /// The mean itself.
    Mean,
}

impl GaussianLatent {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(Error::Shape(format!(
                "latent mean has {} entries, log-variance {}",
                mean.len(),
                log_variance.len()
            )));
        }
        if mean.iter().chain(&log_variance).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gaussian latent".into()));
        }
        Ok(Self { mean, log_variance })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_variance: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn from_tape(tape: &Tape, v: &LatentVar) -> Self {
        Self {
            mean: tape.value(v.mean).data().to_vec(),
            log_variance: tape.value(v.log_variance).data().to_vec(),
        }
    }
}

pub(crate) fn kl_standard_terms(mean: &[f64], logvar: &[f64]) -> f64 {
    mean.iter()
        .zip(logvar)
        .map(|(m, l)| 0.5 * (m * m + l.exp() - 1.0 - l))
        .sum()
}

pub(crate) fn kl_diag_terms(mp: &[f64], lvp: &[f64], mq: &[f64], lvq: &[f64]) -> f64 {
    (0..mp.len())
        .map(|i| {
            let d = mp[i] - mq[i];
            0.5 * (lvq[i] - lvp[i] + (lvp[i].exp() + d * d) / lvq[i].exp() - 1.0)
        })
        .sum()
}

/// `KL[g ‖ N(0, I)]`.
pub fn kl_to_standard(g: &GaussianLatent) -> f64 {
    kl_standard_terms(&g.mean, &g.log_variance)
}

/// `KL[p ‖ q]`.
pub fn kl_diag(p: &GaussianLatent, q: &GaussianLatent) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!(
            "kl_diag: dimensions {} and {} differ",
            p.dim(),
            q.dim()
        )));
    }
    Ok(kl_diag_terms(&p.mean, &p.log_variance, &q.mean, &q.log_variance))
}

/// `n` standard normal draws from a seeded stream.
pub fn standard_normal(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn sample_latent(g: &GaussianLatent, seed: u64, mode: SampleMode) -> Vec<f64> {
    match mode {
        SampleMode::Mean => g.mean.clone(),
        SampleMode::Sample => {
            let eps = standard_normal(seed, g.dim());
            g.mean
                .iter()
                .zip(&g.log_variance)
                .zip(eps)
                .map(|((m, l), e)| m + (0.5 * l).exp() * e)
                .collect()
        }
    }
}

impl Tape {
    /// Latent vector for `g`: reparameterised sample or the mean.
    pub fn sample_latent(&mut self, g: &LatentVar, seed: u64, mode: SampleMode) -> Result<Var> {
        match mode {
            SampleMode::Mean => Ok(g.mean),
            SampleMode::Sample => {
                let eps = standard_normal(seed, self.value(g.mean).len());
                self.reparam(g.mean, g.log_variance, &eps)
            }
        }
    }
}
