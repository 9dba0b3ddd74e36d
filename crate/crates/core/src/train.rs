//! Epoch loop over a paired dataset with optional rigid augmentation,
//! per-epoch evaluation and a CSV training log.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::checkpoint::Checkpoint;
use crate::config::NoiseSchedule;
use crate::dataset::Dataset;
use crate::dpcnet::TrainBatchReport;
use crate::geom::{apply_transform, random_rigid};
use crate::metrics::{evaluate, Predictor};
use crate::{seed, Error, Result};

pub const TRAINING_LOG_HEADER: &str = "epoch,lr,l_rec,l_com,l_fine,total,eval_cd,eval_f1";

/// Mean training losses of one epoch and the held-out metrics after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub l_rec: f64,
    pub l_com: f64,
    pub l_fine: f64,
    pub total: f64,
    /// Mean unscaled Chamfer distance on the evaluation set, if one was given.
    pub eval_cd: Option<f64>,
    pub eval_f1: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    /// Every step in execution order.
    pub steps: Vec<TrainBatchReport>,
}

/// Mean Chamfer distance and F-score of the model over `data` in original pose.
pub fn eval_means(ck: &Checkpoint, data: &Dataset) -> Result<(f64, f64)> {
    let recs = evaluate(Predictor::Model(&ck.model), data, ck.config.fscore_tau, None)?;
    let n = recs.len().max(1) as f64;
    Ok((
        recs.iter().map(|r| r.cd).sum::<f64>() / n,
        recs.iter().map(|r| r.f1).sum::<f64>() / n,
    ))
}

/// Trains from `ck.epoch` up to `ck.config.epochs`, calling `on_epoch` after each epoch.
pub fn train(
    ck: &mut Checkpoint,
    data: &Dataset,
    eval: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochLog, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let cfg = ck.config.clone();
    if data.is_empty() && cfg.epochs > ck.epoch {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut out = TrainOutcome::default();
    for epoch in ck.epoch..cfg.epochs {
        let lr = cfg.lr.lr(epoch);
        ck.adam.lr = lr;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[seed::tag::SHUFFLE, epoch as u64])));
        let mut sums = [0.0; 4];
        for &i in &order {
            let s = &data.samples[i];
            let (x, y) = if cfg.augment_rigid {
                let t = random_rigid(
                    seed::derive(cfg.seed, &[seed::tag::AUGMENT, epoch as u64, i as u64]),
                    cfg.max_translation,
                );
                (apply_transform(&s.partial, &t), apply_transform(&s.complete, &t))
            } else {
                (s.partial.clone(), s.complete.clone())
            };
            let noise = match cfg.noise {
                NoiseSchedule::PerStep => seed::derive(cfg.seed, &[seed::tag::LATENT, epoch as u64, i as u64]),
                NoiseSchedule::PerExample => seed::derive(cfg.seed, &[seed::tag::LATENT, i as u64]),
            };
            let r = ck
                .model
                .train_step(&x, &y, &mut ck.adam, &cfg.loss_weights, noise)
                .map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("{m} at epoch {epoch}")),
                    other => other,
                })?;
            for (acc, v) in sums.iter_mut().zip([r.l_rec, r.l_com, r.l_fine, r.total]) {
                *acc += v;
            }
            out.steps.push(r);
        }
        let n = data.len() as f64;
        let (eval_cd, eval_f1) = match eval {
            Some(d) if !d.is_empty() => {
                let (cd, f1) = eval_means(ck, d)?;
                (Some(cd), Some(f1))
            }
            _ => (None, None),
        };
        let log = EpochLog {
            epoch,
            lr,
            l_rec: sums[0] / n,
            l_com: sums[1] / n,
            l_fine: sums[2] / n,
            total: sums[3] / n,
            eval_cd,
            eval_f1,
        };
        ck.epoch = epoch + 1;
        on_epoch(&log, ck)?;
        out.epochs.push(log);
    }
    Ok(out)
}

pub fn training_log_csv(epochs: &[EpochLog]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = format!("{TRAINING_LOG_HEADER}\n");
    for e in epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.epoch,
            e.lr,
            e.l_rec,
            e.l_com,
            e.l_fine,
            e.total,
            opt(e.eval_cd),
            opt(e.eval_f1)
        );
    }
    out
}
