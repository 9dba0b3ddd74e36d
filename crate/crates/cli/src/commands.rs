use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ricnet_core::checkpoint::Checkpoint;
use ricnet_core::config::RunConfig;
use ricnet_core::dataset::{load_manifest, synthesize, write_dataset, SynthSpec};
use ricnet_core::dpcnet::Ricnet;
use ricnet_core::geom::{apply_transform, fps, load_xyz, random_rigid, to_xyz_string, RigidTransform, ShapeKind};
use ricnet_core::metrics::{eval_csv, evaluate, robustness_csv, robustness_report, Predictor, TransformProtocol};
use ricnet_core::nn::{AdamState, Tensor};
use ricnet_core::ri::{compute_lras, irif_csv, irif_table};
use ricnet_core::train::{train, training_log_csv};
use ricnet_core::util::write_atomic;

use crate::args::{
    Command, CompleteArgs, EvalArgs, FeaturesArgs, KindArg, SynthArgs, TrainArgs, TransformArgs,
};
use crate::error::{require_file, CliError, CliResult};

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Transform(a) => transform(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Complete(a) => complete(a),
        Command::Features(a) => features(a),
    }
}

fn write(path: &Path, text: &str) -> CliResult {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn synth(a: SynthArgs) -> CliResult {
    let kinds = match a.kind {
        KindArg::Sphere => vec![ShapeKind::Sphere],
        KindArg::Box => vec![ShapeKind::Box],
        KindArg::Cylinder => vec![ShapeKind::Cylinder],
        KindArg::All => ShapeKind::ALL.to_vec(),
    };
    let ds = synthesize(&SynthSpec {
        kinds,
        count: a.count,
        points: a.points,
        crop: a.crop,
        seed: a.seed,
    })?;
    write_dataset(&ds, &a.out)?;
    Ok(())
}

fn transform(a: TransformArgs) -> CliResult {
    require_file(&a.input, "input cloud")?;
    let t = match &a.transform {
        Some(p) => {
            require_file(p, "transform")?;
            let text = std::fs::read_to_string(p).map_err(|e| CliError {
                code: crate::error::EXIT_IO,
                message: format!("{}: {e}", p.display()),
            })?;
            RigidTransform::from_json(&text)?
        }
        None => {
            if !(a.max_translation >= 0.0) {
                return Err(CliError::usage("--max-translation must be non-negative"));
            }
            random_rigid(a.seed, a.max_translation)
        }
    };
    let cloud = load_xyz(&a.input)?;
    write(&a.out, &to_xyz_string(&apply_transform(&cloud, &t)))?;
    if let Some(p) = &a.save_transform {
        write(p, &t.to_json())?;
    }
    Ok(())
}

/// Base config (resumed checkpoint, config file, or defaults) with flags applied.
fn train_config(a: &TrainArgs, resumed: Option<&Checkpoint>) -> CliResult<RunConfig> {
    let mut cfg = match (resumed, &a.config) {
        (Some(ck), _) => ck.config.clone(),
        (None, Some(p)) => {
            require_file(p, "config")?;
            RunConfig::load(p)?
        }
        (None, None) => RunConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        if resumed.is_some() && s != cfg.seed {
            return Err(CliError::usage("--seed cannot change the seed of a resumed run"));
        }
        cfg.seed = s;
    }
    if let Some(lr) = a.lr {
        cfg.lr.initial = lr;
    }
    if a.augment_rigid {
        cfg.augment_rigid = true;
    }
    if let Some(p) = &a.data {
        cfg.paths.data = Some(p.clone());
    }
    if let Some(p) = &a.eval_data {
        cfg.paths.eval_data = Some(p.clone());
    }
    if let Some(p) = &a.out_checkpoint {
        cfg.paths.checkpoint = Some(p.clone());
    }
    if let Some(p) = &a.log {
        cfg.paths.log = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("log.csv")
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let resumed = match &a.resume {
        Some(p) => {
            require_file(p, "checkpoint")?;
            Some(Checkpoint::load(p)?)
        }
        None => None,
    };
    let cfg = train_config(&a, resumed.as_ref())?;
    let data_path = cfg
        .paths
        .data
        .clone()
        .ok_or_else(|| CliError::usage("no training data: pass --data or set paths.data"))?;
    let ck_path = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::usage("no output: pass --out-checkpoint or set paths.checkpoint"))?;
    let log_path = cfg.paths.log.clone().unwrap_or_else(|| default_log_path(&ck_path));
    require_file(&data_path, "manifest")?;
    let data = load_manifest(&data_path)?;
    let eval_data = match &cfg.paths.eval_data {
        Some(p) => {
            require_file(p, "evaluation manifest")?;
            Some(load_manifest(p)?)
        }
        None => None,
    };
    let mut ck = match resumed {
        Some(mut ck) => {
            ck.config = cfg;
            ck
        }
        None => Checkpoint {
            model: Ricnet::new(&cfg.model, cfg.seed)?,
            adam: AdamState::new(cfg.lr.initial),
            config: cfg,
            epoch: 0,
        },
    };
    let verbose = a.verbose;
    let out = train(&mut ck, &data, eval_data.as_ref(), |log, _| {
        if verbose {
            let mut line = format!("epoch {} lr {:.3e} total {:.6}", log.epoch, log.lr, log.total);
            if let Some(cd) = log.eval_cd {
                let _ = write!(line, " eval_cd {cd:.6}");
            }
            eprintln!("{line}");
        }
        Ok(())
    })?;
    ck.save(&ck_path)?;
    write(&log_path, &training_log_csv(&out.epochs))?;
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    require_file(&a.data, "manifest")?;
    let ck = match (&a.checkpoint, a.identity_model) {
        (_, true) => None,
        (Some(p), false) => {
            require_file(p, "checkpoint")?;
            Some(Checkpoint::load(p)?)
        }
        (None, false) => return Err(CliError::usage("--checkpoint is required without --identity-model")),
    };
    let defaults = RunConfig::default();
    let cfg = ck.as_ref().map_or(&defaults, |c| &c.config);
    let tau = a.tau.unwrap_or(cfg.fscore_tau);
    if !(tau > 0.0) {
        return Err(CliError::usage("--tau must be positive"));
    }
    let protocol = TransformProtocol {
        seed: a.transform_seed,
        max_translation: a.max_translation.unwrap_or(cfg.max_translation),
    };
    let data = load_manifest(&a.data)?;
    let predictor = match &ck {
        Some(c) => Predictor::Model(&c.model),
        None => Predictor::Identity,
    };
    let report = match (a.original, a.transformed) {
        (true, true) => {
            let o = evaluate(predictor, &data, tau, None)?;
            let t = evaluate(predictor, &data, tau, Some(protocol))?;
            robustness_csv(&robustness_report(&o, &t)?)
        }
        (_, true) => eval_csv(&evaluate(predictor, &data, tau, Some(protocol))?),
        _ => eval_csv(&evaluate(predictor, &data, tau, None)?),
    };
    write(&a.out, &report)
}

fn complete(a: CompleteArgs) -> CliResult {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.input, "input cloud")?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let partial = load_xyz(&a.input)?;
    let c = ck.model.complete(&partial)?;
    write(&a.out, &to_xyz_string(&c.fine))?;
    if let Some(p) = &a.coarse {
        write(p, &to_xyz_string(&c.coarse))?;
    }
    Ok(())
}

fn matrix_csv(t: &Tensor) -> String {
    let mut out = String::new();
    for r in 0..t.rows() {
        let row: Vec<String> = t.row_slice(r).iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn vector_csv(v: &[f64]) -> String {
    let row: Vec<String> = v.iter().map(f64::to_string).collect();
    format!("{}\n", row.join(","))
}

fn features(a: FeaturesArgs) -> CliResult {
    require_file(&a.input, "input cloud")?;
    let cloud = load_xyz(&a.input)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError {
        code: crate::error::EXIT_IO,
        message: format!("{}: {e}", a.out.display()),
    })?;
    if a.refs == 0 || a.refs > cloud.len() {
        return Err(CliError::usage(format!(
            "--refs {} must be between 1 and the cloud size {}",
            a.refs,
            cloud.len()
        )));
    }
    let lras = compute_lras(&cloud, a.lra_k)?;
    let refs = fps(&cloud, a.refs)?;
    let table = irif_table(&cloud, &lras, &refs, a.k)?;
    write(&a.out.join("irif.csv"), &irif_csv(&table))?;
    if a.dump_features {
        let model = match (&a.checkpoint, &a.config) {
            (Some(p), _) => {
                require_file(p, "checkpoint")?;
                Checkpoint::load(p)?.model
            }
            (None, Some(p)) => {
                require_file(p, "config")?;
                let cfg = RunConfig::load(p)?;
                Ricnet::new(&cfg.model, cfg.seed)?
            }
            (None, None) => {
                let cfg = RunConfig::default();
                Ricnet::new(&cfg.model, cfg.seed)?
            }
        };
        let dump = model.features(&cloud)?;
        write(&a.out.join("g_ri.csv"), &vector_csv(&dump.g))?;
        write(&a.out.join("v.csv"), &vector_csv(&dump.v))?;
        write(&a.out.join("features.csv"), &matrix_csv(&dump.features))?;
    }
    Ok(())
}
