use super::*;
use crate::geom::{apply_transform, crop_partial, generate_synthetic, random_rigid, ShapeKind};
use crate::testing::{gradcheck, random_tensor};

fn pair(kind: ShapeKind, s: u64) -> (PointCloud, PointCloud) {
    let y = generate_synthetic(kind, 512, s).unwrap();
    let x = crop_partial(&y, s + 1, 0.5).unwrap();
    (x, y)
}

fn toy() -> Ricnet {
    Ricnet::new(&ModelConfig::toy(), 3).unwrap()
}

fn randomize(net: &mut Ricnet, prefix: &str, s: u64) {
    let names: Vec<String> = net.params().names().filter(|n| n.starts_with(prefix)).map(String::from).collect();
    for (i, n) in names.iter().enumerate() {
        let shape = net.params().get(n).unwrap().shape().to_vec();
        *net.params_mut().get_mut(n).unwrap() = random_tensor(shape, s + i as u64, 0.1);
    }
}

#[test]
fn zero_heads_give_standard_normal() {
    let net = toy();
    let (x, y) = pair(ShapeKind::Sphere, 1);
    let mut t = Tape::new();
    let e = net.embed(&mut t, &net.geometry(&y).unwrap()).unwrap();
    let lam = net.infer_prior(&mut t, e.v).unwrap();
    let g = crate::nn::GaussianLatent::from_tape(&t, &lam);
    assert_eq!(g, crate::nn::GaussianLatent::standard(8));
    let r = net.losses(&x, &y, &LossWeights::default(), 5).unwrap();
    assert_eq!(r.kl_com, 0.0);
    assert_eq!(r.kl_rec, 0.0);
}

#[test]
fn head_dims_follow_config() {
    let net = Ricnet::new(&ModelConfig::toy(), 1).unwrap();
    assert_eq!(net.params().get("prior.mean.w").unwrap().shape(), &[64, 8]);
    assert_eq!(net.params().get("post.logvar.w").unwrap().shape(), &[64, 8]);
    let d = ModelConfig::default();
    assert_eq!((d.latent_dim, d.coarse_points, d.encoder.v_dim), (64, 1024, 512));
}

#[test]
fn heads_are_independent() {
    let mut net = toy();
    randomize(&mut net, "prior.", 10);
    let (_, y) = pair(ShapeKind::Box, 2);
    let prior_of = |net: &Ricnet| {
        let mut t = Tape::new();
        let e = net.embed(&mut t, &net.geometry(&y).unwrap()).unwrap();
        let l = net.infer_prior(&mut t, e.v).unwrap();
        crate::nn::GaussianLatent::from_tape(&t, &l)
    };
    let before = prior_of(&net);
    randomize(&mut net, "post.", 20);
    assert_eq!(prior_of(&net), before);
}

#[test]
fn decode_is_deterministic_and_sized() {
    let net = toy();
    let z = random_tensor(vec![1, 8], 4, 1.0);
    let v = random_tensor(vec![1, 64], 5, 1.0);
    let run = || {
        let mut t = Tape::new();
        let (zv, vv) = (t.constant(z.clone()), t.constant(v.clone()));
        let out = net.decode(&mut t, zv, vv).unwrap();
        t.value(out).clone()
    };
    let a = run();
    assert_eq!(a.shape(), &[128, 3]);
    assert_eq!(a, run());
}

#[test]
fn chamfer_through_decoder_gradcheck() {
    let cfg = ModelConfig {
        coarse_points: 8,
        refiner: RefinerConfig {
            n_fine: 16,
            ..RefinerConfig::toy()
        },
        ..ModelConfig::toy()
    };
    let net = Ricnet::new(&cfg, 6).unwrap();
    let target = Tensor::matrix(8, 3, generate_synthetic(ShapeKind::Sphere, 8, 7).unwrap().to_flat()).unwrap();
    let ins = [random_tensor(vec![1, 8], 8, 1.0), random_tensor(vec![1, 64], 9, 1.0)];
    let r = gradcheck(&ins, 1e-6, |t, v| {
        let out = net.decode(t, v[0], v[1])?;
        let y = t.constant(target.clone());
        t.chamfer(out, y)
    })
    .unwrap();
    assert!(r.max_rel_error() < 1e-3, "{:?}", r.rel_errors);
}

#[test]
fn latent_heads_gradcheck() {
    let mut net = toy();
    randomize(&mut net, "prior.", 30);
    randomize(&mut net, "post.", 40);
    let eps = random_tensor(vec![8], 41, 1.0).into_data();
    let ins = [random_tensor(vec![1, 64], 42, 1.0), random_tensor(vec![1, 64], 43, 1.0)];
    let r = gradcheck(&ins, 1e-5, |t, v| {
        let lam = net.infer_prior(t, v[0])?;
        let phi = net.infer_post(t, v[1])?;
        let z = t.reparam(phi.mean, phi.log_variance, &eps)?;
        let zs = t.dot(z, &eps)?;
        let k1 = t.kl_to_standard(lam.mean, lam.log_variance)?;
        let k2 = t.kl_diag(lam.mean, lam.log_variance, phi.mean, phi.log_variance)?;
        t.weighted_sum(&[(1.0, zs), (1.0, k1), (1.0, k2)])
    })
    .unwrap();
    assert!(r.max_rel_error() < 1e-4, "{:?}", r.rel_errors);
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let mut net = toy();
    let before = net.params().clone();
    let (x, y) = pair(ShapeKind::Cylinder, 3);
    let w = LossWeights {
        w_rec: 0.0,
        w_com: 0.0,
        w_fine: 0.0,
    };
    let mut opt = AdamState::new(1e-3);
    let r = net.train_step(&x, &y, &mut opt, &w, 1).unwrap();
    assert_eq!(r.total, 0.0);
    assert_eq!(net.params(), &before);
}

#[test]
fn report_total_is_weighted_sum() {
    let mut net = toy();
    let (x, y) = pair(ShapeKind::Box, 4);
    let w = LossWeights {
        w_rec: 0.3,
        w_com: 1.7,
        w_fine: 0.9,
    };
    let mut opt = AdamState::new(1e-3);
    for s in 0..3 {
        let r = net.train_step(&x, &y, &mut opt, &w, s).unwrap();
        let expect = w.w_rec * r.l_rec + w.w_com * r.l_com + w.w_fine * r.l_fine;
        assert!((r.total - expect).abs() <= 1e-10);
        assert!((r.l_rec - (r.kl_rec + r.cd_rec)).abs() <= 1e-12);
        assert!((r.l_com - (r.kl_com + r.cd_com)).abs() <= 1e-12);
        assert!(r.kl_rec >= 0.0 && r.kl_com >= 0.0);
    }
}

#[test]
fn fixed_seed_reproduces_losses() {
    let (x, y) = pair(ShapeKind::Sphere, 5);
    let run = || {
        let mut net = toy();
        let mut opt = AdamState::new(1e-3);
        (0..2)
            .map(|s| net.train_step(&x, &y, &mut opt, &LossWeights::default(), s).unwrap().total.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn shared_weights_are_recorded_once() {
    let net = toy();
    let (x, y) = pair(ShapeKind::Box, 6);
    let frame = net.frame_for(&x).unwrap();
    let (xl, yl) = (frame.to_local(&x).unwrap(), frame.to_local(&y).unwrap());
    let mut t = Tape::new();
    let g = net.training_graph(&mut t, &xl, &yl, &LossWeights::default(), 0).unwrap();
    let names: Vec<&str> = t.param_vars().map(|p| p.0).collect();
    let mut unique = names.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(names.len(), unique.len());
    assert_eq!(names.len(), net.params().len());
    let grads = t.backward(g.total).unwrap();
    let by_name = t.param_grads(&grads);
    assert!(by_name.keys().any(|k| k.starts_with("enc.ri.0")));
    assert!(by_name.keys().any(|k| k.starts_with("dec.")));
}

#[test]
fn inference_never_touches_prior_head() {
    let net = toy();
    let (x, _) = pair(ShapeKind::Sphere, 7);
    let mut t = Tape::new();
    let out = net
        .forward_completion(&mut t, &x, CompletionMode::Inference(SampleMode::Mean), 0)
        .unwrap();
    assert!(out.loss.is_none());
    assert!(t.param_vars().all(|(n, _)| !n.starts_with("prior.")));
}

#[test]
fn mean_completion_is_deterministic() {
    let mut net = toy();
    randomize(&mut net, "post.", 50);
    let (x, _) = pair(ShapeKind::Cylinder, 8);
    let a = net.complete(&x).unwrap();
    assert_eq!(a, net.complete(&x).unwrap());
    assert_eq!(a.fine.len(), 512);
    assert_eq!(a.coarse.len(), 128);
    let s1 = net.complete_with(&x, SampleMode::Sample, 1).unwrap();
    assert_ne!(s1.coarse, a.coarse);
}

#[test]
fn completion_follows_rigid_motion() {
    let mut net = toy();
    randomize(&mut net, "ref.offset", 60);
    let (x, _) = pair(ShapeKind::Box, 9);
    let base = net.complete(&x).unwrap();
    for s in 0..3 {
        let t = random_rigid(70 + s, 0.5);
        let moved = net.complete(&apply_transform(&x, &t)).unwrap();
        let expect = apply_transform(&base.fine, &t);
        let d = crate::metrics::chamfer(&moved.fine, &expect);
        assert!(d < 1e-12, "chamfer {d}");
    }
}

#[test]
fn frame_moves_with_the_cloud() {
    let (x, _) = pair(ShapeKind::Cylinder, 10);
    let f = PoseFrame::estimate(&x).unwrap();
    assert!((f.axes().determinant() - 1.0).abs() < 1e-12);
    let t = random_rigid(11, 0.5);
    let g = PoseFrame::estimate(&apply_transform(&x, &t)).unwrap();
    let a = f.to_local(&x).unwrap();
    let b = g.to_local(&apply_transform(&x, &t)).unwrap();
    for (p, q) in a.points().iter().zip(b.points()) {
        assert!((p - q).norm() < 1e-9);
    }
    let back = f.to_world(&a).unwrap();
    for (p, q) in back.points().iter().zip(x.points()) {
        assert!((p - q).norm() < 1e-12);
    }
}

#[test]
fn reconstruction_path_learns_a_sphere() {
    let mut net = toy();
    let (x, y) = pair(ShapeKind::Sphere, 12);
    let mut opt = AdamState::new(1e-3);
    let first = net.losses(&x, &y, &LossWeights::default(), 0).unwrap().l_rec;
    for s in 0..200 {
        net.train_step(&x, &y, &mut opt, &LossWeights::default(), s).unwrap();
    }
    let last = net.losses(&x, &y, &LossWeights::default(), 0).unwrap().l_rec;
    assert!(last <= 0.5 * first, "{first} -> {last}");
}

#[test]
fn distribution_link_pulls_posterior_toward_prior() {
    let mut net = toy();
    randomize(&mut net, "post.", 70);
    let data: Vec<_> = (0..6).map(|i| pair(ShapeKind::ALL[i % 3], 50 + 2 * i as u64)).collect();
    let mut opt = AdamState::new(1e-4);
    let kl: Vec<f64> = (0..300)
        .map(|s| {
            let (x, y) = &data[s % data.len()];
            net.train_step(x, y, &mut opt, &LossWeights::default(), s as u64).unwrap().kl_com
        })
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (early, late) = (mean(&kl[..100]), mean(&kl[200..]));
    assert!(late < 0.5 * early, "{early} -> {late}");
}

#[test]
fn restored_parameters_must_match() {
    let net = toy();
    let again = Ricnet::from_params(&ModelConfig::toy(), net.params().clone()).unwrap();
    assert_eq!(again.params(), net.params());
    let other = ModelConfig {
        latent_dim: 4,
        ..ModelConfig::toy()
    };
    assert!(matches!(
        Ricnet::from_params(&other, net.params().clone()),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn raw_ablation_uses_identity_frame() {
    let net = Ricnet::new(&ModelConfig::toy().raw_ablation(), 1).unwrap();
    let (x, _) = pair(ShapeKind::Sphere, 13);
    assert_eq!(net.frame_for(&x).unwrap(), PoseFrame::identity());
    assert!(net.params().names().any(|n| n.starts_with("enc.raw.")));
}

#[test]
fn invalid_weights_rejected() {
    let mut net = toy();
    let (x, y) = pair(ShapeKind::Sphere, 14);
    let w = LossWeights {
        w_rec: -1.0,
        ..LossWeights::default()
    };
    assert!(net.train_step(&x, &y, &mut AdamState::new(1e-3), &w, 0).is_err());
}
