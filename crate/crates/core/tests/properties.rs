use proptest::prelude::*;
use ricnet_core::geom::{
    apply_transform, crop_partial, fps, knn_points, parse_xyz, random_rigid, to_xyz_string, Point,
    PointCloud,
};
use ricnet_core::metrics::{chamfer, fscore};
use ricnet_core::nn::{kl_diag, GaussianLatent};
use ricnet_core::ri::{compute_lras, irif_table};
use ricnet_core::seed;
use ricnet_core::testing::{brute_chamfer, brute_fps, brute_knn, brute_fscore, quad_kl};

fn cloud(min: usize, max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), min..max).prop_map(|v| {
        PointCloud::new(v.into_iter().map(|(x, y, z)| Point::new(x, y, z)).collect()).unwrap()
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fps_matches_exhaustive_oracle(c in cloud(4, 60), frac in 0.1..1.0f64) {
        let m = ((c.len() as f64 * frac).ceil() as usize).max(1);
        let got = fps(&c, m).unwrap();
        prop_assert_eq!(&got, &brute_fps(c.points(), m));
        let mut seen = got.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), m);
        prop_assert_eq!(&fps(&c, m.div_ceil(2)).unwrap()[..], &got[..m.div_ceil(2)]);
    }

    #[test]
    fn knn_matches_exhaustive_oracle(c in cloud(3, 60), r in any::<prop::sample::Index>(), kf in 0.0..1.0f64) {
        let r = r.index(c.len());
        let k = 1 + ((c.len() - 2) as f64 * kf) as usize;
        let got = knn_points(c.points(), r, k).unwrap();
        prop_assert_eq!(got.reference_idx, r);
        prop_assert!(!got.neighbor_idxs.contains(&r));
        prop_assert_eq!(got.neighbor_idxs, brute_knn(c.points(), r, k));
    }

    #[test]
    fn chamfer_is_symmetric_and_matches_oracle(p in cloud(1, 40), q in cloud(1, 40)) {
        let d = chamfer(&p, &q);
        prop_assert!(d >= 0.0);
        prop_assert!(rel_close(d, brute_chamfer(p.points(), q.points()), 1e-12));
        prop_assert_eq!(d, chamfer(&q, &p));
        prop_assert_eq!(chamfer(&p, &p), 0.0);
    }

    #[test]
    fn chamfer_is_rigid_invariant(p in cloud(1, 40), q in cloud(1, 40), s in any::<u64>()) {
        let t = random_rigid(s, 0.5);
        let moved = chamfer(&apply_transform(&p, &t), &apply_transform(&q, &t));
        prop_assert!(rel_close(moved, chamfer(&p, &q), 1e-9));
    }

    #[test]
    fn fscore_is_bounded_and_matches_oracle(p in cloud(1, 40), q in cloud(1, 40), tau in 0.01..1.5f64) {
        let f = fscore(&p, &q, tau).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(rel_close(f, brute_fscore(p.points(), q.points(), tau), 1e-12));
        prop_assert_eq!(fscore(&p, &p, tau).unwrap(), 1.0);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(
        m in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -2.0..2.0f64, -2.0..2.0f64), 1..8)
    ) {
        let p = GaussianLatent::new(m.iter().map(|x| x.0).collect(), m.iter().map(|x| x.2).collect()).unwrap();
        let q = GaussianLatent::new(m.iter().map(|x| x.1).collect(), m.iter().map(|x| x.3).collect()).unwrap();
        prop_assert!(kl_diag(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_diag(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn transform_inverse_round_trips(c in cloud(1, 30), s in any::<u64>()) {
        let t = random_rigid(s, 0.5);
        prop_assert!((t.rotation().determinant() - 1.0).abs() < 1e-12);
        let back = apply_transform(&apply_transform(&c, &t), &t.inverse());
        for (a, b) in back.points().iter().zip(c.points()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn xyz_text_round_trips_exactly(c in cloud(1, 30)) {
        let back = parse_xyz(&to_xyz_string(&c), "mem.xyz".as_ref()).unwrap();
        prop_assert_eq!(back.points(), c.points());
    }

    #[test]
    fn crop_keeps_ceiling_fraction(c in cloud(8, 60), s in any::<u64>(), f in 0.5..1.0f64) {
        let x = crop_partial(&c, s, f).unwrap();
        prop_assert_eq!(x.len(), ((f * c.len() as f64).ceil() as usize).min(c.len()));
        prop_assert!(x.points().iter().all(|p| c.points().contains(p)));
    }

    #[test]
    fn seed_derivation_is_a_function_of_its_inputs(b in any::<u64>(), t in any::<u64>()) {
        prop_assert_eq!(seed::derive(b, &[t]), seed::derive(b, &[t]));
        prop_assert_ne!(seed::derive(b, &[t]), seed::derive(b, &[t, 0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn irif_is_invariant_under_proper_motions(c in cloud(48, 80), s in any::<u64>()) {
        let t = random_rigid(s, 0.5);
        let moved = apply_transform(&c, &t);
        let refs = fps(&c, 8).unwrap();
        let a = irif_table(&c, &compute_lras(&c, 16).unwrap(), &refs, 12).unwrap();
        let b = irif_table(&moved, &compute_lras(&moved, 16).unwrap(), &refs, 12).unwrap();
        for ((ra, ta), (rb, tb)) in a.iter().zip(&b) {
            prop_assert_eq!(ra, rb);
            for (x, y) in ta.iter().zip(tb) {
                for (u, v) in x.to_array().iter().zip(y.to_array()) {
                    prop_assert!((u - v).abs() < 1e-6, "{} vs {}", u, v);
                }
            }
        }
    }

    #[test]
    fn kl_agrees_with_quadrature(mp in -2.0..2.0f64, mq in -2.0..2.0f64, lp in -1.5..1.5f64, lq in -1.5..1.5f64) {
        let p = GaussianLatent::new(vec![mp], vec![lp]).unwrap();
        let q = GaussianLatent::new(vec![mq], vec![lq]).unwrap();
        let oracle = quad_kl(mp, lp.exp(), mq, lq.exp());
        prop_assert!((kl_diag(&p, &q).unwrap() - oracle).abs() < 1e-6);
    }
}
