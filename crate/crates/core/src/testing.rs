//! Independent reference implementations used by the test suites.
//!
//! Nothing here calls into the code paths it is meant to check: the search
//! oracles are exhaustive loops, the gradient oracle is central finite
//! differences and the KL oracle is numerical quadrature.

use crate::geom::Point;
use crate::nn::{Tape, Tensor, Var};
use crate::Result;

/// FPS by recomputing every candidate's distance to the whole selected set at each step.
pub fn brute_fps(points: &[Point], m: usize) -> Vec<usize> {
    let n = points.len() as f64;
    let (mut cx, mut cy, mut cz) = (0.0, 0.0, 0.0);
    for p in points {
        cx += p.x;
        cy += p.y;
        cz += p.z;
    }
    let c = [cx / n, cy / n, cz / n];
    let d2 = |a: &Point, b: [f64; 3]| {
        let (x, y, z) = (a.x - b[0], a.y - b[1], a.z - b[2]);
        x * x + y * y + z * z
    };
    let lex_less = |i: usize, j: usize| {
        let (a, b) = (points[i], points[j]);
        (a.x, a.y, a.z, i) < (b.x, b.y, b.z, j)
    };
    let mut start = 0;
    for i in 1..points.len() {
        let (di, ds) = (d2(&points[i], c), d2(&points[start], c));
        if di < ds || (di == ds && lex_less(i, start)) {
            start = i;
        }
    }
    let mut sel = vec![start];
    while sel.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..points.len() {
            if sel.contains(&i) {
                continue;
            }
            let md = sel
                .iter()
                .map(|&s| d2(&points[i], [points[s].x, points[s].y, points[s].z]))
                .fold(f64::INFINITY, f64::min);
            best = match best {
                None => Some((i, md)),
                Some((b, bd)) if md > bd || (md == bd && lex_less(i, b)) => Some((i, md)),
                keep => keep,
            };
        }
        sel.push(best.expect("candidates remain").0);
    }
    sel
}

/// k-NN by sorting every other point by `(distance, index)`.
pub fn brute_knn(points: &[Point], r: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..points.len())
        .filter(|&i| i != r)
        .map(|i| ((points[i] - points[r]).norm_squared(), i))
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    all.into_iter().take(k).map(|x| x.1).collect()
}

fn min_sq(p: &Point, set: &[Point]) -> f64 {
    set.iter()
        .map(|q| {
            let d = p - q;
            d.x * d.x + d.y * d.y + d.z * d.z
        })
        .fold(f64::INFINITY, f64::min)
}

/// Double-loop Chamfer distance.
pub fn brute_chamfer(p: &[Point], q: &[Point]) -> f64 {
    let a: f64 = p.iter().map(|x| min_sq(x, q)).sum::<f64>() / p.len() as f64;
    let b: f64 = q.iter().map(|y| min_sq(y, p)).sum::<f64>() / q.len() as f64;
    a + b
}

/// Double-loop F-score.
pub fn brute_fscore(p: &[Point], q: &[Point], tau: f64) -> f64 {
    let close = |x: &Point, set: &[Point]| set.iter().any(|y| (x - y).norm_squared() <= tau * tau);
    let prec = p.iter().filter(|x| close(x, q)).count() as f64 / p.len() as f64;
    let rec = q.iter().filter(|y| close(y, p)).count() as f64 / q.len() as f64;
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}

fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `∫ p log(p/q)` for scalar Gaussians by composite Simpson over `μp ± 14σp`.
pub fn quad_kl(mp: f64, varp: f64, mq: f64, varq: f64) -> f64 {
    let sd = varp.sqrt();
    let (lo, hi) = (mp - 14.0 * sd, mp + 14.0 * sd);
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| {
        let p = normal_pdf(x, mp, varp);
        if p == 0.0 {
            return 0.0;
        }
        // log p − log q computed analytically to avoid underflow of q
        let log_ratio = -0.5 * (varp / varq).ln() - (x - mp).powi(2) / (2.0 * varp)
            + (x - mq).powi(2) / (2.0 * varq);
        p * log_ratio
    };
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

/// Relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-12)` per input.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub rel_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares tape gradients of the scalar `f(inputs)` with central differences at step `h`.
pub fn gradcheck(
    inputs: &[Tensor],
    h: f64,
    f: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<GradCheck> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        Ok(t.value(o).data()[0])
    };

    let mut rel_errors = Vec::with_capacity(inputs.len());
    for (k, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = grads
            .get(*v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        let mut numeric = vec![0.0; inputs[k].len()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[e] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[e] -= h;
            *slot = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        rel_errors.push(diff / na.max(nn).max(1e-12));
    }
    Ok(GradCheck { rel_errors })
}

/// Deterministic pseudo-random tensor with entries in `[-scale, scale]`.
pub fn random_tensor(shape: Vec<usize>, seed: u64, scale: f64) -> Tensor {
    use rand::Rng;
    let mut rng = crate::seed::rng(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..=scale)).collect())
        .expect("finite")
}
