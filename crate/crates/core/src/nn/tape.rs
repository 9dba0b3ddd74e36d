use std::collections::{BTreeMap, HashMap};

use super::gemm::gemm;
use super::{ParamStore, Tensor};
use crate::metrics::chamfer_flat;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    LeakyRelu { x: Var, slope: f64 },
    ConcatCols { parts: Vec<Var> },
    ConcatRows { parts: Vec<Var> },
    GatherRows { x: Var, idx: Vec<usize> },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Reshape { x: Var },
    Conv1dCyclic { x: Var, kernel: Var, bias: Var, group: usize },
    MaxGroups { x: Var, argmax: Vec<usize> },
    SoftmaxGroups { group: usize },
    WeightedSumGroups { w: Var, v: Var, group: usize },
    ScaleGate { logits: Vec<Var>, feats: Vec<Var> },
    Reparam { mean: Var, logvar: Var, eps: Vec<f64> },
    KlStandard { mean: Var, logvar: Var },
    KlDiag { mp: Var, lvp: Var, mq: Var, lvq: Var },
    Chamfer { a: Var, b: Var, nn_a: Vec<usize>, nn_b: Vec<usize> },
    Dot { x: Var, coeffs: Vec<f64> },
    WeightedSum { terms: Vec<(f64, Var)> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Affine { .. } => "affine",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::ConcatCols { .. } => "concat",
            Op::ConcatRows { .. } => "concat_rows",
            Op::GatherRows { .. } => "gather_rows",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Reshape { .. } => "reshape",
            Op::Conv1dCyclic { .. } => "conv1d_cyclic",
            Op::MaxGroups { .. } => "maxpool",
            Op::SoftmaxGroups { .. } => "softmax",
            Op::WeightedSumGroups { .. } => "weighted_sum_groups",
            Op::ScaleGate { .. } => "scale_gate",
            Op::Reparam { .. } => "sample_latent",
            Op::KlStandard { .. } => "kl_to_standard",
            Op::KlDiag { .. } => "kl_diag",
            Op::Chamfer { .. } => "chamfer",
            Op::Dot { .. } => "dot",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Parent of a softmax node (kept outside `Op` so backward can reuse the output).
    aux: Option<Var>,
}

/// Ordered record of executed ops. Backward walks it in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape_err(op: &str, msg: impl std::fmt::Display) -> Error {
    Error::Shape(format!("{op}: {msg}"))
}

fn check2(t: &Tensor, op: &str) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(shape_err(op, format!("expected a 2-D tensor, got {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name().into()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            aux: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for the named parameter; repeated calls return the same `Var`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?
            .clone();
        let v = self.leaf(t);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Names of the parameters pulled onto this tape.
    pub fn param_vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Gradients of every pulled parameter by name (zeros where none flowed).
    pub fn param_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(name, &v)| {
                let shape = self.value(v).shape().to_vec();
                let data = grads
                    .get(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; self.value(v).len()]);
                (name.clone(), Tensor::from_parts_unchecked(shape, data))
            })
            .collect()
    }

    /// `x·w + b` for `x: [N, Cin]`, `w: [Cin, Cout]`, `b: [Cout]` (or `[1, Cout]`).
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, cin) = check2(self.value(x), "affine")?;
        let (wi, cout) = check2(self.value(w), "affine")?;
        if wi != cin {
            return Err(shape_err("affine", format!("x has {cin} columns, W has {wi} rows")));
        }
        if self.value(b).len() != cout {
            return Err(shape_err(
                "affine",
                format!("bias has {} entries, expected {cout}", self.value(b).len()),
            ));
        }
        let mut out = Vec::with_capacity(n * cout);
        let bias = self.value(b).data();
        for _ in 0..n {
            out.extend_from_slice(bias);
        }
        gemm(n, cin, cout, self.value(x).data(), false, self.value(w).data(), false, &mut out, 1.0);
        let rg = self.rg(&[x, w, b]);
        self.push(Tensor::from_parts_unchecked(vec![n, cout], out), Op::Affine { x, w, b }, rg)
    }

    /// Elementwise `max(x, slope·x)`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let t = self.value(x);
        let data = t
            .data()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let value = Tensor::from_parts_unchecked(t.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push(value, Op::LeakyRelu { x, slope }, rg)
    }

    /// Concatenation along the channel (column) axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs"));
        }
        let rows = check2(self.value(parts[0]), "concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = check2(self.value(p), "concat")?;
            if r != rows {
                return Err(shape_err("concat", format!("row counts {rows} and {r} differ")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let rg = self.rg(parts);
        self.push(
            Tensor::from_parts_unchecked(vec![rows, total], out),
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            rg,
        )
    }

    /// Concatenation along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat_rows", "no inputs"));
        }
        let cols = check2(self.value(parts[0]), "concat_rows")?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = check2(self.value(p), "concat_rows")?;
            if c != cols {
                return Err(shape_err("concat_rows", format!("widths {cols} and {c} differ")));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        self.push(
            Tensor::from_parts_unchecked(vec![rows, cols], out),
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
            rg,
        )
    }

    /// Row `i` of the output is row `idx[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = check2(self.value(x), "gather_rows")?;
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(shape_err("gather_rows", format!("row {i} out of {rows}")));
            }
            out.extend_from_slice(self.value(x).row_slice(i));
        }
        let rg = self.rg(&[x]);
        self.push(
            Tensor::from_parts_unchecked(vec![idx.len(), cols], out),
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            rg,
        )
    }

    fn binary(&mut self, a: Var, b: Var, sign: f64, name: &str) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + sign * y)
            .collect();
        let value = Tensor::from_parts_unchecked(ta.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        let op = if sign > 0.0 { Op::Add { a, b } } else { Op::Sub { a, b } };
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 1.0, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, -1.0, "sub")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.len() {
            return Err(shape_err("reshape", format!("{:?} → {shape:?}", t.shape())));
        }
        let value = Tensor::from_parts_unchecked(shape, t.data().to_vec());
        let rg = self.rg(&[x]);
        self.push(value, Op::Reshape { x }, rg)
    }

    /// Stride-1 convolution along cyclic groups of `group` consecutive rows.
    ///
    /// `x: [B·group, C]`, `kernel: [w, C, C']` with odd `w`, `bias: [C']`.
    /// Output row `t` of a group sees input rows `t − w/2 ..= t + w/2` modulo `group`.
    pub fn conv1d_cyclic(&mut self, x: Var, kernel: Var, bias: Var, group: usize) -> Result<Var> {
        let (rows, c) = check2(self.value(x), "conv1d_cyclic")?;
        let ks = self.value(kernel).shape().to_vec();
        if ks.len() != 3 || ks[1] != c {
            return Err(shape_err(
                "conv1d_cyclic",
                format!("kernel {ks:?} does not match {c} input channels"),
            ));
        }
        let (w, cout) = (ks[0], ks[2]);
        if w % 2 == 0 {
            return Err(shape_err("conv1d_cyclic", format!("window {w} is even")));
        }
        if group == 0 || rows % group != 0 {
            return Err(shape_err(
                "conv1d_cyclic",
                format!("{rows} rows are not a whole number of groups of {group}"),
            ));
        }
        if self.value(bias).len() != cout {
            return Err(shape_err("conv1d_cyclic", "bias width mismatch"));
        }
        let mut out = Vec::with_capacity(rows * cout);
        let bv = self.value(bias).data();
        for _ in 0..rows {
            out.extend_from_slice(bv);
        }
        let xv = self.value(x).data();
        let kv = self.value(kernel).data();
        let mut shifted = vec![0.0; rows * c];
        for o in 0..w {
            shift_rows(xv, c, group, o as isize - (w / 2) as isize, &mut shifted);
            gemm(rows, c, cout, &shifted, false, &kv[o * c * cout..(o + 1) * c * cout], false, &mut out, 1.0);
        }
        let rg = self.rg(&[x, kernel, bias]);
        self.push(
            Tensor::from_parts_unchecked(vec![rows, cout], out),
            Op::Conv1dCyclic {
                x,
                kernel,
                bias,
                group,
            },
            rg,
        )
    }

    /// Per-channel max over groups of `group` consecutive rows: `[B·group, C] → [B, C]`.
    /// The gradient goes to the first arg-max row.
    pub fn max_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        let (rows, c) = check2(self.value(x), "maxpool")?;
        if group == 0 || rows % group != 0 {
            return Err(shape_err("maxpool", format!("{rows} rows, group {group}")));
        }
        let b = rows / group;
        let xv = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; b * c];
        let mut argmax = vec![0usize; b * c];
        for g in 0..b {
            for t in 0..group {
                let r = g * group + t;
                for ch in 0..c {
                    let v = xv[r * c + ch];
                    if v > out[g * c + ch] {
                        out[g * c + ch] = v;
                        argmax[g * c + ch] = r;
                    }
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::from_parts_unchecked(vec![b, c], out), Op::MaxGroups { x, argmax }, rg)
    }

    /// Max over all rows: `[k, C] → [1, C]`.
    pub fn maxpool_rows(&mut self, x: Var) -> Result<Var> {
        let rows = check2(self.value(x), "maxpool")?.0;
        self.max_groups(x, rows)
    }

    /// Softmax of a `[B·group, 1]` column within each group of rows.
    pub fn softmax_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        let (rows, c) = check2(self.value(x), "softmax")?;
        if c != 1 || group == 0 || rows % group != 0 {
            return Err(shape_err("softmax", format!("[{rows}, {c}] with group {group}")));
        }
        let xv = self.value(x).data();
        let mut out = vec![0.0; rows];
        for (src, dst) in xv.chunks_exact(group).zip(out.chunks_exact_mut(group)) {
            let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (s - m).exp();
                z += *d;
            }
            dst.iter_mut().for_each(|d| *d /= z);
        }
        let rg = self.rg(&[x]);
        let v = self.push(
            Tensor::from_parts_unchecked(vec![rows, 1], out),
            Op::SoftmaxGroups { group },
            rg,
        )?;
        self.nodes[v.0].aux = Some(x);
        Ok(v)
    }

    /// `out[b] = Σ_t w[b·group + t] · v[b·group + t]` for `w: [B·group, 1]`, `v: [B·group, C]`.
    pub fn weighted_sum_groups(&mut self, w: Var, v: Var, group: usize) -> Result<Var> {
        let (wr, wc) = check2(self.value(w), "weighted_sum_groups")?;
        let (vr, c) = check2(self.value(v), "weighted_sum_groups")?;
        if wc != 1 || wr != vr || group == 0 || vr % group != 0 {
            return Err(shape_err(
                "weighted_sum_groups",
                format!("weights [{wr}, {wc}], values [{vr}, {c}], group {group}"),
            ));
        }
        let b = vr / group;
        let (wv, vv) = (self.value(w).data(), self.value(v).data());
        let mut out = vec![0.0; b * c];
        for r in 0..vr {
            let g = r / group;
            let wt = wv[r];
            for ch in 0..c {
                out[g * c + ch] += wt * vv[r * c + ch];
            }
        }
        let rg = self.rg(&[w, v]);
        self.push(
            Tensor::from_parts_unchecked(vec![b, c], out),
            Op::WeightedSumGroups { w, v, group },
            rg,
        )
    }

    /// Elementwise softmax gate across scales: `Σ_s softmax_s(logits)[e] · feats_s[e]`.
    pub fn scale_gate(&mut self, logits: &[Var], feats: &[Var]) -> Result<Var> {
        if logits.is_empty() || logits.len() != feats.len() {
            return Err(shape_err(
                "scale_gate",
                format!("{} logit and {} feature inputs", logits.len(), feats.len()),
            ));
        }
        let shape = self.value(feats[0]).shape().to_vec();
        for &v in logits.iter().chain(feats) {
            if self.value(v).shape() != shape.as_slice() {
                return Err(shape_err(
                    "scale_gate",
                    format!("{:?} vs {shape:?}", self.value(v).shape()),
                ));
            }
        }
        let ls: Vec<&[f64]> = logits.iter().map(|&v| self.value(v).data()).collect();
        let gates = softmax_over_scales(&ls);
        let n = self.value(feats[0]).len();
        let mut out = vec![0.0; n];
        for (gate, &f) in gates.iter().zip(feats) {
            for ((o, g), x) in out.iter_mut().zip(gate).zip(self.value(f).data()) {
                *o += g * x;
            }
        }
        let mut all = logits.to_vec();
        all.extend_from_slice(feats);
        let rg = self.rg(&all);
        self.push(
            Tensor::from_parts_unchecked(shape, out),
            Op::ScaleGate {
                logits: logits.to_vec(),
                feats: feats.to_vec(),
            },
            rg,
        )
    }

    /// Reparameterised draw `mean + exp(½·logvar) ⊙ eps`.
    pub fn reparam(&mut self, mean: Var, logvar: Var, eps: &[f64]) -> Result<Var> {
        let (m, lv) = (self.value(mean), self.value(logvar));
        if m.shape() != lv.shape() || m.len() != eps.len() {
            return Err(shape_err("sample_latent", "mean, log-variance and noise differ in size"));
        }
        let data = m
            .data()
            .iter()
            .zip(lv.data())
            .zip(eps)
            .map(|((mu, l), e)| mu + (0.5 * l).exp() * e)
            .collect();
        let value = Tensor::from_parts_unchecked(m.shape().to_vec(), data);
        let rg = self.rg(&[mean, logvar]);
        self.push(
            value,
            Op::Reparam {
                mean,
                logvar,
                eps: eps.to_vec(),
            },
            rg,
        )
    }

    /// `Σ ½(μ² + σ² − 1 − log σ²)`.
    pub fn kl_to_standard(&mut self, mean: Var, logvar: Var) -> Result<Var> {
        let (m, lv) = (self.value(mean), self.value(logvar));
        if m.shape() != lv.shape() {
            return Err(shape_err("kl_to_standard", "mean and log-variance differ in shape"));
        }
        let kl = super::latent::kl_standard_terms(m.data(), lv.data());
        let rg = self.rg(&[mean, logvar]);
        self.push(Tensor::from_parts_unchecked(vec![1], vec![kl]), Op::KlStandard { mean, logvar }, rg)
    }

    /// `KL[N(mp, e^lvp) ‖ N(mq, e^lvq)]` for diagonal Gaussians.
    pub fn kl_diag(&mut self, mp: Var, lvp: Var, mq: Var, lvq: Var) -> Result<Var> {
        let shape = self.value(mp).shape().to_vec();
        for v in [lvp, mq, lvq] {
            if self.value(v).shape() != shape.as_slice() {
                return Err(shape_err("kl_diag", "latent dimensions differ"));
            }
        }
        let kl = super::latent::kl_diag_terms(
            self.value(mp).data(),
            self.value(lvp).data(),
            self.value(mq).data(),
            self.value(lvq).data(),
        );
        let rg = self.rg(&[mp, lvp, mq, lvq]);
        self.push(Tensor::from_parts_unchecked(vec![1], vec![kl]), Op::KlDiag { mp, lvp, mq, lvq }, rg)
    }

    /// Symmetric Chamfer distance with squared distances between `[M, 3]` and `[N, 3]` sets.
    pub fn chamfer(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = check2(self.value(a), "chamfer")?;
        let (rb, cb) = check2(self.value(b), "chamfer")?;
        if ca != 3 || cb != 3 || ra == 0 || rb == 0 {
            return Err(shape_err("chamfer", format!("[{ra}, {ca}] vs [{rb}, {cb}]")));
        }
        let (value, nn_a, nn_b) = chamfer_flat(self.value(a).data(), self.value(b).data());
        let rg = self.rg(&[a, b]);
        self.push(
            Tensor::from_parts_unchecked(vec![1], vec![value]),
            Op::Chamfer { a, b, nn_a, nn_b },
            rg,
        )
    }

    /// `Σ_i x_i · coeffs_i`.
    pub fn dot(&mut self, x: Var, coeffs: &[f64]) -> Result<Var> {
        if self.value(x).len() != coeffs.len() {
            return Err(shape_err("dot", "coefficient count mismatch"));
        }
        let v = self.value(x).data().iter().zip(coeffs).map(|(a, b)| a * b).sum();
        let rg = self.rg(&[x]);
        self.push(
            Tensor::from_parts_unchecked(vec![1], vec![v]),
            Op::Dot {
                x,
                coeffs: coeffs.to_vec(),
            },
            rg,
        )
    }

    /// `Σ weight · scalar` over scalar vars.
    pub fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Result<Var> {
        let mut total = 0.0;
        for &(w, v) in terms {
            if self.value(v).len() != 1 {
                return Err(shape_err("weighted_sum", "terms must be scalars"));
            }
            total += w * self.value(v).data()[0];
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.1).collect();
        let rg = self.rg(&vars);
        self.push(
            Tensor::from_parts_unchecked(vec![1], vec![total]),
            Op::WeightedSum {
                terms: terms.to_vec(),
            },
            rg,
        )
    }

    /// Reverse pass from a scalar.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.backprop_node(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for g in grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("backward".into()));
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            &Op::Affine { x, w, b } => {
                let (n, cin) = (val(x).shape()[0], val(x).shape()[1]);
                let cout = val(w).shape()[1];
                if let Some(gx) = slot(nodes, grads, x) {
                    gemm(n, cout, cin, g, false, val(w).data(), true, gx, 1.0);
                }
                if let Some(gw) = slot(nodes, grads, w) {
                    gemm(cin, n, cout, val(x).data(), true, g, false, gw, 1.0);
                }
                if let Some(gb) = slot(nodes, grads, b) {
                    for row in g.chunks_exact(cout) {
                        for (a, r) in gb.iter_mut().zip(row) {
                            *a += r;
                        }
                    }
                }
            }
            &Op::LeakyRelu { x, slope } => {
                let xv = val(x).data();
                if let Some(gx) = slot(nodes, grads, x) {
                    for ((a, &gi), &xi) in gx.iter_mut().zip(g).zip(xv) {
                        *a += if xi >= 0.0 { gi } else { slope * gi };
                    }
                }
            }
            Op::ConcatCols { parts } => {
                let rows = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut off = 0;
                for &p in parts {
                    let c = val(p).shape()[1];
                    if let Some(gp) = slot(nodes, grads, p) {
                        for r in 0..rows {
                            for ch in 0..c {
                                gp[r * c + ch] += g[r * total + off + ch];
                            }
                        }
                    }
                    off += c;
                }
            }
            Op::ConcatRows { parts } => {
                let mut off = 0;
                for &p in parts {
                    let len = val(p).len();
                    if let Some(gp) = slot(nodes, grads, p) {
                        for (a, b) in gp.iter_mut().zip(&g[off..off + len]) {
                            *a += b;
                        }
                    }
                    off += len;
                }
            }
            Op::GatherRows { x, idx } => {
                let c = val(*x).shape()[1];
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (r, &src) in idx.iter().enumerate() {
                        for ch in 0..c {
                            gx[src * c + ch] += g[r * c + ch];
                        }
                    }
                }
            }
            &Op::Add { a, b } | &Op::Sub { a, b } => {
                let sign = if matches!(node.op, Op::Add { .. }) { 1.0 } else { -1.0 };
                if let Some(ga) = slot(nodes, grads, a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = slot(nodes, grads, b) {
                    gb.iter_mut().zip(g).for_each(|(x, y)| *x += sign * y);
                }
            }
            &Op::Reshape { x } => {
                if let Some(gx) = slot(nodes, grads, x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            &Op::Conv1dCyclic {
                x,
                kernel,
                bias,
                group,
            } => {
                let (rows, c) = (val(x).shape()[0], val(x).shape()[1]);
                let ks = val(kernel).shape();
                let (w, cout) = (ks[0], ks[2]);
                let xv = val(x).data().to_vec();
                let kv = val(kernel).data().to_vec();
                let mut shifted = vec![0.0; rows * c];
                if self.nodes[kernel.0].requires_grad {
                    let gk = slot(nodes, grads, kernel).expect("requires grad");
                    for o in 0..w {
                        shift_rows(&xv, c, group, o as isize - (w / 2) as isize, &mut shifted);
                        gemm(c, rows, cout, &shifted, true, g, false, &mut gk[o * c * cout..(o + 1) * c * cout], 1.0);
                    }
                }
                if self.nodes[x.0].requires_grad {
                    let mut dshift = vec![0.0; rows * c];
                    let gx = slot(nodes, grads, x).expect("requires grad");
                    for o in 0..w {
                        gemm(rows, cout, c, g, false, &kv[o * c * cout..(o + 1) * c * cout], true, &mut dshift, 0.0);
                        // shifted row r came from input row r + s (cyclic); scatter back
                        let s = o as isize - (w / 2) as isize;
                        for r in 0..rows {
                            let src = cyclic_src(r, group, s);
                            for ch in 0..c {
                                gx[src * c + ch] += dshift[r * c + ch];
                            }
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, bias) {
                    for row in g.chunks_exact(cout) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::MaxGroups { x, argmax } => {
                let c = val(*x).shape()[1];
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (e, &r) in argmax.iter().enumerate() {
                        gx[r * c + e % c] += g[e];
                    }
                }
            }
            &Op::SoftmaxGroups { group } => {
                let x = node.aux.expect("softmax parent");
                let y = node.value.data();
                if let Some(gx) = slot(nodes, grads, x) {
                    for ((ys, gs), dst) in y
                        .chunks_exact(group)
                        .zip(g.chunks_exact(group))
                        .zip(gx.chunks_exact_mut(group))
                    {
                        let dotp: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                        for ((d, &yi), &gi) in dst.iter_mut().zip(ys).zip(gs) {
                            *d += yi * (gi - dotp);
                        }
                    }
                }
            }
            &Op::WeightedSumGroups { w, v, group } => {
                let c = val(v).shape()[1];
                let rows = val(v).shape()[0];
                let (wv, vv) = (val(w).data().to_vec(), val(v).data());
                if let Some(gw) = slot(nodes, grads, w) {
                    for r in 0..rows {
                        let gb = &g[(r / group) * c..(r / group + 1) * c];
                        gw[r] += gb.iter().zip(&vv[r * c..(r + 1) * c]).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                if let Some(gv) = slot(nodes, grads, v) {
                    for r in 0..rows {
                        let gb = &g[(r / group) * c..(r / group + 1) * c];
                        for ch in 0..c {
                            gv[r * c + ch] += wv[r] * gb[ch];
                        }
                    }
                }
            }
            Op::ScaleGate { logits, feats } => {
                let ls: Vec<&[f64]> = logits.iter().map(|&v| val(v).data()).collect();
                let gates = softmax_over_scales(&ls);
                let out = node.value.data();
                for (s, (&lv, &fv)) in logits.iter().zip(feats).enumerate() {
                    let fs = val(fv).data().to_vec();
                    if let Some(gl) = slot(nodes, grads, lv) {
                        for e in 0..out.len() {
                            gl[e] += gates[s][e] * g[e] * (fs[e] - out[e]);
                        }
                    }
                    if let Some(gf) = slot(nodes, grads, fv) {
                        for e in 0..out.len() {
                            gf[e] += gates[s][e] * g[e];
                        }
                    }
                }
            }
            Op::Reparam { mean, logvar, eps } => {
                let lv = val(*logvar).data().to_vec();
                if let Some(gm) = slot(nodes, grads, *mean) {
                    gm.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                if let Some(gl) = slot(nodes, grads, *logvar) {
                    for e in 0..gl.len() {
                        gl[e] += g[e] * eps[e] * 0.5 * (0.5 * lv[e]).exp();
                    }
                }
            }
            &Op::KlStandard { mean, logvar } => {
                let (m, lv) = (val(mean).data().to_vec(), val(logvar).data().to_vec());
                if let Some(gm) = slot(nodes, grads, mean) {
                    for e in 0..m.len() {
                        gm[e] += g[0] * m[e];
                    }
                }
                if let Some(gl) = slot(nodes, grads, logvar) {
                    for e in 0..lv.len() {
                        gl[e] += g[0] * 0.5 * (lv[e].exp() - 1.0);
                    }
                }
            }
            &Op::KlDiag { mp, lvp, mq, lvq } => {
                let (a, la, b, lb) = (
                    val(mp).data().to_vec(),
                    val(lvp).data().to_vec(),
                    val(mq).data().to_vec(),
                    val(lvq).data().to_vec(),
                );
                let n = a.len();
                let inv_q: Vec<f64> = lb.iter().map(|l| (-l).exp()).collect();
                if let Some(gx) = slot(nodes, grads, mp) {
                    for e in 0..n {
                        gx[e] += g[0] * (a[e] - b[e]) * inv_q[e];
                    }
                }
                if let Some(gx) = slot(nodes, grads, mq) {
                    for e in 0..n {
                        gx[e] -= g[0] * (a[e] - b[e]) * inv_q[e];
                    }
                }
                if let Some(gx) = slot(nodes, grads, lvp) {
                    for e in 0..n {
                        gx[e] += g[0] * 0.5 * (la[e].exp() * inv_q[e] - 1.0);
                    }
                }
                if let Some(gx) = slot(nodes, grads, lvq) {
                    for e in 0..n {
                        let d = a[e] - b[e];
                        gx[e] += g[0] * 0.5 * (1.0 - (la[e].exp() + d * d) * inv_q[e]);
                    }
                }
            }
            Op::Chamfer { a, b, nn_a, nn_b } => {
                let (av, bv) = (val(*a).data().to_vec(), val(*b).data().to_vec());
                let (na, nb) = (nn_a.len() as f64, nn_b.len() as f64);
                let mut ga = self.nodes[a.0].requires_grad.then(|| vec![0.0; av.len()]);
                let mut gb = self.nodes[b.0].requires_grad.then(|| vec![0.0; bv.len()]);
                for (i, &j) in nn_a.iter().enumerate() {
                    for k in 0..3 {
                        let d = 2.0 * (av[i * 3 + k] - bv[j * 3 + k]) / na * g[0];
                        if let Some(ga) = ga.as_mut() {
                            ga[i * 3 + k] += d;
                        }
                        if let Some(gb) = gb.as_mut() {
                            gb[j * 3 + k] -= d;
                        }
                    }
                }
                for (j, &i) in nn_b.iter().enumerate() {
                    for k in 0..3 {
                        let d = 2.0 * (bv[j * 3 + k] - av[i * 3 + k]) / nb * g[0];
                        if let Some(gb) = gb.as_mut() {
                            gb[j * 3 + k] += d;
                        }
                        if let Some(ga) = ga.as_mut() {
                            ga[i * 3 + k] -= d;
                        }
                    }
                }
                if let (Some(src), Some(dst)) = (ga, slot(nodes, grads, *a)) {
                    dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                }
                if let (Some(src), Some(dst)) = (gb, slot(nodes, grads, *b)) {
                    dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                }
            }
            Op::Dot { x, coeffs } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().zip(coeffs).for_each(|(a, c)| *a += g[0] * c);
                }
            }
            Op::WeightedSum { terms } => {
                for &(w, v) in terms {
                    if let Some(gv) = slot(nodes, grads, v) {
                        gv[0] += w * g[0];
                    }
                }
            }
        }
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

/// Input row feeding output row `r` for a cyclic shift `s` within groups.
#[inline]
fn cyclic_src(r: usize, group: usize, s: isize) -> usize {
    let base = r - r % group;
    let t = (r % group) as isize + s;
    base + t.rem_euclid(group as isize) as usize
}

fn shift_rows(x: &[f64], c: usize, group: usize, s: isize, out: &mut [f64]) {
    let rows = x.len() / c;
    for r in 0..rows {
        let src = cyclic_src(r, group, s);
        out[r * c..(r + 1) * c].copy_from_slice(&x[src * c..(src + 1) * c]);
    }
}

/// Elementwise softmax across `S` equally sized logit buffers; returns `S` gate buffers.
pub fn softmax_over_scales(logits: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = logits.first().map_or(0, |l| l.len());
    let mut gates = vec![vec![0.0; n]; logits.len()];
    for e in 0..n {
        let m = logits.iter().map(|l| l[e]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (s, l) in logits.iter().enumerate() {
            gates[s][e] = (l[e] - m).exp();
            z += gates[s][e];
        }
        for gate in gates.iter_mut() {
            gate[e] /= z;
        }
    }
    gates
}
