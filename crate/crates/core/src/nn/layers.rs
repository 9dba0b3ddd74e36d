use rand::Rng;

use super::{ParamStore, Tape, Tensor, Var, LEAKY_SLOPE};
use crate::Result;

/// Affine layer `[N, cin] → [N, cout]` whose weights live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: String,
    pub bias: String,
    pub cin: usize,
    pub cout: usize,
}

impl Linear {
    /// Registers Glorot-initialised weights and zero bias under `name.w` / `name.b`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let layer = Self::names(name, cin, cout);
        store.insert(&layer.weight, ParamStore::glorot(cin, cout, rng))?;
        store.insert(&layer.bias, Tensor::zeros(vec![cout]))?;
        Ok(layer)
    }

    /// Registers an all-zero layer.
    pub fn zeros(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Result<Self> {
        let layer = Self::names(name, cin, cout);
        store.insert(&layer.weight, Tensor::zeros(vec![cin, cout]))?;
        store.insert(&layer.bias, Tensor::zeros(vec![cout]))?;
        Ok(layer)
    }

    fn names(name: &str, cin: usize, cout: usize) -> Self {
        Self {
            weight: format!("{name}.w"),
            bias: format!("{name}.b"),
            cin,
            cout,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, &self.weight)?;
        let b = tape.param(store, &self.bias)?;
        tape.affine(x, w, b)
    }
}

/// Stack of [`Linear`] layers with leaky ReLU between them (and after the
/// last one when `activate_last`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activate_last: bool,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        activate_last: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            activate_last,
        })
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.cout)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: Var) -> Result<Var> {
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, store, x)?;
            if i + 1 < n || self.activate_last {
                x = tape.leaky_relu(x, LEAKY_SLOPE)?;
            }
        }
        Ok(x)
    }
}
