use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Softplus => tape.softplus(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add_uniform(&format!("{name}.w"), fan_in, fan_out, fan_in, rng)?;
        let bias = store.add_uniform(&format!("{name}.b"), 1, fan_out, fan_in, rng)?;
        Ok(Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    /// `x · W` without the bias.
    pub fn project(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        tape.matmul(x, w)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let xw = self.project(tape, store, x)?;
        let b = tape.param(store, self.bias);
        tape.add_row(xw, b)
    }
}

/// Stack of affine layers; `hidden` after every layer but the last,
/// `output` after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    /// `widths` lists the input width followed by every layer's output width.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Parameter(format!("bad layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| Linear::new(store, &format!("{name}.{k}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Mlp {
            layers,
            hidden,
            output,
        })
    }

    /// Scalar parameter count for the given widths.
    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let width = tape.shape(x).1;
        if width != self.input_width() {
            return Err(Error::Dimension(format!(
                "mlp expects {} input columns, got {width}",
                self.input_width()
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            let act = if k == last { self.output } else { self.hidden };
            h = act.apply(tape, h);
        }
        Ok(h)
    }

    /// Forward pass on a fresh tape, returning only the value.
    pub fn eval(&self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = self.forward(&mut tape, store, xv)?;
        Ok(tape.value(y).clone())
    }
}
