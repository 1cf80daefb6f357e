//! Parameter containers for MLPs and GIN encoders.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Anything holding named parameter tensors. Visiting order is fixed, and
/// the names match those registered on the tape by the corresponding
/// `bind` method.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Array2<f64>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Array2<f64>));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, a| n += a.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
}

/// Affine map `x W + b` with `W: in x out` and `b: 1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Linear {
            weight: glorot(input, output, rng),
            bias: Array2::zeros((1, output)),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array2::zeros((input, output)),
            bias: Array2::zeros((1, output)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> BoundLinear {
        BoundLinear {
            weight: tape.param(join(prefix, "weight"), &self.weight),
            bias: tape.param(join(prefix, "bias"), &self.bias),
        }
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Array2<f64>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Array2<f64>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    weight: Var,
    bias: Var,
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add_row(xw, self.bias)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Stack of affine layers with an activation between consecutive layers
/// (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        Mlp {
            layers: dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
            activation: Activation::Relu,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Linear::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::output_dim)
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> BoundMlp {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.bind(tape, &join(prefix, &i.to_string())))
                .collect(),
            activation: self.activation,
        }
    }
}

impl Params for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Array2<f64>)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Array2<f64>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<BoundLinear>,
    activation: Activation,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(tape, h)?;
            if i + 1 < self.layers.len() && self.activation == Activation::Relu {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// One GIN layer: a learnable `eps`, the layer MLP, and, for the
/// edge-aware variant, a projection from edge features to the layer's input
/// space.
#[derive(Debug, Clone, PartialEq)]
pub struct GinLayer {
    pub eps: Array2<f64>,
    pub mlp: Mlp,
    pub edge_projection: Option<Linear>,
}

impl GinLayer {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        GinLayer {
            eps: Array2::zeros((1, 1)),
            mlp: Mlp::new(&[input, hidden, output], rng),
            edge_projection: None,
        }
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> BoundGin {
        BoundGin {
            eps: tape.param(join(prefix, "eps"), &self.eps),
            mlp: self.mlp.bind(tape, &join(prefix, "mlp")),
            edge_projection: self
                .edge_projection
                .as_ref()
                .map(|e| e.bind(tape, &join(prefix, "edge"))),
        }
    }
}

impl Params for GinLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Array2<f64>)) {
        f(join(prefix, "eps"), &self.eps);
        self.mlp.visit(&join(prefix, "mlp"), f);
        if let Some(e) = &self.edge_projection {
            e.visit(&join(prefix, "edge"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Array2<f64>)) {
        f(join(prefix, "eps"), &mut self.eps);
        self.mlp.visit_mut(&join(prefix, "mlp"), f);
        if let Some(e) = &mut self.edge_projection {
            e.visit_mut(&join(prefix, "edge"), f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundGin {
    pub(crate) eps: Var,
    pub(crate) mlp: BoundMlp,
    pub(crate) edge_projection: Option<BoundLinear>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub layers: usize,
    /// Edge feature dimension for the edge-aware variant.
    pub edge_dim: Option<usize>,
}

/// Stacked GIN layers. Layer `l` maps `input_dim` (first layer) or
/// `hidden_dim` to `hidden_dim`, except the last, which maps to `output_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<GinLayer>,
    config: EncoderConfig,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        if config.layers == 0 || config.input_dim == 0 || config.hidden_dim == 0 || config.output_dim == 0 {
            return Err(Error::Config(format!("invalid encoder configuration {config:?}")));
        }
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input = if l == 0 { config.input_dim } else { config.hidden_dim };
            let output = if l + 1 == config.layers {
                config.output_dim
            } else {
                config.hidden_dim
            };
            layers.push(GinLayer::new(input, config.hidden_dim, output, rng));
        }
        let mut enc = EncoderParams {
            layers,
            config: EncoderConfig {
                edge_dim: None,
                ..config.clone()
            },
        };
        if let Some(d) = config.edge_dim {
            enc = enc.with_edge_projection(d, rng);
        }
        Ok(enc)
    }

    /// Builds from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<GinLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("encoder needs at least one layer".into()))?;
        let input_dim = first.mlp.input_dim();
        let hidden_dim = first.mlp.layers.first().map_or(0, Linear::output_dim);
        for w in layers.windows(2) {
            if w[0].mlp.output_dim() != w[1].mlp.input_dim() {
                return Err(Error::Shape("encoder layer dimensions do not chain".into()));
            }
        }
        let edge_dims: Vec<Option<usize>> = layers
            .iter()
            .map(|l| l.edge_projection.as_ref().map(Linear::input_dim))
            .collect();
        if edge_dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Shape("edge projections disagree across layers".into()));
        }
        for l in &layers {
            if let Some(e) = &l.edge_projection {
                if e.output_dim() != l.mlp.input_dim() {
                    return Err(Error::Shape("edge projection must map to the layer input".into()));
                }
            }
        }
        let config = EncoderConfig {
            input_dim,
            hidden_dim,
            output_dim: layers.last().unwrap().mlp.output_dim(),
            layers: layers.len(),
            edge_dim: edge_dims[0],
        };
        Ok(EncoderParams { layers, config })
    }

    /// Copy with freshly initialized edge projections on every layer, for
    /// the edge-aware aggregation.
    pub fn with_edge_projection<R: Rng + ?Sized>(&self, edge_dim: usize, rng: &mut R) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            l.edge_projection = Some(Linear::new(edge_dim.max(1), l.mlp.input_dim(), rng));
        }
        out.config.edge_dim = Some(edge_dim.max(1));
        out
    }

    /// Copy without edge projections.
    pub fn without_edge_projection(&self) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            l.edge_projection = None;
        }
        out.config.edge_dim = None;
        out
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn edge_aware(&self) -> bool {
        self.config.edge_dim.is_some()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> BoundEncoder {
        BoundEncoder {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.bind(tape, &join(prefix, &format!("layers.{i}"))))
                .collect(),
            edge_aware: self.edge_aware(),
        }
    }
}

impl Params for EncoderParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Array2<f64>)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layers.{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Array2<f64>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundEncoder {
    pub(crate) layers: Vec<BoundGin>,
    pub(crate) edge_aware: bool,
}
