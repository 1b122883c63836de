//! EIIE policy networks: one parameter-shared evaluator scores every asset
//! row, the scores and a trainable cash bias go through a softmax.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autodiff::checkpoint::{load_checkpoint, save_checkpoint};
use crate::autodiff::{Graph, GraphBuilder, NodeId, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::marketdata::PriceTensor;
use crate::portfolio::PortfolioVector;

pub const CASH_BIAS: &str = "cash_bias";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Cnn,
    Rnn,
    Lstm,
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TopologyKind::Cnn => "cnn",
            TopologyKind::Rnn => "rnn",
            TopologyKind::Lstm => "lstm",
        })
    }
}

/// One entry of the config `layers` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerSpec {
    #[serde(rename = "ConvLayer")]
    Conv {
        filter_shape: [usize; 2],
        filter_number: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regularizer: Option<String>,
        #[serde(default)]
        weight_decay: f64,
    },
    #[serde(rename = "EIIE_Dense")]
    Dense {
        filter_number: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regularizer: Option<String>,
        #[serde(default)]
        weight_decay: f64,
    },
    #[serde(rename = "EIIE_RNN")]
    Rnn {
        neuron_number: usize,
        #[serde(default)]
        dropouts: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regularizer: Option<String>,
        #[serde(default)]
        weight_decay: f64,
    },
    #[serde(rename = "EIIE_LSTM")]
    Lstm {
        neuron_number: usize,
        #[serde(default)]
        dropouts: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regularizer: Option<String>,
        #[serde(default)]
        weight_decay: f64,
    },
    #[serde(rename = "EIIE_Output_WithW")]
    OutputWithW {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regularizer: Option<String>,
        #[serde(default)]
        weight_decay: f64,
    },
}

impl LayerSpec {
    fn type_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "ConvLayer",
            LayerSpec::Dense { .. } => "EIIE_Dense",
            LayerSpec::Rnn { .. } => "EIIE_RNN",
            LayerSpec::Lstm { .. } => "EIIE_LSTM",
            LayerSpec::OutputWithW { .. } => "EIIE_Output_WithW",
        }
    }

    fn decay(&self) -> f64 {
        match self {
            LayerSpec::Conv {
                regularizer,
                weight_decay,
                ..
            }
            | LayerSpec::Dense {
                regularizer,
                weight_decay,
                ..
            }
            | LayerSpec::Rnn {
                regularizer,
                weight_decay,
                ..
            }
            | LayerSpec::Lstm {
                regularizer,
                weight_decay,
                ..
            }
            | LayerSpec::OutputWithW {
                regularizer,
                weight_decay,
            } => match regularizer.as_deref() {
                None | Some("L2") => *weight_decay,
                Some(_) => 0.0,
            },
        }
    }
}

const LAYER_TYPES: [&str; 5] = ["ConvLayer", "EIIE_Dense", "EIIE_RNN", "EIIE_LSTM", "EIIE_Output_WithW"];

/// Validated layer stack plus the topology it realizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EiieTopologySpec {
    pub kind: TopologyKind,
    pub layers: Vec<LayerSpec>,
}

impl EiieTopologySpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::Spec("empty layer list".into()))?;
        if !matches!(last, LayerSpec::OutputWithW { .. }) {
            return Err(Error::Spec(format!(
                "layer stack must end in EIIE_Output_WithW, ends in {}",
                last.type_name()
            )));
        }
        let body = &layers[..layers.len() - 1];
        let mut kind = TopologyKind::Cnn;
        for (i, layer) in body.iter().enumerate() {
            let at = |msg: String| Error::Spec(format!("layers[{i}] ({}): {msg}", layer.type_name()));
            match layer {
                LayerSpec::Conv {
                    filter_shape,
                    filter_number,
                    ..
                } => {
                    if filter_shape[0] != 1 || filter_shape[1] == 0 || *filter_number == 0 {
                        return Err(at(format!(
                            "filters must be 1×k with k ≥ 1 and a positive count, got {filter_shape:?} × {filter_number}"
                        )));
                    }
                }
                LayerSpec::Dense { filter_number, .. } => {
                    if *filter_number == 0 {
                        return Err(at("filter_number must be positive".into()));
                    }
                }
                LayerSpec::Rnn { neuron_number, .. } | LayerSpec::Lstm { neuron_number, .. } => {
                    if body.len() != 1 {
                        return Err(at("a recurrent layer must be the only hidden layer".into()));
                    }
                    if *neuron_number == 0 {
                        return Err(at("neuron_number must be positive".into()));
                    }
                    kind = if matches!(layer, LayerSpec::Rnn { .. }) {
                        TopologyKind::Rnn
                    } else {
                        TopologyKind::Lstm
                    };
                }
                LayerSpec::OutputWithW { .. } => {
                    return Err(at("the scoring layer must come last".into()));
                }
            }
            if !(layer.decay() >= 0.0 && layer.decay().is_finite()) {
                return Err(at("weight_decay must be nonnegative".into()));
            }
        }
        Ok(Self { kind, layers })
    }

    /// Parses a config `layers` array, naming the offending entry on error.
    pub fn from_json(layers: &[Value]) -> Result<Self> {
        let mut parsed = Vec::with_capacity(layers.len());
        for (i, entry) in layers.iter().enumerate() {
            let ty = entry.get("type").and_then(Value::as_str).unwrap_or("<missing>");
            if !LAYER_TYPES.contains(&ty) {
                return Err(Error::Spec(format!("layers[{i}]: unknown layer type `{ty}`")));
            }
            let layer: LayerSpec = serde_json::from_value(entry.clone())
                .map_err(|e| Error::Spec(format!("layers[{i}] ({ty}): {e}")))?;
            parsed.push(layer);
        }
        Self::new(parsed)
    }

    /// 1×2 conv with 3 filters, full-width dense with 10, then scoring.
    pub fn default_cnn() -> Self {
        Self::new(vec![
            LayerSpec::Conv {
                filter_shape: [1, 2],
                filter_number: 3,
                regularizer: None,
                weight_decay: 0.0,
            },
            LayerSpec::Dense {
                filter_number: 10,
                regularizer: Some("L2".into()),
                weight_decay: 5e-9,
            },
            LayerSpec::OutputWithW {
                regularizer: Some("L2".into()),
                weight_decay: 5e-8,
            },
        ])
        .expect("default stack is valid")
    }

    pub fn default_recurrent(kind: TopologyKind) -> Self {
        let hidden = match kind {
            TopologyKind::Rnn => LayerSpec::Rnn {
                neuron_number: 20,
                dropouts: None,
                regularizer: None,
                weight_decay: 0.0,
            },
            _ => LayerSpec::Lstm {
                neuron_number: 20,
                dropouts: None,
                regularizer: None,
                weight_decay: 0.0,
            },
        };
        Self::new(vec![
            hidden,
            LayerSpec::OutputWithW {
                regularizer: Some("L2".into()),
                weight_decay: 5e-8,
            },
        ])
        .expect("default stack is valid")
    }

    pub fn default_for(kind: TopologyKind) -> Self {
        match kind {
            TopologyKind::Cnn => Self::default_cnn(),
            k => Self::default_recurrent(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    spec: EiieTopologySpec,
    assets: usize,
    window: usize,
    features: usize,
    seed: u64,
    parameters: Vec<(String, Vec<usize>)>,
}

#[derive(Debug, Clone)]
enum Block {
    Conv { w: ParamId, b: ParamId, decay: f64 },
    Rnn { wx: ParamId, wh: ParamId, b: ParamId, units: usize, decay: f64 },
    Lstm { wx: ParamId, wh: ParamId, b: ParamId, units: usize, decay: f64 },
}

/// Nodes added by [`PolicyNetwork::attach`].
#[derive(Debug, Clone, Copy)]
pub struct PolicyNodes {
    /// `(B, m+1)` portfolio weights.
    pub weights: NodeId,
    /// Scalar `Σ decay·‖W‖²`, absent when every decay is zero.
    pub penalty: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct PolicyNetwork {
    spec: EiieTopologySpec,
    assets: usize,
    window: usize,
    features: usize,
    seed: u64,
    params: ParamSet,
    blocks: Vec<Block>,
    head_w: ParamId,
    head_b: ParamId,
    head_decay: f64,
    cash_bias: ParamId,
    decide_graph: Graph,
    decide_out: NodeId,
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Builds a freshly initialized network for `m` assets, window `n` and `f`
/// features; weights are uniform Glorot draws seeded by `seed`.
pub fn build_network(spec: &EiieTopologySpec, m: usize, n: usize, f: usize, seed: u64) -> Result<PolicyNetwork> {
    if m == 0 || n == 0 || f == 0 {
        return Err(Error::Spec(format!("assets, window and features must be positive (got {m}, {n}, {f})")));
    }
    let spec = EiieTopologySpec::new(spec.layers.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let mut blocks = Vec::new();
    let (mut channels, mut width) = (f, n);
    for (i, layer) in spec.layers[..spec.layers.len() - 1].iter().enumerate() {
        let decay = layer.decay();
        match layer {
            LayerSpec::Conv {
                filter_shape,
                filter_number,
                ..
            } => {
                let k = filter_shape[1];
                if k > width {
                    return Err(Error::Spec(format!(
                        "layers[{i}] (ConvLayer): kernel width {k} exceeds remaining window {width}"
                    )));
                }
                let o = *filter_number;
                let w = params.add(format!("layer{i}/w"), glorot(&mut rng, &[o, channels, k], channels * k, o * k))?;
                let b = params.add(format!("layer{i}/b"), Tensor::zeros(&[o]))?;
                blocks.push(Block::Conv { w, b, decay });
                channels = o;
                width = width - k + 1;
            }
            LayerSpec::Dense { filter_number, .. } => {
                let o = *filter_number;
                let w = params.add(
                    format!("layer{i}/w"),
                    glorot(&mut rng, &[o, channels, width], channels * width, o * width),
                )?;
                let b = params.add(format!("layer{i}/b"), Tensor::zeros(&[o]))?;
                blocks.push(Block::Conv { w, b, decay });
                channels = o;
                width = 1;
            }
            LayerSpec::Rnn { neuron_number, .. } | LayerSpec::Lstm { neuron_number, .. } => {
                let h = *neuron_number;
                let gates = if matches!(layer, LayerSpec::Lstm { .. }) { 4 } else { 1 };
                let wx = params.add(format!("layer{i}/wx"), glorot(&mut rng, &[gates * h, f], f, gates * h))?;
                let wh = params.add(format!("layer{i}/wh"), glorot(&mut rng, &[gates * h, h], h, gates * h))?;
                let b = params.add(format!("layer{i}/b"), Tensor::zeros(&[gates * h]))?;
                blocks.push(if gates == 4 {
                    Block::Lstm { wx, wh, b, units: h, decay }
                } else {
                    Block::Rnn { wx, wh, b, units: h, decay }
                });
                channels = h;
                width = 1;
            }
            LayerSpec::OutputWithW { .. } => unreachable!("validated"),
        }
    }
    let head_in = channels * width + 1;
    let out_index = spec.layers.len() - 1;
    let head_w = params.add(format!("layer{out_index}/w"), glorot(&mut rng, &[1, head_in], head_in, 1))?;
    let head_b = params.add(format!("layer{out_index}/b"), Tensor::zeros(&[1]))?;
    let cash_bias = params.add(CASH_BIAS, Tensor::zeros(&[1, 1]))?;
    let head_decay = spec.layers[out_index].decay();

    let mut net = PolicyNetwork {
        spec,
        assets: m,
        window: n,
        features: f,
        seed,
        params,
        blocks,
        head_w,
        head_b,
        head_decay,
        cash_bias,
        decide_graph: GraphBuilder::new().build(),
        decide_out: NodeId::dangling(),
    };
    net.rebuild_decide_graph()?;
    Ok(net)
}

impl PolicyNetwork {
    fn rebuild_decide_graph(&mut self) -> Result<()> {
        let mut b = GraphBuilder::new();
        let x = b.input("x", &[1, self.features, self.assets, self.window]);
        let w = b.input("w_prev", &[self.assets, 1]);
        let nodes = self.attach(&mut b, x, w, 1)?;
        self.decide_out = nodes.weights;
        self.decide_graph = b.build();
        Ok(())
    }

    pub fn spec(&self) -> &EiieTopologySpec {
        &self.spec
    }

    pub fn kind(&self) -> TopologyKind {
        self.spec.kind
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn cash_bias(&self) -> ParamId {
        self.cash_bias
    }

    /// Adds the network to `b` for a batch of `batch` samples.
    /// `x` is `(B, f, m, n)` and `w_prev` holds the non-cash previous
    /// weights as a `(B·m, 1)` column.
    pub fn attach(&self, b: &mut GraphBuilder, x: NodeId, w_prev: NodeId, batch: usize) -> Result<PolicyNodes> {
        let m = self.assets;
        let rows = batch * m;
        let mut penalties = Vec::new();
        let mut penalize = |b: &mut GraphBuilder, node: NodeId, decay: f64| {
            if decay > 0.0 {
                let s = b.sum_squares(node);
                penalties.push(b.scale(s, decay));
            }
        };
        let mut h = x;
        let mut features_per_row = 0;
        for (i, block) in self.blocks.iter().enumerate() {
            b.set_scope(format!("layer{i}"));
            match *block {
                Block::Conv { w, b: bias, decay } => {
                    let wn = b.param(&self.params, w);
                    let bn = b.param(&self.params, bias);
                    let c = b.conv(h, wn, bn)?;
                    h = b.relu(c);
                    penalize(b, wn, decay);
                }
                Block::Rnn { wx, wh, b: bias, units, decay } | Block::Lstm { wx, wh, b: bias, units, decay } => {
                    let lstm = matches!(block, Block::Lstm { .. });
                    let (f, n) = (self.features, self.window);
                    let seq = b.transpose(x, &[0, 2, 3, 1])?;
                    let seq = b.reshape(seq, &[rows, n * f])?;
                    let (wxn, whn, bn) = (b.param(&self.params, wx), b.param(&self.params, wh), b.param(&self.params, bias));
                    let zeros = b.input(&format!("h0_{i}"), &[rows, units]);
                    let (mut hidden, mut cell) = (zeros, zeros);
                    for step in 0..n {
                        let xt = b.slice(seq, 1, step * f, f)?;
                        if lstm {
                            (hidden, cell) = b.lstm_cell(xt, hidden, cell, wxn, whn, bn)?;
                        } else {
                            hidden = b.rnn_cell(xt, hidden, wxn, whn, bn)?;
                        }
                    }
                    penalize(b, wxn, decay);
                    penalize(b, whn, decay);
                    h = hidden;
                    features_per_row = units;
                }
            }
        }
        b.set_scope("head");
        let per_row = if b.shape(h).len() == 4 {
            let s = b.shape(h).to_vec();
            let t = b.transpose(h, &[0, 2, 1, 3])?;
            b.reshape(t, &[rows, s[1] * s[3]])?
        } else {
            debug_assert_eq!(b.shape(h), &[rows, features_per_row]);
            h
        };
        let with_w = b.concat(&[per_row, w_prev], 1)?;
        let (hw, hb) = (b.param(&self.params, self.head_w), b.param(&self.params, self.head_b));
        let scores = b.affine(with_w, hw, hb)?;
        penalize(b, hw, self.head_decay);
        let scores = b.reshape(scores, &[batch, m])?;
        let cb = b.param(&self.params, self.cash_bias);
        let cash = b.repeat_rows(cb, batch)?;
        let logits = b.concat(&[cash, scores], 1)?;
        let weights = b.softmax(logits)?;
        let penalty = match penalties.len() {
            0 => None,
            _ => {
                let mut total = penalties[0];
                for p in &penalties[1..] {
                    total = b.add(total, *p)?;
                }
                Some(total)
            }
        };
        b.set_scope("");
        Ok(PolicyNodes { weights, penalty })
    }

    /// Zero initial states for the recurrent layer, in the order `attach`
    /// declares them (after `x` and `w_prev`).
    pub fn extra_inputs(&self, batch: usize) -> Vec<Tensor> {
        self.blocks
            .iter()
            .filter_map(|blk| match blk {
                Block::Rnn { units, .. } | Block::Lstm { units, .. } => Some(Tensor::zeros(&[batch * self.assets, *units])),
                Block::Conv { .. } => None,
            })
            .collect()
    }

    pub fn input_tensor(&self, x: &PriceTensor) -> Result<Tensor> {
        let expected = [self.features, self.assets, self.window];
        if x.shape() != expected {
            return Err(Error::Structure {
                node: "x".into(),
                message: format!("price tensor shape {:?} does not match network {expected:?}", x.shape()),
            });
        }
        Tensor::new(vec![1, self.features, self.assets, self.window], x.values.clone())
    }

    /// Deterministic action `π(X_t, w_{t-1})`.
    pub fn decide(&self, x: &PriceTensor, w_prev: &PortfolioVector) -> Result<PortfolioVector> {
        if w_prev.len() != self.assets + 1 {
            return Err(Error::Structure {
                node: "w_prev".into(),
                message: format!("expected {} weights, got {}", self.assets + 1, w_prev.len()),
            });
        }
        let xt = self.input_tensor(x)?;
        let wt = Tensor::new(vec![self.assets, 1], w_prev.as_slice()[1..].to_vec())?;
        let extra = self.extra_inputs(1);
        let mut inputs: Vec<&Tensor> = vec![&xt, &wt];
        inputs.extend(extra.iter());
        let eval = self.decide_graph.forward(&self.params, &inputs)?;
        PortfolioVector::new(eval.value(self.decide_out).data().to_vec())
    }

    /// Replaces the parameters, checking names and shapes.
    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.params.len(),
                params.len()
            )));
        }
        for ((name, t), (own, ot)) in params.iter().zip(self.params.iter()) {
            if name != own || t.shape() != ot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` {:?} does not match `{own}` {:?}",
                    t.shape(),
                    ot.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let manifest = Manifest {
            spec: self.spec.clone(),
            assets: self.assets,
            window: self.window,
            features: self.features,
            seed: self.seed,
            parameters: self.params.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect(),
        };
        save_checkpoint(path, &self.params, &manifest)
    }

    /// Restores a network from a checkpoint and its manifest alone.
    pub fn load(path: &Path) -> Result<Self> {
        let (params, manifest): (ParamSet, Manifest) = load_checkpoint(path)?;
        let mut net = build_network(&manifest.spec, manifest.assets, manifest.window, manifest.features, manifest.seed)?;
        net.set_params(params)?;
        Ok(net)
    }
}
