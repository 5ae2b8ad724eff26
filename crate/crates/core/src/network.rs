//! Feedforward ReLU networks.
//!
//! A [`Network`] is a stack of affine layers; every layer but the last is
//! followed by a ReLU. Besides evaluation the module provides the two
//! symbolic views the range search relies on: the activation pattern of an
//! input and the affine map the network reduces to once a pattern is fixed.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// One affine layer `W z + b`, optionally followed by a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub has_relu: bool,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, has_relu: bool) -> Self {
        Self {
            weights,
            bias,
            has_relu,
        }
    }

    pub fn rows(&self) -> usize {
        self.weights.len()
    }

    pub fn cols(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| dot(row, z) + b)
            .collect()
    }
}

/// A feedforward network `F = F_k ∘ ⋯ ∘ F_0` with ReLU hidden layers and an
/// affine output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
}

/// Per hidden layer on/off flags. A neuron is active when its pre-activation
/// is `>= 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern(pub Vec<Vec<bool>>);

impl ActivationPattern {
    pub fn layers(&self) -> &[Vec<bool>] {
        &self.0
    }

    pub fn all(net: &Network, active: bool) -> Self {
        Self(
            net.hidden_widths()
                .into_iter()
                .map(|w| vec![active; w])
                .collect(),
        )
    }

    pub fn flat(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().flatten().copied()
    }
}

/// `x ↦ coeffs · x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl AffineMap {
    pub fn constant(dim: usize, offset: f64) -> Self {
        Self {
            coeffs: vec![0.0; dim],
            offset,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.offset
    }

    pub fn negated(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            offset: -self.offset,
        }
    }
}

/// Result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub outputs: Vec<f64>,
    /// Post-activation vector of every layer, the last entry being the outputs.
    pub layer_values: Vec<Vec<f64>>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Network {
    /// Builds a network, checking the layer chain and activation layout.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidNetwork("input dimension must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        }
        let mut width = input_dim;
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            if layer.rows() == 0 {
                return Err(Error::InvalidNetwork(format!("layer {i} has no neurons")));
            }
            check_dim(&format!("layer {i} bias length"), layer.rows(), layer.bias.len())?;
            for (r, row) in layer.weights.iter().enumerate() {
                check_dim(&format!("layer {i} weight row {r} column count"), width, row.len())?;
            }
            if i < last && !layer.has_relu {
                return Err(Error::InvalidNetwork(format!(
                    "hidden layer {i} must use relu activation"
                )));
            }
            if i == last && layer.has_relu {
                return Err(Error::InvalidNetwork(format!(
                    "output layer {i} must be linear"
                )));
            }
            let finite = layer.weights.iter().flatten().chain(&layer.bias).all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i} has non-finite entries"
                )));
            }
            width = layer.rows();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::rows)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("network has at least one layer")
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden_layers().iter().map(Layer::rows).collect()
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden_widths().iter().sum()
    }

    /// The single-output network computing output `index`.
    pub fn select_output(&self, index: usize) -> Result<Network> {
        if index >= self.output_dim() {
            return Err(Error::InvalidArgument(format!(
                "output index {index} out of range for {} outputs",
                self.output_dim()
            )));
        }
        let mut layers = self.hidden_layers().to_vec();
        let out = self.output_layer();
        layers.push(Layer::new(
            vec![out.weights[index].clone()],
            vec![out.bias[index]],
            false,
        ));
        Ok(Network {
            input_dim: self.input_dim,
            layers,
        })
    }

    /// Same network with every output negated.
    pub fn negated(&self) -> Network {
        let mut layers = self.layers.clone();
        let out = layers.last_mut().expect("non-empty");
        for row in &mut out.weights {
            row.iter_mut().for_each(|w| *w = -*w);
        }
        out.bias.iter_mut().for_each(|b| *b = -*b);
        Network {
            input_dim: self.input_dim,
            layers,
        }
    }

    /// Network computing `output[plus] - output[minus]`.
    pub fn output_difference(&self, plus: usize, minus: usize) -> Result<Network> {
        let n = self.output_dim();
        if plus >= n || minus >= n {
            return Err(Error::InvalidArgument(format!(
                "output indices ({plus}, {minus}) out of range for {n} outputs"
            )));
        }
        let mut layers = self.hidden_layers().to_vec();
        let out = self.output_layer();
        let row = out.weights[plus]
            .iter()
            .zip(&out.weights[minus])
            .map(|(a, b)| a - b)
            .collect();
        layers.push(Layer::new(
            vec![row],
            vec![out.bias[plus] - out.bias[minus]],
            false,
        ));
        Ok(Network {
            input_dim: self.input_dim,
            layers,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Evaluation> {
        check_dim("network input", self.input_dim, x.len())?;
        let mut layer_values = Vec::with_capacity(self.layers.len());
        let mut z = x.to_vec();
        for layer in &self.layers {
            z = layer.apply(&z);
            if layer.has_relu {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            layer_values.push(z.clone());
        }
        Ok(Evaluation {
            outputs: z,
            layer_values,
        })
    }

    /// Output `index` at `x`.
    pub fn eval(&self, x: &[f64], index: usize) -> Result<f64> {
        let out = self.forward(x)?.outputs;
        out.get(index).copied().ok_or_else(|| {
            Error::InvalidArgument(format!("output index {index} out of range"))
        })
    }

    /// Hidden-layer pre-activations at `x`.
    pub fn preactivations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim("network input", self.input_dim, x.len())?;
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut z = x.to_vec();
        for layer in self.hidden_layers() {
            let a = layer.apply(&z);
            z = a.iter().map(|v| v.max(0.0)).collect();
            pre.push(a);
        }
        Ok(pre)
    }

    pub fn activation_pattern(&self, x: &[f64]) -> Result<ActivationPattern> {
        Ok(ActivationPattern(
            self.preactivations(x)?
                .into_iter()
                .map(|a| a.into_iter().map(|v| v >= 0.0).collect())
                .collect(),
        ))
    }

    fn check_pattern(&self, pattern: &[Vec<bool>]) -> Result<()> {
        let widths = self.hidden_widths();
        if pattern.len() > widths.len() {
            return Err(Error::DimensionMismatch {
                what: "activation pattern layer count".into(),
                expected: widths.len(),
                found: pattern.len(),
            });
        }
        for (i, (p, w)) in pattern.iter().zip(&widths).enumerate() {
            check_dim(&format!("activation pattern layer {i}"), *w, p.len())?;
        }
        Ok(())
    }

    /// Gradient of output `index` at `x`, obtained by chaining the layer
    /// Jacobians: rows of active neurons copy the weight row, inactive rows
    /// are zero.
    pub fn gradient(&self, x: &[f64], index: usize) -> Result<Vec<f64>> {
        let pattern = self.activation_pattern(x)?;
        self.gradient_for_pattern(&pattern, index)
    }

    /// Gradient shared by all inputs realizing `pattern`.
    pub fn gradient_for_pattern(&self, pattern: &ActivationPattern, index: usize) -> Result<Vec<f64>> {
        self.check_pattern(&pattern.0)?;
        check_dim("activation pattern layer count", self.layers.len() - 1, pattern.0.len())?;
        let out = self.output_layer();
        if index >= out.rows() {
            return Err(Error::InvalidArgument(format!("output index {index} out of range")));
        }
        // Row vector J_k, then multiplied right-to-left by the masked hidden Jacobians.
        let mut row = out.weights[index].clone();
        for (layer, mask) in self.hidden_layers().iter().zip(&pattern.0).rev() {
            let mut next = vec![0.0; layer.cols()];
            for ((w_row, &active), &r) in layer.weights.iter().zip(mask).zip(&row) {
                if active && r != 0.0 {
                    for (n, w) in next.iter_mut().zip(w_row) {
                        *n += r * w;
                    }
                }
            }
            row = next;
        }
        Ok(row)
    }

    /// Affine forms (in the input `x`) of the pre-activations of hidden
    /// layers `0..=prefix.len()` when the layers in `prefix` follow the given
    /// on/off flags. If `prefix` covers every hidden layer, the last entry is
    /// the output layer.
    pub fn preactivation_maps(&self, prefix: &[Vec<bool>]) -> Result<Vec<Vec<AffineMap>>> {
        self.check_pattern(prefix)?;
        let n = self.input_dim;
        // Current layer output as affine maps of x; starts as the identity.
        let mut current: Vec<AffineMap> = (0..n)
            .map(|j| {
                let mut coeffs = vec![0.0; n];
                coeffs[j] = 1.0;
                AffineMap { coeffs, offset: 0.0 }
            })
            .collect();
        let mut maps = Vec::with_capacity(prefix.len() + 1);
        for (i, layer) in self.layers.iter().enumerate().take(prefix.len() + 1) {
            let pre: Vec<AffineMap> = layer
                .weights
                .iter()
                .zip(&layer.bias)
                .map(|(w_row, &b)| {
                    let mut coeffs = vec![0.0; n];
                    let mut offset = b;
                    for (w, z) in w_row.iter().zip(&current) {
                        if *w != 0.0 {
                            for (c, zc) in coeffs.iter_mut().zip(&z.coeffs) {
                                *c += w * zc;
                            }
                            offset += w * z.offset;
                        }
                    }
                    AffineMap { coeffs, offset }
                })
                .collect();
            if let Some(mask) = prefix.get(i) {
                current = pre
                    .iter()
                    .zip(mask)
                    .map(|(m, &active)| if active { m.clone() } else { AffineMap::constant(n, 0.0) })
                    .collect();
            }
            maps.push(pre);
        }
        Ok(maps)
    }

    /// The affine map output `index` reduces to on inputs realizing `pattern`.
    pub fn affine_restriction(&self, pattern: &ActivationPattern, index: usize) -> Result<AffineMap> {
        check_dim("activation pattern layer count", self.layers.len() - 1, pattern.0.len())?;
        let mut maps = self.preactivation_maps(&pattern.0)?;
        let out = maps.pop().expect("output layer maps");
        out.into_iter()
            .nth(index)
            .ok_or_else(|| Error::InvalidArgument(format!("output index {index} out of range")))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    inputs: usize,
    layers: Vec<LayerFile>,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        context: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

impl Network {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(s).map_err(json_error)?;
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let has_relu = match l.activation.as_str() {
                    "relu" => true,
                    "linear" => false,
                    other => {
                        return Err(Error::Parse {
                            context: format!("layers[{i}].activation"),
                            message: format!("unknown activation {other:?}"),
                        })
                    }
                };
                Ok(Layer::new(l.weights, l.bias, has_relu))
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(file.inputs, layers)
    }

    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            inputs: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                    activation: if l.has_relu { "relu" } else { "linear" }.to_string(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("network serializes");
        s.push('\n');
        s
    }
}

/// Reads a network file.
pub fn load_network<R: Read>(mut source: R) -> Result<Network> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| Error::Parse {
        context: "network source".into(),
        message: e.to_string(),
    })?;
    Network::from_json_str(&text)
}

/// Writes `net` in the canonical text format.
pub fn save_network<W: Write>(net: &Network, mut sink: W) -> std::io::Result<()> {
    sink.write_all(net.to_json_string().as_bytes())
}


#[cfg(test)]
mod tests {
    use super::fixtures::sr_example;
    use super::*;
    use crate::bench::random_network;
    use proptest::prelude::*;

    fn identity_net() -> Network {
        Network::new(
            1,
            vec![
                Layer::new(vec![vec![1.0]], vec![0.0], true),
                Layer::new(vec![vec![1.0]], vec![0.0], false),
            ],
        )
        .unwrap()
    }

    #[test]
    fn loads_identity_file() {
        let text = r#"{"inputs": 1, "layers": [
            {"weights": [[1]], "bias": [0], "activation": "relu"},
            {"weights": [[1]], "bias": [0], "activation": "linear"}]}"#;
        let net = load_network(text.as_bytes()).unwrap();
        assert_eq!(net, identity_net());
        assert_eq!(net.eval(&[2.5], 0).unwrap(), 2.5);
        assert_eq!(net.eval(&[-2.5], 0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_column_mismatch_naming_layer() {
        let text = r#"{"inputs": 2, "layers": [
            {"weights": [[1, 0], [0, 1]], "bias": [0, 0], "activation": "relu"},
            {"weights": [[1, 1, 1]], "bias": [0], "activation": "linear"}]}"#;
        match load_network(text.as_bytes()) {
            Err(Error::DimensionMismatch { what, expected, found }) => {
                assert!(what.contains("layer 1"), "{what}");
                assert_eq!((expected, found), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_has_position() {
        let err = load_network("{\"inputs\": 1,\n \"layers\": [}".as_bytes()).unwrap_err();
        match err {
            Error::Parse { context, .. } => assert!(context.contains("line 2"), "{context}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_activation_layout() {
        let relu_out = Network::new(1, vec![Layer::new(vec![vec![1.0]], vec![0.0], true)]);
        assert!(matches!(relu_out, Err(Error::InvalidNetwork(_))));
        let linear_hidden = Network::new(
            1,
            vec![
                Layer::new(vec![vec![1.0]], vec![0.0], false),
                Layer::new(vec![vec![1.0]], vec![0.0], false),
            ],
        );
        assert!(matches!(linear_hidden, Err(Error::InvalidNetwork(_))));
        let nan = Network::new(1, vec![Layer::new(vec![vec![f64::NAN]], vec![0.0], false)]);
        assert!(matches!(nan, Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn sr_example_loads_with_two_hidden_neurons() {
        let text = sr_example().to_json_string();
        let net = load_network(text.as_bytes()).unwrap();
        assert_eq!(net.hidden_count(), 2);
        assert_eq!(net, sr_example());
    }

    #[test]
    fn forward_matches_sr_affine_piece() {
        let net = sr_example();
        let y = net.eval(&[0.8, 0.6], 0).unwrap();
        assert!((y - (0.5 * 0.8 + 0.1 * 0.6 - 0.3)).abs() < 1e-15);
        assert!((y - 0.16).abs() < 1e-15);
    }

    #[test]
    fn forward_clips_negative_preactivation() {
        let net = Network::new(
            1,
            vec![
                Layer::new(vec![vec![1.0]], vec![-5.0], true),
                Layer::new(vec![vec![1.0]], vec![0.0], false),
            ],
        )
        .unwrap();
        let ev = net.forward(&[3.0]).unwrap();
        assert_eq!(ev.outputs, vec![0.0]);
        assert_eq!(ev.layer_values[0], vec![0.0]);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        assert!(matches!(
            sr_example().forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1, .. })
        ));
    }

    #[test]
    fn sr_patterns() {
        let net = sr_example();
        assert_eq!(
            net.activation_pattern(&[0.8, 0.6]).unwrap(),
            ActivationPattern(vec![vec![true, true]])
        );
        assert_eq!(
            net.activation_pattern(&[0.2, 0.6]).unwrap(),
            ActivationPattern(vec![vec![false, false]])
        );
        // Boundary counts as active.
        assert_eq!(
            net.activation_pattern(&[0.5, 0.5]).unwrap(),
            ActivationPattern(vec![vec![true, true]])
        );
    }

    #[test]
    fn huge_biases_force_all_active() {
        let net = Network::new(
            2,
            vec![
                Layer::new(vec![vec![1.0, -2.0], vec![0.5, 0.5], vec![-1.0, 3.0]], vec![1e6; 3], true),
                Layer::new(vec![vec![1.0, 1.0, 1.0]], vec![0.0], false),
            ],
        )
        .unwrap();
        let p = net.activation_pattern(&[3.0, -7.0]).unwrap();
        assert!(p.flat().all(|a| a));
    }

    #[test]
    fn sr_gradient_and_restriction() {
        let net = sr_example();
        for x in [[0.8, 0.6], [0.9, 0.3], [0.99, 0.98]] {
            let g = net.gradient(&x, 0).unwrap();
            assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 0.1).abs() < 1e-15, "{g:?}");
        }
        let map = net
            .affine_restriction(&ActivationPattern(vec![vec![true, true]]), 0)
            .unwrap();
        // -0.2 + 0.3 is one ulp short of 0.1 in binary64.
        assert!((map.coeffs[0] - 0.5).abs() <= 1e-15);
        assert!((map.coeffs[1] - 0.1).abs() <= 1e-15);
        assert_eq!(map.offset, -0.3);
    }

    #[test]
    fn single_active_row_gradient() {
        let net = Network::new(
            2,
            vec![
                Layer::new(vec![vec![2.0, -1.0]], vec![10.0], true),
                Layer::new(vec![vec![1.0]], vec![0.0], false),
            ],
        )
        .unwrap();
        assert_eq!(net.gradient(&[0.0, 0.0], 0).unwrap(), vec![2.0, -1.0]);
    }

    #[test]
    fn all_inactive_restriction_is_constant_bias() {
        let net = random_network(3, &[4, 3], 2, 1.0, 11, 0);
        let map = net
            .affine_restriction(&ActivationPattern::all(&net, false), 1)
            .unwrap();
        assert!(map.coeffs.iter().all(|&c| c == 0.0));
        assert_eq!(map.offset, net.output_layer().bias[1]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for inst in 0..40 {
            let net = random_network(3, &[5, 4], 1, 1.0, 3, inst);
            let x = [0.13, -0.41, 0.27];
            let pre = net.preactivations(&x).unwrap();
            if pre.iter().flatten().any(|v| v.abs() < 1e-4) {
                continue;
            }
            let g = net.gradient(&x, 0).unwrap();
            let h = 1e-6;
            for j in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fd = (net.eval(&xp, 0).unwrap() - net.eval(&xm, 0).unwrap()) / (2.0 * h);
                let scale = g[j].abs().max(1e-3);
                assert!((fd - g[j]).abs() / scale <= 1e-5, "inst {inst}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn save_round_trip_is_bit_exact() {
        for net in [identity_net(), sr_example(), random_network(4, &[6, 6], 3, 0.7, 7, 0)] {
            let mut buf = Vec::new();
            save_network(&net, &mut buf).unwrap();
            let back = load_network(buf.as_slice()).unwrap();
            assert_eq!(back, net);
            for (a, b) in back.layers().iter().zip(net.layers()) {
                for (x, y) in a.weights.iter().flatten().zip(b.weights.iter().flatten()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn select_and_negate() {
        let net = random_network(2, &[3], 3, 1.0, 5, 1);
        let x = [0.3, -0.2];
        let all = net.forward(&x).unwrap().outputs;
        for i in 0..3 {
            assert_eq!(net.select_output(i).unwrap().eval(&x, 0).unwrap(), all[i]);
        }
        let neg = net.negated().forward(&x).unwrap().outputs;
        for (a, b) in all.iter().zip(&neg) {
            assert_eq!(*a, -*b);
        }
        let d = net.output_difference(2, 0).unwrap().eval(&x, 0).unwrap();
        assert!((d - (all[2] - all[0])).abs() < 1e-14);
        assert!(net.select_output(3).is_err());
    }

    #[test]
    fn nonnegative_networks_are_monotone() {
        let mut net = random_network(2, &[4, 4], 1, 1.0, 17, 0);
        for l in &mut net.layers {
            l.weights.iter_mut().flatten().for_each(|w| *w = w.abs());
            l.bias.iter_mut().for_each(|b| *b = b.abs());
        }
        let pts = [[-0.9, -0.5], [-0.1, 0.2], [0.4, 0.2], [0.9, 0.95]];
        for a in &pts {
            for b in &pts {
                if a[0] <= b[0] && a[1] <= b[1] {
                    assert!(net.eval(a, 0).unwrap() <= net.eval(b, 0).unwrap() + 1e-15);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn forward_equals_affine_restriction(seed in 0u64..1000, a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            let net = random_network(3, &[5, 4], 2, 0.8, seed, 0);
            let x = [a, b, c];
            let pattern = net.activation_pattern(&x).unwrap();
            let out = net.forward(&x).unwrap().outputs;
            for i in 0..2 {
                let map = net.affine_restriction(&pattern, i).unwrap();
                prop_assert!((map.eval(&x) - out[i]).abs() <= 1e-12);
                let g = net.gradient_for_pattern(&pattern, i).unwrap();
                for (gc, mc) in g.iter().zip(&map.coeffs) {
                    prop_assert!((gc - mc).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn gradient_is_constant_on_pattern(seed in 0u64..500, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let net = random_network(2, &[4, 3], 1, 1.0, seed, 0);
            let x = [a, b];
            let y = [a * 0.999 + 1e-4, b * 0.999];
            let (px, py) = (net.activation_pattern(&x).unwrap(), net.activation_pattern(&y).unwrap());
            if px == py {
                prop_assert_eq!(net.gradient(&x, 0).unwrap(), net.gradient(&y, 0).unwrap());
            }
        }
    }
}
