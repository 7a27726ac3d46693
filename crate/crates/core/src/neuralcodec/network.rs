use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::None => z,
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine map `act(W x + b)`; `weights` is `output_dim x input_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub input_dim: usize,
    pub output_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            weights: vec![0.0; input_dim * output_dim],
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.input_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
}

/// Intermediate values from a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Parameter gradients with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    /// Weights then bias, layer by layer: the same order as
    /// [`DenseNetwork::params_mut`].
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b))
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|g| *g *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

impl DenseNetwork {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Invalid("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.input_dim == 0 || l.output_dim == 0 {
                return Err(NetError::Invalid(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.input_dim * l.output_dim || l.bias.len() != l.output_dim {
                return Err(NetError::Invalid(format!("layer {i} payload does not match its dims")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(NetError::Invalid(format!("layer {i} has non-finite parameters")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(NetError::Invalid(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].output_dim,
                    i + 1,
                    pair[1].input_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights (He-uniform ahead of ReLU), zero biases.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self, NetError> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(NetError::Invalid("need one activation per layer".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &act)| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let limit = match act {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    Activation::None => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let mut layer = DenseLayer::zeros(fan_in, fan_out, act);
                layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
                layer
            })
            .collect();
        Self::from_layers(layers)
    }

    /// Single linear layer with identity weights.
    pub fn identity(dim: usize) -> Self {
        let mut layer = DenseLayer::zeros(dim, dim, Activation::None);
        for i in 0..dim {
            layer.weights[i * dim + i] = 1.0;
        }
        Self { layers: vec![layer] }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::Dim {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.affine(&h);
            h.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace, NetError> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&h);
            let next = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut h, next));
            pre_activations.push(z);
        }
        Ok(Trace {
            inputs,
            pre_activations,
            output: h,
        })
    }

    /// Accumulates parameter gradients for `d loss / d output = grad_out`
    /// into `grads` and returns `d loss / d input`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            for (gv, z) in g.iter_mut().zip(&trace.pre_activations[i]) {
                *gv *= layer.activation.derivative(*z);
            }
            let input = &trace.inputs[i];
            let (gw, gb) = &mut grads.layers[i];
            let mut g_in = vec![0.0; layer.input_dim];
            for (o, &go) in g.iter().enumerate() {
                gb[o] += go;
                if go == 0.0 {
                    continue;
                }
                let row = o * layer.input_dim;
                let w_row = &layer.weights[row..row + layer.input_dim];
                for ((gw_v, x), (gi, w)) in gw[row..row + layer.input_dim]
                    .iter_mut()
                    .zip(input)
                    .zip(g_in.iter_mut().zip(w_row))
                {
                    *gw_v += go * x;
                    *gi += go * w;
                }
            }
            g = g_in;
        }
        g
    }
}

/// Encoder/decoder dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetShape {
    pub semantic_dim: usize,
    pub hidden: Vec<usize>,
    /// Complex symbols per segment; the encoder emits twice as many reals.
    pub symbol_budget: usize,
    /// Drop the decoder's hidden ReLUs.
    pub linear: bool,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            semantic_dim: 64,
            hidden: vec![128, 128],
            symbol_budget: 64,
            linear: false,
        }
    }
}

impl NetShape {
    /// Three 2048-unit dense layers on each side.
    pub fn full_scale(semantic_dim: usize) -> Self {
        Self {
            semantic_dim,
            hidden: vec![2048, 2048],
            symbol_budget: 1024,
            linear: false,
        }
    }

    pub fn encoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.semantic_dim];
        dims.extend(&self.hidden);
        dims.push(2 * self.symbol_budget);
        dims
    }

    pub fn decoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![2 * self.symbol_budget];
        dims.extend(self.hidden.iter().rev());
        dims.push(self.semantic_dim);
        dims
    }

    /// Randomly initialised encoder and decoder. The encoder is linear
    /// throughout; the decoder uses ReLU on hidden layers (unless `linear`)
    /// and a linear output so negative features stay representable.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DenseNetwork, DenseNetwork), NetError> {
        let depth = self.hidden.len() + 1;
        let enc_acts = vec![Activation::None; depth];
        let hidden_act = if self.linear { Activation::None } else { Activation::Relu };
        let mut dec_acts = vec![hidden_act; depth];
        dec_acts[depth - 1] = Activation::None;
        let encoder = DenseNetwork::random(&self.encoder_dims(), &enc_acts, rng)?;
        let decoder = DenseNetwork::random(&self.decoder_dims(), &dec_acts, rng)?;
        Ok((encoder, decoder))
    }

    /// [`NetShape::init`] from a ChaCha8 stream seeded with `seed`.
    pub fn init_seeded(&self, seed: u64) -> Result<(DenseNetwork, DenseNetwork), NetError> {
        self.init(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straightforward matrix multiply, independent of `DenseLayer::affine`.
    fn oracle_forward(net: &DenseNetwork, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in net.layers() {
            let mut out = vec![0.0; l.output_dim];
            for (o, val) in out.iter_mut().enumerate() {
                let mut acc = l.bias[o];
                for i in 0..l.input_dim {
                    acc += l.weights[o * l.input_dim + i] * h[i];
                }
                *val = if l.activation == Activation::Relu && acc < 0.0 { 0.0 } else { acc };
            }
            h = out;
        }
        h
    }

    fn rand_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_and_zero_inputs() {
        let net = DenseNetwork::identity(5);
        let x = [0.1, -2.0, 3.5, 0.0, 7.0];
        assert_eq!(net.forward(&x).unwrap(), x);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (enc, _) = NetShape::default().init(&mut rng).unwrap();
        assert!(enc.forward(&[0.0; 64]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shape = NetShape { semantic_dim: 12, hidden: vec![9, 7], symbol_budget: 5, linear: false };
        let (enc, dec) = shape.init(&mut rng).unwrap();
        for _ in 0..10 {
            let f = rand_vec(12, &mut rng);
            let x = enc.forward(&f).unwrap();
            for (a, b) in x.iter().zip(oracle_forward(&enc, &f)) {
                assert!((a - b).abs() < 1e-9);
            }
            let y = rand_vec(10, &mut rng);
            for (a, b) in dec.forward(&y).unwrap().iter().zip(oracle_forward(&dec, &y)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear_stack_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = NetShape { semantic_dim: 6, hidden: vec![8], symbol_budget: 3, linear: true };
        let (enc, dec) = shape.init(&mut rng).unwrap();
        for net in [&enc, &dec] {
            let (a, b) = (rand_vec(6, &mut rng), rand_vec(6, &mut rng));
            let (s, t) = (0.3, -1.7);
            let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| s * u + t * v).collect();
            // zero biases: affine == linear
            let (fa, fb, fm) = (net.forward(&a).unwrap(), net.forward(&b).unwrap(), net.forward(&mix).unwrap());
            for i in 0..fm.len() {
                assert!((fm[i] - (s * fa[i] + t * fb[i])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dims_and_validation() {
        let net = DenseNetwork::identity(3);
        assert!(matches!(net.forward(&[1.0; 4]), Err(NetError::Dim { expected: 3, actual: 4 })));
        let a = DenseLayer::zeros(3, 4, Activation::None);
        let b = DenseLayer::zeros(5, 2, Activation::None);
        assert!(DenseNetwork::from_layers(vec![a.clone(), b]).is_err());
        let mut bad = a.clone();
        bad.weights[0] = f64::NAN;
        assert!(DenseNetwork::from_layers(vec![bad]).is_err());
        assert!(DenseNetwork::from_layers(vec![]).is_err());

        let shape = NetShape::default();
        assert_eq!(shape.encoder_dims(), vec![64, 128, 128, 128]);
        assert_eq!(shape.decoder_dims(), vec![128, 128, 128, 64]);
        let (_, dec) = shape.init(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let acts: Vec<_> = dec.layers().iter().map(|l| l.activation).collect();
        assert_eq!(acts, vec![Activation::Relu, Activation::Relu, Activation::None]);
        assert_eq!(NetShape::full_scale(1024).encoder_dims(), vec![1024, 2048, 2048, 2048]);
    }
}
