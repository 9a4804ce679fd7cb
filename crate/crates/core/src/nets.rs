//! Small MLP generators and discriminators.
//!
//! Parameters are stored as `[w0, b0, w1, b1, …]` with `w_i` of shape
//! `fan_in × fan_out`, so a batch of row vectors `x` maps to `x · w + b`.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng::{rng, Rng};
use crate::tensor::Tensor;

pub const DISCRIMINATOR_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Tanh,
    Identity,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub noise_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
    pub init_seed: u64,
}

impl GeneratorConfig {
    /// 32 → 128 → 128 → d with a tanh head.
    pub fn desk(output_dim: usize, init_seed: u64) -> Self {
        Self {
            noise_dim: 32,
            hidden_widths: vec![128, 128],
            output_dim,
            output_activation: OutputActivation::Tanh,
            init_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub init_seed: u64,
}

impl DiscriminatorConfig {
    /// Full-view baseline: d → 128 → 64 → 1.
    pub fn desk_full(input_dim: usize, init_seed: u64) -> Self {
        Self {
            input_dim,
            hidden_widths: vec![128, 64],
            init_seed,
        }
    }

    /// Projected view: m → 64 → 64 → 1, same final feature length as the baseline.
    pub fn desk_projected(input_dim: usize, init_seed: u64) -> Self {
        Self {
            input_dim,
            hidden_widths: vec![64, 64],
            init_seed,
        }
    }

    /// Length of the feature vector fed to the sigmoid head.
    pub fn final_feature_len(&self) -> usize {
        self.hidden_widths.last().copied().unwrap_or(self.input_dim)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    hidden_slope: f64,
    output: OutputActivation,
    params: Vec<Tensor>,
}

/// Node handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub output: NodeId,
    pub params: Vec<NodeId>,
}

impl Mlp {
    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init(widths: &[usize], hidden_slope: f64, output: OutputActivation, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let mut r = rng(seed);
        let mut params = Vec::with_capacity(2 * (widths.len() - 1));
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut r);
                    std * v
                })
                .collect();
            params.push(Tensor::matrix(fan_in, fan_out, w)?);
            params.push(Tensor::zeros(&[fan_out]));
        }
        Ok(Self {
            widths: widths.to_vec(),
            hidden_slope,
            output,
            params,
        })
    }

    pub fn generator(config: &GeneratorConfig) -> Result<Self> {
        if config.output_activation == OutputActivation::Sigmoid {
            return Err(Error::Config("generator head must be tanh or identity".into()));
        }
        let mut widths = vec![config.noise_dim];
        widths.extend(&config.hidden_widths);
        widths.push(config.output_dim);
        Self::init(&widths, 0.0, config.output_activation, config.init_seed)
    }

    pub fn discriminator(config: &DiscriminatorConfig) -> Result<Self> {
        let mut widths = vec![config.input_dim];
        widths.extend(&config.hidden_widths);
        widths.push(1);
        Self::init(&widths, DISCRIMINATOR_SLOPE, OutputActivation::Sigmoid, config.init_seed)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for (old, new) in self.params.iter().zip(&params) {
            if old.shape() != new.shape() {
                return Err(Error::dim("set_params", old.shape(), new.shape()));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Zeroes the weights and bias of the output layer.
    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Records the forward pass on `graph`. With `trainable`, parameters become
    /// gradient-tracked leaves; otherwise they are constants.
    pub fn forward(&self, graph: &mut Graph, x: NodeId, trainable: bool) -> Result<Forward> {
        let params = self.bind(graph, trainable)?;
        let output = self.forward_bound(graph, x, &params)?;
        Ok(Forward { output, params })
    }

    /// Adds the parameters to `graph` as leaves, so several forward passes can
    /// share them.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> Result<Vec<NodeId>> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    graph.param(p.clone())
                } else {
                    graph.constant(p.clone())
                }
            })
            .collect()
    }

    /// Forward pass using parameter nodes from [`Mlp::bind`].
    pub fn forward_bound(&self, graph: &mut Graph, x: NodeId, params: &[NodeId]) -> Result<NodeId> {
        let shape = graph.value(x).shape();
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return Err(Error::dim("mlp forward", shape, &[shape[0], self.input_dim()]));
        }
        if params.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "expected {} bound parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let mut h = x;
        let layers = self.params.len() / 2;
        for (l, pair) in params.chunks(2).enumerate() {
            h = graph.matmul(h, pair[0])?;
            h = graph.add_row(h, pair[1])?;
            h = if l + 1 < layers {
                graph.leaky_relu(h, self.hidden_slope)?
            } else {
                match self.output {
                    OutputActivation::Tanh => graph.tanh(h)?,
                    OutputActivation::Sigmoid => graph.sigmoid(h)?,
                    OutputActivation::Identity => h,
                }
            };
        }
        Ok(h)
    }

    /// Forward pass outside any caller graph.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xi = g.constant(x.clone())?;
        let out = self.forward(&mut g, xi, false)?.output;
        Ok(g.value(out).clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.params)
    }

    /// Loads parameters saved by [`Mlp::save`] into a network of the same shape.
    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        self.set_params(load_checkpoint(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseDistribution {
    /// Uniform on `[-1, 1]`.
    Uniform,
    StandardNormal,
}

impl NoiseDistribution {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseDistribution::Uniform => "uniform",
            NoiseDistribution::StandardNormal => "normal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "normal" => Ok(Self::StandardNormal),
            other => Err(Error::Config(format!("unknown noise distribution `{other}`"))),
        }
    }
}

pub fn sample_noise_with(dist: NoiseDistribution, batch: usize, dim: usize, r: &mut Rng) -> Result<Tensor> {
    if batch == 0 || dim == 0 {
        return Err(Error::Config("noise batch and dimension must be positive".into()));
    }
    let data = (0..batch * dim)
        .map(|_| match dist {
            NoiseDistribution::Uniform => r.random_range(-1.0..=1.0),
            NoiseDistribution::StandardNormal => StandardNormal.sample(r),
        })
        .collect();
    Tensor::matrix(batch, dim, data)
}

pub fn sample_noise(dist: NoiseDistribution, batch: usize, dim: usize, seed: u64) -> Result<Tensor> {
    sample_noise_with(dist, batch, dim, &mut rng(seed))
}

/// `(1 - alpha) z0 + alpha z1`.
pub fn interpolate_noise(z0: &Tensor, z1: &Tensor, alpha: f64) -> Result<Tensor> {
    if z0.shape() != z1.shape() {
        return Err(Error::dim("interpolate_noise", z0.shape(), z1.shape()));
    }
    let data = z0
        .data()
        .iter()
        .zip(z1.data())
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    Tensor::new(z0.shape().to_vec(), data)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PGCKPT01";

/// Binary checkpoint, all integers and floats little-endian:
///
/// ```text
/// magic   8 bytes  "PGCKPT01"
/// count   u32      number of tensors
/// count × { ndim u32, ndim × u64 dims }
/// values  f64 …    every tensor's row-major data, in order
/// ```
pub fn encode_checkpoint(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let count = cur.u32()? as usize;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = cur.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| cur.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        shapes.push(shape);
    }
    let mut tensors = Vec::with_capacity(count);
    for shape in shapes {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor::new(shape, data)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - cur.pos
        )));
    }
    Ok(tensors)
}

pub fn save_checkpoint(path: &Path, tensors: &[Tensor]) -> Result<()> {
    write_atomic(path, &encode_checkpoint(tensors))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<Tensor>> {
    decode_checkpoint(&std::fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated checkpoint: need {end} bytes, have {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_generator_outputs_zero() {
        let mut g = Mlp::generator(&GeneratorConfig::desk(5, 1)).unwrap();
        g.zero_output_layer();
        let z = sample_noise(NoiseDistribution::Uniform, 7, 32, 3).unwrap();
        assert!(g.predict(&z).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_head_discriminator_outputs_half() {
        let mut d = Mlp::discriminator(&DiscriminatorConfig::desk_full(6, 2)).unwrap();
        d.zero_output_layer();
        let x = sample_noise(NoiseDistribution::StandardNormal, 9, 6, 4).unwrap();
        let y = d.predict(&x).unwrap();
        assert_eq!(y.shape(), &[9, 1]);
        assert!(y.data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn discriminator_is_per_sample() {
        let d = Mlp::discriminator(&DiscriminatorConfig::desk_projected(4, 8)).unwrap();
        let x = sample_noise(NoiseDistribution::StandardNormal, 5, 4, 1).unwrap();
        let y = d.predict(&x).unwrap();
        assert!(y.data().iter().all(|v| *v > 0.0 && *v < 1.0));
        let perm = [3usize, 0, 4, 1, 2];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| x.row(i).to_vec()).collect();
        let yp = d.predict(&Tensor::from_rows(&rows).unwrap()).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(yp.data()[k], y.data()[i]);
        }
    }

    #[test]
    fn wrong_input_width_is_dimension_error() {
        let d = Mlp::discriminator(&DiscriminatorConfig::desk_full(6, 2)).unwrap();
        assert!(matches!(d.predict(&Tensor::zeros(&[2, 5])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let c = DiscriminatorConfig::desk_full(10, 42);
        let a = Mlp::discriminator(&c).unwrap();
        let b = Mlp::discriminator(&c).unwrap();
        assert_eq!(a, b);
        for bias in a.params().iter().skip(1).step_by(2) {
            assert!(bias.data().iter().all(|v| *v == 0.0));
        }
        let other = Mlp::discriminator(&DiscriminatorConfig::desk_full(10, 43)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn symmetric_final_features() {
        let full = DiscriminatorConfig::desk_full(32, 0);
        let proj = DiscriminatorConfig::desk_projected(8, 0);
        assert_eq!(full.final_feature_len(), proj.final_feature_len());
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let a = sample_noise(NoiseDistribution::Uniform, 16, 100, 5).unwrap();
        assert_eq!(a, sample_noise(NoiseDistribution::Uniform, 16, 100, 5).unwrap());
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(decode_checkpoint(b"NOTACKPT\0\0\0\0").is_err());
        let mut bytes = encode_checkpoint(&[Tensor::zeros(&[2, 2])]);
        bytes.pop();
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
    }
}
