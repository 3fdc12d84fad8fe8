//! BiLSTM-CNN text classifier.
//!
//! Layer groups, numbered bottom-up:
//!
//! 1. bidirectional LSTM over token embeddings
//! 2. parallel convolutions (one per kernel size) with LeakyReLU and global
//!    max-pooling
//! 3. dense layer over the pooled features plus the user-cluster multi-hot
//! 4. softmax prediction layer
//!
//! Everything runs in `f64`. Embeddings are inputs, never parameters.

mod checkpoint;
pub mod gradcheck;
mod model;
pub mod optim;

use std::fmt;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
};
pub use model::{backward, forward, loss, Batch, Dropout, ForwardCache, Mode};
pub use optim::{NadamConfig, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Lstm = 1,
    Conv = 2,
    Dense = 3,
    Output = 4,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Lstm, Layer::Conv, Layer::Dense, Layer::Output];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Layer> {
        Layer::ALL.get(usize::from(id).wrapping_sub(1)).copied()
    }

    fn name(self) -> &'static str {
        match self {
            Layer::Lstm => "bilstm",
            Layer::Conv => "cnn",
            Layer::Dense => "dense",
            Layer::Output => "output",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.id(), self.name())
    }
}

/// The set of trainable layer groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FreezeMask(u8);

impl FreezeMask {
    pub fn all() -> Self {
        Self(0b1111)
    }

    pub fn none() -> Self {
        Self(0)
    }

    pub fn only(layer: Layer) -> Self {
        Self(1 << (layer.id() - 1))
    }

    pub fn from_layers(layers: &[Layer]) -> Self {
        layers.iter().fold(Self::none(), |m, &l| m.with(l))
    }

    pub fn with(self, layer: Layer) -> Self {
        Self(self.0 | (1 << (layer.id() - 1)))
    }

    pub fn contains(self, layer: Layer) -> bool {
        self.0 & (1 << (layer.id() - 1)) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn layers(self) -> Vec<Layer> {
        Layer::ALL
            .into_iter()
            .filter(|&l| self.contains(l))
            .collect()
    }

    pub fn lowest(self) -> Option<Layer> {
        self.layers().first().copied()
    }
}

impl fmt::Display for FreezeMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.layers().iter().map(|l| l.id().to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

/// Architecture hyperparameters independent of data.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub lstm_units: usize,
    pub kernel_sizes: Vec<usize>,
    pub filters: usize,
    pub dense_units: usize,
    pub leaky_slope: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            lstm_units: 100,
            kernel_sizes: vec![3, 4, 5],
            filters: 200,
            dense_units: 100,
            // Keras' LeakyReLU default.
            leaky_slope: 0.3,
        }
    }
}

/// Full shape description of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetShape {
    pub emb_dim: usize,
    pub lstm_units: usize,
    pub kernel_sizes: Vec<usize>,
    pub filters: usize,
    pub dense_units: usize,
    pub cluster_width: usize,
    pub n_classes: usize,
    pub leaky_slope: f64,
}

impl NetShape {
    pub fn new(config: &NetConfig, emb_dim: usize, cluster_width: usize, n_classes: usize) -> Self {
        Self {
            emb_dim,
            lstm_units: config.lstm_units,
            kernel_sizes: config.kernel_sizes.clone(),
            filters: config.filters,
            dense_units: config.dense_units,
            cluster_width,
            n_classes,
            leaky_slope: config.leaky_slope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        if self.emb_dim == 0 || self.lstm_units == 0 || self.filters == 0 || self.dense_units == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return Err(Error::invalid(
                "kernel sizes must be non-empty and positive",
            ));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::invalid("LeakyReLU slope must be finite"));
        }
        Ok(())
    }

    /// Width of the BiLSTM output per step.
    pub fn seq_width(&self) -> usize {
        2 * self.lstm_units
    }

    pub fn pooled_width(&self) -> usize {
        self.filters * self.kernel_sizes.len()
    }

    pub fn dense_input(&self) -> usize {
        self.pooled_width() + self.cluster_width
    }

    pub fn max_kernel(&self) -> usize {
        self.kernel_sizes.iter().copied().max().unwrap_or(1)
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let h = self.lstm_units;
        let lstm = 2 * (4 * h * (self.emb_dim + h) + 4 * h);
        let conv: usize = self
            .kernel_sizes
            .iter()
            .map(|k| self.filters * k * self.seq_width() + self.filters)
            .sum();
        let dense = self.dense_units * self.dense_input() + self.dense_units;
        let out = self.n_classes * self.dense_units + self.n_classes;
        lstm + conv + dense + out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input weights, `4H x E`, gate rows ordered input, forget, cell, output.
    pub w_x: Array2<f64>,
    /// Recurrent weights, `4H x H`.
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernel: usize,
    /// `F x (kernel * 2H)`; column `j * 2H + c` weighs channel `c` at offset `j`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `out x in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub shape: NetShape,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    pub convs: Vec<ConvParams>,
    pub dense: DenseParams,
    pub output: DenseParams,
}

/// A borrowed parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub layer: Layer,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub layer: Layer,
    pub data: &'a mut [f64],
}

fn glorot(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

fn init_lstm(rng: &mut ChaCha8Rng, shape: &NetShape) -> LstmParams {
    let h = shape.lstm_units;
    let mut b = Array1::zeros(4 * h);
    b.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
    LstmParams {
        w_x: glorot(rng, 4 * h, shape.emb_dim, shape.emb_dim, 4 * h),
        w_h: glorot(rng, 4 * h, h, h, 4 * h),
        b,
    }
}

fn init_output(rng: &mut ChaCha8Rng, shape: &NetShape) -> DenseParams {
    DenseParams {
        w: glorot(
            rng,
            shape.n_classes,
            shape.dense_units,
            shape.dense_units,
            shape.n_classes,
        ),
        b: Array1::zeros(shape.n_classes),
    }
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases, forget-gate bias 1.
    pub fn init(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm_fwd = init_lstm(&mut rng, &shape);
        let lstm_bwd = init_lstm(&mut rng, &shape);
        let width = shape.seq_width();
        let convs = shape
            .kernel_sizes
            .iter()
            .map(|&k| ConvParams {
                kernel: k,
                w: glorot(
                    &mut rng,
                    shape.filters,
                    k * width,
                    k * width,
                    k * shape.filters,
                ),
                b: Array1::zeros(shape.filters),
            })
            .collect();
        let dense = DenseParams {
            w: glorot(
                &mut rng,
                shape.dense_units,
                shape.dense_input(),
                shape.dense_input(),
                shape.dense_units,
            ),
            b: Array1::zeros(shape.dense_units),
        };
        let output = init_output(&mut rng, &shape);
        Ok(Self {
            shape,
            lstm_fwd,
            lstm_bwd,
            convs,
            dense,
            output,
        })
    }

    /// Copy with a freshly initialized prediction layer of `n_classes`.
    pub fn replace_head(&self, n_classes: usize, seed: u64) -> Result<Self> {
        let mut shape = self.shape.clone();
        shape.n_classes = n_classes;
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let output = init_output(&mut rng, &shape);
        Ok(Self {
            shape,
            output,
            ..self.clone()
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        fn push<'a>(
            out: &mut Vec<TensorRef<'a>>,
            name: String,
            layer: Layer,
            shape: &[usize],
            data: &'a [f64],
        ) {
            out.push(TensorRef {
                name,
                layer,
                shape: shape.to_vec(),
                data,
            });
        }
        let mut out = Vec::new();
        for (dir, p) in [("fwd", &self.lstm_fwd), ("bwd", &self.lstm_bwd)] {
            push(
                &mut out,
                format!("lstm.{dir}.w_x"),
                Layer::Lstm,
                p.w_x.shape(),
                slice(&p.w_x),
            );
            push(
                &mut out,
                format!("lstm.{dir}.w_h"),
                Layer::Lstm,
                p.w_h.shape(),
                slice(&p.w_h),
            );
            push(
                &mut out,
                format!("lstm.{dir}.b"),
                Layer::Lstm,
                p.b.shape(),
                p.b.as_slice().unwrap(),
            );
        }
        for c in &self.convs {
            push(
                &mut out,
                format!("conv{}.w", c.kernel),
                Layer::Conv,
                c.w.shape(),
                slice(&c.w),
            );
            push(
                &mut out,
                format!("conv{}.b", c.kernel),
                Layer::Conv,
                c.b.shape(),
                c.b.as_slice().unwrap(),
            );
        }
        for (name, layer, d) in [
            ("dense", Layer::Dense, &self.dense),
            ("output", Layer::Output, &self.output),
        ] {
            push(
                &mut out,
                format!("{name}.w"),
                layer,
                d.w.shape(),
                slice(&d.w),
            );
            push(
                &mut out,
                format!("{name}.b"),
                layer,
                d.b.shape(),
                d.b.as_slice().unwrap(),
            );
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        let Self {
            lstm_fwd,
            lstm_bwd,
            convs,
            dense,
            output,
            ..
        } = self;
        for (dir, p) in [("fwd", lstm_fwd), ("bwd", lstm_bwd)] {
            let LstmParams { w_x, w_h, b } = p;
            out.push(TensorMut {
                name: format!("lstm.{dir}.w_x"),
                layer: Layer::Lstm,
                data: w_x.as_slice_mut().unwrap(),
            });
            out.push(TensorMut {
                name: format!("lstm.{dir}.w_h"),
                layer: Layer::Lstm,
                data: w_h.as_slice_mut().unwrap(),
            });
            out.push(TensorMut {
                name: format!("lstm.{dir}.b"),
                layer: Layer::Lstm,
                data: b.as_slice_mut().unwrap(),
            });
        }
        for c in convs.iter_mut() {
            let k = c.kernel;
            out.push(TensorMut {
                name: format!("conv{k}.w"),
                layer: Layer::Conv,
                data: c.w.as_slice_mut().unwrap(),
            });
            out.push(TensorMut {
                name: format!("conv{k}.b"),
                layer: Layer::Conv,
                data: c.b.as_slice_mut().unwrap(),
            });
        }
        for (name, layer, d) in [
            ("dense", Layer::Dense, dense),
            ("output", Layer::Output, output),
        ] {
            let DenseParams { w, b } = d;
            out.push(TensorMut {
                name: format!("{name}.w"),
                layer,
                data: w.as_slice_mut().unwrap(),
            });
            out.push(TensorMut {
                name: format!("{name}.b"),
                layer,
                data: b.as_slice_mut().unwrap(),
            });
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// SHA-256 over the little-endian bytes of every tensor in `layer`.
    pub fn layer_checksum(&self, layer: Layer) -> String {
        let mut hasher = Sha256::new();
        for t in self.tensors().into_iter().filter(|t| t.layer == layer) {
            hasher.update(t.name.as_bytes());
            for v in t.data {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn checksums(&self) -> [String; 4] {
        Layer::ALL.map(|l| self.layer_checksum(l))
    }

    /// `self += other` for tensors in `mask`.
    pub(crate) fn add_assign_masked(&mut self, other: &NetworkParams, mask: FreezeMask) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            if mask.contains(a.layer) {
                a.data.iter_mut().zip(b.data).for_each(|(x, y)| *x += y);
            }
        }
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters use standard layout")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_shape(n_classes: usize, clusters: usize) -> NetShape {
        NetShape::new(&NetConfig::default(), 300, clusters, n_classes)
    }

    #[test]
    fn init_is_deterministic() {
        let a = NetworkParams::init(default_shape(2, 51), 1).unwrap();
        let b = NetworkParams::init(default_shape(2, 51), 1).unwrap();
        assert_eq!(a, b);
        let c = NetworkParams::init(default_shape(2, 51), 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn output_width_and_count() {
        let p = NetworkParams::init(default_shape(2, 51), 1).unwrap();
        assert_eq!(p.output.w.shape(), &[2, 100]);
        // Independent shape arithmetic for the default architecture.
        let lstm_per_dir = 4 * 100 * 300 + 4 * 100 * 100 + 4 * 100;
        let convs = (3 * 200 * 200 + 200) + (4 * 200 * 200 + 200) + (5 * 200 * 200 + 200);
        let dense = (600 + 51) * 100 + 100;
        let out = 100 * 2 + 2;
        let expected = 2 * lstm_per_dir + convs + dense + out;
        assert_eq!(p.param_count(), expected);
        assert_eq!(p.shape.param_count(), expected);
    }

    #[test]
    fn init_details() {
        let p = NetworkParams::init(default_shape(3, 0), 4).unwrap();
        assert!(p
            .lstm_fwd
            .b
            .slice(ndarray::s![100..200])
            .iter()
            .all(|&b| b == 1.0));
        assert!(p
            .lstm_fwd
            .b
            .slice(ndarray::s![..100])
            .iter()
            .all(|&b| b == 0.0));
        assert!(p.convs.iter().all(|c| c.b.iter().all(|&b| b == 0.0)));
        let limit = (6.0f64 / (651.0 + 100.0)).sqrt();
        assert!(NetworkParams::init(default_shape(3, 51), 4)
            .unwrap()
            .dense
            .w
            .iter()
            .all(|w| w.abs() < limit));
        assert!(NetworkParams::init(default_shape(1, 0), 4).is_err());
    }

    #[test]
    fn replace_head_keeps_lower_layers() {
        let p = NetworkParams::init(default_shape(1297, 51), 4).unwrap();
        let q = p.replace_head(2, 9).unwrap();
        for l in [Layer::Lstm, Layer::Conv, Layer::Dense] {
            assert_eq!(p.layer_checksum(l), q.layer_checksum(l));
        }
        assert_eq!(q.output.w.shape(), &[2, 100]);
        assert_eq!(q.shape.n_classes, 2);
    }

    #[test]
    fn mask_basics() {
        let m = FreezeMask::from_layers(&[Layer::Output, Layer::Dense]);
        assert_eq!(m.to_string(), "{3,4}");
        assert_eq!(m.lowest(), Some(Layer::Dense));
        assert!(!m.contains(Layer::Lstm));
        assert_eq!(FreezeMask::all().layers(), Layer::ALL.to_vec());
        assert_eq!(Layer::from_id(2), Some(Layer::Conv));
        assert_eq!(Layer::from_id(0), None);
        assert_eq!(Layer::from_id(5), None);
    }
}
