use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{FreezeMask, Layer, LstmParams, NetShape, NetworkParams};
use crate::error::{Error, Result};

/// Samples per gradient-accumulation chunk. Fixed so that summation order,
/// and therefore every bit of the result, is independent of thread count.
const CHUNK: usize = 4;

/// Inverted-dropout rates per site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    /// Applied to every element of the BiLSTM output sequence.
    pub lstm: f64,
    /// Applied to each pooled convolution vector.
    pub pooled: f64,
}

impl Dropout {
    pub fn uniform(rate: f64) -> Self {
        Self {
            lstm: rate,
            pooled: rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    Train { dropout: Dropout, seed: u64 },
}

/// Token-embedding sequences with per-sample valid lengths. Rows past a
/// sample's length are padding and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Array2<f64>>,
    pub lengths: Vec<usize>,
    pub clusters: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(
        inputs: Vec<Array2<f64>>,
        clusters: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let lengths = inputs.iter().map(Array2::nrows).collect();
        let b = Self {
            inputs,
            lengths,
            clusters,
            labels,
        };
        if b.clusters.len() != b.inputs.len() || b.labels.len() != b.inputs.len() {
            return Err(Error::Shape("batch fields have different lengths".into()));
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Pads every sequence with zero rows to the longest one.
    pub fn padded(&self) -> Self {
        let max = self.inputs.iter().map(Array2::nrows).max().unwrap_or(0);
        let inputs = self
            .inputs
            .iter()
            .map(|x| {
                let mut p = Array2::zeros((max, x.ncols()));
                p.slice_mut(s![..x.nrows(), ..]).assign(x);
                p
            })
            .collect();
        Self {
            inputs,
            ..self.clone()
        }
    }

    fn validate(&self, shape: &NetShape) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        for (i, x) in self.inputs.iter().enumerate() {
            if x.ncols() != shape.emb_dim {
                return Err(Error::Shape(format!(
                    "sample {i}: embedding width {} != {}",
                    x.ncols(),
                    shape.emb_dim
                )));
            }
            if self.lengths[i] > x.nrows() {
                return Err(Error::Shape(format!("sample {i}: length exceeds rows")));
            }
            if self.clusters[i].len() != shape.cluster_width {
                return Err(Error::Shape(format!(
                    "sample {i}: cluster width {} != {}",
                    self.clusters[i].len(),
                    shape.cluster_width
                )));
            }
        }
        Ok(())
    }
}

struct LstmTrace {
    /// Post-activation gates `[i, f, g, o]`, `T x 4H`.
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

struct ConvTrace {
    argmax: Vec<usize>,
    zmax: Array1<f64>,
    /// After LeakyReLU and dropout.
    pooled: Array1<f64>,
    mask: Option<Array1<f64>>,
}

struct SampleCache {
    len: usize,
    fwd: LstmTrace,
    bwd: LstmTrace,
    seq_mask: Option<Array2<f64>>,
    /// Dropped BiLSTM output padded with zero rows to the largest kernel.
    conv_in: Array2<f64>,
    convs: Vec<ConvTrace>,
    dense_in: Array1<f64>,
    dense_z: Array1<f64>,
    dense_out: Array1<f64>,
    logits: Array1<f64>,
    probs: Array1<f64>,
}

/// Activations of one forward pass, needed by [`backward`].
pub struct ForwardCache {
    shape: NetShape,
    samples: Vec<SampleCache>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Softmax outputs, one row per sample.
    pub fn probs(&self) -> Array2<f64> {
        let n = self.shape.n_classes;
        let mut out = Array2::zeros((self.samples.len(), n));
        for (mut row, s) in out.rows_mut().into_iter().zip(&self.samples) {
            row.assign(&s.probs);
        }
        out
    }

    pub fn logits(&self, sample: usize) -> ArrayView1<'_, f64> {
        self.samples[sample].logits.view()
    }

    /// BiLSTM output of a sample after dropout, `T x 2H`.
    pub fn lstm_output(&self, sample: usize) -> ArrayView2<'_, f64> {
        let s = &self.samples[sample];
        s.conv_in.slice(s![..s.len, ..])
    }

    /// Pooled vector of convolution block `block` after dropout.
    pub fn pooled(&self, sample: usize, block: usize) -> ArrayView1<'_, f64> {
        self.samples[sample].convs[block].pooled.view()
    }

    pub fn dense_output(&self, sample: usize) -> ArrayView1<'_, f64> {
        self.samples[sample].dense_out.view()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

fn dropout_mask(rng: &mut ChaCha8Rng, rate: f64, n: usize) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn lstm_forward(p: &LstmParams, x: ArrayView2<'_, f64>) -> LstmTrace {
    let steps = x.nrows();
    let h = p.w_h.ncols();
    let mut pre = x.dot(&p.w_x.t());
    pre += &p.b;
    let mut gates = Array2::zeros((steps, 4 * h));
    let mut c = Array2::zeros((steps, h));
    let mut tanh_c = Array2::zeros((steps, h));
    let mut hs = Array2::zeros((steps, h));
    let mut h_prev = Array1::<f64>::zeros(h);
    let mut c_prev = Array1::<f64>::zeros(h);
    for t in 0..steps {
        let z = &pre.row(t) + &p.w_h.dot(&h_prev);
        for j in 0..h {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[h + j]);
            let g_g = z[2 * h + j].tanh();
            let o_g = sigmoid(z[3 * h + j]);
            let cell = f_g * c_prev[j] + i_g * g_g;
            let tc = cell.tanh();
            gates[[t, j]] = i_g;
            gates[[t, h + j]] = f_g;
            gates[[t, 2 * h + j]] = g_g;
            gates[[t, 3 * h + j]] = o_g;
            c[[t, j]] = cell;
            tanh_c[[t, j]] = tc;
            hs[[t, j]] = o_g * tc;
        }
        h_prev.assign(&hs.row(t));
        c_prev.assign(&c.row(t));
    }
    LstmTrace {
        gates,
        c,
        tanh_c,
        h: hs,
    }
}

/// Accumulates parameter gradients of one LSTM direction given the loss
/// gradient w.r.t. its hidden outputs (processing order).
fn lstm_backward(
    p: &LstmParams,
    x: ArrayView2<'_, f64>,
    trace: &LstmTrace,
    dh_out: ArrayView2<'_, f64>,
    grads: &mut LstmParams,
) {
    let steps = x.nrows();
    if steps == 0 {
        return;
    }
    let h = p.w_h.ncols();
    let mut dz = Array2::<f64>::zeros((steps, 4 * h));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    for t in (0..steps).rev() {
        for j in 0..h {
            let i_g = trace.gates[[t, j]];
            let f_g = trace.gates[[t, h + j]];
            let g_g = trace.gates[[t, 2 * h + j]];
            let o_g = trace.gates[[t, 3 * h + j]];
            let tc = trace.tanh_c[[t, j]];
            let c_prev = if t > 0 { trace.c[[t - 1, j]] } else { 0.0 };
            let dh = dh_out[[t, j]] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
            dz[[t, j]] = dc * g_g * i_g * (1.0 - i_g);
            dz[[t, h + j]] = dc * c_prev * f_g * (1.0 - f_g);
            dz[[t, 2 * h + j]] = dc * i_g * (1.0 - g_g * g_g);
            dz[[t, 3 * h + j]] = d_o * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
        }
        dh_next = p.w_h.t().dot(&dz.row(t));
    }
    general_mat_mul(1.0, &dz.t(), &x, 1.0, &mut grads.w_x);
    let mut h_prev = Array2::<f64>::zeros((steps, h));
    h_prev
        .slice_mut(s![1.., ..])
        .assign(&trace.h.slice(s![..steps - 1, ..]));
    general_mat_mul(1.0, &dz.t(), &h_prev, 1.0, &mut grads.w_h);
    grads.b += &dz.sum_axis(Axis(0));
}

fn reversed(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

fn sample_forward(params: &NetworkParams, batch: &Batch, i: usize, mode: Mode) -> SampleCache {
    let shape = &params.shape;
    let hu = shape.lstm_units;
    let width = shape.seq_width();
    let len = batch.lengths[i];
    let x = batch.inputs[i].slice(s![..len, ..]);

    let mut rng = match mode {
        Mode::Train { seed, .. } => {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            Some(r)
        }
        Mode::Eval => None,
    };
    let dropout = match mode {
        Mode::Train { dropout, .. } => Some(dropout),
        Mode::Eval => None,
    };

    let fwd = lstm_forward(&params.lstm_fwd, x);
    let bwd = lstm_forward(&params.lstm_bwd, reversed(x).view());

    let padded_len = len.max(shape.max_kernel());
    let mut conv_in = Array2::<f64>::zeros((padded_len, width));
    conv_in.slice_mut(s![..len, ..hu]).assign(&fwd.h);
    conv_in
        .slice_mut(s![..len, hu..])
        .assign(&bwd.h.slice(s![..;-1, ..]));

    let seq_mask = match (&mut rng, dropout) {
        (Some(r), Some(d)) if d.lstm > 0.0 => {
            let m = Array2::from_shape_vec((len, width), dropout_mask(r, d.lstm, len * width))
                .expect("mask shape");
            let mut view = conv_in.slice_mut(s![..len, ..]);
            view *= &m;
            Some(m)
        }
        _ => None,
    };

    let data = conv_in.as_slice().expect("standard layout");
    let mut convs = Vec::with_capacity(params.convs.len());
    for conv in &params.convs {
        let k = conv.kernel;
        let positions = padded_len - k + 1;
        let cols = Array2::from_shape_fn((positions, k * width), |(p, j)| data[p * width + j]);
        let mut z = cols.dot(&conv.w.t());
        z += &conv.b;
        let mut argmax = vec![0usize; shape.filters];
        let mut zmax = Array1::<f64>::zeros(shape.filters);
        for f in 0..shape.filters {
            let col = z.column(f);
            let mut best = 0;
            for p in 1..positions {
                if col[p] > col[best] {
                    best = p;
                }
            }
            argmax[f] = best;
            zmax[f] = col[best];
        }
        let mut pooled = zmax.mapv(|v| leaky(v, shape.leaky_slope));
        let mask = match (&mut rng, dropout) {
            (Some(r), Some(d)) if d.pooled > 0.0 => {
                let m = Array1::from(dropout_mask(r, d.pooled, shape.filters));
                pooled *= &m;
                Some(m)
            }
            _ => None,
        };
        convs.push(ConvTrace {
            argmax,
            zmax,
            pooled,
            mask,
        });
    }

    let mut dense_in = Vec::with_capacity(shape.dense_input());
    for c in &convs {
        dense_in.extend(c.pooled.iter());
    }
    dense_in.extend(batch.clusters[i].iter());
    let dense_in = Array1::from(dense_in);
    let dense_z = params.dense.w.dot(&dense_in) + &params.dense.b;
    let dense_out = dense_z.mapv(|v| leaky(v, shape.leaky_slope));
    let logits = params.output.w.dot(&dense_out) + &params.output.b;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|v| (v - max).exp());
    let probs = &exp / exp.sum();

    SampleCache {
        len,
        fwd,
        bwd,
        seq_mask,
        conv_in,
        convs,
        dense_in,
        dense_z,
        dense_out,
        logits,
        probs,
    }
}

/// Runs the network over a batch. In train mode dropout masks are drawn
/// from `seed` with one stream per sample index.
pub fn forward(params: &NetworkParams, batch: &Batch, mode: Mode) -> Result<ForwardCache> {
    batch.validate(&params.shape)?;
    if let Mode::Train { dropout, .. } = mode {
        for r in [dropout.lstm, dropout.pooled] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(format!("dropout rate {r} outside [0, 1)")));
            }
        }
    }
    let samples = (0..batch.len())
        .into_par_iter()
        .map(|i| sample_forward(params, batch, i, mode))
        .collect();
    Ok(ForwardCache {
        shape: params.shape.clone(),
        samples,
    })
}

/// Mean categorical cross-entropy with probabilities clamped at `1e-12`.
pub fn loss(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[[i, y]].max(1e-12).ln())
        .sum();
    total / labels.len() as f64
}

fn sample_backward(
    params: &NetworkParams,
    cache: &SampleCache,
    x: ArrayView2<'_, f64>,
    label: usize,
    scale: f64,
    mask: FreezeMask,
    grads: &mut NetworkParams,
) {
    let shape = &params.shape;
    let slope = shape.leaky_slope;
    let lowest = mask.lowest().expect("non-empty mask");
    let width = shape.seq_width();
    let hu = shape.lstm_units;

    let mut dlogits = cache.probs.clone();
    dlogits[label] -= 1.0;
    dlogits *= scale;
    if mask.contains(Layer::Output) {
        let g = &mut grads.output;
        g.w += &outer(&dlogits, &cache.dense_out);
        g.b += &dlogits;
    }
    if lowest == Layer::Output {
        return;
    }

    let da3 = params.output.w.t().dot(&dlogits);
    let dz3 = Array1::from_shape_fn(da3.len(), |j| da3[j] * leaky_grad(cache.dense_z[j], slope));
    if mask.contains(Layer::Dense) {
        grads.dense.w += &outer(&dz3, &cache.dense_in);
        grads.dense.b += &dz3;
    }
    if lowest == Layer::Dense {
        return;
    }

    let dv = params.dense.w.t().dot(&dz3);
    let need_seq = lowest == Layer::Lstm;
    let mut d_conv_in = if need_seq {
        Array2::<f64>::zeros(cache.conv_in.raw_dim())
    } else {
        Array2::zeros((0, 0))
    };
    let conv_in = cache.conv_in.as_slice().expect("standard layout");
    let f_count = shape.filters;
    for (ci, (conv, trace)) in params.convs.iter().zip(&cache.convs).enumerate() {
        let k = conv.kernel;
        let span = k * width;
        let gconv = &mut grads.convs[ci];
        for f in 0..f_count {
            let mut dp = dv[ci * f_count + f];
            if let Some(m) = &trace.mask {
                dp *= m[f];
            }
            let dz = dp * leaky_grad(trace.zmax[f], slope);
            if dz == 0.0 {
                continue;
            }
            let start = trace.argmax[f] * width;
            if mask.contains(Layer::Conv) {
                let window = &conv_in[start..start + span];
                let mut row = gconv.w.row_mut(f);
                for (g, w) in row.iter_mut().zip(window) {
                    *g += dz * w;
                }
                gconv.b[f] += dz;
            }
            if need_seq {
                let target = d_conv_in.as_slice_mut().expect("standard layout");
                for (d, w) in target[start..start + span].iter_mut().zip(conv.w.row(f)) {
                    *d += dz * w;
                }
            }
        }
    }
    if !need_seq {
        return;
    }

    let len = cache.len;
    let mut dseq = d_conv_in.slice(s![..len, ..]).to_owned();
    if let Some(m) = &cache.seq_mask {
        dseq *= m;
    }
    lstm_backward(
        &params.lstm_fwd,
        x,
        &cache.fwd,
        dseq.slice(s![.., ..hu]),
        &mut grads.lstm_fwd,
    );
    let dh_bwd = dseq.slice(s![..;-1, hu..]).to_owned();
    lstm_backward(
        &params.lstm_bwd,
        reversed(x).view(),
        &cache.bwd,
        dh_bwd.view(),
        &mut grads.lstm_bwd,
    );
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Gradients of the mean batch loss. Layers outside `mask` get all-zero
/// gradients and backpropagation stops below the lowest trainable layer.
pub fn backward(
    params: &NetworkParams,
    batch: &Batch,
    cache: &ForwardCache,
    mask: FreezeMask,
) -> Result<NetworkParams> {
    if mask.is_empty() {
        return Err(Error::invalid("no trainable layers"));
    }
    if cache.shape != params.shape || cache.len() != batch.len() {
        return Err(Error::Shape(
            "forward cache does not match params and batch".into(),
        ));
    }
    if let Some((i, _)) = batch
        .labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y >= params.shape.n_classes)
    {
        return Err(Error::Shape(format!("sample {i}: label out of range")));
    }
    let scale = 1.0 / batch.len() as f64;
    let indices: Vec<usize> = (0..batch.len()).collect();
    let partials: Vec<NetworkParams> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = params.zeros_like();
            for &i in chunk {
                let x = batch.inputs[i].slice(s![..batch.lengths[i], ..]);
                sample_backward(
                    params,
                    &cache.samples[i],
                    x,
                    batch.labels[i],
                    scale,
                    mask,
                    &mut g,
                );
            }
            g
        })
        .collect();
    let mut total = params.zeros_like();
    for p in &partials {
        total.add_assign_masked(p, mask);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetConfig, NetShape};

    fn tiny_shape() -> NetShape {
        let config = NetConfig {
            lstm_units: 3,
            kernel_sizes: vec![2, 3],
            filters: 4,
            dense_units: 5,
            leaky_slope: 0.3,
        };
        NetShape::new(&config, 4, 2, 3)
    }

    fn batch(lengths: &[usize], seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = lengths
            .iter()
            .map(|&l| Array2::from_shape_fn((l, 4), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let clusters = lengths.iter().map(|_| vec![1.0, 0.0]).collect();
        let labels = lengths.iter().enumerate().map(|(i, _)| i % 3).collect();
        Batch::new(inputs, clusters, labels).unwrap()
    }

    #[test]
    fn probs_are_distributions() {
        let p = NetworkParams::init(tiny_shape(), 1).unwrap();
        let b = batch(&[1, 4, 7], 2);
        let c = forward(&p, &b, Mode::Eval).unwrap();
        for row in c.probs().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn eval_is_deterministic_and_train_depends_on_seed() {
        let p = NetworkParams::init(tiny_shape(), 1).unwrap();
        let b = batch(&[3, 5], 2);
        let a = forward(&p, &b, Mode::Eval).unwrap().probs();
        assert_eq!(a, forward(&p, &b, Mode::Eval).unwrap().probs());
        let train = |seed| {
            forward(
                &p,
                &b,
                Mode::Train {
                    dropout: Dropout::uniform(0.5),
                    seed,
                },
            )
            .unwrap()
            .probs()
        };
        assert_eq!(train(1), train(1));
        assert_ne!(train(1), train(2));
    }

    #[test]
    fn single_token_and_empty_sequences_are_padded() {
        let p = NetworkParams::init(tiny_shape(), 1).unwrap();
        let b = batch(&[1, 0], 3);
        let c = forward(&p, &b, Mode::Eval).unwrap();
        assert!(c.probs().iter().all(|v| v.is_finite()));
        let g = backward(&p, &b, &c, FreezeMask::all()).unwrap();
        assert!(g
            .tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn padding_rows_do_not_change_logits() {
        let p = NetworkParams::init(tiny_shape(), 5).unwrap();
        let b = batch(&[2, 6, 3], 4);
        let mut padded = b.padded();
        for x in &mut padded.inputs {
            x.fill(7.0);
        }
        for (x, orig) in padded.inputs.iter_mut().zip(&b.inputs) {
            x.slice_mut(s![..orig.nrows(), ..]).assign(orig);
        }
        let a = forward(&p, &b, Mode::Eval).unwrap();
        let c = forward(&p, &padded, Mode::Eval).unwrap();
        for i in 0..3 {
            assert_eq!(a.logits(i), c.logits(i));
        }
    }

    #[test]
    fn loss_formula() {
        let perfect = Array2::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap();
        assert_eq!(loss(&perfect, &[0]), 0.0);
        let uniform = Array2::from_shape_vec((2, 2), vec![0.5; 4]).unwrap();
        assert!((loss(&uniform, &[0, 1]) - std::f64::consts::LN_2).abs() < 1e-12);
        let p = NetworkParams::init(tiny_shape(), 1).unwrap();
        let b = batch(&[3, 4, 2, 5], 8);
        let probs = forward(&p, &b, Mode::Eval).unwrap().probs();
        let brute = b
            .labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -(probs[[i, y]].ln()))
            .sum::<f64>()
            / 4.0;
        assert!((loss(&probs, &b.labels) - brute).abs() < 1e-15);
        let zero = Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap();
        assert!((loss(&zero, &[0]) - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn frozen_layers_get_zero_gradients() {
        let p = NetworkParams::init(tiny_shape(), 1).unwrap();
        let b = batch(&[3, 4], 2);
        let mode = Mode::Train {
            dropout: Dropout::uniform(0.5),
            seed: 3,
        };
        let c = forward(&p, &b, mode).unwrap();
        let g = backward(&p, &b, &c, FreezeMask::only(Layer::Output)).unwrap();
        for t in g.tensors() {
            if t.layer != Layer::Output {
                assert!(t.data.iter().all(|&v| v == 0.0), "{}", t.name);
            }
        }
        assert!(g.output.w.iter().any(|&v| v != 0.0));
        assert!(backward(&p, &b, &c, FreezeMask::none()).is_err());
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let p = NetworkParams::init(tiny_shape(), 1).unwrap();
        let q = p.replace_head(4, 1).unwrap();
        let b = batch(&[3, 4], 2);
        let c = forward(&p, &b, Mode::Eval).unwrap();
        assert!(matches!(
            backward(&q, &b, &c, FreezeMask::all()),
            Err(Error::Shape(_))
        ));
        let short = batch(&[3], 2);
        assert!(backward(&p, &short, &c, FreezeMask::all()).is_err());
    }

    #[test]
    fn gradients_are_deterministic() {
        let p = NetworkParams::init(tiny_shape(), 1).unwrap();
        let b = batch(&[3, 4, 5, 6, 2, 1, 7], 2);
        let run = || {
            let c = forward(&p, &b, Mode::Eval).unwrap();
            backward(&p, &b, &c, FreezeMask::all()).unwrap()
        };
        assert_eq!(run(), run());
    }
}
