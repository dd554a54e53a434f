//! Bias-free multilayer perceptron.
//!
//! Every layer is a plain weight matrix followed by the shifted sigmoid,
//! output layer included, so all outputs live in (0, 1). Backprop is the
//! straightforward chain rule for the squared-error loss; a central
//! finite-difference estimator is kept alongside it as a test oracle.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// Default layer shapes: 28x28 input, two hidden layers of 64, 10 outputs.
pub const DEFAULT_SHAPES: [(usize, usize); 3] = [(784, 64), (64, 64), (64, 10)];
/// Default init std for every layer.
pub const DEFAULT_INIT_STD: f64 = 0.1;
/// Weight bounds enforced at init and after every update.
pub const WEIGHT_LO: f64 = -1.0;
pub const WEIGHT_HI: f64 = 1.0;

/// Sigmoid saturates to exactly 1.0 in f64 for inputs around 37; the clamp
/// keeps post-activations strictly inside (0, 1) as the rest of the code
/// assumes.
const ACT_MARGIN: f64 = 1e-12;

/// The scaled, x-shifted logistic: `1 / (1 + exp(-slope * (z - shift)))`.
///
/// With the defaults the curve crosses 0.5 at z = 1 and gives ~0.047 at
/// z = 0, so an idle unit reports close to zero.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ActivationSpec {
    pub slope: f64,
    pub shift: f64,
}

impl Default for ActivationSpec {
    fn default() -> Self {
        Self { slope: 3.0, shift: 1.0 }
    }
}

impl ActivationSpec {
    pub fn apply(&self, z: f64) -> f64 {
        let a = 1.0 / (1.0 + (-self.slope * (z - self.shift)).exp());
        a.clamp(ACT_MARGIN, 1.0 - ACT_MARGIN)
    }

    /// d(activation)/dz expressed through the output: slope * a * (1 - a).
    pub fn derivative(&self, z: f64) -> f64 {
        self.deriv_from_output(self.apply(z))
    }

    pub fn deriv_from_output(&self, a: f64) -> f64 {
        self.slope * a * (1.0 - a)
    }
}

/// Per-layer weight gradients, shapes matching the network's weights.
#[derive(Debug, Clone)]
pub struct Grads {
    pub layers: Vec<Matrix>,
}

impl Grads {
    pub fn scale_in_place(&mut self, alpha: f64) {
        for g in &mut self.layers {
            g.scale_in_place(alpha);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().map(Matrix::max_abs).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(Matrix::all_finite)
    }
}

/// Everything the backward pass needs from a forward pass: the input batch
/// plus per-layer pre- and post-activations.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl ForwardTrace {
    /// Final outputs, one row per sample, 10 columns.
    pub fn outputs(&self) -> &Matrix {
        self.post.last().expect("trace has at least one layer")
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }

    pub fn post_activations(&self) -> &[Matrix] {
        &self.post
    }

    fn layer_input(&self, layer: usize) -> &Matrix {
        if layer == 0 {
            &self.input
        } else {
            &self.post[layer - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Matrix>,
    pub activation: ActivationSpec,
}

impl Mlp {
    /// Draw weights from Normal(0, std_l) per layer and clip them into
    /// [-1, 1] (a std of 0.5 puts ~5% of the mass outside).
    pub fn init(
        shapes: &[(usize, usize)],
        per_layer_std: &[f64],
        activation: ActivationSpec,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        if shapes.len() != per_layer_std.len() {
            return Err(Error::invalid(format!(
                "{} layer shapes but {} init stds",
                shapes.len(),
                per_layer_std.len()
            )));
        }
        if activation.slope <= 0.0 {
            return Err(Error::invalid("activation slope must be positive"));
        }
        for pair in shapes.windows(2) {
            if pair[0].1 != pair[1].0 {
                return Err(Error::invalid(format!(
                    "layer shapes do not chain: {}x{} then {}x{}",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        let mut weights = Vec::with_capacity(shapes.len());
        for (&(rows, cols), &std) in shapes.iter().zip(per_layer_std) {
            if std <= 0.0 {
                return Err(Error::invalid("init std must be positive"));
            }
            let mut w = Matrix::zeros(rows, cols);
            for v in w.data_mut() {
                *v = rng.normal(0.0, std);
            }
            w.clip_in_place(WEIGHT_LO, WEIGHT_HI)?;
            weights.push(w);
        }
        Ok(Self { weights, activation })
    }

    pub fn default_sized(rng: &mut SeededRng) -> Self {
        Self::init(
            &DEFAULT_SHAPES,
            &[DEFAULT_INIT_STD; 3],
            ActivationSpec::default(),
            rng,
        )
        .expect("default shapes are valid")
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.weights.iter().map(Matrix::shape).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("nonempty").cols()
    }

    /// Forward pass over a batch (row per sample). The trace takes
    /// ownership of the batch so backward can reuse it without a copy.
    pub fn forward(&self, batch: Matrix) -> Result<ForwardTrace> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape("forward", batch.shape(), self.weights[0].shape()));
        }
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut post = Vec::with_capacity(self.weights.len());
        let mut current = &batch;
        for w in &self.weights {
            let z = current.matmul(w)?;
            let a = z.map(|v| self.activation.apply(v));
            pre.push(z);
            post.push(a);
            current = post.last().expect("just pushed");
        }
        Ok(ForwardTrace { input: batch, pre, post })
    }

    /// Outputs for one scaled image given as a 784-long slice.
    pub fn forward_single(&self, image: &[f64]) -> Result<Matrix> {
        let batch = Matrix::from_vec(1, image.len(), image.to_vec())?;
        Ok(self.forward(batch)?.outputs().clone())
    }

    /// Gradients of `loss` w.r.t. every weight, summed over the batch.
    pub fn backward(&self, trace: &ForwardTrace, targets: &Matrix) -> Result<Grads> {
        let outputs = trace.outputs();
        if outputs.shape() != targets.shape() {
            return Err(Error::shape("backward", outputs.shape(), targets.shape()));
        }
        let act = self.activation;
        // delta at the output layer: (y - t) * act'(z), with act' taken
        // from the post-activation.
        let mut delta = outputs.zip_map(targets, |a, t| (a - t) * act.deriv_from_output(a))?;
        let mut layers = vec![Matrix::zeros(0, 0); self.weights.len()];
        for layer in (0..self.weights.len()).rev() {
            layers[layer] = trace.layer_input(layer).matmul_at(&delta)?;
            if layer > 0 {
                let back = delta.matmul_bt(&self.weights[layer])?;
                delta = back.zip_map(&trace.post[layer - 1], |d, a| {
                    d * act.deriv_from_output(a)
                })?;
            }
        }
        Ok(Grads { layers })
    }

    /// Central-difference gradient estimate; the independent oracle
    /// `backward` is checked against.
    pub fn numerical_grad(&self, batch: &Matrix, targets: &Matrix, eps: f64) -> Result<Grads> {
        if eps <= 0.0 {
            return Err(Error::invalid("eps must be positive"));
        }
        let mut scratch = self.clone();
        let mut layers = Vec::with_capacity(self.weights.len());
        for layer in 0..self.weights.len() {
            let (rows, cols) = self.weights[layer].shape();
            let mut g = Matrix::zeros(rows, cols);
            for idx in 0..rows * cols {
                let orig = scratch.weights[layer].data()[idx];
                scratch.weights[layer].data_mut()[idx] = orig + eps;
                let plus = loss(scratch.forward(batch.clone())?.outputs(), targets)?;
                scratch.weights[layer].data_mut()[idx] = orig - eps;
                let minus = loss(scratch.forward(batch.clone())?.outputs(), targets)?;
                scratch.weights[layer].data_mut()[idx] = orig;
                g.data_mut()[idx] = (plus - minus) / (2.0 * eps);
            }
            layers.push(g);
        }
        Ok(Grads { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Checkpoint format, version 1, all little-endian:
    /// magic `FNET`, u32 version, f64 slope, f64 shift, u32 layer count,
    /// then per layer u32 rows + u32 cols, then all weights as f64 in
    /// row-major order, layer by layer. Round-trips are bit-exact.
    pub fn to_bytes(&self) -> Vec<u8> {
        let weight_count: usize = self.weights.iter().map(|w| w.data().len()).sum();
        let mut out = Vec::with_capacity(24 + 8 * self.weights.len() + 8 * weight_count);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.activation.slope.to_le_bytes());
        out.extend_from_slice(&self.activation.shift.to_le_bytes());
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&(w.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(w.cols() as u32).to_le_bytes());
        }
        for w in &self.weights {
            for v in w.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic {:02x?}, expected {:02x?}",
                magic, CHECKPOINT_MAGIC
            )));
        }
        let version = r.read_u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let slope = r.read_f64()?;
        let shift = r.read_f64()?;
        if !(slope.is_finite() && shift.is_finite()) || slope <= 0.0 {
            return Err(Error::Checkpoint("invalid activation parameters".into()));
        }
        let n_layers = r.read_u32()? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
        }
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = r.read_u32()? as usize;
            let cols = r.read_u32()? as usize;
            shapes.push((rows, cols));
        }
        let mut weights = Vec::with_capacity(n_layers);
        for (rows, cols) in shapes {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.read_f64()?);
            }
            weights.push(Matrix::from_vec(rows, cols, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after weights",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            weights,
            activation: ActivationSpec { slope, shift },
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"FNET";
const CHECKPOINT_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn read_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Squared-error loss, `0.5 * sum((y - t)^2)`, summed over the whole batch.
pub fn loss(outputs: &Matrix, targets: &Matrix) -> Result<f64> {
    if outputs.shape() != targets.shape() {
        return Err(Error::shape("loss", outputs.shape(), targets.shape()));
    }
    let sum: f64 = outputs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(y, t)| (y - t) * (y - t))
        .sum();
    Ok(0.5 * sum)
}

/// 1x10 target row for one digit.
pub fn one_hot(label: u8) -> Result<Matrix> {
    if label > 9 {
        return Err(Error::invalid(format!("label {label} out of range 0..=9")));
    }
    let mut m = Matrix::zeros(1, 10);
    m.set(0, label as usize, 1.0);
    Ok(m)
}

/// Stacked one-hot rows for a label slice.
pub fn one_hot_batch(labels: &[u8]) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), 10);
    for (i, &label) in labels.iter().enumerate() {
        if label > 9 {
            return Err(Error::invalid(format!("label {label} out of range 0..=9")));
        }
        m.set(i, label as usize, 1.0);
    }
    Ok(m)
}
