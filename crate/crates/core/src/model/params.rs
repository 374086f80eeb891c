use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

/// Gate order used everywhere: input, forget, output, cell candidate.
pub const GATE_NAMES: [&str; 4] = ["i", "f", "o", "g"];
pub const FORGET: usize = 1;

/// Layer sizes of the stacked LSTM forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub input_size: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Number of look-ahead steps predicted at once.
    pub output_size: usize,
}

impl Default for ModelDims {
    /// 1 → 256 → 128 → 5.
    fn default() -> Self {
        Self { input_size: 1, hidden1: 256, hidden2: 128, output_size: 5 }
    }
}

impl ModelDims {
    pub fn new(input_size: usize, hidden1: usize, hidden2: usize, output_size: usize) -> Self {
        Self { input_size, hidden1, hidden2, output_size }
    }

    fn layer_count(input: usize, hidden: usize) -> usize {
        4 * (hidden * input + hidden * hidden + hidden)
    }

    pub fn param_count(&self) -> usize {
        Self::layer_count(self.input_size, self.hidden1)
            + Self::layer_count(self.hidden1, self.hidden2)
            + self.output_size * self.hidden2
            + self.output_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.hidden1 == 0 || self.hidden2 == 0 || self.output_size == 0 {
            return Err(ModelError::BadDims(*self));
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `out += self · x`
    pub(crate) fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += selfᵀ · y`
    pub(crate) fn tmatvec_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            if yr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
    }

    /// `self += y ⊗ x`
    pub(crate) fn outer_add(&mut self, y: &[f64], x: &[f64]) {
        for (row, &yr) in self.data.chunks_exact_mut(self.cols).zip(y) {
            if yr == 0.0 {
                continue;
            }
            for (a, b) in row.iter_mut().zip(x) {
                *a += yr * b;
            }
        }
    }
}

/// Weights of one LSTM layer, one `W`/`U`/`b` triple per gate in [`GATE_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Vec<f64>; 4],
}

impl LstmLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            w: std::array::from_fn(|_| Matrix::zeros(hidden_size, input_size)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden_size, hidden_size)),
            b: std::array::from_fn(|_| vec![0.0; hidden_size]),
        }
    }
}

/// All trainable parameters of the forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    pub dense_w: Matrix,
    pub dense_b: Vec<f64>,
}

/// Parameter-shaped gradient of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParams);

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            layer1: LstmLayerParams::zeros(dims.input_size, dims.hidden1),
            layer2: LstmLayerParams::zeros(dims.hidden1, dims.hidden2),
            dense_w: Matrix::zeros(dims.output_size, dims.hidden2),
            dense_b: vec![0.0; dims.output_size],
        }
    }

    /// Parameter blocks in the fixed exchange layout: layer 1 gates i,f,o,g
    /// (each `W`, `U`, `b`), layer 2 likewise, dense weights row-major, dense bias.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(26);
        for layer in [&self.layer1, &self.layer2] {
            for k in 0..4 {
                out.push(layer.w[k].data.as_slice());
                out.push(layer.u[k].data.as_slice());
                out.push(layer.b[k].as_slice());
            }
        }
        out.push(&self.dense_w.data);
        out.push(&self.dense_b);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(26);
        for layer in [&mut self.layer1, &mut self.layer2] {
            for ((w, u), b) in layer.w.iter_mut().zip(layer.u.iter_mut()).zip(layer.b.iter_mut()) {
                out.push(w.data.as_mut_slice());
                out.push(u.data.as_mut_slice());
                out.push(b.as_mut_slice());
            }
        }
        out.push(&mut self.dense_w.data);
        out.push(&mut self.dense_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Glorot-uniform weights per matrix, zero biases except forget gates (1.0).
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut p = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fill = |m: &mut Matrix, rng: &mut ChaCha8Rng| {
            // Matrices are stored (fan_out × fan_in).
            let limit = (6.0 / (m.rows + m.cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            m.data.iter_mut().for_each(|v| *v = dist.sample(rng));
        };
        for layer in [&mut p.layer1, &mut p.layer2] {
            for k in 0..4 {
                fill(&mut layer.w[k], &mut rng);
                fill(&mut layer.u[k], &mut rng);
            }
            layer.b[FORGET].iter_mut().for_each(|v| *v = 1.0);
        }
        fill(&mut p.dense_w, &mut rng);
        Ok(p)
    }

    pub fn flatten(&self) -> ParamVector {
        let mut values = Vec::with_capacity(self.param_count());
        for b in self.blocks() {
            values.extend_from_slice(b);
        }
        ParamVector { values }
    }

    pub fn unflatten(v: &ParamVector, dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let expected = dims.param_count();
        if v.len() != expected {
            return Err(ModelError::LengthMismatch { expected, actual: v.len() });
        }
        let mut p = Self::zeros(dims);
        let mut rest = v.values.as_slice();
        for block in p.blocks_mut() {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
        Ok(p)
    }

    pub(crate) fn check_same_shape(&self, other: &ModelParams) -> Result<()> {
        if self.dims != other.dims {
            return Err(ModelError::ShapeMismatch { expected: self.dims, actual: other.dims });
        }
        Ok(())
    }
}

impl Gradients {
    pub fn zeros(dims: ModelDims) -> Self {
        Gradients(ModelParams::zeros(dims))
    }

    pub fn dims(&self) -> ModelDims {
        self.0.dims
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        self.0.check_same_shape(&other.0)?;
        for (a, b) in self.0.blocks_mut().into_iter().zip(other.0.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.0.blocks_mut() {
            block.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0))
    }
}

const MAGIC: &[u8; 4] = b"FREP";
const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// Flat parameter vector in the exchange layout of [`ModelParams::blocks`].
///
/// Serialized form: `FREP`, format version (u32 LE), parameter count (u64 LE),
/// then the values as little-endian f64.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(ModelError::Format("missing FREP header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ModelError::Format(format!("unsupported format version {version}")));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != count.saturating_mul(8) {
            return Err(ModelError::LengthMismatch { expected: count, actual: body.len() / 8 });
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { values })
    }
}
