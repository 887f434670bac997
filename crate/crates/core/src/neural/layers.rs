use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => softmax_in_place(z),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// Fully connected stack with all parameters in one flat vector: per layer,
/// the `outputs × inputs` weight matrix (row-major) followed by the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if sizes.len() < 2 || activations.len() + 1 != sizes.len() || sizes.contains(&0) {
            return Err(Error::Shape(format!(
                "layer sizes {sizes:?} do not match {} activations",
                activations.len()
            )));
        }
        let count = Self::count_params(&sizes);
        Ok(Self {
            sizes,
            activations,
            params: vec![0.0; count],
        })
    }

    pub fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layer_count(&self) -> usize {
        self.activations.len()
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Offset of layer `l`'s weights in the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        Self::count_params(&self.sizes[..=l])
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        let (w, rest) = self.params[off..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        let (w, rest) = self.params[off..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    /// Pre-activation `W x + b` of layer `l`.
    pub fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let n_in = self.sizes[l];
        b.iter()
            .zip(w.chunks_exact(n_in))
            .map(|(bias, row)| bias + dot(row, x))
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in 0..self.layer_count() {
            let mut z = self.affine(l, &x);
            self.activations[l].apply(&mut z);
            x = z;
        }
        x
    }

    /// Activations of every layer, input first.
    pub fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = vec![input.to_vec()];
        for l in 0..self.layer_count() {
            let mut z = self.affine(l, trace.last().unwrap());
            self.activations[l].apply(&mut z);
            trace.push(z);
        }
        trace
    }

    pub fn to_document(&self, kind: &str, metadata: Option<serde_json::Value>) -> WeightDocument {
        let (weights, biases) = (0..self.layer_count())
            .map(|l| {
                let (w, b) = self.layer(l);
                (w.to_vec(), b.to_vec())
            })
            .unzip();
        WeightDocument {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            kind: kind.into(),
            layer_sizes: self.sizes.clone(),
            activations: self.activations.clone(),
            weights,
            biases,
            metadata,
        }
    }

    pub fn from_document(doc: &WeightDocument) -> Result<Self> {
        if doc.format != WEIGHTS_FORMAT || doc.version != WEIGHTS_VERSION {
            return Err(Error::Config(format!(
                "unsupported weight document {} v{}",
                doc.format, doc.version
            )));
        }
        let mut mlp = Mlp::zeros(doc.layer_sizes.clone(), doc.activations.clone())?;
        if doc.weights.len() != mlp.layer_count() || doc.biases.len() != mlp.layer_count() {
            return Err(Error::Shape("weight document has the wrong number of layers".into()));
        }
        for l in 0..mlp.layer_count() {
            let (w, b) = mlp.layer_mut(l);
            if doc.weights[l].len() != w.len() || doc.biases[l].len() != b.len() {
                return Err(Error::Shape(format!("layer {l} has mismatched weight arrays")));
            }
            w.copy_from_slice(&doc.weights[l]);
            b.copy_from_slice(&doc.biases[l]);
        }
        Ok(mlp)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub const WEIGHTS_FORMAT: &str = "qmetro-weights";
pub const WEIGHTS_VERSION: u32 = 1;

/// Versioned JSON weight format shared by the posterior and policy networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDocument {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    /// Row-major `outputs × inputs` matrix per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl WeightDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weight documents serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}
