//! Small fully connected networks with access to the penultimate feature.
//!
//! An [`Mlp`] is `backbone → [embedding] → classifier`. The backbone is a
//! stack of hidden layers (ReLU by default); the optional embedding is a
//! plain linear map whose output is the feature `f` that the mimicking
//! losses see. There is never a nonlinearity between the embedding and the
//! classifier, which is what lets [`merge_embedding`] fold the two into a
//! single layer after training.
//!
//! Parameters can be flattened into one vector in a fixed order (hidden
//! layers, then embedding, then classifier; weights before bias within each
//! layer). The trainer uses that order for SGD, freezing and averaging.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::numerics::{gaussian_matrix, Matrix, RngStream};

/// `forward(f) = Wᵀf + b` with `W` of shape `in_dim × out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    weights: Matrix,
    bias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        let layer = Self { weights, bias };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weights: Matrix::identity(dim),
            bias: vec![0.0; dim],
        }
    }

    pub fn random(in_dim: usize, out_dim: usize, std: f64, rng: &mut RngStream) -> Result<Self> {
        Ok(Self {
            weights: gaussian_matrix(in_dim, out_dim, 0.0, std, rng)?,
            bias: vec![0.0; out_dim],
        })
    }

    fn validate(&self) -> Result<()> {
        check_len("layer bias", self.bias.len(), self.weights.cols())?;
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(invalid("layer bias is not finite"));
        }
        // Matrix::from_vec checks finiteness, deserialization does not.
        Matrix::from_vec(
            self.weights.rows(),
            self.weights.cols(),
            self.weights.as_slice().to_vec(),
        )?;
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn num_params(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.weights.transpose_mul_vec(f)?;
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        Ok(out)
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weights.as_slice());
        out.extend_from_slice(&self.bias);
    }

    fn read_flat(&mut self, flat: &[f64]) -> usize {
        let nw = self.weights.as_slice().len();
        self.weights.as_mut_slice().copy_from_slice(&flat[..nw]);
        let nb = self.bias.len();
        self.bias.copy_from_slice(&flat[nw..nw + nb]);
        nw + nb
    }

    /// Gradient of a layer given its input and the upstream gradient on its
    /// output: `(dW, db) = (input ⊗ upstream, upstream)`.
    fn outer_grad(input: &[f64], upstream: &[f64]) -> Self {
        let mut weights = Matrix::zeros(input.len(), upstream.len());
        for (r, &x) in input.iter().enumerate() {
            for (c, &g) in upstream.iter().enumerate() {
                weights[(r, c)] = x * g;
            }
        }
        Self {
            weights,
            bias: upstream.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub layer: LinearLayer,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    input_dim: usize,
    hidden: Vec<HiddenLayer>,
    embedding: Option<LinearLayer>,
    classifier: LinearLayer,
}

/// Everything computed by [`Mlp::forward`] that backprop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
    /// Penultimate feature, the classifier's input.
    pub feature: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    /// Output of the backbone (input to the embedding, if any).
    pub fn backbone_output(&self) -> &[f64] {
        self.activations.last().unwrap_or(&self.input)
    }
}

/// Parameter gradients, shaped like the [`Mlp`] that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub hidden: Vec<LinearLayer>,
    pub embedding: Option<LinearLayer>,
    pub classifier: LinearLayer,
}

impl MlpGrad {
    /// Flattened in the same order as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in self.hidden.iter().chain(&self.embedding) {
            layer.write_flat(&mut out);
        }
        self.classifier.write_flat(&mut out);
        out
    }
}

/// Where each part of the network lives inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub backbone: Range<usize>,
    pub embedding: Option<Range<usize>>,
    pub classifier: Range<usize>,
}

impl Mlp {
    pub fn new(
        input_dim: usize,
        hidden: Vec<HiddenLayer>,
        embedding: Option<LinearLayer>,
        classifier: LinearLayer,
    ) -> Result<Self> {
        let mlp = Self {
            input_dim,
            hidden,
            embedding,
            classifier,
        };
        mlp.validate()?;
        Ok(mlp)
    }

    /// Random network: hidden layers use `Normal(0, 2/fan_in)` (ReLU gain),
    /// the embedding and classifier use `Normal(0, 1/fan_in)`; biases start
    /// at zero.
    pub fn random(
        input_dim: usize,
        hidden_widths: &[usize],
        embedding_dim: Option<usize>,
        n_classes: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if input_dim == 0 || n_classes == 0 || hidden_widths.contains(&0) || embedding_dim == Some(0) {
            return Err(invalid("network dimensions must all be at least 1"));
        }
        let mut hidden = Vec::with_capacity(hidden_widths.len());
        let mut fan_in = input_dim;
        for &width in hidden_widths {
            let std = (2.0 / fan_in as f64).sqrt();
            hidden.push(HiddenLayer {
                layer: LinearLayer::random(fan_in, width, std, rng)?,
                activation: Activation::Relu,
            });
            fan_in = width;
        }
        let embedding = match embedding_dim {
            Some(dim) => {
                let layer = LinearLayer::random(fan_in, dim, (1.0 / fan_in as f64).sqrt(), rng)?;
                fan_in = dim;
                Some(layer)
            }
            None => None,
        };
        let classifier = LinearLayer::random(fan_in, n_classes, (1.0 / fan_in as f64).sqrt(), rng)?;
        Self::new(input_dim, hidden, embedding, classifier)
    }

    pub fn validate(&self) -> Result<()> {
        let mut dim = self.input_dim;
        if dim == 0 {
            return Err(invalid("network input dimension must be at least 1"));
        }
        let layers = self
            .hidden
            .iter()
            .map(|h| &h.layer)
            .chain(&self.embedding)
            .chain(std::iter::once(&self.classifier));
        for (i, layer) in layers.enumerate() {
            layer.validate()?;
            if layer.in_dim() != dim {
                return Err(invalid(format!(
                    "layer {i} expects input dimension {} but receives {dim}",
                    layer.in_dim()
                )));
            }
            dim = layer.out_dim();
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn backbone_dim(&self) -> usize {
        self.hidden.last().map_or(self.input_dim, |h| h.layer.out_dim())
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.in_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.out_dim()
    }

    pub fn hidden(&self) -> &[HiddenLayer] {
        &self.hidden
    }

    pub fn embedding(&self) -> Option<&LinearLayer> {
        self.embedding.as_ref()
    }

    pub fn classifier(&self) -> &LinearLayer {
        &self.classifier
    }

    /// Replaces (or removes) the embedding; the classifier must still fit.
    pub fn with_embedding(mut self, embedding: Option<LinearLayer>) -> Result<Self> {
        self.embedding = embedding;
        self.validate()?;
        Ok(self)
    }

    pub fn with_classifier(mut self, classifier: LinearLayer) -> Result<Self> {
        self.classifier = classifier;
        self.validate()?;
        Ok(self)
    }

    /// Folds the embedding into the classifier. Predictions are unchanged.
    pub fn merged(&self) -> Result<Self> {
        match &self.embedding {
            None => Err(invalid("network has no embedding layer to merge")),
            Some(emb) => Self::new(
                self.input_dim,
                self.hidden.clone(),
                None,
                merge_embedding(emb, &self.classifier)?,
            ),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        check_len("network input", x.len(), self.input_dim)?;
        let mut pre_activations = Vec::with_capacity(self.hidden.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.hidden.len());
        for h in &self.hidden {
            let prev = activations.last().map_or(x, Vec::as_slice);
            let z = h.layer.forward(prev)?;
            activations.push(z.iter().map(|&v| h.activation.apply(v)).collect());
            pre_activations.push(z);
        }
        let backbone = activations.last().map_or(x, Vec::as_slice);
        let feature = match &self.embedding {
            Some(emb) => emb.forward(backbone)?,
            None => backbone.to_vec(),
        };
        let logits = self.classifier.forward(&feature)?;
        Ok(ForwardTrace {
            input: x.to_vec(),
            pre_activations,
            activations,
            feature,
            logits,
        })
    }

    /// Backpropagates `dlogits` from the classifier and adds `dfeature`
    /// directly at the penultimate feature, so the feature loss reaches both
    /// the embedding and the backbone.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &[f64], dfeature: &[f64]) -> Result<MlpGrad> {
        check_len("dlogits", dlogits.len(), self.n_classes())?;
        check_len("dfeature", dfeature.len(), self.feature_dim())?;
        let shapes_ok = trace.input.len() == self.input_dim
            && trace.pre_activations.len() == self.hidden.len()
            && trace.activations.len() == self.hidden.len()
            && trace.feature.len() == self.feature_dim()
            && trace.logits.len() == self.n_classes()
            && self
                .hidden
                .iter()
                .zip(&trace.pre_activations)
                .all(|(h, z)| z.len() == h.layer.out_dim());
        if !shapes_ok {
            return Err(invalid("forward trace does not match this network"));
        }

        let classifier = LinearLayer::outer_grad(&trace.feature, dlogits);
        let mut upstream = self.classifier.weights.mul_vec(dlogits)?;
        for (u, d) in upstream.iter_mut().zip(dfeature) {
            *u += d;
        }
        let embedding = match &self.embedding {
            Some(emb) => {
                let g = LinearLayer::outer_grad(trace.backbone_output(), &upstream);
                upstream = emb.weights.mul_vec(&upstream)?;
                Some(g)
            }
            None => None,
        };
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (i, h) in self.hidden.iter().enumerate().rev() {
            let dz: Vec<f64> = upstream
                .iter()
                .zip(&trace.pre_activations[i])
                .map(|(g, &z)| g * h.activation.derivative(z))
                .collect();
            let input = if i == 0 {
                &trace.input
            } else {
                &trace.activations[i - 1]
            };
            hidden.push(LinearLayer::outer_grad(input, &dz));
            upstream = h.layer.weights.mul_vec(&dz)?;
        }
        hidden.reverse();
        Ok(MlpGrad {
            hidden,
            embedding,
            classifier,
        })
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(LinearLayer::num_params).sum()
    }

    fn layers(&self) -> impl Iterator<Item = &LinearLayer> {
        self.hidden
            .iter()
            .map(|h| &h.layer)
            .chain(&self.embedding)
            .chain(std::iter::once(&self.classifier))
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in self.layers() {
            layer.write_flat(&mut out);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_len("flat parameters", flat.len(), self.num_params())?;
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite parameter update"));
        }
        let mut offset = 0;
        for h in &mut self.hidden {
            offset += h.layer.read_flat(&flat[offset..]);
        }
        if let Some(emb) = &mut self.embedding {
            offset += emb.read_flat(&flat[offset..]);
        }
        self.classifier.read_flat(&flat[offset..]);
        Ok(())
    }

    pub fn param_layout(&self) -> ParamLayout {
        let backbone_len: usize = self.hidden.iter().map(|h| h.layer.num_params()).sum();
        let emb_len = self.embedding.as_ref().map_or(0, LinearLayer::num_params);
        let emb_end = backbone_len + emb_len;
        ParamLayout {
            backbone: 0..backbone_len,
            embedding: self.embedding.as_ref().map(|_| backbone_len..emb_end),
            classifier: emb_end..emb_end + self.classifier.num_params(),
        }
    }
}

/// Folds `fc2(fc1(f))` into one layer: weights `W1·W2`, bias `W2ᵀb1 + b2`.
pub fn merge_embedding(fc1: &LinearLayer, fc2: &LinearLayer) -> Result<LinearLayer> {
    if fc1.out_dim() != fc2.in_dim() {
        return Err(invalid(format!(
            "cannot merge: first layer outputs {} but second expects {}",
            fc1.out_dim(),
            fc2.in_dim()
        )));
    }
    let weights = fc1.weights.matmul(&fc2.weights)?;
    let mut bias = fc2.weights.transpose_mul_vec(&fc1.bias)?;
    for (b, b2) in bias.iter_mut().zip(&fc2.bias) {
        *b += b2;
    }
    LinearLayer::new(weights, bias)
}

/// Largest entry of `|RᵀR - I|`.
pub fn orthogonality_error(r: &Matrix) -> f64 {
    let rtr = r.transpose().matmul(r).expect("square");
    rtr.max_abs_diff(&Matrix::identity(r.rows()))
}

/// Rotates the feature space: classifier weights become `R·W`, features
/// become `R·f`, and every prediction `Wᵀf + b` is unchanged.
pub fn apply_rotation(
    classifier: &LinearLayer,
    features: &[Vec<f64>],
    r: &Matrix,
) -> Result<(LinearLayer, Vec<Vec<f64>>)> {
    let d = classifier.in_dim();
    if r.rows() != d || r.cols() != d {
        return Err(invalid(format!(
            "rotation must be {d}x{d}, got {}x{}",
            r.rows(),
            r.cols()
        )));
    }
    let err = orthogonality_error(r);
    if err > 1e-10 {
        return Err(invalid(format!("matrix is not orthogonal (|RᵀR - I| = {err:e})")));
    }
    let rotated = LinearLayer::new(r.matmul(&classifier.weights)?, classifier.bias.clone())?;
    let feats = features.iter().map(|f| r.mul_vec(f)).collect::<Result<Vec<_>>>()?;
    Ok((rotated, feats))
}

/// Random orthogonal matrix: Gram–Schmidt (applied twice for stability) on
/// the columns of a Gaussian matrix. The resulting `R` factor has a positive
/// diagonal, which makes the distribution Haar.
pub fn random_orthogonal(dim: usize, rng: &mut RngStream) -> Matrix {
    let g = gaussian_matrix(dim, dim, 0.0, 1.0, rng).expect("unit std is valid");
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut v = g.column(c);
        for _ in 0..2 {
            for q in &columns {
                let proj = crate::numerics::dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let n = crate::numerics::norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        columns.push(v);
    }
    let mut q = Matrix::zeros(dim, dim);
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            q[(r, c)] = v;
        }
    }
    q
}

/// Serialized network plus the metadata needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub seed: u64,
    pub init_scheme: String,
    pub classifier_weight_std: f64,
    pub model: Mlp,
}

pub const CHECKPOINT_FORMAT: &str = "lshkd-checkpoint/1";
pub const INIT_SCHEME: &str = "hidden N(0,2/fan_in); embedding and classifier N(0,1/fan_in); zero bias";

impl Checkpoint {
    pub fn new(model: Mlp, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            seed,
            init_scheme: INIT_SCHEME.to_string(),
            classifier_weight_std: model.classifier().weights().std(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(invalid(format!("unknown checkpoint format '{}'", ckpt.format)));
        }
        ckpt.model.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{mse_feature_grad, mse_feature_loss, softmax_cross_entropy};
    use crate::lsh::HashModule;
    use crate::numerics::finite_diff_grad;

    fn max_abs(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn det(m: &Matrix) -> f64 {
        // Gaussian elimination with partial pivoting.
        let n = m.rows();
        let mut a = m.clone();
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))
                .unwrap();
            if p != k {
                for c in 0..n {
                    let t = a[(k, c)];
                    a[(k, c)] = a[(p, c)];
                    a[(p, c)] = t;
                }
                det = -det;
            }
            det *= a[(k, k)];
            for i in k + 1..n {
                let factor = a[(i, k)] / a[(k, k)];
                for c in k..n {
                    a[(i, c)] -= factor * a[(k, c)];
                }
            }
        }
        det
    }

    #[test]
    fn zero_network_outputs_classifier_bias() {
        let hidden = vec![HiddenLayer {
            layer: LinearLayer::zeros(3, 4),
            activation: Activation::Relu,
        }];
        let classifier = LinearLayer::new(Matrix::zeros(4, 2), vec![0.5, -1.5]).unwrap();
        let mlp = Mlp::new(3, hidden, None, classifier).unwrap();
        assert_eq!(mlp.forward(&[1.0, 2.0, 3.0]).unwrap().logits, vec![0.5, -1.5]);
        assert!(mlp.forward(&[1.0]).is_err());
    }

    #[test]
    fn identity_network() {
        let classifier = LinearLayer::new(Matrix::identity(3), vec![1.0, 2.0, 3.0]).unwrap();
        let mlp = Mlp::new(3, vec![], None, classifier).unwrap();
        let t = mlp.forward(&[0.5, -1.0, 4.0]).unwrap();
        assert_eq!(t.logits, vec![1.5, 1.0, 7.0]);
        assert_eq!(t.feature, vec![0.5, -1.0, 4.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mlp = Mlp::random(5, &[8, 6], Some(4), 3, &mut RngStream::new(1)).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4, 1.0];
        assert_eq!(mlp.forward(&x).unwrap(), mlp.forward(&x).unwrap());
        let again = Mlp::random(5, &[8, 6], Some(4), 3, &mut RngStream::new(1)).unwrap();
        assert_eq!(mlp, again);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mlp = Mlp::random(4, &[5], Some(3), 2, &mut RngStream::new(2)).unwrap();
        let t = mlp.forward(&[1.0, -1.0, 0.5, 2.0]).unwrap();
        let g = mlp.backward(&t, &[0.0; 2], &[0.0; 3]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(mlp.backward(&t, &[0.0; 3], &[0.0; 3]).is_err());
        let other = Mlp::random(4, &[7], Some(3), 2, &mut RngStream::new(2)).unwrap();
        assert!(other.backward(&t, &[0.0; 2], &[0.0; 3]).is_err());
    }

    /// Full objective `CE + β(MSE + LSH)` as a function of the flat parameters.
    fn objective(mlp: &Mlp, params: &[f64], x: &[f64], label: usize, f_t: &[f64], hash: &HashModule, beta: f64) -> f64 {
        let mut m = mlp.clone();
        m.set_flat_params(params).unwrap();
        let t = m.forward(x).unwrap();
        let ce = softmax_cross_entropy(&t.logits, label).unwrap().0;
        ce + beta * (mse_feature_loss(f_t, &t.feature).unwrap() + hash.loss(f_t, &t.feature).unwrap())
    }

    fn analytic(mlp: &Mlp, x: &[f64], label: usize, f_t: &[f64], hash: &HashModule, beta: f64) -> Vec<f64> {
        let t = mlp.forward(x).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&t.logits, label).unwrap();
        let dm = mse_feature_grad(f_t, &t.feature).unwrap();
        let dl = hash.loss_grad(f_t, &t.feature).unwrap();
        let dfeat: Vec<f64> = dm.iter().zip(&dl).map(|(a, b)| beta * (a + b)).collect();
        mlp.backward(&t, &dlogits, &dfeat).unwrap().flatten()
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = RngStream::new(31);
        for _ in 0..10 {
            // 2-4-3-2: input 2, hidden 4, embedding 3, 2 classes.
            let mlp = Mlp::random(2, &[4], Some(3), 2, &mut rng).unwrap();
            let hash = HashModule::init(3, 16, 1.0, &mut rng).unwrap();
            let x = rng.normal_vec(2);
            let f_t = rng.normal_vec(3);
            let label = rng.index(2);
            let beta = 6.0;
            let g = analytic(&mlp, &x, label, &f_t, &hash, beta);
            let p = mlp.flat_params();
            let fd = finite_diff_grad(|q| objective(&mlp, q, &x, label, &f_t, &hash, beta), &p, 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()) + 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_beta_gives_pure_cross_entropy_gradient() {
        let mut rng = RngStream::new(4);
        let mlp = Mlp::random(3, &[5], Some(4), 3, &mut rng).unwrap();
        let hash = HashModule::init(4, 8, 1.0, &mut rng).unwrap();
        let x = rng.normal_vec(3);
        let f_t = rng.normal_vec(4);
        let g0 = analytic(&mlp, &x, 1, &f_t, &hash, 0.0);
        let t = mlp.forward(&x).unwrap();
        let (_, dl) = softmax_cross_entropy(&t.logits, 1).unwrap();
        let ce = mlp.backward(&t, &dl, &[0.0; 4]).unwrap().flatten();
        assert_eq!(g0, ce);
    }

    #[test]
    fn relu_network_is_positively_homogeneous_without_bias() {
        let mlp = Mlp::random(4, &[6, 5], Some(3), 2, &mut RngStream::new(8)).unwrap();
        let x = [0.3, -0.7, 1.1, 0.2];
        let base = mlp.forward(&x).unwrap().logits;
        let scaled: Vec<f64> = x.iter().map(|v| v * 2.5).collect();
        let out = mlp.forward(&scaled).unwrap().logits;
        for (a, b) in base.iter().zip(&out) {
            assert!((2.5 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_params_roundtrip_and_layout() {
        let mut mlp = Mlp::random(3, &[4], Some(2), 2, &mut RngStream::new(6)).unwrap();
        let layout = mlp.param_layout();
        assert_eq!(layout.backbone, 0..16);
        assert_eq!(layout.embedding, Some(16..26));
        assert_eq!(layout.classifier, 26..32);
        assert_eq!(mlp.num_params(), 32);
        let mut p = mlp.flat_params();
        p[20] = 9.0;
        mlp.set_flat_params(&p).unwrap();
        assert_eq!(mlp.flat_params(), p);
        assert!(mlp.set_flat_params(&p[1..]).is_err());
    }

    #[test]
    fn merge_identity_cases() {
        let mut rng = RngStream::new(10);
        let mut fc = LinearLayer::random(3, 2, 1.0, &mut rng).unwrap();
        fc.bias = vec![0.3, -0.2];
        assert_eq!(merge_embedding(&LinearLayer::identity(3), &fc).unwrap(), fc);
        assert_eq!(merge_embedding(&fc, &LinearLayer::identity(2)).unwrap(), fc);
        assert!(merge_embedding(&fc, &fc).is_err());
    }

    #[test]
    fn merge_matches_composition() {
        let mut rng = RngStream::new(12);
        let mut fc1 = LinearLayer::random(3, 2, 1.0, &mut rng).unwrap();
        fc1.bias = rng.normal_vec(2);
        let mut fc2 = LinearLayer::random(2, 2, 1.0, &mut rng).unwrap();
        fc2.bias = rng.normal_vec(2);
        let merged = merge_embedding(&fc1, &fc2).unwrap();
        assert_eq!(merged.num_params(), LinearLayer::zeros(3, 2).num_params());
        for _ in 0..100 {
            let f = rng.normal_vec(3);
            let direct = fc2.forward(&fc1.forward(&f).unwrap()).unwrap();
            assert!(max_abs(&direct, &merged.forward(&f).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn merged_network_predicts_identically() {
        let mut rng = RngStream::new(13);
        let mlp = Mlp::random(4, &[6], Some(5), 3, &mut rng).unwrap();
        let merged = mlp.merged().unwrap();
        assert!(merged.embedding().is_none());
        for _ in 0..50 {
            let x = rng.normal_vec(4);
            let a = mlp.forward(&x).unwrap().logits;
            let b = merged.forward(&x).unwrap().logits;
            assert!(max_abs(&a, &b) < 1e-12);
        }
        assert!(merged.merged().is_err());
    }

    #[test]
    fn rotation_examples() {
        let w = LinearLayer::identity(2);
        let f = vec![vec![1.0, 0.0]];
        let (same, same_f) = apply_rotation(&w, &f, &Matrix::identity(2)).unwrap();
        assert_eq!((same, same_f), (w.clone(), f.clone()));

        let quarter = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let (rw, rf) = apply_rotation(&w, &f, &quarter).unwrap();
        assert_eq!(rf[0], vec![0.0, 1.0]);
        assert_eq!(rw.forward(&rf[0]).unwrap(), vec![1.0, 0.0]);

        let skew = Matrix::from_rows(&[vec![1.0, 0.1], vec![0.0, 1.0]]).unwrap();
        assert!(apply_rotation(&w, &f, &skew).is_err());
    }

    #[test]
    fn random_rotation_keeps_predictions() {
        let mut rng = RngStream::new(14);
        let mut cls = LinearLayer::random(6, 4, 1.0, &mut rng).unwrap();
        cls.bias = rng.normal_vec(4);
        let feats: Vec<Vec<f64>> = (0..20).map(|_| rng.normal_vec(6)).collect();
        let r = random_orthogonal(6, &mut rng);
        let (rc, rf) = apply_rotation(&cls, &feats, &r).unwrap();
        for (f, g) in feats.iter().zip(&rf) {
            assert!(max_abs(&cls.forward(f).unwrap(), &rc.forward(g).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn random_orthogonal_properties() {
        let mut rng = RngStream::new(15);
        let one = random_orthogonal(1, &mut rng);
        assert_eq!(one.as_slice()[0].abs(), 1.0);
        let r = random_orthogonal(5, &mut rng);
        assert!(orthogonality_error(&r) < 1e-10);
        assert!((det(&r).abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn checkpoint_roundtrip_and_corruption() {
        let mlp = Mlp::random(3, &[4], Some(2), 2, &mut RngStream::new(16)).unwrap();
        let ckpt = Checkpoint::new(mlp, 16);
        let text = ckpt.to_json().unwrap();
        assert_eq!(Checkpoint::from_json(&text).unwrap(), ckpt);
        assert_eq!(text, Checkpoint::from_json(&text).unwrap().to_json().unwrap());
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["model"]["input_dim"] = serde_json::json!(7);
        assert!(Checkpoint::from_json(&value.to_string()).is_err());
    }
}
