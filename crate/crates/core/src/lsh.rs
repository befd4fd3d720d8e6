//! Random-hyperplane hashing of feature vectors and the binary cross-entropy
//! loss that asks the student's soft hash probabilities to reproduce the
//! teacher's hard hash codes.
//!
//! A [`HashModule`] holds `N` hyperplanes in `R^D`: `h(f) = step(Wᵀf + b)`
//! with `W` of shape `D × N` and i.i.d. `Normal(0, std_hash²)` entries. The
//! module is frozen once built; the only way to change the bias is
//! [`HashModule::with_bias`], which consumes the module and returns a new one.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::numerics::{gaussian_matrix, sigmoid, sign_step, Matrix, RngStream};

/// Probabilities are kept inside `[P_CLAMP, 1 - P_CLAMP]` before taking logs.
pub const P_CLAMP: f64 = 1e-12;

/// How the hash bias is initialized from teacher features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasInit {
    Zero,
    Mean,
    #[default]
    Median,
}

impl std::str::FromStr for BiasInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            other => Err(invalid(format!(
                "unknown bias init '{other}' (expected zero, mean or median)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashModule {
    weights: Matrix,
    bias: Vec<f64>,
    std_hash: f64,
    #[serde(default)]
    seed: Option<u64>,
}

impl HashModule {
    /// Draws `W ~ Normal(0, std_hash²)`, bias zero.
    pub fn init(feature_dim: usize, n_hash: usize, std_hash: f64, rng: &mut RngStream) -> Result<Self> {
        if feature_dim == 0 || n_hash == 0 {
            return Err(invalid(format!(
                "hash module needs D >= 1 and N >= 1 (got D={feature_dim}, N={n_hash})"
            )));
        }
        if !(std_hash > 0.0) || !std_hash.is_finite() {
            return Err(invalid(format!("std_hash must be positive, got {std_hash}")));
        }
        let weights = gaussian_matrix(feature_dim, n_hash, 0.0, std_hash, rng)?;
        Ok(Self {
            weights,
            bias: vec![0.0; n_hash],
            std_hash,
            seed: Some(rng.seed()),
        })
    }

    /// Builds a module from explicit parameters (`weights` is `D × N`).
    pub fn from_parts(weights: Matrix, bias: Vec<f64>, std_hash: f64) -> Result<Self> {
        let module = Self {
            weights,
            bias,
            std_hash,
            seed: None,
        };
        module.validate()?;
        Ok(module)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.rows() == 0 || self.weights.cols() == 0 {
            return Err(invalid("hash module has an empty weight matrix"));
        }
        check_len("hash bias", self.bias.len(), self.weights.cols())?;
        if !(self.std_hash > 0.0) {
            return Err(invalid("hash module std_hash must be positive"));
        }
        if self.weights.as_slice().iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(invalid("hash module has non-finite parameters"));
        }
        Ok(())
    }

    /// Returns the module with its bias set from the teacher feature set.
    ///
    /// For hyperplane `j` with projections `z_ij = w_jᵀ f_i`, `Mean` sets
    /// `b_j = -mean_i z_ij` and `Median` sets `b_j = -median_i z_ij`, so the
    /// hyperplane passes through the central projection and roughly half of
    /// the teacher set hashes to 1.
    pub fn with_bias(mut self, teacher_features: &[Vec<f64>], strategy: BiasInit) -> Result<Self> {
        if strategy == BiasInit::Zero {
            self.bias.iter_mut().for_each(|b| *b = 0.0);
            return Ok(self);
        }
        if teacher_features.is_empty() {
            return Err(Error::InsufficientData(format!(
                "{strategy:?} bias needs at least one teacher feature"
            )));
        }
        let projections = teacher_features
            .iter()
            .map(|f| self.weights.transpose_mul_vec(f))
            .collect::<Result<Vec<_>>>()?;
        let mut column = vec![0.0; projections.len()];
        for j in 0..self.n_hash() {
            for (c, z) in column.iter_mut().zip(&projections) {
                *c = z[j];
            }
            let centre = match strategy {
                BiasInit::Mean => crate::numerics::mean(&column),
                BiasInit::Median => median(&mut column),
                BiasInit::Zero => unreachable!(),
            };
            self.bias[j] = -centre;
        }
        Ok(self)
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_hash(&self) -> usize {
        self.weights.cols()
    }

    pub fn std_hash(&self) -> f64 {
        self.std_hash
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// `Wᵀf + b`.
    pub fn pre_activations(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len("hashed feature", f.len(), self.feature_dim())?;
        let mut z = self.weights.transpose_mul_vec(f)?;
        for (z, b) in z.iter_mut().zip(&self.bias) {
            *z += b;
        }
        Ok(z)
    }

    pub fn hash_codes(&self, f: &[f64]) -> Result<Vec<u8>> {
        Ok(self.pre_activations(f)?.into_iter().map(sign_step).collect())
    }

    /// Per-hyperplane losses `l_j = -h_j ln p_j - (1 - h_j) ln(1 - p_j)`.
    pub fn per_hash_losses(&self, f_t: &[f64], f_s: &[f64]) -> Result<Vec<f64>> {
        let h = self.hash_codes(f_t)?;
        let z = self.pre_activations(f_s)?;
        Ok(h.iter().zip(&z).map(|(&h, &z)| bce_term(h, z)).collect())
    }

    /// Loss against explicit target codes instead of codes hashed from a
    /// teacher feature.
    pub fn loss_from_codes(&self, codes: &[u8], f_s: &[f64]) -> Result<f64> {
        check_len("hash codes", codes.len(), self.n_hash())?;
        let z = self.pre_activations(f_s)?;
        let total: f64 = codes.iter().zip(&z).map(|(&h, &z)| bce_term(h, z)).sum();
        Ok(total / self.n_hash() as f64)
    }

    /// Mean binary cross-entropy over the `N` hash functions for one sample.
    pub fn loss(&self, f_t: &[f64], f_s: &[f64]) -> Result<f64> {
        let losses = self.per_hash_losses(f_t, f_s)?;
        Ok(losses.iter().sum::<f64>() / self.n_hash() as f64)
    }

    /// Gradient of [`loss`](Self::loss) with respect to `f_s`: `W (p - h) / N`.
    pub fn loss_grad(&self, f_t: &[f64], f_s: &[f64]) -> Result<Vec<f64>> {
        self.loss_and_grad(f_t, f_s).map(|(_, g)| g)
    }

    pub fn loss_and_grad(&self, f_t: &[f64], f_s: &[f64]) -> Result<(f64, Vec<f64>)> {
        let h = self.hash_codes(f_t)?;
        let z = self.pre_activations(f_s)?;
        let n = self.n_hash() as f64;
        let mut loss = 0.0;
        let residual: Vec<f64> = h
            .iter()
            .zip(&z)
            .map(|(&h, &z)| {
                loss += bce_term(h, z);
                (sigmoid(z) - f64::from(h)) / n
            })
            .collect();
        Ok((loss / n, self.weights.mul_vec(&residual)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let module: Self = serde_json::from_str(text)?;
        module.validate()?;
        Ok(module)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_to_string(path)?)
    }
}

fn bce_term(h: u8, z: f64) -> f64 {
    // 1 - σ(z) is evaluated as σ(-z) to avoid cancellation.
    let p = if h == 1 { sigmoid(z) } else { sigmoid(-z) };
    -p.clamp(P_CLAMP, 1.0 - P_CLAMP).ln()
}

/// Median of `values` (mean of the two middle entries for even counts).
/// Reorders `values`.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;

    fn scalar_module(w: f64) -> HashModule {
        HashModule::from_parts(Matrix::from_vec(1, 1, vec![w]).unwrap(), vec![0.0], 1.0).unwrap()
    }

    #[test]
    fn init_shapes_and_spread() {
        let m = HashModule::init(4, 2048, 1.0, &mut RngStream::new(5)).unwrap();
        assert_eq!((m.feature_dim(), m.n_hash()), (4, 2048));
        assert!(m.bias().iter().all(|&b| b == 0.0));
        assert!((m.weights().std() - 1.0).abs() < 0.05);
        let again = HashModule::init(4, 2048, 1.0, &mut RngStream::new(5)).unwrap();
        assert_eq!(m, again);

        let vgg = HashModule::init(512, 2048, 0.0749, &mut RngStream::new(1)).unwrap();
        assert!((vgg.weights().std() - 0.0749).abs() < 0.001);

        assert!(HashModule::init(0, 4, 1.0, &mut RngStream::new(1)).is_err());
        assert!(HashModule::init(4, 0, 1.0, &mut RngStream::new(1)).is_err());
        assert!(HashModule::init(4, 4, 0.0, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn zero_bias_ignores_features() {
        let m = HashModule::init(3, 8, 1.0, &mut RngStream::new(2)).unwrap();
        let m = m.with_bias(&[], BiasInit::Zero).unwrap();
        assert!(m.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn mean_and_median_need_data() {
        for strategy in [BiasInit::Mean, BiasInit::Median] {
            let m = HashModule::init(3, 8, 1.0, &mut RngStream::new(2)).unwrap();
            assert!(matches!(m.with_bias(&[], strategy), Err(Error::InsufficientData(_))));
        }
    }

    #[test]
    fn median_of_single_feature_zeroes_codes() {
        let f = vec![0.4, -1.3, 2.2];
        let m = HashModule::init(3, 16, 1.0, &mut RngStream::new(9))
            .unwrap()
            .with_bias(std::slice::from_ref(&f), BiasInit::Median)
            .unwrap();
        let z = m.pre_activations(&f).unwrap();
        assert!(z.iter().all(|&z| z == 0.0));
        assert!(m.hash_codes(&f).unwrap().iter().all(|&h| h == 0));
    }

    #[test]
    fn median_balances_symmetric_set() {
        // 101 multiples k·d, k = -50..=50, of one direction d.
        let d = [0.6, -0.8, 0.3];
        let feats: Vec<Vec<f64>> = (-50..=50).map(|k| d.iter().map(|x| x * k as f64).collect()).collect();
        let m = HashModule::init(3, 32, 1.0, &mut RngStream::new(4))
            .unwrap()
            .with_bias(&feats, BiasInit::Median)
            .unwrap();
        let mut ones = vec![0usize; 32];
        for f in &feats {
            for (c, h) in ones.iter_mut().zip(m.hash_codes(f).unwrap()) {
                *c += h as usize;
            }
        }
        assert!(ones.iter().all(|&c| c == 50), "{ones:?}");
    }

    #[test]
    fn codes_reduce_to_coordinate_signs() {
        let m = HashModule::from_parts(Matrix::identity(3), vec![0.0; 3], 1.0).unwrap();
        assert_eq!(m.hash_codes(&[3.0, -1.0, 2.0]).unwrap(), vec![1, 0, 1]);
        assert_eq!(m.hash_codes(&[0.0; 3]).unwrap(), vec![0, 0, 0]);
        assert!(m.hash_codes(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn codes_scale_free_without_bias() {
        let m = HashModule::init(5, 64, 1.0, &mut RngStream::new(12)).unwrap();
        let f = [0.2, -1.0, 0.7, 1.4, -0.3];
        let base = m.hash_codes(&f).unwrap();
        for s in [0.5, 3.0] {
            let sf: Vec<f64> = f.iter().map(|x| x * s).collect();
            assert_eq!(m.hash_codes(&sf).unwrap(), base);
        }
    }

    #[test]
    fn hand_computed_losses() {
        let m = scalar_module(1.0);
        assert!((m.loss(&[2.0], &[0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        assert!((m.loss(&[2.0], &[2.0]).unwrap() - 0.126928).abs() < 1e-6);
        assert!((m.loss(&[-1.0], &[-3.0]).unwrap() - 0.048587).abs() < 1e-6);
        assert!((m.loss_grad(&[2.0], &[0.0]).unwrap()[0] + 0.5).abs() < 1e-15);
        assert!(m.loss(&[1.0, 2.0], &[0.0]).is_err());
        assert!(m.loss_grad(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn saturated_gradient_vanishes() {
        let m = HashModule::from_parts(Matrix::identity(2), vec![0.0; 2], 1.0).unwrap();
        let g = m.loss_grad(&[1.0, 1.0], &[1e3, 1e3]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-300));
        let l = m.loss(&[1.0, 1.0], &[-1e3, -1e3]).unwrap();
        assert!(l.is_finite() && l > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngStream::new(77);
        for _ in 0..20 {
            let d = 1 + rng.index(16);
            let n = 1 + rng.index(64);
            let m = HashModule::init(d, n, 1.0, &mut rng).unwrap();
            let f_t = rng.normal_vec(d);
            let f_s = rng.normal_vec(d);
            let g = m.loss_grad(&f_t, &f_s).unwrap();
            let fd = finite_diff_grad(|x| m.loss(&f_t, x).unwrap(), &f_s, 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let m = HashModule::init(3, 5, 0.5, &mut RngStream::new(8)).unwrap();
        let back = HashModule::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"weights":{"rows":2,"cols":2,"data":[1,2,3,4]},"bias":[0],"std_hash":1.0}"#;
        assert!(HashModule::from_json(bad).is_err());
    }

    #[test]
    fn median_helper() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn loss_finite_nonnegative_and_module_frozen(
                seed in any::<u64>(),
                scale in 0.01..1e4f64,
            ) {
                let mut rng = RngStream::new(seed);
                let m = HashModule::init(6, 24, 1.0, &mut rng).unwrap();
                let before = m.to_json().unwrap();
                let f_t: Vec<f64> = rng.normal_vec(6);
                let f_s: Vec<f64> = rng.normal_vec(6).iter().map(|x| x * scale).collect();
                let l = m.loss(&f_t, &f_s).unwrap();
                let _ = m.loss_grad(&f_t, &f_s).unwrap();
                prop_assert!(l.is_finite() && l >= 0.0);
                prop_assert_eq!(before, m.to_json().unwrap());
            }
        }
    }
}
