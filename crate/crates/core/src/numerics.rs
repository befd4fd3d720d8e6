//! Deterministic numerical substrate: seeded random streams, a small dense
//! matrix type, special functions, composite Simpson quadrature and a
//! central-difference gradient oracle.
//!
//! Vectors are plain `[f64]` slices / `Vec<f64>`; only matrices get a type.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Name of the pinned generator, echoed into run manifests.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8Rng (rand_chacha 0.9) keyed by seed_from_u64(seed); substream k uses stream id k+1; \
     normals via rand_distr StandardNormal (ziggurat)";

/// Single-owner seeded random stream.
///
/// Substreams are derived from the seed alone (not from the current
/// position): `substream(k)` shares the key of `RngStream::new(seed)` and
/// selects ChaCha stream id `k + 1`. The root stream is stream id 0.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index.wrapping_add(1));
        Self { seed: self.seed, rng }
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn index(&mut self, upper: usize) -> usize {
        self.rng.random_range(0..upper)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("matrix entry {bad} is not finite")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// `self · v`, with `v` of length `cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("mul_vec operand", v.len(), self.cols)?;
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `selfᵀ · v`, with `v` of length `rows`.
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("transpose_mul_vec operand", v.len(), self.rows)?;
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * vr;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "matmul shape mismatch: {}x{} · {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Population standard deviation of all entries.
    pub fn std(&self) -> f64 {
        std_dev(&self.data)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Matrix with i.i.d. `Normal(mean, std²)` entries, filled row by row.
pub fn gaussian_matrix(rows: usize, cols: usize, mean: f64, std: f64, rng: &mut RngStream) -> Result<Matrix> {
    if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
        return Err(invalid(format!("gaussian_matrix: mean {mean}, std {std}")));
    }
    let data = (0..rows * cols).map(|_| mean + std * rng.normal()).collect();
    Ok(Matrix { rows, cols, data })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary step used by the hash: 1 iff `x > 0`.
pub fn sign_step(x: f64) -> u8 {
    u8::from(x > 0.0)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Angle in radians, `arccos` of the clamped cosine.
pub fn angle_between(u: &[f64], v: &[f64]) -> Result<f64> {
    crate::error::check_len("angle_between", v.len(), u.len())?;
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateVector);
    }
    let cos = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Natural log of the surface area of the unit sphere in `R^n`,
/// `ln(2 π^{n/2} / Γ(n/2))`.
pub fn ln_surface_area(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("surface_area: n must be at least 1"));
    }
    let half = n as f64 / 2.0;
    Ok(std::f64::consts::LN_2 + half * PI.ln() - ln_gamma(half))
}

/// Surface area of the unit sphere in `R^n` (`n = 2` is the circle, `2π`).
pub fn surface_area(n: usize) -> Result<f64> {
    ln_surface_area(n).map(f64::exp)
}

/// Composite Simpson rule with `panels` panels, each using its midpoint.
pub fn integrate<F>(f: F, a: f64, b: f64, panels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if panels == 0 || !(a <= b) {
        return Err(invalid(format!(
            "integrate: need a <= b and panels >= 1 (a={a}, b={b}, panels={panels})"
        )));
    }
    let h = (b - a) / panels as f64;
    let eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::IntegrationFailure { at: x })
        }
    };
    let mut ends = eval(a)? + eval(b)?;
    let mut mids = 0.0;
    for i in 0..panels {
        let left = a + h * i as f64;
        mids += eval(left + 0.5 * h)?;
        if i > 0 {
            ends += 2.0 * eval(left)?;
        }
    }
    Ok(h / 6.0 * (ends + 4.0 * mids))
}

/// Central-difference gradient, one coordinate at a time.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
