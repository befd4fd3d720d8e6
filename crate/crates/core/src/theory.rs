//! Numerical checks of the LSH loss's angle statistics.
//!
//! With `b = 0` and standard Gaussian hyperplanes, one hash loss
//! `l_j` is below `ln 2` exactly when `w_j` puts `f_t` and `f_s` on the same
//! side, which happens with probability `1 - θ/π` for features at angle `θ`.
//! For independent Gaussian features the angle has density
//! `A_{D-2}/A_{D-1} · sin^{D-2} θ`, and conditioning on all `N` losses being
//! small reweights that density by `(1 - θ/π)^N`. This module evaluates those
//! closed forms by quadrature and checks them against Monte Carlo.
//!
//! Monte Carlo work is split into [`MC_CHUNKS`] chunks; chunk `c` draws from
//! substream `c` of the caller's seed and partial counts are merged in chunk
//! order, so results depend only on `(seed, MC_CHUNKS)`, not on the thread
//! count.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::lsh::{BiasInit, HashModule};
use crate::numerics::{angle_between, dot, integrate, ln_surface_area, norm, RngStream};

pub const MC_CHUNKS: u64 = 16;

/// Simpson panels for every angle integral.
pub const QUAD_PANELS: usize = 20_000;

/// Endpoint guard for integrals over `(0, π)`.
pub const QUAD_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub accepted: usize,
}

impl McEstimate {
    fn binomial(accepted: usize, samples: usize) -> Self {
        let p = accepted as f64 / samples as f64;
        Self {
            value: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
            accepted,
        }
    }

    /// `|value - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.value - target).abs();
        if self.std_error == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / self.std_error
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(invalid(format!("angle {theta} outside [0, π]")));
    }
    Ok(())
}

/// Probability that one hash loss is below `ln 2` for features at angle `θ`.
pub fn prob_loss_small_given_angle(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(1.0 - theta / PI)
}

/// Splits `total` into `MC_CHUNKS` near-equal parts and runs `work` on each
/// with its own substream, returning the partial results in chunk order.
fn run_chunks<T, F>(total: usize, rng: &RngStream, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, RngStream) -> T + Sync,
{
    let chunks = MC_CHUNKS as usize;
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = total / chunks + usize::from(c < total % chunks);
            work(n, rng.substream(c as u64))
        })
        .collect()
}

/// Orthonormal pair `(u, v)` drawn from `rng` by Gram–Schmidt.
fn random_two_frame(dim: usize, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
    loop {
        let a = rng.normal_vec(dim);
        let mut b = rng.normal_vec(dim);
        let na = norm(&a);
        if na == 0.0 {
            continue;
        }
        let u: Vec<f64> = a.iter().map(|x| x / na).collect();
        let proj = dot(&u, &b);
        for (bi, ui) in b.iter_mut().zip(&u) {
            *bi -= proj * ui;
        }
        let nb = norm(&b);
        if nb > 1e-8 {
            return (u, b.iter().map(|x| x / nb).collect());
        }
    }
}

/// Monte Carlo estimate of `P(l_j < ln 2)` for a fixed feature pair at
/// angle `theta` in `R^dim`, using the equivalent sign-agreement event
/// `(wᵀf_s > 0 ∧ wᵀf_t > 0) ∨ (wᵀf_s < 0 ∧ wᵀf_t ≤ 0)` with `w ~ N(0, I)`.
pub fn mc_prob_loss_small(dim: usize, theta: f64, samples: usize, rng: &mut RngStream) -> Result<McEstimate> {
    if dim < 2 || samples == 0 {
        return Err(invalid("mc_prob_loss_small needs dim >= 2 and samples >= 1"));
    }
    check_theta(theta)?;
    let (u, v) = random_two_frame(dim, rng);
    let f_t = u.clone();
    let f_s: Vec<f64> = u
        .iter()
        .zip(&v)
        .map(|(a, b)| theta.cos() * a + theta.sin() * b)
        .collect();
    let hits: usize = run_chunks(samples, rng, |n, mut chunk_rng| {
        let mut w = vec![0.0; dim];
        (0..n)
            .filter(|_| {
                w.iter_mut().for_each(|x| *x = chunk_rng.normal());
                let zt = dot(&w, &f_t);
                let zs = dot(&w, &f_s);
                debug_assert!(zt.is_finite() && zs.is_finite());
                (zs > 0.0 && zt > 0.0) || (zs < 0.0 && zt <= 0.0)
            })
            .count()
    })
    .into_iter()
    .sum();
    Ok(McEstimate::binomial(hits, samples))
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(invalid(format!("feature dimension must be >= 2, got {dim}")));
    }
    Ok(())
}

/// `ln(A_{D-2} / A_{D-1})`.
fn ln_pdf_constant(dim: usize) -> f64 {
    ln_surface_area(dim - 1).expect("dim >= 2") - ln_surface_area(dim).expect("dim >= 2")
}

/// `(D-2) ln sin θ`, with the `D = 2` case exactly zero.
fn ln_sin_power(dim: usize, theta: f64) -> f64 {
    if dim == 2 {
        0.0
    } else {
        (dim - 2) as f64 * theta.sin().ln()
    }
}

/// Density of the angle between two independent standard Gaussian vectors
/// in `R^dim`. Endpoints are evaluated by continuity.
pub fn angle_pdf(dim: usize, theta: f64) -> Result<f64> {
    check_dim(dim)?;
    check_theta(theta)?;
    Ok((ln_pdf_constant(dim) + ln_sin_power(dim, theta)).exp())
}

/// `P(angle ≤ theta)` by quadrature of [`angle_pdf`].
pub fn angle_cdf(dim: usize, theta: f64) -> Result<f64> {
    check_dim(dim)?;
    check_theta(theta)?;
    let c = ln_pdf_constant(dim);
    integrate(|t| (c + ln_sin_power(dim, t)).exp(), 0.0, theta, QUAD_PANELS)
}

/// Mean of [`angle_pdf`] by quadrature.
pub fn angle_pdf_mean(dim: usize) -> Result<f64> {
    check_dim(dim)?;
    let c = ln_pdf_constant(dim);
    integrate(|t| t * (c + ln_sin_power(dim, t)).exp(), 0.0, PI, QUAD_PANELS)
}

/// `N ln(1 - θ/π) + (D-2) ln sin θ`.
fn ln_conditional_integrand(dim: usize, n_hash: usize, theta: f64) -> f64 {
    let hash = if n_hash == 0 {
        0.0
    } else {
        n_hash as f64 * (-theta / PI).ln_1p()
    };
    hash + ln_sin_power(dim, theta)
}

/// Largest value of the log integrand on the quadrature grid, used as a
/// common shift so `exp` neither overflows nor underflows at large `D`, `N`.
fn ln_integrand_peak(dim: usize, n_hash: usize) -> f64 {
    let h = (PI - 2.0 * QUAD_GUARD) / QUAD_PANELS as f64;
    (0..=QUAD_PANELS)
        .map(|i| ln_conditional_integrand(dim, n_hash, QUAD_GUARD + h * i as f64))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `P(angle < ε | all N hash losses < ln 2)`: with `g(θ) = (1 - θ/π)^N
/// sin^{D-2} θ`, the ratio `H / (H + T)` of the Simpson integrals
/// `H = ∫_0^ε g` and `T = ∫_ε^π g`. Integrating the tail separately keeps
/// values near 1 accurate to the tail mass instead of to rounding.
pub fn conditional_angle_cdf(dim: usize, n_hash: usize, epsilon: f64) -> Result<f64> {
    check_dim(dim)?;
    if !(epsilon > 0.0 && epsilon <= PI) {
        return Err(invalid(format!("epsilon {epsilon} outside (0, π]")));
    }
    let peak = ln_integrand_peak(dim, n_hash);
    let f = |t: f64| (ln_conditional_integrand(dim, n_hash, t) - peak).exp();
    let (lo, hi) = (QUAD_GUARD, PI - QUAD_GUARD);
    if epsilon <= lo {
        return Ok(0.0);
    }
    if epsilon >= hi {
        return Ok(1.0);
    }
    let head = integrate(f, lo, epsilon, QUAD_PANELS)?;
    let tail = integrate(f, epsilon, hi, QUAD_PANELS)?;
    Ok(head / (head + tail))
}

/// The conditional angle CDF tabulated at `QUAD_PANELS + 1` nodes by
/// cumulative Simpson from both ends, for cheap repeated evaluation (linear
/// interpolation between nodes).
#[derive(Debug, Clone)]
pub struct AngleCdfTable {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl AngleCdfTable {
    pub fn new(dim: usize, n_hash: usize) -> Result<Self> {
        check_dim(dim)?;
        let peak = ln_integrand_peak(dim, n_hash);
        let f = |t: f64| (ln_conditional_integrand(dim, n_hash, t) - peak).exp();
        let (lo, hi) = (QUAD_GUARD, PI - QUAD_GUARD);
        let h = (hi - lo) / QUAD_PANELS as f64;
        let nodes: Vec<f64> = (0..=QUAD_PANELS).map(|i| lo + h * i as f64).collect();
        let panels: Vec<f64> = nodes
            .windows(2)
            .map(|w| h / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1])))
            .collect();
        let mut head = vec![0.0; nodes.len()];
        for (i, p) in panels.iter().enumerate() {
            head[i + 1] = head[i] + p;
        }
        let mut tail = vec![0.0; nodes.len()];
        for (i, p) in panels.iter().enumerate().rev() {
            tail[i] = tail[i + 1] + p;
        }
        let cdf = head.iter().zip(&tail).map(|(a, b)| a / (a + b)).collect();
        Ok(Self { nodes, cdf })
    }

    pub fn eval(&self, epsilon: f64) -> f64 {
        let (lo, hi) = (self.nodes[0], *self.nodes.last().unwrap());
        if epsilon <= lo {
            return 0.0;
        }
        if epsilon >= hi {
            return 1.0;
        }
        let h = (hi - lo) / (self.nodes.len() - 1) as f64;
        let i = (((epsilon - lo) / h) as usize).min(self.nodes.len() - 2);
        let frac = (epsilon - self.nodes[i]) / h;
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Smallest node angle where the CDF reaches `level`, refined linearly.
    pub fn quantile(&self, level: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < level).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (level - c0) / (c1 - c0) } else { 0.0 };
        self.nodes[i - 1] + frac * (self.nodes[i] - self.nodes[i - 1])
    }
}

/// Angle at which the conditional CDF crosses 1/2.
pub fn median_conditional_angle(dim: usize, n_hash: usize) -> Result<f64> {
    Ok(AngleCdfTable::new(dim, n_hash)?.quantile(0.5))
}

/// `P(all N hash losses < ln 2)` for independent Gaussian features:
/// `∫ (1 - θ/π)^N p_D(θ) dθ`.
pub fn predicted_acceptance(dim: usize, n_hash: usize) -> Result<f64> {
    check_dim(dim)?;
    let c = ln_pdf_constant(dim);
    integrate(
        |t| (c + ln_conditional_integrand(dim, n_hash, t)).exp(),
        QUAD_GUARD,
        PI - QUAD_GUARD,
        QUAD_PANELS,
    )
}

/// Rejection sampling of the conditional angle distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalAngleMc {
    pub dim: usize,
    pub n_hash: usize,
    /// Accepted angles in ascending order.
    pub angles: Vec<f64>,
    pub acceptance: McEstimate,
}

impl ConditionalAngleMc {
    /// Fraction of accepted angles strictly below `epsilon`.
    pub fn empirical_cdf(&self, epsilon: f64) -> f64 {
        self.angles.partition_point(|&a| a < epsilon) as f64 / self.angles.len() as f64
    }

    /// Binomial standard error of [`empirical_cdf`](Self::empirical_cdf).
    pub fn cdf_std_error(&self, epsilon: f64) -> f64 {
        let p = self.empirical_cdf(epsilon);
        (p * (1.0 - p) / self.angles.len() as f64).sqrt()
    }

    pub fn curve(&self, grid: &[f64]) -> Vec<CurvePoint> {
        grid.iter()
            .map(|&epsilon| CurvePoint {
                epsilon,
                probability: self.empirical_cdf(epsilon),
            })
            .collect()
    }

    /// Kolmogorov–Smirnov distance between the accepted angles and `cdf`.
    pub fn sup_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.angles.len() as f64;
        self.angles
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let c = cdf(a);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Draws `f_t, f_s ~ N(0, I_D)` and a fresh zero-bias hash module with unit
/// std per proposal, and keeps the angle whenever every per-hash loss is
/// below `ln 2`.
pub fn mc_conditional_angle(dim: usize, n_hash: usize, samples: usize, rng: &RngStream) -> Result<ConditionalAngleMc> {
    check_dim(dim)?;
    if samples == 0 {
        return Err(invalid("samples must be >= 1"));
    }
    let parts = run_chunks(samples, rng, |n, mut r| -> Result<Vec<f64>> {
        let mut kept = Vec::new();
        for _ in 0..n {
            let f_t = r.normal_vec(dim);
            let f_s = r.normal_vec(dim);
            let accept = if n_hash == 0 {
                true
            } else {
                let module = HashModule::init(dim, n_hash, 1.0, &mut r)?.with_bias(&[], BiasInit::Zero)?;
                module.per_hash_losses(&f_t, &f_s)?.iter().all(|&l| l < LN_2)
            };
            if accept {
                kept.push(angle_between(&f_t, &f_s)?);
            }
        }
        Ok(kept)
    });
    let mut angles = Vec::new();
    for part in parts {
        angles.extend(part?);
    }
    let acceptance = McEstimate::binomial(angles.len(), samples);
    if angles.is_empty() {
        return Err(Error::InsufficientSamples {
            proposals: samples,
            acceptance_estimate: predicted_acceptance(dim, n_hash).unwrap_or(0.0),
        });
    }
    angles.sort_by(f64::total_cmp);
    Ok(ConditionalAngleMc {
        dim,
        n_hash,
        angles,
        acceptance,
    })
}

/// Pass/fail summary of one randomized check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    /// Check number, as selected by `lshkd theory --claim`.
    pub claim: u8,
    pub passed: bool,
    pub trials: usize,
    pub violations: usize,
    pub worst_deviation: f64,
    pub detail: String,
}

/// Teacher-scale invariance. Each trial draws a hash module, a teacher set
/// of 101 features (the first is `f_t`), a student feature and a scale
/// `s ∈ [0.1, 10]` (log-uniform), then checks
///
/// * zero bias: `L(s f_t, f_s) == L(f_t, f_s)` bit for bit;
/// * median bias recomputed on the scaled set: every scaled teacher feature
///   hashes to the same code as before scaling, and the student loss against
///   those codes is unchanged bit for bit.
pub fn verify_scale_invariance(dim: usize, n_hash: usize, trials: usize, rng: &mut RngStream) -> Result<ClaimReport> {
    const TEACHER_SET: usize = 101;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let module = HashModule::init(dim, n_hash, 1.0, rng)?;
        let set: Vec<Vec<f64>> = (0..TEACHER_SET).map(|_| rng.normal_vec(dim)).collect();
        let f_s = rng.normal_vec(dim);
        let s = (rng.uniform_range(0.1f64.ln(), 10f64.ln())).exp();
        let scaled: Vec<Vec<f64>> = set.iter().map(|f| f.iter().map(|x| x * s).collect()).collect();

        let base = module.loss(&set[0], &f_s)?;
        let moved = module.loss(&scaled[0], &f_s)?;
        worst = worst.max((base - moved).abs());
        if base != moved {
            violations += 1;
        }

        let before = module.clone().with_bias(&set, BiasInit::Median)?;
        let after = module.with_bias(&scaled, BiasInit::Median)?;
        let mut codes_equal = true;
        for (f, g) in set.iter().zip(&scaled) {
            codes_equal &= before.hash_codes(f)? == after.hash_codes(g)?;
        }
        let target_before = after.loss_from_codes(&before.hash_codes(&set[0])?, &f_s)?;
        let target_after = after.loss(&scaled[0], &f_s)?;
        worst = worst.max((target_before - target_after).abs());
        if !codes_equal || target_before != target_after {
            violations += 1;
        }
    }
    Ok(ClaimReport {
        claim: 1,
        passed: violations == 0,
        trials,
        violations,
        worst_deviation: worst,
        detail: format!("D={dim}, N={n_hash}; zero bias and recomputed median bias"),
    })
}

/// Student-magnitude freedom: with zero bias and `f_s = c f_t` (`c ∈
/// [0.1, 10]`), `L(f_t, s f_s) ≤ L(f_t, f_s)` for `s ∈ (1, 10]`, allowing one
/// ulp of slack.
pub fn verify_magnitude_freedom(dim: usize, n_hash: usize, trials: usize, rng: &mut RngStream) -> Result<ClaimReport> {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let module = HashModule::init(dim, n_hash, 1.0, rng)?;
        let f_t = rng.normal_vec(dim);
        let c = rng.uniform_range(0.1, 10.0);
        let s = 10.0 - 9.0 * rng.uniform();
        let f_s: Vec<f64> = f_t.iter().map(|x| c * x).collect();
        let longer: Vec<f64> = f_s.iter().map(|x| s * x).collect();
        let base = module.loss(&f_t, &f_s)?;
        let scaled = module.loss(&f_t, &longer)?;
        let excess = scaled - base;
        worst = worst.max(excess);
        if excess > ulp(base) {
            violations += 1;
        }
    }
    Ok(ClaimReport {
        claim: 2,
        passed: violations == 0,
        trials,
        violations,
        worst_deviation: worst.max(0.0),
        detail: format!("D={dim}, N={n_hash}; zero bias, s in (1, 10], c in [0.1, 10]"),
    })
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    f64::from_bits(x.to_bits() + 1) - x
}

/// Agreement probability as a report: Monte Carlo within `3σ` of `1 - θ/π`.
pub fn verify_agreement_probability(
    dim: usize,
    theta: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<(ClaimReport, McEstimate)> {
    let est = mc_prob_loss_small(dim, theta, samples, rng)?;
    let target = prob_loss_small_given_angle(theta)?;
    let z = est.z_score(target);
    let passed = z <= 3.0;
    Ok((
        ClaimReport {
            claim: 3,
            passed,
            trials: samples,
            violations: usize::from(!passed),
            worst_deviation: (est.value - target).abs(),
            detail: format!(
                "D={dim}, theta={theta}; estimate {:.6} ± {:.6}, closed form {target:.6}, |z| = {z:.3}",
                est.value, est.std_error
            ),
        },
        est,
    ))
}

/// Sup-norm tolerance between rejection sampling and quadrature.
pub const CONDITIONAL_CDF_TOLERANCE: f64 = 0.02;

/// Conditional angle check as a report: the rejection-sampled angle CDF lies within
/// [`CONDITIONAL_CDF_TOLERANCE`] of the quadrature CDF, and the acceptance rate
/// is within `3σ` of [`predicted_acceptance`].
pub fn verify_conditional_angle(
    dim: usize,
    n_hash: usize,
    samples: usize,
    rng: &RngStream,
) -> Result<(ClaimReport, ConditionalAngleMc)> {
    let mc = mc_conditional_angle(dim, n_hash, samples, rng)?;
    let table = AngleCdfTable::new(dim, n_hash)?;
    let sup = mc.sup_distance(|a| table.eval(a));
    let predicted = predicted_acceptance(dim, n_hash)?;
    let z = mc.acceptance.z_score(predicted);
    let passed = sup <= CONDITIONAL_CDF_TOLERANCE && z <= 3.0;
    Ok((
        ClaimReport {
            claim: 4,
            passed,
            trials: samples,
            violations: usize::from(!passed),
            worst_deviation: sup,
            detail: format!(
                "D={dim}, N={n_hash}; {} accepted, sup |F_mc - F_quad| = {sup:.5}, acceptance {:.5} vs predicted {predicted:.5} (|z| = {z:.3})",
                mc.angles.len(),
                mc.acceptance.value
            ),
        },
        mc,
    ))
}

/// Goodness of fit of sampled angles against [`angle_pdf`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub dim: usize,
    pub pairs: usize,
    pub bins: usize,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub passed: bool,
}

/// Histograms the angles of `pairs` independent Gaussian pairs into
/// `bins` equal-width bins on `[0, π]`, merges neighbouring bins until each
/// expects at least 5 counts, and runs a chi-square test at `alpha`.
pub fn angle_density_chi_square(
    dim: usize,
    pairs: usize,
    bins: usize,
    alpha: f64,
    rng: &RngStream,
) -> Result<ChiSquareReport> {
    check_dim(dim)?;
    if bins < 2 || pairs == 0 {
        return Err(invalid("need at least 2 bins and 1 pair"));
    }
    let width = PI / bins as f64;
    let parts = run_chunks(pairs, rng, |n, mut r| -> Result<Vec<usize>> {
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let a = angle_between(&r.normal_vec(dim), &r.normal_vec(dim))?;
            counts[((a / width) as usize).min(bins - 1)] += 1;
        }
        Ok(counts)
    });
    let mut counts = vec![0usize; bins];
    for part in parts {
        for (c, p) in counts.iter_mut().zip(part?) {
            *c += p;
        }
    }
    let c = ln_pdf_constant(dim);
    let probs = (0..bins)
        .map(|k| {
            let lo = k as f64 * width;
            integrate(|t| (c + ln_sin_power(dim, t)).exp(), lo, lo + width, 200)
        })
        .collect::<Result<Vec<_>>>()?;

    // Merge adjacent bins so every cell expects at least 5 counts.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&p, &n) in probs.iter().zip(&counts) {
        acc.0 += p * pairs as f64;
        acc.1 += n as f64;
        if acc.0 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    let statistic: f64 = cells.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
    let p_value = 1.0 - dist.cdf(statistic);
    Ok(ChiSquareReport {
        dim,
        pairs,
        bins: cells.len(),
        statistic,
        dof,
        p_value,
        passed: p_value > alpha,
    })
}

/// `E‖w‖ ≈ std · √D` for `w ~ N(0, std² I_D)`.
pub fn expected_weight_norm(std: f64, dim: usize) -> f64 {
    std * (dim as f64).sqrt()
}

/// Sample mean (and its standard error) of `‖w‖` over `samples` draws of
/// `w ~ N(0, std² I_D)`.
pub fn mc_mean_weight_norm(std: f64, dim: usize, samples: usize, rng: &mut RngStream) -> McEstimate {
    let norms: Vec<f64> = (0..samples).map(|_| std * norm(&rng.normal_vec(dim))).collect();
    let mean = crate::numerics::mean(&norms);
    McEstimate {
        value: mean,
        std_error: crate::numerics::std_dev(&norms) / (samples as f64).sqrt(),
        samples,
        accepted: samples,
    }
}

/// `ε` grid from 0 to π in whole degrees.
pub fn degree_grid() -> Vec<f64> {
    (0..=180).map(|d| (d as f64).to_radians()).collect()
}
