//! Two-stage channel estimation: binary iterative hard thresholding (BIHT) on
//! one-bit data finds the support, then least squares on that support uses
//! the multi-bit data. Oracle and unrestricted least-squares baselines share
//! the same linear machinery.
//!
//! Real-stacked vectors are `[h_R; h_I]` (columns) and `[y_R; y_I]` (rows),
//! each half ordered like the complex vector.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky, cholesky_solve, pinv_solve};
use crate::pilot::MeasurementModel;
use crate::{Error, Result, C64};

/// A real linear map evaluated without forming the matrix.
pub trait SensingOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `out = A x`, with `x` given by its nonzero entries.
    fn apply_sparse(&self, x: &[(usize, f64)], out: &mut [f64]);

    /// `out = Aᵀ r`, with `r` given by its nonzero entries.
    fn adjoint_sparse(&self, r: &[(usize, f64)], out: &mut [f64]);

    /// Row count used by the automatic step rule.
    fn step_rows(&self) -> usize {
        self.rows()
    }

    /// `‖A‖₂²` by power iteration on `AᵀA`.
    fn spectral_norm_sq(&self) -> f64 {
        let n = self.cols();
        if n == 0 || self.rows() == 0 {
            return 0.0;
        }
        // deterministic start with no special alignment
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618).sin()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut w = vec![0.0; self.rows()];
        let mut u = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let xs: Vec<(usize, f64)> = v.iter().copied().enumerate().collect();
            self.apply_sparse(&xs, &mut w);
            let rs: Vec<(usize, f64)> = w.iter().copied().enumerate().collect();
            self.adjoint_sparse(&rs, &mut u);
            let next = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if next == 0.0 {
                return 0.0;
            }
            v.iter_mut().zip(&u).for_each(|(a, b)| *a = b / next);
            let done = (next - lambda).abs() <= 1e-12 * next;
            lambda = next;
            if done {
                break;
            }
        }
        lambda
    }
}

impl SensingOperator for DMatrix<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn apply_sparse(&self, x: &[(usize, f64)], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(j, v) in x {
            for (o, a) in out.iter_mut().zip(self.column(j).iter()) {
                *o += v * a;
            }
        }
    }

    fn adjoint_sparse(&self, r: &[(usize, f64)], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(i, v) in r {
            for (c, o) in out.iter_mut().enumerate() {
                *o += v * self[(i, c)];
            }
        }
    }
}

/// Which rows of the real-stacked system an operator exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowPart {
    /// `[𝒳₁; 𝒳₂]`.
    Joint,
    /// `𝒳₁`, the real part of the observation.
    Real,
    /// `𝒳₂`, the imaginary part.
    Imag,
}

/// Real-stacked view of a [`MeasurementModel`] that exploits its Toeplitz
/// and block-diagonal structure. Pilots are real, so `𝒳₁ = [𝒳 0]` and
/// `𝒳₂ = [0 𝒳]`.
pub struct StackedOperator<'a> {
    pub model: &'a MeasurementModel,
    pub part: RowPart,
}

impl StackedOperator<'_> {
    fn half_rows(&self) -> usize {
        self.model.total_rows()
    }

    /// Component (0 real, 1 imag) feeding row `row`.
    fn row_component(&self, row: usize) -> usize {
        match self.part {
            RowPart::Joint => row / self.half_rows(),
            RowPart::Real => 0,
            RowPart::Imag => 1,
        }
    }

    /// First row of the block for component `comp`, if exposed.
    fn component_offset(&self, comp: usize) -> Option<usize> {
        match (self.part, comp) {
            (RowPart::Joint, c) => Some(c * self.half_rows()),
            (RowPart::Real, 0) | (RowPart::Imag, 1) => Some(0),
            _ => None,
        }
    }
}

impl SensingOperator for StackedOperator<'_> {
    fn rows(&self) -> usize {
        match self.part {
            RowPart::Joint => 2 * self.half_rows(),
            _ => self.half_rows(),
        }
    }

    fn cols(&self) -> usize {
        2 * self.model.cols()
    }

    fn step_rows(&self) -> usize {
        self.half_rows()
    }

    fn apply_sparse(&self, x: &[(usize, f64)], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let c = self.model.cols();
        let m = self.model.rows;
        for &(j, v) in x {
            let Some(base) = self.component_offset(j / c) else {
                continue;
            };
            let (tx, rx, tap) = self.model.locate(j % c);
            let start = base + rx * m;
            for (o, a) in out[start..start + m].iter_mut().zip(self.model.column(tx, tap)) {
                *o += v * a;
            }
        }
    }

    fn adjoint_sparse(&self, r: &[(usize, f64)], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let c = self.model.cols();
        let m = self.model.rows;
        let n = self.model.taps;
        for &(row, v) in r {
            let comp = self.row_component(row);
            let local = row % self.half_rows();
            let (rx, rr) = (local / m, local % m);
            for tx in 0..self.model.n_tx {
                let col0 = comp * c + self.model.n_tx * n * rx + tx * n;
                // row rr of the Toeplitz block is x[N-1+rr], x[N-2+rr], …, x[rr]
                let x = &self.model.sequences[tx][rr..rr + n];
                for (tap, o) in out[col0..col0 + n].iter_mut().enumerate() {
                    *o += v * x[n - 1 - tap];
                }
            }
        }
    }
}

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Fixed(f64),
    /// `τ = ‖𝒳‖₂² / √(Nr·M)`.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stacking {
    /// One run over the stacked real and imaginary sign data.
    Joint,
    /// Independent runs on the real and on the imaginary sign data.
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BihtConfig {
    pub step: StepSize,
    /// Per transmit/receive pair (K̂).
    pub sparsity_target: usize,
    pub max_iters: usize,
    pub stall_window: usize,
    pub stacking: Stacking,
}

impl BihtConfig {
    pub fn new(sparsity_target: usize) -> Self {
        Self {
            step: StepSize::Fixed(DEFAULT_STEP),
            sparsity_target,
            max_iters: 100,
            stall_window: 10,
            stacking: Stacking::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SignConsistent,
    Stalled,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BihtOutcome {
    /// Sorted nonzero indices of the final iterate.
    pub support: Vec<usize>,
    /// Final iterate on the unit sphere (zero if nothing was selected).
    pub iterate: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl BihtOutcome {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIters
    }
}

fn sign(v: f64) -> i8 {
    if v < 0.0 {
        -1
    } else {
        1
    }
}

/// Keeps the `k` largest magnitudes; among equal magnitudes the lower index
/// wins. Zeros are never kept.
fn hard_threshold(a: &mut [f64], k: usize) {
    let mut idx: Vec<usize> = (0..a.len()).filter(|&i| a[i] != 0.0).collect();
    if idx.len() > k {
        let key = |i: &usize, j: &usize| {
            a[*j].abs()
                .partial_cmp(&a[*i].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(j))
        };
        if k > 0 {
            idx.select_nth_unstable_by(k - 1, key);
        }
        for &i in &idx[k..] {
            a[i] = 0.0;
        }
    }
}

fn step_size(op: &impl SensingOperator, step: StepSize) -> f64 {
    match step {
        StepSize::Fixed(t) => t,
        StepSize::Auto => op.spectral_norm_sq() / (op.step_rows() as f64).sqrt(),
    }
}

/// BIHT from `h⁰ = 0` keeping `k_total` entries per iterate.
pub fn biht(
    op: &impl SensingOperator,
    one_bit_obs: &[i8],
    k_total: usize,
    cfg: &BihtConfig,
) -> Result<BihtOutcome> {
    if one_bit_obs.len() != op.rows() {
        return Err(Error::Config(format!(
            "{} sign observations for an operator with {} rows",
            one_bit_obs.len(),
            op.rows()
        )));
    }
    if k_total == 0 || cfg.max_iters == 0 || cfg.stall_window == 0 {
        return Err(Error::Config(
            "BIHT needs positive sparsity target, iteration cap and stall window".into(),
        ));
    }
    let tau = step_size(op, cfg.step);
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("BIHT step size must be positive, got {tau}")));
    }

    let n = op.cols();
    let mut h = vec![0.0; n];
    let mut nz: Vec<(usize, f64)> = Vec::new();
    let mut prod = vec![0.0; op.rows()];
    let mut grad = vec![0.0; n];
    let mut prev_support: Vec<usize> = Vec::new();
    let mut stall = 0;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIters;

    while iterations < cfg.max_iters {
        op.apply_sparse(&nz, &mut prod);
        let residual: Vec<(usize, f64)> = one_bit_obs
            .iter()
            .zip(&prod)
            .enumerate()
            .filter(|(_, (&y, &p))| y != sign(p))
            .map(|(i, (&y, _))| (i, 2.0 * y as f64))
            .collect();
        if iterations > 0 && residual.is_empty() {
            stop = StopReason::SignConsistent;
            break;
        }
        op.adjoint_sparse(&residual, &mut grad);
        for (hi, g) in h.iter_mut().zip(&grad) {
            *hi += 0.5 * tau * g;
        }
        hard_threshold(&mut h, k_total);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { tau });
        }
        iterations += 1;

        nz = h.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        let support: Vec<usize> = nz.iter().map(|(i, _)| *i).collect();
        if support == prev_support {
            stall += 1;
        } else {
            stall = 0;
            prev_support = support;
        }
        if stall >= cfg.stall_window {
            stop = StopReason::Stalled;
            break;
        }
    }

    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        h.iter_mut().for_each(|v| *v /= norm);
    }
    let support = (0..n).filter(|&i| h[i] != 0.0).collect();
    Ok(BihtOutcome {
        support,
        iterate: h,
        iterations,
        stop,
    })
}

/// BIHT on the real-stacked system of `model`. `one_bit_obs` is
/// `[sgn y_R; sgn y_I]`, length `2·Nr·M`; returned indices are real-stacked.
pub fn biht_support(
    one_bit_obs: &[i8],
    model: &MeasurementModel,
    cfg: &BihtConfig,
) -> Result<BihtOutcome> {
    let per_half = model.n_tx * model.n_rx * cfg.sparsity_target;
    match cfg.stacking {
        Stacking::Joint => {
            let op = StackedOperator {
                model,
                part: RowPart::Joint,
            };
            biht(&op, one_bit_obs, 2 * per_half, cfg)
        }
        Stacking::Separate => {
            let half = model.total_rows();
            if one_bit_obs.len() != 2 * half {
                return Err(Error::Config(format!(
                    "{} sign observations, expected {}",
                    one_bit_obs.len(),
                    2 * half
                )));
            }
            let re = biht(
                &StackedOperator {
                    model,
                    part: RowPart::Real,
                },
                &one_bit_obs[..half],
                per_half,
                cfg,
            )?;
            let im = biht(
                &StackedOperator {
                    model,
                    part: RowPart::Imag,
                },
                &one_bit_obs[half..],
                per_half,
                cfg,
            )?;
            // the two runs touch disjoint columns
            let mut iterate: Vec<f64> = re.iterate.iter().zip(&im.iterate).map(|(a, b)| a + b).collect();
            let norm = iterate.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                iterate.iter_mut().for_each(|v| *v /= norm);
            }
            let support = (0..iterate.len()).filter(|&i| iterate[i] != 0.0).collect();
            let stop = if re.stop == StopReason::MaxIters || im.stop == StopReason::MaxIters {
                StopReason::MaxIters
            } else if re.stop == StopReason::SignConsistent && im.stop == StopReason::SignConsistent {
                StopReason::SignConsistent
            } else {
                StopReason::Stalled
            };
            Ok(BihtOutcome {
                support,
                iterate,
                iterations: re.iterations.max(im.iterations),
                stop,
            })
        }
    }
}

/// Folds real-stacked indices onto complex ones and keeps at most
/// `Nt·Nr·K̂` of them, ranked by `h_R² + h_I²` (lower index on ties).
pub fn complex_support(outcome: &BihtOutcome, model: &MeasurementModel, khat: usize) -> Vec<usize> {
    let c = model.cols();
    let mut idx: Vec<usize> = outcome.support.iter().map(|&i| i % c).collect();
    idx.sort_unstable();
    idx.dedup();
    let cap = model.n_tx * model.n_rx * khat;
    if idx.len() > cap {
        let energy = |i: usize| {
            let (re, im) = (outcome.iterate[i], outcome.iterate[i + c]);
            re * re + im * im
        };
        idx.sort_by(|&a, &b| {
            energy(b)
                .partial_cmp(&energy(a))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx.truncate(cap);
        idx.sort_unstable();
    }
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BihtLinear,
    OracleLinear,
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub estimate: Vec<C64>,
    /// Sorted complex indices; every column for least squares.
    pub support: Vec<usize>,
    pub iterations_used: usize,
    pub converged: bool,
    pub method: Method,
}

fn check_obs(obs: &[C64], model: &MeasurementModel) -> Result<()> {
    if obs.len() != model.total_rows() {
        return Err(Error::Config(format!(
            "{} observations for a model with {} rows",
            obs.len(),
            model.total_rows()
        )));
    }
    Ok(())
}

/// Least squares restricted to `support`, zero elsewhere. Receivers decouple,
/// and the real and imaginary parts share one factorisation.
pub fn restricted_least_squares(
    obs: &[C64],
    model: &MeasurementModel,
    support: &[usize],
) -> Result<Vec<C64>> {
    check_obs(obs, model)?;
    if let Some(&bad) = support.iter().find(|&&i| i >= model.cols()) {
        return Err(Error::Config(format!("support index {bad} out of range")));
    }
    let m = model.rows;
    let mut est = vec![C64::new(0.0, 0.0); model.cols()];
    for rx in 0..model.n_rx {
        let cols: Vec<usize> = support
            .iter()
            .copied()
            .filter(|&i| model.locate(i).1 == rx)
            .collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() > m {
            return Err(Error::Conditioning {
                columns: cols[m..].to_vec(),
            });
        }
        let slices: Vec<&[f64]> = cols
            .iter()
            .map(|&i| {
                let (tx, _, tap) = model.locate(i);
                model.column(tx, tap)
            })
            .collect();
        let s = cols.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let gram = DMatrix::from_fn(s, s, |i, j| dot(slices[i], slices[j]));
        let y = &obs[rx * m..(rx + 1) * m];
        let mut rhs = DMatrix::from_fn(s, 2, |i, k| {
            slices[i]
                .iter()
                .zip(y)
                .map(|(a, v)| a * if k == 0 { v.re } else { v.im })
                .sum()
        });
        let l = cholesky(&gram, &cols)?;
        cholesky_solve(&l, &mut rhs);
        for (i, &col) in cols.iter().enumerate() {
            est[col] = C64::new(rhs[(i, 0)], rhs[(i, 1)]);
        }
    }
    Ok(est)
}

/// Linear reconstruction on a given support.
pub fn estimate_channel(
    quantized_obs: &[C64],
    model: &MeasurementModel,
    support: &[usize],
) -> Result<EstimationResult> {
    let mut sup = support.to_vec();
    sup.sort_unstable();
    sup.dedup();
    let estimate = restricted_least_squares(quantized_obs, model, &sup)?;
    Ok(EstimationResult {
        estimate,
        support: sup,
        iterations_used: 0,
        converged: true,
        method: Method::OracleLinear,
    })
}

/// Linear reconstruction on the true support.
pub fn estimate_oracle(
    quantized_obs: &[C64],
    model: &MeasurementModel,
    true_support: &[usize],
) -> Result<EstimationResult> {
    estimate_channel(quantized_obs, model, true_support)
}

/// BIHT support detection on the sign data, then least squares on the
/// multi-bit data.
pub fn estimate_biht_linear(
    quantized_obs: &[C64],
    one_bit_obs: &[i8],
    model: &MeasurementModel,
    cfg: &BihtConfig,
) -> Result<EstimationResult> {
    let outcome = biht_support(one_bit_obs, model, cfg)?;
    let support = complex_support(&outcome, model, cfg.sparsity_target);
    let mut res = estimate_channel(quantized_obs, model, &support)?;
    res.iterations_used = outcome.iterations;
    res.converged = outcome.converged();
    res.method = Method::BihtLinear;
    Ok(res)
}

enum LsFactor {
    /// Cholesky of `AᵀA` (tall or square block).
    Normal(DMatrix<f64>),
    /// Cholesky of `AAᵀ` (wide block, minimum-norm solution).
    MinNorm(DMatrix<f64>),
    /// Singular Gram: SVD pseudo-inverse per solve.
    Svd,
}

/// Unrestricted least squares over all columns of one receiver block,
/// factorised once and reused for any number of observation vectors.
pub struct LeastSquaresSolver {
    block: DMatrix<f64>,
    factor: LsFactor,
    n_rx: usize,
}

impl LeastSquaresSolver {
    pub fn new(model: &MeasurementModel) -> Self {
        let block = model.receiver_block();
        let (m, n) = block.shape();
        let labels: Vec<usize> = (0..m.max(n)).collect();
        let factor = if m >= n {
            cholesky(&block.tr_mul(&block), &labels).map(LsFactor::Normal)
        } else {
            cholesky(&(&block * block.transpose()), &labels).map(LsFactor::MinNorm)
        }
        .unwrap_or(LsFactor::Svd);
        Self {
            block,
            factor,
            n_rx: model.n_rx,
        }
    }

    pub fn solve(&self, obs: &[C64]) -> Result<EstimationResult> {
        let (m, n) = self.block.shape();
        if obs.len() != m * self.n_rx {
            return Err(Error::Config(format!(
                "{} observations for a model with {} rows",
                obs.len(),
                m * self.n_rx
            )));
        }
        let mut estimate = Vec::with_capacity(n * self.n_rx);
        for rx in 0..self.n_rx {
            let y = DMatrix::from_fn(m, 2, |i, k| {
                let v = obs[rx * m + i];
                if k == 0 {
                    v.re
                } else {
                    v.im
                }
            });
            let x = match &self.factor {
                LsFactor::Normal(l) => {
                    let mut rhs = self.block.tr_mul(&y);
                    cholesky_solve(l, &mut rhs);
                    rhs
                }
                LsFactor::MinNorm(l) => {
                    let mut z = y;
                    cholesky_solve(l, &mut z);
                    self.block.tr_mul(&z)
                }
                LsFactor::Svd => pinv_solve(&self.block, &y),
            };
            estimate.extend((0..n).map(|i| C64::new(x[(i, 0)], x[(i, 1)])));
        }
        Ok(EstimationResult {
            estimate,
            support: (0..n * self.n_rx).collect(),
            iterations_used: 0,
            converged: true,
            method: Method::LeastSquares,
        })
    }
}

pub fn estimate_least_squares(
    quantized_obs: &[C64],
    model: &MeasurementModel,
) -> Result<EstimationResult> {
    check_obs(quantized_obs, model)?;
    LeastSquaresSolver::new(model).solve(quantized_obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, rsnr, ChannelSpec};
    use crate::pilot::{apply_model, build_measurement_model, generate_pilots, PilotMode};
    use proptest::prelude::*;

    fn model(nt: usize, nr: usize, m: usize, n: usize, seed: u64) -> MeasurementModel {
        let p = generate_pilots(nt, m, n, PilotMode::IidRandom, seed).unwrap();
        build_measurement_model(&p, nt, nr, n).unwrap()
    }

    fn signs_of(y: &[C64]) -> Vec<i8> {
        let re: Vec<f64> = y.iter().map(|v| v.re).chain(y.iter().map(|v| v.im)).collect();
        crate::adc::sign_quantize(&re)
    }

    #[test]
    fn structured_operator_matches_dense() {
        let md = model(2, 2, 7, 4, 1);
        let dense = md.joint_real();
        for part in [RowPart::Joint, RowPart::Real, RowPart::Imag] {
            let op = StackedOperator { model: &md, part };
            let want = match part {
                RowPart::Joint => dense.clone(),
                RowPart::Real => dense.rows(0, 14).into_owned(),
                RowPart::Imag => dense.rows(14, 14).into_owned(),
            };
            let x: Vec<(usize, f64)> = (0..op.cols()).map(|j| (j, (j as f64 * 0.37).cos())).collect();
            let mut a = vec![0.0; op.rows()];
            let mut b = vec![0.0; op.rows()];
            op.apply_sparse(&x, &mut a);
            want.apply_sparse(&x, &mut b);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
            let r: Vec<(usize, f64)> = (0..op.rows()).map(|i| (i, (i as f64 * 0.71).sin())).collect();
            let mut a = vec![0.0; op.cols()];
            let mut b = vec![0.0; op.cols()];
            op.adjoint_sparse(&r, &mut a);
            want.adjoint_sparse(&r, &mut b);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let md = model(2, 1, 30, 10, 2);
        let dense = md.receiver_block();
        let smax = dense.clone().svd(false, false).singular_values.max();
        let op = StackedOperator {
            model: &md,
            part: RowPart::Joint,
        };
        assert!((op.spectral_norm_sq() - smax * smax).abs() < 1e-8 * smax * smax);
    }

    #[test]
    fn delta_recovered_in_one_step() {
        // A = [I; -I] so the zero entries of A h still produce a mismatch
        let n = 8;
        let mut a = DMatrix::<f64>::zeros(2 * n, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(n + i, i)] = -1.0;
        }
        let mut h = vec![0.0; n];
        h[3] = 1.0;
        let mut y = vec![0.0; 2 * n];
        let hs: Vec<(usize, f64)> = vec![(3, 1.0)];
        a.apply_sparse(&hs, &mut y);
        let obs = crate::adc::sign_quantize(&y);
        let out = biht(&a, &obs, 1, &BihtConfig::new(1)).unwrap();
        assert_eq!(out.support, vec![3]);
        assert!((out.iterate[3] - 1.0).abs() < 1e-15);
        assert_eq!(out.stop, StopReason::SignConsistent);
    }

    #[test]
    fn threshold_ties_keep_lower_index() {
        let mut a = vec![0.5, -1.0, 1.0, 0.0, 1.0];
        hard_threshold(&mut a, 2);
        assert_eq!(a, vec![0.0, -1.0, 1.0, 0.0, 0.0]);
        let mut z = vec![0.0, 0.0, 2.0];
        hard_threshold(&mut z, 2);
        assert_eq!(z, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn divergence_names_tau() {
        // two agreeing rows push the first step past f64::MAX
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let cfg = BihtConfig {
            step: StepSize::Fixed(f64::MAX),
            ..BihtConfig::new(1)
        };
        match biht(&a, &[-1, -1], 1, &cfg) {
            Err(Error::Divergence { tau }) => assert_eq!(tau, f64::MAX),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn noiseless_oracle_is_exact() {
        let md = model(2, 2, 40, 12, 5);
        let ch = generate_channel(&ChannelSpec::mimo(12, 3, 2, 2), 6).unwrap();
        let y = apply_model(&md, &ch).unwrap();
        let res = estimate_oracle(&y, &md, &ch.support).unwrap();
        let err: f64 = res.estimate.iter().zip(&ch.entries).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(err.sqrt() < 1e-10 * ch.energy().sqrt());
    }

    #[test]
    fn empty_support_gives_zero_db() {
        let md = model(1, 1, 10, 5, 0);
        let ch = generate_channel(&ChannelSpec::siso(5, 2), 1).unwrap();
        let y = apply_model(&md, &ch).unwrap();
        let res = estimate_channel(&y, &md, &[]).unwrap();
        assert!(res.estimate.iter().all(|v| v.norm() == 0.0));
        assert_eq!(rsnr(&ch.entries, &res.estimate).unwrap().db(), 0.0);
    }

    #[test]
    fn rank_deficient_support_reports_columns() {
        // M = 1: any two columns are dependent
        let md = model(1, 1, 1, 4, 0);
        let y = vec![C64::new(1.0, 0.0)];
        match estimate_channel(&y, &md, &[0, 2]) {
            Err(Error::Conditioning { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn least_squares_cases() {
        // square, noiseless; first seed whose block is well conditioned
        let md = (0..)
            .map(|s| model(1, 1, 6, 6, s))
            .find(|m| m.receiver_block().svd(false, false).singular_values.min() > 0.2)
            .unwrap();
        let ch = generate_channel(&ChannelSpec::siso(6, 6), 2).unwrap();
        let y = apply_model(&md, &ch).unwrap();
        let res = estimate_least_squares(&y, &md).unwrap();
        assert!(rsnr(&ch.entries, &res.estimate).unwrap().db() > 150.0);

        // zero observations
        let z = vec![C64::new(0.0, 0.0); md.total_rows()];
        assert!(estimate_least_squares(&z, &md).unwrap().estimate.iter().all(|v| v.norm() == 0.0));

        // wide: minimum-norm solution satisfies the equations and lies in the row space
        let wide = model(2, 1, 10, 8, 4);
        let ch = generate_channel(&ChannelSpec::mimo(8, 2, 2, 1), 7).unwrap();
        let y = apply_model(&wide, &ch).unwrap();
        let res = estimate_least_squares(&y, &wide).unwrap();
        let a = wide.mimo_matrix();
        let xr = DMatrix::from_iterator(16, 1, res.estimate.iter().map(|v| v.re));
        let yr = DMatrix::from_iterator(10, 1, y.iter().map(|v| v.re));
        assert!((&a * &xr - &yr).norm() < 1e-10);
        let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
        assert!((&pinv * &yr - &xr).norm() < 1e-9);
    }

    #[test]
    fn separate_stacking_matches_on_real_signal() {
        let md = model(1, 1, 120, 30, 9);
        let ch = generate_channel(&ChannelSpec::siso(30, 3), 9).unwrap();
        let y = apply_model(&md, &ch).unwrap();
        let obs = signs_of(&y);
        let joint = biht_support(&obs, &md, &BihtConfig::new(3)).unwrap();
        let sep = biht_support(
            &obs,
            &md,
            &BihtConfig {
                stacking: Stacking::Separate,
                ..BihtConfig::new(3)
            },
        )
        .unwrap();
        assert!(joint.support.len() <= 6 && sep.support.len() <= 6);
        let cj = complex_support(&joint, &md, 3);
        let cs = complex_support(&sep, &md, 3);
        assert!(cj.len() <= 3 && cs.len() <= 3);
    }

    #[test]
    fn one_bit_linear_stage_recovers_direction() {
        // with only two ±1 columns the signs can collapse onto one of them,
        // so use a richer mixture
        let md = model(1, 1, 400, 40, 10);
        let ch = generate_channel(&ChannelSpec::siso(40, 5), 10).unwrap();
        let y = apply_model(&md, &ch).unwrap();
        let obs = signs_of(&y);
        let q = crate::adc::design_quantizer(1, 1.0).unwrap();
        let yq: Vec<C64> = y
            .iter()
            .map(|v| C64::new(q.quantize_one(v.re), q.quantize_one(v.im)))
            .collect();
        let res = estimate_biht_linear(&yq, &obs, &md, &BihtConfig::new(5)).unwrap();
        assert_eq!(res.support, ch.support);
        // each real component carries its own unknown gain
        let re = |v: &[C64]| -> Vec<C64> { v.iter().map(|x| C64::new(x.re, 0.0)).collect() };
        let r = crate::channel::rsnr_normalized(&re(&ch.entries), &re(&res.estimate)).unwrap();
        assert!(r.db() > 6.0, "{}", r.db());
    }

    proptest! {
        #[test]
        fn iterates_stay_sparse_and_scale_free(seed in 0u64..200, khat in 1usize..5, alpha in 0.01f64..100.0) {
            let md = model(1, 1, 60, 20, seed);
            let ch = generate_channel(&ChannelSpec::siso(20, 3), seed).unwrap();
            let y = apply_model(&md, &ch).unwrap();
            let scaled: Vec<C64> = y.iter().map(|v| v * alpha).collect();
            let cfg = BihtConfig::new(khat);
            let a = biht_support(&signs_of(&y), &md, &cfg).unwrap();
            let b = biht_support(&signs_of(&scaled), &md, &cfg).unwrap();
            prop_assert!(a.support.len() <= 2 * khat);
            prop_assert_eq!(&a.support, &b.support);
            prop_assert!(complex_support(&a, &md, khat).len() <= khat);
        }

        #[test]
        fn linear_residual_is_orthogonal(seed in 0u64..500, s in 1usize..6) {
            let md = model(2, 1, 30, 8, seed);
            let obs: Vec<C64> = (0..30)
                .map(|i| C64::new(((seed + i) as f64 * 0.77).sin(), ((seed * 3 + i) as f64 * 0.31).cos()))
                .collect();
            let support: Vec<usize> = (0..s).map(|k| (k * 5 + seed as usize) % 16).collect();
            let res = estimate_channel(&obs, &md, &support).unwrap();
            let x = md.mimo_matrix();
            for part in 0..2 {
                let e = |v: &C64| if part == 0 { v.re } else { v.im };
                let h = DMatrix::from_iterator(16, 1, res.estimate.iter().map(e));
                let y = DMatrix::from_iterator(30, 1, obs.iter().map(e));
                let r = &y - &x * &h;
                for &c in &res.support {
                    let g: f64 = x.column(c).dot(&r.column(0));
                    prop_assert!(g.abs() <= 1e-8 * y.norm().max(1.0));
                }
            }
        }
    }
}
