//! ADC power model, budget solver and Gaussian-optimal scalar quantizers.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Walden figure of merit used throughout, in joules per conversion step.
pub const WALDEN_C: f64 = 494e-15;
/// Reference training duration for one transmit antenna, in seconds.
pub const REFERENCE_DURATION: f64 = 100e-9;
/// Reference ADC power budget, in watts.
pub const REFERENCE_BUDGET: f64 = 20e-3;

/// Guard against `T * f_s` landing a hair below an integer.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdcConfig {
    pub bit_depth: u32,
    /// Hz.
    pub sampling_rate: f64,
    /// `floor(duration * sampling_rate)`.
    pub sample_count: usize,
    /// J per conversion step.
    pub walden_c: f64,
    /// s.
    pub duration: f64,
}

impl AdcConfig {
    pub fn new(bit_depth: u32, sampling_rate: f64, walden_c: f64, duration: f64) -> Self {
        Self {
            bit_depth,
            sampling_rate,
            sample_count: samples_in(duration, sampling_rate),
            walden_c,
            duration,
        }
    }

    /// A zero sample count means no measurement fits in the slot.
    pub fn feasible(&self) -> bool {
        self.sample_count > 0
    }

    pub fn power(&self) -> f64 {
        power(self.walden_c, self.sampling_rate, self.bit_depth)
    }

    pub fn energy(&self) -> f64 {
        self.power() * self.duration
    }
}

pub fn samples_in(duration: f64, sampling_rate: f64) -> usize {
    let m = duration * sampling_rate;
    (m + FLOOR_EPS * m.max(1.0)).floor().max(0.0) as usize
}

/// `P = c · f_s · 2^B`.
pub fn power(walden_c: f64, sampling_rate: f64, bit_depth: u32) -> f64 {
    walden_c * sampling_rate * 2f64.powi(bit_depth as i32)
}

/// Highest sampling rate per bit depth that meets `budget`, sorted by bit depth.
pub fn solve_budget(
    budget: f64,
    walden_c: f64,
    duration: f64,
    bit_depths: &[u32],
) -> Result<Vec<AdcConfig>> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Config(format!("power budget must be positive, got {budget}")));
    }
    if !(walden_c > 0.0 && duration > 0.0) {
        return Err(Error::Config("Walden constant and duration must be positive".into()));
    }
    if bit_depths.is_empty() {
        return Err(Error::Config("bit-depth list is empty".into()));
    }
    if let Some(&b) = bit_depths.iter().find(|&&b| b == 0 || b > 62) {
        return Err(Error::Config(format!("bit depth {b} outside 1..=62")));
    }
    let mut depths = bit_depths.to_vec();
    depths.sort_unstable();
    depths.dedup();
    Ok(depths
        .into_iter()
        .map(|b| {
            let fs = budget / (walden_c * 2f64.powi(b as i32));
            AdcConfig::new(b, fs, walden_c, duration)
        })
        .collect())
}

/// Minimum-MSE scalar quantizer for a zero-mean Gaussian input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizerModel {
    pub bit_depth: u32,
    pub input_std: f64,
    /// Sorted, length `2^B - 1`.
    pub thresholds: Vec<f64>,
    /// Sorted, length `2^B`.
    pub levels: Vec<f64>,
    /// Per-sample distortion at `input_std`.
    pub mse: f64,
}

pub const MAX_QUANTIZER_BITS: u32 = 20;
const MAX_ITERS: usize = 100_000;
/// Largest `|t_k - (y_k + y_{k+1})/2|` accepted, relative to `y_{k+1} - y_k`.
const FIXED_POINT_RTOL: f64 = 1e-9;
/// Cells narrower than this are integrated by quadrature.
const PANEL_WIDTH: f64 = 0.25;

pub fn design_quantizer(bit_depth: u32, input_std: f64) -> Result<QuantizerModel> {
    if bit_depth == 0 || bit_depth > MAX_QUANTIZER_BITS {
        return Err(Error::Domain(format!(
            "bit depth {bit_depth} outside 1..={MAX_QUANTIZER_BITS}"
        )));
    }
    if !(input_std > 0.0 && input_std.is_finite()) {
        return Err(Error::Domain(format!("input std must be positive, got {input_std}")));
    }
    let (half_t, half_y, mse) = if bit_depth == 1 {
        let y = (2.0 / std::f64::consts::PI).sqrt();
        (Vec::new(), vec![y], 1.0 - 2.0 / std::f64::consts::PI)
    } else {
        standard_half_design(1usize << (bit_depth - 1))?
    };

    // mirror the positive half; threshold 0 sits in the middle
    let mut thresholds: Vec<f64> = half_t.iter().rev().map(|t| -t * input_std).collect();
    thresholds.push(0.0);
    thresholds.extend(half_t.iter().map(|t| t * input_std));
    let mut levels: Vec<f64> = half_y.iter().rev().map(|y| -y * input_std).collect();
    levels.extend(half_y.iter().map(|y| y * input_std));

    Ok(QuantizerModel {
        bit_depth,
        input_std,
        thresholds,
        levels,
        mse: mse * input_std * input_std,
    })
}

impl QuantizerModel {
    /// The same design at a different input scale.
    pub fn rescaled(&self, input_std: f64) -> Self {
        let r = input_std / self.input_std;
        Self {
            bit_depth: self.bit_depth,
            input_std,
            thresholds: self.thresholds.iter().map(|t| t * r).collect(),
            levels: self.levels.iter().map(|y| y * r).collect(),
            mse: self.mse * r * r,
        }
    }

    /// Cell index of `x`; a value equal to a threshold goes to the upper cell.
    pub fn cell(&self, x: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= x)
    }

    pub fn quantize_one(&self, x: f64) -> f64 {
        self.levels[self.cell(x)]
    }

    pub fn quantize(&self, samples: &[f64]) -> Vec<f64> {
        samples.iter().map(|&x| self.quantize_one(x)).collect()
    }
}

/// Elementwise sign with `sgn(0) = +1`.
pub fn sign_quantize(samples: &[f64]) -> Vec<i8> {
    samples.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect()
}

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Upper tail `P(X > x)`.
fn tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Probability of `[a, b)` for `0 <= a < b <= ∞`.
fn mass(a: f64, b: f64) -> f64 {
    if b - a <= PANEL_WIDTH {
        gauss_legendre(a, b, pdf)
    } else {
        tail(a) - if b.is_finite() { tail(b) } else { 0.0 }
    }
}

fn centroid(a: f64, b: f64) -> f64 {
    if b - a <= PANEL_WIDTH {
        gauss_legendre(a, b, |x| x * pdf(x)) / gauss_legendre(a, b, pdf)
    } else {
        let pb = if b.is_finite() { pdf(b) } else { 0.0 };
        (pdf(a) - pb) / mass(a, b)
    }
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `∫_a^b f` over panels no wider than `PANEL_WIDTH`, 8 points each.
fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let panels = ((b - a) / PANEL_WIDTH).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    let half = 0.5 * w;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * w;
        for (node, weight) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            acc += weight * half * (f(mid - half * node) + f(mid + half * node));
        }
    }
    acc
}

/// `∫_a^b (x - y)² φ(x) dx`.
fn central_moment(a: f64, b: f64, y: f64) -> f64 {
    if b.is_finite() {
        gauss_legendre(a, b, |x| (x - y) * (x - y) * pdf(x))
    } else {
        // E[(x-y)^2; x > a] = Q + aφ - 2yφ + y²Q
        let q = tail(a);
        let p = pdf(a);
        q + a * p - 2.0 * y * p + y * y * q
    }
}

/// Positive-half thresholds (excluding 0 and ∞), levels and unit-variance MSE
/// for a symmetric quantizer with `m` positive levels.
fn standard_half_design(m: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = 2 * m;
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    // companding start: point density ∝ φ^{1/3}
    let mut t: Vec<f64> = (1..m)
        .map(|k| 3f64.sqrt() * unit.inverse_cdf(0.5 + k as f64 / n as f64))
        .collect();

    let edges = |t: &[f64], k: usize| -> (f64, f64) {
        let a = if k == 0 { 0.0 } else { t[k - 1] };
        let b = if k == m - 1 { f64::INFINITY } else { t[k] };
        (a, b)
    };
    let levels_of = |t: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|k| {
                let (a, b) = edges(t, k);
                centroid(a, b)
            })
            .collect()
    };
    let residual = |t: &[f64], y: &[f64]| -> Vec<f64> {
        (0..m - 1).map(|k| t[k] - 0.5 * (y[k] + y[k + 1])).collect()
    };
    // residual of each threshold relative to the gap between its levels
    let rel_norm = |f: &[f64], y: &[f64]| {
        f.iter()
            .enumerate()
            .fold(0.0f64, |s, (k, v)| s.max(v.abs() / (y[k + 1] - y[k])))
    };
    let ordered = |t: &[f64]| t[0] > 0.0 && t.windows(2).all(|w| w[1] > w[0]);

    let mut y = levels_of(&t);
    let mut iters = 0;
    while iters < MAX_ITERS {
        iters += 1;
        let f = residual(&t, &y);
        let fnorm = rel_norm(&f, &y);
        if fnorm <= FIXED_POINT_RTOL {
            t = (0..m - 1).map(|k| 0.5 * (y[k] + y[k + 1])).collect();
            let mse = 2.0
                * (0..m)
                    .map(|k| {
                        let (a, b) = edges(&t, k);
                        central_moment(a, b, y[k])
                    })
                    .sum::<f64>();
            return Ok((t, y, mse));
        }

        // Jacobian of F_k = t_k - (y_k + y_{k+1})/2 is tridiagonal
        let dy = |k: usize| -> (f64, f64) {
            let (a, b) = edges(&t, k);
            let p = mass(a, b);
            let da = if k == 0 { 0.0 } else { pdf(a) * (y[k] - a) / p };
            let db = if b.is_finite() { pdf(b) * (b - y[k]) / p } else { 0.0 };
            (da, db)
        };
        let mut sub = vec![0.0; m - 1];
        let mut diag = vec![0.0; m - 1];
        let mut sup = vec![0.0; m - 1];
        for k in 0..m - 1 {
            let (_, dyk_dtk) = dy(k);
            let (dyk1_dtk, _) = dy(k + 1);
            diag[k] = 1.0 - 0.5 * (dyk_dtk + dyk1_dtk);
            if k > 0 {
                sub[k] = -0.5 * dy(k).0;
            }
            if k + 1 < m - 1 {
                sup[k] = -0.5 * dy(k + 1).1;
            }
        }
        let step = thomas(&sub, &diag, &sup, &f.iter().map(|v| -v).collect::<Vec<_>>());

        let mut accepted = None;
        if let Some(step) = step {
            let mut alpha = 1.0;
            for _ in 0..30 {
                let cand: Vec<f64> = t.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
                if ordered(&cand) {
                    let cy = levels_of(&cand);
                    if rel_norm(&residual(&cand, &cy), &cy) < fnorm {
                        accepted = Some((cand, cy));
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        let (nt, ny) = accepted.unwrap_or_else(|| {
            // plain Lloyd step: thresholds to midpoints, then centroids
            let lt: Vec<f64> = (0..m - 1).map(|k| 0.5 * (y[k] + y[k + 1])).collect();
            let ly = levels_of(&lt);
            (lt, ly)
        });
        t = nt;
        y = ny;
    }
    Err(Error::Numerical(format!(
        "quantizer design with {n} levels did not converge in {MAX_ITERS} iterations"
    )))
}

/// Tridiagonal solve; `None` on a vanishing pivot.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < 1e-300 {
        return None;
    }
    c[0] = sup[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i] * c[i - 1];
        if piv.abs() < 1e-300 {
            return None;
        }
        c[i] = sup[i] / piv;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / piv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}
