//! Sparse multipath channels and reconstruction-quality metrics.
//!
//! A MIMO channel is stored as the stacked vector of all transmit/receive
//! pair responses, ordered receiver-major: pair `(tx, rx)` occupies
//! `[(rx * n_tx + tx) * taps, (rx * n_tx + tx + 1) * taps)`.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Error, Result, C64};

/// Where the nonzero taps of each pair go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportModel {
    /// `K` positions drawn uniformly without replacement.
    Uniform,
    /// `num_clusters` groups of neighbouring taps around centres that are at
    /// least `cluster_width` apart.
    Clustered {
        num_clusters: usize,
        cluster_width: usize,
    },
}

/// Peak normalisation applied after drawing tap values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakNormalization {
    None,
    /// Largest magnitude in every pair response is 1.
    PerPair,
    /// Largest magnitude across the whole stacked vector is 1.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Taps per pair (N).
    pub taps: usize,
    /// Nonzero taps per pair (K).
    pub sparsity: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub support_model: SupportModel,
    pub normalization: PeakNormalization,
    /// Clustered model only: every pair reuses the same cluster centres.
    pub shared_clusters: bool,
}

impl ChannelSpec {
    /// Uniform-support SISO channel with per-pair peak normalisation.
    pub fn siso(taps: usize, sparsity: usize) -> Self {
        Self::mimo(taps, sparsity, 1, 1)
    }

    pub fn mimo(taps: usize, sparsity: usize, n_tx: usize, n_rx: usize) -> Self {
        Self {
            taps,
            sparsity,
            n_tx,
            n_rx,
            support_model: SupportModel::Uniform,
            normalization: PeakNormalization::PerPair,
            shared_clusters: true,
        }
    }

    pub fn pairs(&self) -> usize {
        self.n_tx * self.n_rx
    }

    /// Length of the stacked channel vector.
    pub fn len(&self) -> usize {
        self.pairs() * self.taps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pair_offset(&self, tx: usize, rx: usize) -> usize {
        (rx * self.n_tx + tx) * self.taps
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.sparsity == 0 || self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::Config(format!(
                "channel dimensions must be positive (N={}, K={}, Nt={}, Nr={})",
                self.taps, self.sparsity, self.n_tx, self.n_rx
            )));
        }
        if self.sparsity > self.taps {
            return Err(Error::Config(format!(
                "sparsity K={} exceeds channel length N={}",
                self.sparsity, self.taps
            )));
        }
        if let SupportModel::Clustered {
            num_clusters,
            cluster_width,
        } = self.support_model
        {
            if num_clusters == 0 || cluster_width == 0 {
                return Err(Error::Config("cluster count and width must be positive".into()));
            }
            if num_clusters > self.sparsity {
                return Err(Error::Config(format!(
                    "{num_clusters} clusters cannot share K={} taps",
                    self.sparsity
                )));
            }
            if num_clusters * cluster_width > self.taps {
                return Err(Error::Config(format!(
                    "{num_clusters} clusters of width {cluster_width} do not fit in N={}",
                    self.taps
                )));
            }
        }
        Ok(())
    }
}

/// A realised stacked channel together with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseChannel {
    pub entries: Vec<C64>,
    /// Sorted indices of the nonzero entries.
    pub support: Vec<usize>,
    pub spec: ChannelSpec,
}

impl SparseChannel {
    pub fn pair(&self, tx: usize, rx: usize) -> &[C64] {
        let off = self.spec.pair_offset(tx, rx);
        &self.entries[off..off + self.spec.taps]
    }

    pub fn energy(&self) -> f64 {
        self.entries.iter().map(|h| h.norm_sqr()).sum()
    }

    /// Energy of the real part only.
    pub fn real_energy(&self) -> f64 {
        self.entries.iter().map(|h| h.re * h.re).sum()
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws a channel; identical `(spec, seed)` give bit-identical output.
pub fn generate_channel(spec: &ChannelSpec, seed: u64) -> Result<SparseChannel> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let shared_centres = match spec.support_model {
        SupportModel::Clustered {
            num_clusters,
            cluster_width,
        } if spec.shared_clusters => Some(cluster_centres(
            &mut rng,
            spec.taps,
            num_clusters,
            cluster_width,
        )?),
        _ => None,
    };

    let mut entries = vec![C64::new(0.0, 0.0); spec.len()];
    let mut support = Vec::with_capacity(spec.pairs() * spec.sparsity);
    for rx in 0..spec.n_rx {
        for tx in 0..spec.n_tx {
            let taps = match spec.support_model {
                SupportModel::Uniform => {
                    let mut t = index::sample(&mut rng, spec.taps, spec.sparsity).into_vec();
                    t.sort_unstable();
                    t
                }
                SupportModel::Clustered {
                    num_clusters,
                    cluster_width,
                } => {
                    let centres = match &shared_centres {
                        Some(c) => c.clone(),
                        None => cluster_centres(&mut rng, spec.taps, num_clusters, cluster_width)?,
                    };
                    clustered_taps(&mut rng, spec.taps, spec.sparsity, &centres)
                }
            };
            let off = spec.pair_offset(tx, rx);
            for &t in &taps {
                entries[off + t] = complex_normal(&mut rng);
                support.push(off + t);
            }
        }
    }

    match spec.normalization {
        PeakNormalization::None => {}
        PeakNormalization::PerPair => {
            for block in entries.chunks_mut(spec.taps) {
                let peak = block.iter().map(|h| h.norm()).fold(0.0, f64::max);
                if peak > 0.0 {
                    block.iter_mut().for_each(|h| *h /= peak);
                }
            }
        }
        PeakNormalization::Global => {
            let peak = entries.iter().map(|h| h.norm()).fold(0.0, f64::max);
            if peak > 0.0 {
                entries.iter_mut().for_each(|h| *h /= peak);
            }
        }
    }

    support.sort_unstable();
    Ok(SparseChannel {
        entries,
        support,
        spec: spec.clone(),
    })
}

/// Rejection-samples `count` centres in `[0, taps)` with pairwise gap `>= width`.
fn cluster_centres(
    rng: &mut ChaCha8Rng,
    taps: usize,
    count: usize,
    width: usize,
) -> Result<Vec<usize>> {
    for _ in 0..10_000 {
        let mut c: Vec<usize> = (0..count).map(|_| rng.random_range(0..taps)).collect();
        c.sort_unstable();
        if c.windows(2).all(|w| w[1] - w[0] >= width) {
            return Ok(c);
        }
    }
    // Dense packings are rarely hit by rejection; fall back to evenly spaced
    // slots with a random common shift.
    let stride = taps / count;
    if stride < width {
        return Err(Error::Config(format!(
            "cannot place {count} clusters {width} apart in {taps} taps"
        )));
    }
    let shift = rng.random_range(0..=(taps - stride * count + stride - width).min(stride - 1));
    Ok((0..count).map(|i| i * stride + shift).collect())
}

/// Splits `k` taps across the clusters and fills positions outward from each
/// centre, alternating sides with a random starting side.
fn clustered_taps(rng: &mut ChaCha8Rng, taps: usize, k: usize, centres: &[usize]) -> Vec<usize> {
    let nc = centres.len();
    let mut taken = vec![false; taps];
    let mut out = Vec::with_capacity(k);
    for (ci, &centre) in centres.iter().enumerate() {
        let quota = k / nc + usize::from(ci < k % nc);
        let right_first: bool = rng.random();
        let mut placed = 0;
        let mut step = 0usize;
        while placed < quota {
            let candidates: [Option<usize>; 2] = if step == 0 {
                [Some(centre), None]
            } else {
                let r = centre.checked_add(step).filter(|&p| p < taps);
                let l = centre.checked_sub(step);
                if right_first {
                    [r, l]
                } else {
                    [l, r]
                }
            };
            for p in candidates.into_iter().flatten() {
                if placed < quota && !taken[p] {
                    taken[p] = true;
                    out.push(p);
                    placed += 1;
                }
            }
            step += 1;
            if step > taps {
                break;
            }
        }
    }
    out.sort_unstable();
    out
}

/// Expected energy of one pair response under its value model.
///
/// Without normalisation this is `K`. With peak normalisation it is
/// `E[Σ|h|² / max|h|²]`, where the `|h|²` are i.i.d. unit exponentials;
/// evaluated by quadrature over the distribution of the maximum.
pub fn expected_pair_energy(spec: &ChannelSpec) -> f64 {
    match spec.normalization {
        PeakNormalization::None => spec.sparsity as f64,
        PeakNormalization::PerPair => sum_over_max_exponential(spec.sparsity),
        PeakNormalization::Global => {
            let n = spec.sparsity * spec.pairs();
            sum_over_max_exponential(n) / spec.pairs() as f64
        }
    }
}

/// `E[(X_1 + … + X_n) / max X_i]` for i.i.d. `X_i ~ Exp(1)`.
fn sum_over_max_exponential(n: usize) -> f64 {
    if n <= 1 {
        return n as f64;
    }
    let nf = n as f64;
    // Given max = m the others are Exp(1) truncated to [0, m].
    let integrand = |m: f64| -> f64 {
        if m <= 0.0 {
            return 0.0;
        }
        let em = (-m).exp();
        let one_minus = -(-m).exp_m1();
        // 1 - (1 + m) e^{-m}, computed without cancellation for small m
        let tail = if m < 1e-3 {
            m * m / 2.0 - m * m * m / 3.0
        } else {
            one_minus - m * em
        };
        nf * (nf - 1.0) * one_minus.powf(nf - 2.0) * em * tail / m
    };
    let upper = 60.0 + nf.ln();
    let steps = 40_000usize;
    let h = upper / steps as f64;
    let mut acc = integrand(0.0) + integrand(upper);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(i as f64 * h);
    }
    1.0 + acc * h / 3.0
}

/// Largest dB value reported for a perfect reconstruction in aggregates.
pub const RSNR_DB_CAP: f64 = 300.0;

/// Reconstruction SNR `‖h‖² / ‖h − ĥ‖²`. A perfect match is encoded as
/// `linear = +∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rsnr {
    pub linear: f64,
}

impl Rsnr {
    pub fn db(&self) -> f64 {
        10.0 * self.linear.log10()
    }

    pub fn is_perfect(&self) -> bool {
        self.linear.is_infinite()
    }

    /// dB value with the infinite sentinel clamped to `cap`.
    pub fn db_clamped(&self, cap: f64) -> f64 {
        self.db().min(cap)
    }
}

pub fn rsnr(truth: &[C64], estimate: &[C64]) -> Result<Rsnr> {
    if truth.len() != estimate.len() {
        return Err(Error::Domain(format!(
            "RSNR length mismatch: {} vs {}",
            truth.len(),
            estimate.len()
        )));
    }
    let signal: f64 = truth.iter().map(|h| h.norm_sqr()).sum();
    if signal == 0.0 {
        return Err(Error::Domain("RSNR undefined for an all-zero channel".into()));
    }
    let err: f64 = truth
        .iter()
        .zip(estimate)
        .map(|(h, e)| (h - e).norm_sqr())
        .sum();
    let linear = if err == 0.0 { f64::INFINITY } else { signal / err };
    Ok(Rsnr { linear })
}

/// RSNR after projecting both vectors onto the unit sphere; insensitive to a
/// positive rescaling of the estimate.
pub fn rsnr_normalized(truth: &[C64], estimate: &[C64]) -> Result<Rsnr> {
    let unit = |v: &[C64]| -> Vec<C64> {
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter().map(|x| x / n).collect()
        } else {
            v.to_vec()
        }
    };
    rsnr(&unit(truth), &unit(estimate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SupportMetrics {
    pub exact: bool,
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

pub fn support_metrics(truth: &[usize], estimate: &[usize]) -> SupportMetrics {
    let t: BTreeSet<usize> = truth.iter().copied().collect();
    let e: BTreeSet<usize> = estimate.iter().copied().collect();
    let hits = t.intersection(&e).count();
    SupportMetrics {
        exact: t == e,
        hits,
        misses: t.len() - hits,
        false_alarms: e.len() - hits,
    }
}
