//! Training sequences, their measurement matrices and an empirical RIP prober.
//!
//! Column `c` of the Toeplitz block for pilot `x` is the contiguous window
//! `x[N-1-c .. N-1-c+M]`, so entry `(r, c)` is `x[N-1+r-c]`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::SparseChannel;
use crate::linalg::{select_columns, symmetric_extremes};
use crate::rng::{derive_seed, rng_from_seed, Stream};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotMode {
    /// Fair-coin signs.
    IidRandom,
    /// Sequences whose Toeplitz blocks have identically zero cross-Grams.
    ExactOrthogonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    /// One sign pattern of length `M + N - 1` per transmit antenna.
    pub signs: Vec<Vec<i8>>,
    pub rows: usize,
    pub taps: usize,
    pub mode: PilotMode,
}

impl PilotSet {
    pub fn len(&self) -> usize {
        self.rows + self.taps - 1
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn amplitude(&self) -> f64 {
        1.0 / (self.rows as f64).sqrt()
    }

    pub fn sequence(&self, tx: usize) -> Vec<f64> {
        let a = self.amplitude();
        self.signs[tx].iter().map(|&s| s as f64 * a).collect()
    }
}

/// Smallest pilot length for which the exact-orthogonal family exists.
pub fn min_orthogonal_length(n_tx: usize, taps: usize) -> usize {
    (taps << n_tx) + taps - 1
}

pub fn generate_pilots(
    n_tx: usize,
    rows: usize,
    taps: usize,
    mode: PilotMode,
    seed: u64,
) -> Result<PilotSet> {
    if n_tx == 0 || rows == 0 || taps == 0 {
        return Err(Error::Config(format!(
            "pilot dimensions must be positive (Nt={n_tx}, M={rows}, N={taps})"
        )));
    }
    let len = rows + taps - 1;
    let mut rng = rng_from_seed(seed);
    let signs = match mode {
        PilotMode::IidRandom => (0..n_tx)
            .map(|_| (0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
            .collect(),
        PilotMode::ExactOrthogonal => {
            // Sequence i is M-periodic and antiperiodic with half-period
            // M/2^(i+1): its DFT lives on bins ≡ 2^i mod 2^(i+1), disjoint
            // across i, so every periodic cross-correlation is zero.
            if n_tx >= usize::BITS as usize - 1
                || rows % (1usize << n_tx) != 0
                || rows < taps << n_tx
            {
                let p = min_orthogonal_length(n_tx, taps);
                return Err(Error::Config(format!(
                    "exact-orthogonal pilots for Nt={n_tx}, N={taps} need M a multiple of {} \
                     and at least {}; smallest feasible pilot length is P={p}",
                    1usize << n_tx,
                    taps << n_tx
                )));
            }
            (0..n_tx)
                .map(|i| {
                    let half = rows >> (i + 1);
                    let base: Vec<i8> = (0..half)
                        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                        .collect();
                    (0..len)
                        .map(|p| {
                            let q = p % rows;
                            let flip = if (q / half) % 2 == 1 { -1 } else { 1 };
                            base[q % half] * flip
                        })
                        .collect()
                })
                .collect()
        }
    };
    Ok(PilotSet {
        signs,
        rows,
        taps,
        mode,
    })
}

/// All matrix views of the stacked MIMO training system. Pilots are real, so
/// only the real Toeplitz blocks are stored and the other views are built on
/// demand.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    pub n_tx: usize,
    pub n_rx: usize,
    pub taps: usize,
    /// Samples per receive slot (M).
    pub rows: usize,
    /// Pilot values per transmitter, length `M + N - 1`.
    pub sequences: Vec<Vec<f64>>,
}

pub fn build_measurement_model(
    pilots: &PilotSet,
    n_tx: usize,
    n_rx: usize,
    taps: usize,
) -> Result<MeasurementModel> {
    if pilots.signs.len() != n_tx || pilots.taps != taps || n_rx == 0 {
        return Err(Error::Config(format!(
            "pilot set ({} sequences, N={}) does not match Nt={n_tx}, Nr={n_rx}, N={taps}",
            pilots.signs.len(),
            pilots.taps
        )));
    }
    if pilots.signs.iter().any(|s| s.len() != pilots.len()) {
        return Err(Error::Config("pilot length differs from M + N - 1".into()));
    }
    Ok(MeasurementModel {
        n_tx,
        n_rx,
        taps,
        rows: pilots.rows,
        sequences: (0..n_tx).map(|i| pilots.sequence(i)).collect(),
    })
}

impl MeasurementModel {
    /// Columns of the complex system, `Nt * Nr * N`.
    pub fn cols(&self) -> usize {
        self.n_tx * self.n_rx * self.taps
    }

    /// Rows of the complex system, `Nr * M`.
    pub fn total_rows(&self) -> usize {
        self.n_rx * self.rows
    }

    /// Column `tap` of the Toeplitz block of transmitter `tx`.
    pub fn column(&self, tx: usize, tap: usize) -> &[f64] {
        let start = self.taps - 1 - tap;
        &self.sequences[tx][start..start + self.rows]
    }

    /// `(tx, rx, tap)` of a complex column index.
    pub fn locate(&self, col: usize) -> (usize, usize, usize) {
        let pair = col / self.taps;
        (pair % self.n_tx, pair / self.n_tx, col % self.taps)
    }

    /// Toeplitz block `X'_tx`, `M × N`.
    pub fn toeplitz(&self, tx: usize) -> DMatrix<f64> {
        let x = &self.sequences[tx];
        DMatrix::from_fn(self.rows, self.taps, |r, c| x[self.taps - 1 + r - c])
    }

    pub fn toeplitz_blocks(&self) -> Vec<DMatrix<f64>> {
        (0..self.n_tx).map(|i| self.toeplitz(i)).collect()
    }

    /// `[X'_1 … X'_Nt]` for one receiver, `M × Nt·N`.
    pub fn receiver_block(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.n_tx * self.taps);
        for tx in 0..self.n_tx {
            out.columns_mut(tx * self.taps, self.taps)
                .copy_from(&self.toeplitz(tx));
        }
        out
    }

    /// Block-diagonal stack over receivers, `Nr·M × Nt·Nr·N` (real since the
    /// pilots are real).
    pub fn mimo_matrix(&self) -> DMatrix<f64> {
        let block = self.receiver_block();
        let w = block.ncols();
        let mut out = DMatrix::zeros(self.total_rows(), self.cols());
        for rx in 0..self.n_rx {
            out.view_mut((rx * self.rows, rx * w), (self.rows, w))
                .copy_from(&block);
        }
        out
    }

    pub fn mimo_matrix_complex(&self) -> DMatrix<C64> {
        self.mimo_matrix().map(|v| C64::new(v, 0.0))
    }

    /// `(𝒳₁, 𝒳₂) = ([𝒳_R −𝒳_I], [𝒳_I 𝒳_R])`.
    pub fn real_stacked(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        real_stack(&self.mimo_matrix_complex())
    }

    /// `[𝒳₁; 𝒳₂]`, mapping `[h_R; h_I]` to `[y_R; y_I]`.
    pub fn joint_real(&self) -> DMatrix<f64> {
        joint_real(&self.mimo_matrix_complex())
    }
}

pub fn real_stack(x: &DMatrix<C64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (r, c) = x.shape();
    let x1 = DMatrix::from_fn(r, 2 * c, |i, j| {
        if j < c {
            x[(i, j)].re
        } else {
            -x[(i, j - c)].im
        }
    });
    let x2 = DMatrix::from_fn(r, 2 * c, |i, j| {
        if j < c {
            x[(i, j)].im
        } else {
            x[(i, j - c)].re
        }
    });
    (x1, x2)
}

pub fn joint_real(x: &DMatrix<C64>) -> DMatrix<f64> {
    let (x1, x2) = real_stack(x);
    let mut out = DMatrix::zeros(2 * x1.nrows(), x1.ncols());
    out.rows_mut(0, x1.nrows()).copy_from(&x1);
    out.rows_mut(x1.nrows(), x2.nrows()).copy_from(&x2);
    out
}

/// Noiseless observation `𝒳 h̃`, evaluated over the channel support only.
pub fn apply_model(model: &MeasurementModel, channel: &SparseChannel) -> Result<Vec<C64>> {
    if channel.entries.len() != model.cols() {
        return Err(Error::Config(format!(
            "channel length {} does not match model width {}",
            channel.entries.len(),
            model.cols()
        )));
    }
    let mut y = vec![C64::new(0.0, 0.0); model.total_rows()];
    for &idx in &channel.support {
        let h = channel.entries[idx];
        let (tx, rx, tap) = model.locate(idx);
        let out = &mut y[rx * model.rows..(rx + 1) * model.rows];
        for (o, &x) in out.iter_mut().zip(model.column(tx, tap)) {
            *o += h * x;
        }
    }
    Ok(y)
}

/// How column subsets are drawn when probing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexSampling {
    Uniform,
    /// Columns split into consecutive blocks of `block_size`; every sample
    /// takes the same number of columns from each block.
    Blocked { block_size: usize },
}

/// Sampled estimate of the order-`s` restricted isometry constant. Sampling
/// can only miss bad subsets, so `delta_hat` lower-bounds the true constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RipEstimate {
    pub sparsity_order: usize,
    pub delta_hat: f64,
    pub num_samples: usize,
    pub min_eig_seen: f64,
    pub max_eig_seen: f64,
}

pub fn probe_rip(
    matrix: &DMatrix<f64>,
    s: usize,
    num_samples: usize,
    sampling: IndexSampling,
    seed: u64,
) -> Result<RipEstimate> {
    let cols = matrix.ncols();
    if s == 0 || s > cols {
        return Err(Error::Config(format!("sparsity order {s} outside 1..={cols}")));
    }
    if num_samples == 0 {
        return Err(Error::Config("RIP probe needs at least one sample".into()));
    }
    let per_block = match sampling {
        IndexSampling::Uniform => None,
        IndexSampling::Blocked { block_size } => {
            if block_size == 0 || cols % block_size != 0 {
                return Err(Error::Config(format!(
                    "block size {block_size} does not divide {cols} columns"
                )));
            }
            let blocks = cols / block_size;
            if s % blocks != 0 || s / blocks > block_size {
                return Err(Error::Config(format!(
                    "order {s} cannot be split evenly across {blocks} blocks of {block_size}"
                )));
            }
            Some((blocks, block_size, s / blocks))
        }
    };

    let (lo, hi) = (0..num_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, Stream::Rip, i as u64));
            let idx: Vec<usize> = match per_block {
                None => index::sample(&mut rng, cols, s).into_vec(),
                Some((blocks, size, k)) => (0..blocks)
                    .flat_map(|b| {
                        index::sample(&mut rng, size, k)
                            .into_iter()
                            .map(move |j| b * size + j)
                            .collect::<Vec<_>>()
                    })
                    .collect(),
            };
            let sub = select_columns(matrix, &idx);
            symmetric_extremes(&sub.tr_mul(&sub))
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    Ok(RipEstimate {
        sparsity_order: s,
        delta_hat: (1.0 - lo).max(hi - 1.0).max(0.0),
        num_samples,
        min_eig_seen: lo,
        max_eig_seen: hi,
    })
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rip_csv(path: &Path, estimates: &[RipEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in estimates {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ChannelSpec};
    use proptest::prelude::*;

    #[test]
    fn siso_reference_geometry() {
        let p = generate_pilots(1, 250, 200, PilotMode::IidRandom, 4).unwrap();
        assert_eq!(p.len(), 449);
        let a = 1.0 / 250f64.sqrt();
        assert!(p.sequence(0).iter().all(|&v| v == a || v == -a));

        let one = generate_pilots(1, 1, 1, PilotMode::IidRandom, 0).unwrap();
        assert_eq!(one.sequence(0).len(), 1);
        assert_eq!(one.sequence(0)[0].abs(), 1.0);
    }

    #[test]
    fn first_row_reverses_the_leading_window() {
        let pilots = PilotSet {
            signs: vec![vec![1, -1, -1, 1, 1]],
            rows: 3,
            taps: 3,
            mode: PilotMode::IidRandom,
        };
        let m = build_measurement_model(&pilots, 1, 1, 3).unwrap();
        let x = pilots.sequence(0);
        let t = m.toeplitz(0);
        assert_eq!(t.row(0).iter().copied().collect::<Vec<_>>(), vec![x[2], x[1], x[0]]);
        assert_eq!(t.row(2).iter().copied().collect::<Vec<_>>(), vec![x[4], x[3], x[2]]);
    }

    #[test]
    fn exact_orthogonal_cross_grams_vanish() {
        let (nt, n) = (3, 4);
        let m = n << nt;
        let p = generate_pilots(nt, m, n, PilotMode::ExactOrthogonal, 11).unwrap();
        let blocks: Vec<DMatrix<i64>> = (0..nt)
            .map(|i| {
                DMatrix::from_fn(m, n, |r, c| p.signs[i][n - 1 + r - c] as i64)
            })
            .collect();
        for i in 0..nt {
            for j in 0..nt {
                if i != j {
                    let g = blocks[i].transpose() * &blocks[j];
                    assert!(g.iter().all(|&v| v == 0), "blocks {i},{j}");
                }
            }
        }
    }

    #[test]
    fn exact_orthogonal_reports_smallest_length() {
        match generate_pilots(2, 30, 10, PilotMode::ExactOrthogonal, 0) {
            Err(Error::Config(msg)) => assert!(msg.contains("P=49"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_model_rejected() {
        let p = generate_pilots(2, 10, 4, PilotMode::IidRandom, 0).unwrap();
        assert!(build_measurement_model(&p, 1, 1, 4).is_err());
        assert!(build_measurement_model(&p, 2, 1, 5).is_err());
    }

    #[test]
    fn mimo_layout_is_block_diagonal() {
        let p = generate_pilots(2, 6, 3, PilotMode::IidRandom, 2).unwrap();
        let m = build_measurement_model(&p, 2, 3, 3).unwrap();
        let x = m.mimo_matrix();
        assert_eq!(x.shape(), (18, 18));
        let blk = m.receiver_block();
        for rx in 0..3 {
            for cx in 0..3 {
                let v = x.view((rx * 6, cx * 6), (6, 6));
                if rx == cx {
                    assert_eq!(v, blk.view((0, 0), (6, 6)));
                } else {
                    assert!(v.iter().all(|&e| e == 0.0));
                }
            }
        }
    }

    #[test]
    fn real_pilots_give_zero_imaginary_blocks() {
        let p = generate_pilots(1, 5, 3, PilotMode::IidRandom, 3).unwrap();
        let m = build_measurement_model(&p, 1, 2, 3).unwrap();
        let x = m.mimo_matrix();
        let (x1, x2) = m.real_stacked();
        let c = x.ncols();
        assert_eq!(x1.columns(0, c), x.columns(0, c));
        assert!(x1.columns(c, c).iter().all(|&v| v == 0.0));
        assert!(x2.columns(0, c).iter().all(|&v| v == 0.0));
        assert_eq!(x2.columns(c, c), x.columns(0, c));
    }

    #[test]
    fn delta_channel_returns_shifted_window() {
        let p = generate_pilots(2, 8, 4, PilotMode::IidRandom, 5).unwrap();
        let m = build_measurement_model(&p, 2, 2, 4).unwrap();
        let spec = ChannelSpec::mimo(4, 1, 2, 2);
        let mut ch = generate_channel(&spec, 0).unwrap();
        ch.entries.iter_mut().for_each(|h| *h = C64::new(0.0, 0.0));
        let (tx, rx, tap) = (1, 1, 2);
        let idx = spec.pair_offset(tx, rx) + tap;
        let h = C64::new(0.5, -2.0);
        ch.entries[idx] = h;
        ch.support = vec![idx];
        let y = apply_model(&m, &ch).unwrap();
        let x = p.sequence(tx);
        for r in 0..8 {
            assert_eq!(y[r], C64::new(0.0, 0.0));
            assert_eq!(y[8 + r], h * x[4 - 1 + r - tap]);
        }

        ch.entries[idx] = C64::new(0.0, 0.0);
        ch.support.clear();
        assert!(apply_model(&m, &ch).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn probe_examples() {
        let id = DMatrix::<f64>::identity(12, 12);
        let e = probe_rip(&id, 4, 50, IndexSampling::Uniform, 0).unwrap();
        assert!(e.delta_hat.abs() < 1e-12);

        let mut dup = DMatrix::<f64>::identity(3, 3);
        dup.set_column(2, &dup.column(0).clone_owned());
        let e = probe_rip(&dup, 2, 200, IndexSampling::Uniform, 1).unwrap();
        assert!(e.delta_hat >= 1.0 - 1e-12);

        assert!(probe_rip(&id, 13, 1, IndexSampling::Uniform, 0).is_err());
        assert!(probe_rip(&id, 3, 1, IndexSampling::Blocked { block_size: 6 }, 0).is_err());
    }

    #[test]
    fn probe_is_order_independent() {
        let p = generate_pilots(1, 40, 30, PilotMode::IidRandom, 8).unwrap();
        let t = build_measurement_model(&p, 1, 1, 30).unwrap().toeplitz(0);
        let a = probe_rip(&t, 5, 64, IndexSampling::Uniform, 3).unwrap();
        let b = probe_rip(&t, 5, 64, IndexSampling::Uniform, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.25, 2.0]);
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let e = probe_rip(&m, 1, 4, IndexSampling::Uniform, 0).unwrap();
        let rpath = dir.path().join("rip.csv");
        write_rip_csv(&rpath, &[e]).unwrap();
        assert!(std::fs::read_to_string(rpath).unwrap().starts_with("sparsity_order,delta_hat"));
    }

    proptest! {
        #[test]
        fn toeplitz_diagonals_constant(m in 1usize..20, n in 1usize..20, nt in 1usize..3, seed: u64) {
            let p = generate_pilots(nt, m, n, PilotMode::IidRandom, seed).unwrap();
            let model = build_measurement_model(&p, nt, 1, n).unwrap();
            for t in model.toeplitz_blocks() {
                for r in 0..m.saturating_sub(1) {
                    for c in 0..n.saturating_sub(1) {
                        prop_assert_eq!(t[(r, c)], t[(r + 1, c + 1)]);
                    }
                }
                for c in 0..n {
                    let norm: f64 = t.column(c).iter().map(|v| v * v).sum();
                    prop_assert!((norm - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn orthogonal_entries_are_signs(nt in 1usize..4, n in 1usize..6, mult in 1usize..3, seed: u64) {
            let m = (n << nt) * mult;
            let p = generate_pilots(nt, m, n, PilotMode::ExactOrthogonal, seed).unwrap();
            prop_assert!(p.signs.iter().all(|s| s.len() == m + n - 1 && s.iter().all(|&v| v == 1 || v == -1)));
        }
    }
}
