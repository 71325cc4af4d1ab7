use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, SNR_DEFINITION, SLOT_DEFINITION};
use crate::adc::{design_quantizer, sign_quantize, solve_budget, AdcConfig, QuantizerModel};
use crate::bounds::{oracle_rsnr_bound, BoundInput};
use crate::channel::{
    expected_pair_energy, generate_channel, rsnr, rsnr_normalized, support_metrics,
    SparseChannel, RSNR_DB_CAP,
};
use crate::estimator::{estimate_biht_linear, estimate_oracle, EstimationResult, LeastSquaresSolver, Method};
use crate::pilot::{
    apply_model, build_measurement_model, generate_pilots, probe_rip, IndexSampling,
    MeasurementModel,
};
use crate::rng::{derive_seed, rng_from_seed, Stream};
use crate::{Error, Result, C64};

/// ADC operating point of one bit depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellPlan {
    pub bit_depth: u32,
    pub adc: AdcConfig,
    /// Samples per receive slot actually used (override or budget rule).
    pub rows: usize,
}

impl CellPlan {
    pub fn feasible(&self) -> bool {
        self.rows > 0
    }
}

pub fn plan_cells(cfg: &ExperimentConfig) -> Result<Vec<CellPlan>> {
    let adcs = solve_budget(cfg.power_budget_w, cfg.walden_c, cfg.slot_duration(), &cfg.bit_depths)?;
    Ok(cfg
        .bit_depths
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let adc = *adcs.iter().find(|a| a.bit_depth == b).expect("solved every depth");
            let rows = cfg
                .m_override
                .as_ref()
                .map_or(adc.sample_count, |m| m[i]);
            CellPlan {
                bit_depth: b,
                adc,
                rows,
            }
        })
        .collect())
}

/// Complex noise variance per sample; zero for an infinite SNR.
pub fn noise_variance(cfg: &ExperimentConfig, rows: usize, snr_db: f64) -> f64 {
    let signal = signal_power(cfg, rows);
    if snr_db.is_infinite() {
        0.0
    } else {
        signal / 10f64.powf(snr_db / 10.0)
    }
}

/// Expected `|(𝒳h̃)_r|²` per complex sample.
fn signal_power(cfg: &ExperimentConfig, rows: usize) -> f64 {
    cfg.n_tx as f64 * expected_pair_energy(&cfg.channel_spec()) / rows as f64
}

/// Standard deviation of one real component of the analog observation.
pub fn measurement_std(cfg: &ExperimentConfig, rows: usize, snr_db: f64) -> f64 {
    ((signal_power(cfg, rows) + noise_variance(cfg, rows, snr_db)) / 2.0).sqrt()
}

pub fn trial_channel(cfg: &ExperimentConfig, trial: u64) -> Result<SparseChannel> {
    generate_channel(&cfg.channel_spec(), derive_seed(cfg.master_seed, Stream::Channel, trial))
}

pub fn trial_model(cfg: &ExperimentConfig, trial: u64, rows: usize) -> Result<MeasurementModel> {
    let base = derive_seed(cfg.master_seed, Stream::Pilot, trial);
    let pilots = generate_pilots(
        cfg.n_tx,
        rows,
        cfg.taps,
        cfg.pilot_mode,
        derive_seed(base, Stream::Pilot, rows as u64),
    )?;
    build_measurement_model(&pilots, cfg.n_tx, cfg.n_rx, cfg.taps)
}

/// Unit-variance circular complex Gaussian noise of length `len`.
pub fn trial_noise(cfg: &ExperimentConfig, trial: u64, len: usize) -> Vec<C64> {
    let base = derive_seed(cfg.master_seed, Stream::Noise, trial);
    let mut rng = rng_from_seed(derive_seed(base, Stream::Noise, len as u64));
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect()
}

/// One analog observation and its two digitisations.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub analog: Vec<C64>,
    pub quantized: Vec<C64>,
    /// `[sgn y_R; sgn y_I]`.
    pub signs: Vec<i8>,
}

pub fn observe(clean: &[C64], noise: &[C64], noise_std: f64, q: &QuantizerModel) -> Observation {
    let analog: Vec<C64> = clean.iter().zip(noise).map(|(y, e)| y + e * noise_std).collect();
    let quantized = analog
        .iter()
        .map(|v| C64::new(q.quantize_one(v.re), q.quantize_one(v.im)))
        .collect();
    let parts: Vec<f64> = analog.iter().map(|v| v.re).chain(analog.iter().map(|v| v.im)).collect();
    Observation {
        analog,
        quantized,
        signs: sign_quantize(&parts),
    }
}

/// Dense real matrix of the given complex columns, `Nr·M × |cols|`.
pub fn restricted_matrix(model: &MeasurementModel, cols: &[usize]) -> DMatrix<f64> {
    let m = model.rows;
    let mut a = DMatrix::zeros(model.total_rows(), cols.len());
    for (j, &c) in cols.iter().enumerate() {
        let (tx, rx, tap) = model.locate(c);
        for (r, v) in model.column(tx, tap).iter().enumerate() {
            a[(rx * m + r, j)] = *v;
        }
    }
    a
}

/// Probed RIP constant for one slot length at order `Nt·K`, on a dedicated
/// pilot draw.
pub fn probe_delta(cfg: &ExperimentConfig, rows: usize) -> Result<f64> {
    let seed = derive_seed(cfg.master_seed, Stream::Rip, rows as u64);
    let pilots = generate_pilots(cfg.n_tx, rows, cfg.taps, cfg.pilot_mode, seed)?;
    let model = build_measurement_model(&pilots, cfg.n_tx, 1, cfg.taps)?;
    let block = model.receiver_block();
    let s = cfg.n_tx * cfg.sparsity;
    let sampling = if cfg.n_tx > 1 {
        IndexSampling::Blocked { block_size: cfg.taps }
    } else {
        IndexSampling::Uniform
    };
    Ok(probe_rip(&block, s, cfg.rip_samples, sampling, derive_seed(seed, Stream::Rip, 0))?.delta_hat)
}

/// Oracle RSNR upper bound for one realised channel and pilot draw.
pub fn trial_bound(
    channel: &SparseChannel,
    model: &MeasurementModel,
    noise_var: f64,
    quantizer: &QuantizerModel,
    delta: f64,
) -> Result<f64> {
    let a = restricted_matrix(model, &channel.support);
    let input = BoundInput::from_parts(
        channel.real_energy(),
        delta,
        (noise_var / 2.0).sqrt(),
        quantizer,
        &a,
    )?;
    Ok(oracle_rsnr_bound(&input)?.db)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub config_hash: String,
    pub trial: u64,
    pub bit_depth: u32,
    pub rows: usize,
    pub snr_db: f64,
    pub method: Method,
    /// `+inf` for an exact reconstruction.
    pub rsnr_db: f64,
    /// Real part only, matching the bound's energy term.
    pub rsnr_real_db: f64,
    /// After projecting truth and estimate onto the unit sphere.
    pub rsnr_norm_db: f64,
    pub support_exact: bool,
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Oracle rows only; NaN elsewhere.
    pub bound_db: f64,
    /// Empty unless the estimator failed.
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialTiming {
    pub trial: u64,
    pub bit_depth: u32,
    pub snr_db: f64,
    pub method: Method,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub config_hash: String,
    pub bit_depth: u32,
    pub rows: usize,
    pub sampling_rate_ghz: f64,
    pub snr_db: f64,
    pub method: Method,
    pub feasible: bool,
    pub n: usize,
    pub failures: usize,
    pub mean_db: f64,
    pub std_db: f64,
    pub ci95_db: f64,
    pub mean_real_db: f64,
    pub ci95_real_db: f64,
    pub mean_norm_db: f64,
    pub exact_rate: f64,
    pub mean_iterations: f64,
    pub mean_bound_db: f64,
    pub delta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumRow {
    pub config_hash: String,
    pub snr_db: f64,
    pub best_bit_depth: u32,
    pub best_mean_db: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config_hash: String,
    pub cells: Vec<CellPlan>,
    pub deltas: Vec<f64>,
    pub records: Vec<TrialRecord>,
    pub timings: Vec<TrialTiming>,
    pub aggregates: Vec<AggregateRow>,
    pub optimum: Vec<OptimumRow>,
}

impl SweepResult {
    pub fn infeasible_cells(&self) -> Vec<u32> {
        self.cells.iter().filter(|c| !c.feasible()).map(|c| c.bit_depth).collect()
    }

    pub fn cell(&self, bit_depth: u32, snr_db: f64, method: Method) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.bit_depth == bit_depth && a.snr_db == snr_db && a.method == method)
    }
}

const METHODS: [Method; 3] = [Method::BihtLinear, Method::OracleLinear, Method::LeastSquares];

struct Cell<'a> {
    plan: &'a CellPlan,
    delta: f64,
    /// One quantizer per SNR.
    quantizers: Vec<QuantizerModel>,
}

fn scored_record(
    hash: &str,
    trial: u64,
    plan: &CellPlan,
    snr_db: f64,
    channel: &SparseChannel,
    method: Method,
    outcome: Result<EstimationResult>,
) -> TrialRecord {
    let mut rec = TrialRecord {
        config_hash: hash.to_string(),
        trial,
        bit_depth: plan.bit_depth,
        rows: plan.rows,
        snr_db,
        method,
        rsnr_db: f64::NAN,
        rsnr_real_db: f64::NAN,
        rsnr_norm_db: f64::NAN,
        support_exact: false,
        hits: 0,
        misses: channel.support.len(),
        false_alarms: 0,
        iterations: 0,
        converged: false,
        bound_db: f64::NAN,
        error: String::new(),
    };
    match outcome {
        Ok(res) => {
            rec.rsnr_db = rsnr(&channel.entries, &res.estimate).map_or(f64::NAN, |r| r.db());
            let re = |v: &[C64]| -> Vec<C64> { v.iter().map(|x| C64::new(x.re, 0.0)).collect() };
            rec.rsnr_real_db = rsnr(&re(&channel.entries), &re(&res.estimate)).map_or(f64::NAN, |r| r.db());
            rec.rsnr_norm_db = rsnr_normalized(&channel.entries, &res.estimate).map_or(f64::NAN, |r| r.db());
            let m = support_metrics(&channel.support, &res.support);
            rec.support_exact = m.exact;
            rec.hits = m.hits;
            rec.misses = m.misses;
            rec.false_alarms = m.false_alarms;
            rec.iterations = res.iterations_used;
            rec.converged = res.converged;
        }
        Err(e) => rec.error = e.to_string(),
    }
    rec
}

fn run_trial(
    cfg: &ExperimentConfig,
    hash: &str,
    cells: &[Cell<'_>],
    trial: u64,
) -> Result<(Vec<TrialRecord>, Vec<TrialTiming>)> {
    let channel = trial_channel(cfg, trial)?;
    let bihtcfg = cfg.biht_config(cfg.khat());
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for cell in cells.iter().filter(|c| c.plan.feasible()) {
        let model = trial_model(cfg, trial, cell.plan.rows)?;
        let clean = apply_model(&model, &channel)?;
        let noise = trial_noise(cfg, trial, model.total_rows());
        let ls = LeastSquaresSolver::new(&model);
        for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
            let q = &cell.quantizers[si];
            let nv = noise_variance(cfg, cell.plan.rows, snr_db);
            let obs = observe(&clean, &noise, nv.sqrt(), q);
            for method in METHODS {
                let start = Instant::now();
                let outcome = match method {
                    Method::BihtLinear => estimate_biht_linear(&obs.quantized, &obs.signs, &model, &bihtcfg),
                    Method::OracleLinear => estimate_oracle(&obs.quantized, &model, &channel.support),
                    Method::LeastSquares => ls.solve(&obs.quantized),
                };
                let seconds = start.elapsed().as_secs_f64();
                if let Err(Error::Divergence { .. }) = &outcome {
                    return Err(outcome.unwrap_err());
                }
                let mut rec = scored_record(hash, trial, cell.plan, snr_db, &channel, method, outcome);
                if method == Method::OracleLinear && cfg.bounds {
                    rec.bound_db = trial_bound(&channel, &model, nv, q, cell.delta)?;
                }
                records.push(rec);
                timings.push(TrialTiming {
                    trial,
                    bit_depth: cell.plan.bit_depth,
                    snr_db,
                    method,
                    seconds,
                });
            }
        }
    }
    Ok((records, timings))
}

/// Runs every (bit depth, SNR, trial) cell. Channel and noise depend only on
/// the trial index and pilots on (trial, M), so cells are paired.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let hash = cfg.hash();
    log::info!("config {hash}: {SNR_DEFINITION}; {SLOT_DEFINITION}");
    let plans = plan_cells(cfg)?;
    for p in plans.iter().filter(|p| !p.feasible()) {
        log::warn!("bit depth {} is infeasible: no sample fits the slot", p.bit_depth);
    }
    if cfg.strict && plans.iter().any(|p| !p.feasible()) {
        return Err(Error::Config("infeasible cells in strict mode".into()));
    }

    let mut deltas = Vec::with_capacity(plans.len());
    let mut cells = Vec::with_capacity(plans.len());
    for plan in &plans {
        let delta = if plan.feasible() && cfg.bounds {
            probe_delta(cfg, plan.rows)?
        } else {
            f64::NAN
        };
        deltas.push(delta);
        let quantizers = if plan.feasible() {
            cfg.snr_db
                .iter()
                .map(|&s| design_quantizer(plan.bit_depth, measurement_std(cfg, plan.rows, s)))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        cells.push(Cell {
            plan,
            delta,
            quantizers,
        });
    }

    let per_trial: Vec<(Vec<TrialRecord>, Vec<TrialTiming>)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, &hash, &cells, t))
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for (r, t) in per_trial {
        records.extend(r);
        timings.extend(t);
    }

    let aggregates = aggregate(&hash, cfg, &plans, &deltas, &records)?;
    let optimum = optimum_bits(&aggregates);
    Ok(SweepResult {
        config_hash: hash,
        cells: plans,
        deltas,
        records,
        timings,
        aggregates,
        optimum,
    })
}

pub fn mean_ci(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    (mean, std, 1.96 * std / n.sqrt())
}

/// Per-cell statistics. Records are sorted first, so the result does not
/// depend on the order trials finished in. Mixing config hashes is an error.
pub fn aggregate(
    hash: &str,
    cfg: &ExperimentConfig,
    plans: &[CellPlan],
    deltas: &[f64],
    records: &[TrialRecord],
) -> Result<Vec<AggregateRow>> {
    if let Some(r) = records.iter().find(|r| r.config_hash != hash) {
        return Err(Error::Config(format!(
            "record from config {} mixed into aggregation of {hash}",
            r.config_hash
        )));
    }
    let mut groups: BTreeMap<(u32, usize, usize), Vec<&TrialRecord>> = BTreeMap::new();
    let method_idx = |m: Method| METHODS.iter().position(|&x| x == m).expect("known method");
    for r in records {
        let si = cfg
            .snr_db
            .iter()
            .position(|&s| s == r.snr_db)
            .ok_or_else(|| Error::Config(format!("record SNR {} not in grid", r.snr_db)))?;
        groups.entry((r.bit_depth, si, method_idx(r.method))).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (pi, plan) in plans.iter().enumerate() {
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            for (mi, &method) in METHODS.iter().enumerate() {
                let mut g: Vec<&TrialRecord> =
                    groups.get(&(plan.bit_depth, si, mi)).cloned().unwrap_or_default();
                g.sort_by_key(|r| r.trial);
                let ok: Vec<&&TrialRecord> = g.iter().filter(|r| r.error.is_empty()).collect();
                let clamp = |v: f64| v.min(RSNR_DB_CAP);
                let db: Vec<f64> = ok.iter().map(|r| clamp(r.rsnr_db)).collect();
                let real: Vec<f64> = ok.iter().map(|r| clamp(r.rsnr_real_db)).collect();
                let norm: Vec<f64> = ok.iter().map(|r| clamp(r.rsnr_norm_db)).collect();
                let bounds: Vec<f64> = ok.iter().map(|r| r.bound_db).filter(|b| !b.is_nan()).collect();
                let (mean, std, ci) = mean_ci(&db);
                let (mean_real, _, ci_real) = mean_ci(&real);
                let nf = ok.len().max(1) as f64;
                rows.push(AggregateRow {
                    config_hash: hash.to_string(),
                    bit_depth: plan.bit_depth,
                    rows: plan.rows,
                    sampling_rate_ghz: plan.adc.sampling_rate / 1e9,
                    snr_db: snr,
                    method,
                    feasible: plan.feasible(),
                    n: ok.len(),
                    failures: g.len() - ok.len(),
                    mean_db: mean,
                    std_db: std,
                    ci95_db: ci,
                    mean_real_db: mean_real,
                    ci95_real_db: ci_real,
                    mean_norm_db: mean_ci(&norm).0,
                    exact_rate: ok.iter().filter(|r| r.support_exact).count() as f64 / nf,
                    mean_iterations: ok.iter().map(|r| r.iterations as f64).sum::<f64>() / nf,
                    mean_bound_db: mean_ci(&bounds).0,
                    delta_hat: deltas.get(pi).copied().unwrap_or(f64::NAN),
                });
            }
        }
    }
    Ok(rows)
}

/// Bit depth with the highest mean BIHT + linear RSNR at each SNR.
pub fn optimum_bits(aggregates: &[AggregateRow]) -> Vec<OptimumRow> {
    let mut snrs: Vec<f64> = Vec::new();
    for a in aggregates {
        if !snrs.contains(&a.snr_db) {
            snrs.push(a.snr_db);
        }
    }
    snrs.into_iter()
        .filter_map(|snr| {
            aggregates
                .iter()
                .filter(|a| a.snr_db == snr && a.method == Method::BihtLinear && a.n > 0)
                .max_by(|a, b| a.mean_db.total_cmp(&b.mean_db))
                .map(|a| OptimumRow {
                    config_hash: a.config_hash.clone(),
                    snr_db: snr,
                    best_bit_depth: a.bit_depth,
                    best_mean_db: a.mean_db,
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub config_hash: String,
    pub bit_depth: u32,
    pub snr_db: f64,
    pub bound_db: f64,
    pub delta_hat: f64,
}

/// Oracle RSNR bound per (bit depth, SNR), averaged in dB over the realised
/// supports of `trials` channels.
pub fn emit_bound_overlay(cfg: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    cfg.validate()?;
    let hash = cfg.hash();
    let plans = plan_cells(cfg)?;
    let mut out = Vec::new();
    for plan in plans.iter().filter(|p| p.feasible()) {
        let delta = probe_delta(cfg, plan.rows)?;
        for &snr in &cfg.snr_db {
            let nv = noise_variance(cfg, plan.rows, snr);
            let q = design_quantizer(plan.bit_depth, measurement_std(cfg, plan.rows, snr))?;
            let vals: Vec<f64> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| {
                    let ch = trial_channel(cfg, t)?;
                    let model = trial_model(cfg, t, plan.rows)?;
                    trial_bound(&ch, &model, nv, &q, delta)
                })
                .collect::<Result<_>>()?;
            out.push(BoundRow {
                config_hash: hash.clone(),
                bit_depth: plan.bit_depth,
                snr_db: snr,
                bound_db: mean_ci(&vals).0,
                delta_hat: delta,
            });
        }
    }
    Ok(out)
}
