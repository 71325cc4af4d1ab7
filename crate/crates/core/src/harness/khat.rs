use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::sweep::{
    mean_ci, measurement_std, noise_variance, observe, plan_cells, trial_channel, trial_model,
    trial_noise,
};
use crate::adc::design_quantizer;
use crate::channel::{rsnr, RSNR_DB_CAP};
use crate::estimator::estimate_biht_linear;
use crate::pilot::apply_model;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KhatRecord {
    pub config_hash: String,
    pub trial: u64,
    pub bit_depth: u32,
    pub snr_db: f64,
    pub khat: usize,
    pub rsnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KhatSummary {
    pub config_hash: String,
    pub khat: usize,
    pub n: usize,
    pub mean_db: f64,
    pub ci95_db: f64,
    /// Mean of per-trial `rsnr(khat) - rsnr(K)`.
    pub mean_diff_vs_k_db: f64,
    pub ci95_diff_db: f64,
}

/// RSNR of BIHT + linear reconstruction against the sparsity target, at the
/// first bit depth and SNR of the config. Every K̂ sees the same channel,
/// pilots and noise in a given trial.
pub fn khat_robustness(
    cfg: &ExperimentConfig,
    khat_grid: &[usize],
) -> Result<(Vec<KhatRecord>, Vec<KhatSummary>)> {
    cfg.validate()?;
    if khat_grid.is_empty() || khat_grid.iter().any(|&k| k == 0 || k > cfg.taps) {
        return Err(Error::Config(format!("khat grid must lie in 1..={}", cfg.taps)));
    }
    let hash = cfg.hash();
    let plan = plan_cells(cfg)?[0];
    if !plan.feasible() {
        return Err(Error::Config(format!("bit depth {} is infeasible", plan.bit_depth)));
    }
    let snr = cfg.snr_db[0];
    let q = design_quantizer(plan.bit_depth, measurement_std(cfg, plan.rows, snr))?;
    let nv = noise_variance(cfg, plan.rows, snr);

    let per_trial: Vec<Vec<KhatRecord>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let channel = trial_channel(cfg, t)?;
            let model = trial_model(cfg, t, plan.rows)?;
            let clean = apply_model(&model, &channel)?;
            let noise = trial_noise(cfg, t, model.total_rows());
            let obs = observe(&clean, &noise, nv.sqrt(), &q);
            khat_grid
                .iter()
                .map(|&k| {
                    let res = estimate_biht_linear(&obs.quantized, &obs.signs, &model, &cfg.biht_config(k))?;
                    Ok(KhatRecord {
                        config_hash: hash.clone(),
                        trial: t,
                        bit_depth: plan.bit_depth,
                        snr_db: snr,
                        khat: k,
                        rsnr_db: rsnr(&channel.entries, &res.estimate)?.db().min(RSNR_DB_CAP),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let records: Vec<KhatRecord> = per_trial.into_iter().flatten().collect();

    let reference: Vec<f64> = records
        .iter()
        .filter(|r| r.khat == cfg.sparsity)
        .map(|r| r.rsnr_db)
        .collect();
    let summaries = khat_grid
        .iter()
        .map(|&k| {
            let vals: Vec<f64> = records.iter().filter(|r| r.khat == k).map(|r| r.rsnr_db).collect();
            let (mean, _, ci) = mean_ci(&vals);
            let (dmean, _, dci) = if reference.len() == vals.len() {
                let diffs: Vec<f64> = vals.iter().zip(&reference).map(|(a, b)| a - b).collect();
                mean_ci(&diffs)
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            KhatSummary {
                config_hash: hash.clone(),
                khat: k,
                n: vals.len(),
                mean_db: mean,
                ci95_db: ci,
                mean_diff_vs_k_db: dmean,
                ci95_diff_db: dci,
            }
        })
        .collect();
    Ok((records, summaries))
}
