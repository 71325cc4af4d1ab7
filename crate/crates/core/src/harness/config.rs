use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adc::{MAX_QUANTIZER_BITS, REFERENCE_BUDGET, REFERENCE_DURATION, WALDEN_C};
use crate::channel::{ChannelSpec, PeakNormalization, SupportModel};
use crate::estimator::{BihtConfig, Stacking, StepSize, DEFAULT_STEP};
use crate::pilot::PilotMode;
use crate::{Error, Result};

/// Input SNR convention written into every run header.
pub const SNR_DEFINITION: &str = "SNR = E[||X h||^2] / E[||e||^2] per receive slot; \
     sigma_e^2 = Nt * E[||h_pair||^2] / (M * SNR) per complex sample";

/// Slot convention written into every run header.
pub const SLOT_DEFINITION: &str = "each receiver is trained in its own slot of Nt * duration_s; \
     M = floor(Nt * duration_s * f_s) samples per slot";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BihtSettings {
    pub step: StepSize,
    pub max_iters: usize,
    pub stall_window: usize,
    pub stacking: Stacking,
}

impl Default for BihtSettings {
    fn default() -> Self {
        Self {
            step: StepSize::Fixed(DEFAULT_STEP),
            max_iters: 100,
            stall_window: 10,
            stacking: Stacking::Joint,
        }
    }
}

/// One Monte Carlo experiment. Loaded from TOML; every field has a default
/// matching the SISO reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Taps per pair (N).
    pub taps: usize,
    /// Nonzero taps per pair (K).
    pub sparsity: usize,
    /// Sparsity target handed to BIHT (K̂); defaults to K.
    pub khat: Option<usize>,
    pub pilot_mode: PilotMode,
    pub power_budget_w: f64,
    pub walden_c: f64,
    /// Training duration per transmit antenna, seconds.
    pub duration_s: f64,
    pub bit_depths: Vec<u32>,
    /// `inf` selects a noiseless cell.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub support_model: SupportModel,
    pub normalization: PeakNormalization,
    pub shared_clusters: bool,
    /// Samples per receive slot, one per bit depth, replacing the budget rule.
    pub m_override: Option<Vec<usize>>,
    pub rip_samples: usize,
    /// Evaluate the oracle RSNR bound (needs a RIP probe per bit depth).
    pub bounds: bool,
    pub biht: BihtSettings,
    /// Treat infeasible cells as a hard error.
    pub strict: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_tx: 1,
            n_rx: 1,
            taps: 200,
            sparsity: 5,
            khat: None,
            pilot_mode: PilotMode::IidRandom,
            power_budget_w: REFERENCE_BUDGET,
            walden_c: WALDEN_C,
            duration_s: REFERENCE_DURATION,
            bit_depths: (2..=8).collect(),
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 15.0],
            trials: 200,
            master_seed: 0,
            support_model: SupportModel::Uniform,
            normalization: PeakNormalization::PerPair,
            shared_clusters: true,
            m_override: None,
            rip_samples: 1000,
            bounds: true,
            biht: BihtSettings::default(),
            strict: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn khat(&self) -> usize {
        self.khat.unwrap_or(self.sparsity)
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        ChannelSpec {
            taps: self.taps,
            sparsity: self.sparsity,
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            support_model: self.support_model,
            normalization: self.normalization,
            shared_clusters: self.shared_clusters,
        }
    }

    pub fn biht_config(&self, khat: usize) -> BihtConfig {
        BihtConfig {
            step: self.biht.step,
            sparsity_target: khat,
            max_iters: self.biht.max_iters,
            stall_window: self.biht.stall_window,
            stacking: self.biht.stacking,
        }
    }

    /// Receive-slot duration.
    pub fn slot_duration(&self) -> f64 {
        self.n_tx as f64 * self.duration_s
    }

    pub fn validate(&self) -> Result<()> {
        self.channel_spec().validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.bit_depths.is_empty() || self.snr_db.is_empty() {
            return Err(Error::Config("bit-depth and SNR grids must be nonempty".into()));
        }
        if let Some(&b) = self
            .bit_depths
            .iter()
            .find(|&&b| b == 0 || b > MAX_QUANTIZER_BITS)
        {
            return Err(Error::Config(format!("bit depth {b} outside 1..={MAX_QUANTIZER_BITS}")));
        }
        let mut sorted = self.bit_depths.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.bit_depths.len() {
            return Err(Error::Config("bit-depth grid has duplicates".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::Config("SNR grid entries must be finite or +inf".into()));
        }
        let khat = self.khat();
        if khat == 0 || khat > self.taps {
            return Err(Error::Config(format!("khat {khat} outside 1..={}", self.taps)));
        }
        if khat < self.sparsity {
            log::warn!("khat {khat} is below the true sparsity {}", self.sparsity);
        }
        if let Some(m) = &self.m_override {
            if m.len() != self.bit_depths.len() {
                return Err(Error::Config(format!(
                    "m_override has {} entries for {} bit depths",
                    m.len(),
                    self.bit_depths.len()
                )));
            }
        }
        if self.rip_samples == 0 {
            return Err(Error::Config("rip_samples must be at least 1".into()));
        }
        if !(self.power_budget_w > 0.0 && self.walden_c > 0.0 && self.duration_s > 0.0) {
            return Err(Error::Config("budget, Walden constant and duration must be positive".into()));
        }
        Ok(())
    }
}
