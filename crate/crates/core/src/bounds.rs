//! Oracle-assisted performance limits.
//!
//! `Σ` is the covariance of the projected noise `A_Ω† e` for white `e`, i.e.
//! `σ_eff² (A_Ωᵀ A_Ω)⁻¹`. Quantization distortion enters as extra white noise.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::adc::QuantizerModel;
use crate::linalg::{spd_inverse, symmetric_extremes};
use crate::{Error, Result};

/// `σ_e² + mse(Q)`; `noise_std` and the quantizer refer to the same real
/// component.
pub fn effective_noise_variance(noise_std: f64, quantizer: &QuantizerModel) -> f64 {
    noise_std * noise_std + quantizer.mse
}

/// `σ_eff² (AᵀA)⁻¹` for the restricted real matrix `A`.
pub fn sigma_matrix(restricted: &DMatrix<f64>, sigma_eff: f64) -> Result<DMatrix<f64>> {
    if restricted.ncols() > restricted.nrows() {
        return Err(Error::Conditioning {
            columns: (restricted.nrows()..restricted.ncols()).collect(),
        });
    }
    let labels: Vec<usize> = (0..restricted.ncols()).collect();
    let inv = spd_inverse(&restricted.tr_mul(restricted), &labels)?;
    Ok(inv * (sigma_eff * sigma_eff))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInput {
    /// `‖h_R‖²`.
    pub channel_energy: f64,
    /// `Nt·Nr·K`.
    pub sparsity_order: usize,
    /// Probed restricted isometry constant.
    pub delta: f64,
    pub sigma: DMatrix<f64>,
}

impl BoundInput {
    /// Assembles the input from a realised support. `noise_std` is per real
    /// component and `quantizer` is designed at the measurement scale.
    pub fn from_parts(
        channel_energy: f64,
        delta: f64,
        noise_std: f64,
        quantizer: &QuantizerModel,
        restricted: &DMatrix<f64>,
    ) -> Result<Self> {
        let s_eff = effective_noise_variance(noise_std, quantizer).sqrt();
        Ok(Self {
            channel_energy,
            sparsity_order: restricted.ncols(),
            delta,
            sigma: sigma_matrix(restricted, s_eff)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundValue {
    pub linear: f64,
    pub db: f64,
    /// `0 <= delta < 1`.
    pub rip_valid: bool,
    /// `λ_min(Σ) = 0` made the bound infinite.
    pub infinite: bool,
}

/// Upper bound on the oracle reconstruction SNR,
/// `‖h_R‖² (1+δ) / (s · λ_min(Σ))`.
pub fn oracle_rsnr_bound(input: &BoundInput) -> Result<BoundValue> {
    if input.sparsity_order == 0 || input.sigma.nrows() == 0 {
        return Err(Error::Domain("bound needs a nonempty support".into()));
    }
    if !(input.channel_energy >= 0.0) || !(input.delta >= 0.0) {
        return Err(Error::Domain(format!(
            "channel energy {} and delta {} must be nonnegative",
            input.channel_energy, input.delta
        )));
    }
    let (lmin, _) = symmetric_extremes(&input.sigma);
    let lmin = lmin.max(0.0);
    let num = input.channel_energy * (1.0 + input.delta);
    let linear = if lmin == 0.0 {
        f64::INFINITY
    } else {
        num / (input.sparsity_order as f64 * lmin)
    };
    Ok(BoundValue {
        linear,
        db: 10.0 * linear.log10(),
        rip_valid: input.delta < 1.0,
        infinite: linear.is_infinite(),
    })
}

/// `(s σ_e² / (1+δ), s σ_e² / (1−δ))`.
pub fn unquantized_mse_band(sparsity_order: usize, delta: f64, noise_std: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!("MSE band undefined for delta = {delta}")));
    }
    let base = sparsity_order as f64 * noise_std * noise_std;
    Ok((base / (1.0 + delta), base / (1.0 - delta)))
}
