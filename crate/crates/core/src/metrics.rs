//! Closed-form performance quantities: per-MR SNR, sum rate and the RIS
//! beampattern gain, in both beamforming-vector and covariance form.
//!
//! The per-MR quality has no interference term: every MR receives the same
//! single beam, so the ratio is signal power over noise only.

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::Result;
use crate::numerics::{ensure_psd, quadratic_form, CMatrix, CVector};
use crate::phase_opt::PhaseConfig;

/// Cascaded per-MR channels `G_k = diag(h_ir,k) H_bi` and the phase vector.
///
/// `u[l] = e^{-jφ_l}`, so that `u^H G_k w` equals `h_ir,k Φ H_bi w`.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    pub g: Vec<CMatrix>,
    pub u: CVector,
}

impl EffectiveChannel {
    pub fn new(ch: &ChannelRealization, phase: &PhaseConfig) -> Self {
        let g = ch.h_ir.iter().map(|h| cascade(h, &ch.h_bi)).collect();
        let u = phase.unit_vector().map(|z| z.conj());
        EffectiveChannel { g, u }
    }

    /// `q_k = G_k^H u`, so that `Q_k = q_k q_k^H`.
    pub fn user_vectors(&self) -> Vec<CVector> {
        self.g.iter().map(|g| g.adjoint() * &self.u).collect()
    }

    /// `Q_k = G_k^H u u^H G_k`.
    pub fn user_covariances(&self) -> Vec<CMatrix> {
        self.user_vectors().iter().map(|q| q * q.adjoint()).collect()
    }
}

/// `diag(row) · H`.
pub fn cascade(row: &CVector, h_bi: &CMatrix) -> CMatrix {
    let mut g = h_bi.clone();
    for (l, mut r) in g.row_iter_mut().enumerate() {
        r *= row[l];
    }
    g
}

/// `s = H_bi^H Φ^H a`, so the gain of covariance `W` is `s^H W s`.
pub fn sensing_vector(a: &CVector, phase: &PhaseConfig, h_bi: &CMatrix) -> CVector {
    let phi_h_a = CVector::from_fn(a.len(), |l, _| phase.unit(l).conj() * a[l]);
    h_bi.adjoint() * phi_h_a
}

/// Sensing constraint matrix `A = s s^H`.
pub fn sensing_matrix(a: &CVector, phase: &PhaseConfig, h_bi: &CMatrix) -> CMatrix {
    let s = sensing_vector(a, phase, h_bi);
    &s * s.adjoint()
}

/// `h_ir,k Φ H_bi w`.
pub fn received_amplitude(ch: &ChannelRealization, phase: &PhaseConfig, w: &CVector, k: usize) -> Complex64 {
    let hw = &ch.h_bi * w;
    ch.h_ir[k]
        .iter()
        .enumerate()
        .map(|(l, h)| h * phase.unit(l) * hw[l])
        .sum()
}

/// Received signal-to-noise ratio of MR `k` for beamformer `w`.
pub fn sinr(ch: &ChannelRealization, phase: &PhaseConfig, w: &CVector, k: usize, sigma2: f64) -> f64 {
    received_amplitude(ch, phase, w, k).norm_sqr() / sigma2
}

pub fn rate_from_snr(snr: f64) -> f64 {
    (1.0 + snr.max(0.0)).log2()
}

/// Per-MR rates (bits/s/Hz) for beamformer `w`.
pub fn user_rates(ch: &ChannelRealization, phase: &PhaseConfig, w: &CVector, sigma2: f64) -> Vec<f64> {
    (0..ch.users())
        .map(|k| rate_from_snr(sinr(ch, phase, w, k, sigma2)))
        .collect()
}

/// `Σ_k log2(1 + γ_k)`.
pub fn sum_rate(ch: &ChannelRealization, phase: &PhaseConfig, w: &CVector, sigma2: f64) -> f64 {
    user_rates(ch, phase, w, sigma2).iter().sum()
}

/// `a^H Φ H_bi W H_bi^H Φ^H a`.
pub fn beampattern_gain(a: &CVector, phase: &PhaseConfig, h_bi: &CMatrix, w: &CMatrix) -> Result<f64> {
    ensure_psd(w)?;
    let s = sensing_vector(a, phase, h_bi);
    Ok(quadratic_form(w, &s).max(0.0))
}

/// `|a^H Φ H_bi w|^2`.
pub fn beampattern_gain_vec(a: &CVector, phase: &PhaseConfig, h_bi: &CMatrix, w: &CVector) -> f64 {
    sensing_vector(a, phase, h_bi).dotc(w).norm_sqr()
}

/// Per-MR rates for covariance `W`: `log2(1 + Tr(W Q_k)/σ²)`.
pub fn user_rates_cov(eff: &EffectiveChannel, w: &CMatrix, sigma2: f64) -> Result<Vec<f64>> {
    ensure_psd(w)?;
    Ok(user_rates_from_vectors(&eff.user_vectors(), w, sigma2))
}

pub fn sum_rate_cov(eff: &EffectiveChannel, w: &CMatrix, sigma2: f64) -> Result<f64> {
    Ok(user_rates_cov(eff, w, sigma2)?.iter().sum())
}

/// Rates with `Q_k = q_k q_k^H`, without the PSD check.
pub fn user_rates_from_vectors(q: &[CVector], w: &CMatrix, sigma2: f64) -> Vec<f64> {
    q.iter()
        .map(|qk| rate_from_snr(quadratic_form(w, qk) / sigma2))
        .collect()
}

pub fn sum_rate_from_vectors(q: &[CVector], w: &CMatrix, sigma2: f64) -> f64 {
    user_rates_from_vectors(q, w, sigma2).iter().sum()
}
