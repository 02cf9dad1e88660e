//! SINR, sum rate and the quadratic-transform surrogate.
//!
//! For composite precoders `W = [w_1 … w_N]` and effective channels
//! `h̄_n = (h_nᴴ Θ_{i_n} G)ᴴ` the surrogate is
//!
//! ```text
//! F = Σ_n log₂(1+β_n) − β_n + 2√(1+β_n)·Re{α_n* h̄_nᴴ w_n}
//!       − |α_n|²·(Σ_{n'} |h̄_nᴴ w_{n'}|² + σ²)
//! ```
//!
//! The interference sum in the last term runs over all users, the own
//! stream included. With that convention `β_n = γ_n` followed by
//! `α_n = √(1+β_n) h̄_nᴴ w_n / (Σ_{n'} |h̄_nᴴ w_{n'}|² + σ²)` makes `F` equal
//! the sum rate exactly, and the `Θ` block collapses to a single trace form.
//!
//! `β = γ` is not a stationary point of `F` in `β` alone (the log is base 2
//! while the quadratic terms are unscaled). Block ascent is still monotone in
//! the sum rate: if the other blocks raise `F` above the previous sum rate
//! `R`, then `Σ_n (1+γ_n^old)/(1+γ_n^new) ≤ N`, and by AM–GM the new sum rate
//! is at least `R`.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, Group};
use crate::linalg::dbm_to_watts;
use crate::manifold::ScatteringMatrix;
use crate::{CMat, CVec, Complex64, Error, Result};

/// Receiver noise power `σ²` in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain {
                what: "noise power",
                reason: format!("{sigma2} must be positive"),
            });
        }
        Ok(Self { sigma2 })
    }

    /// `σ² = N0·B` with `N0` in dBm/Hz.
    pub fn from_density(n0_dbm_per_hz: f64, bandwidth_hz: f64) -> Result<Self> {
        Self::new(dbm_to_watts(n0_dbm_per_hz) * bandwidth_hz)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Noise over a fraction of the band.
    pub fn scaled(&self, fraction: f64) -> Result<Self> {
        Self::new(self.sigma2 * fraction)
    }
}

/// Auxiliary variables of the quadratic transform.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    pub beta: Vec<f64>,
    pub alpha: Vec<Complex64>,
}

impl AuxState {
    pub fn zeros(n: usize) -> Self {
        Self {
            beta: vec![0.0; n],
            alpha: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// `β ← γ` then `α ← α*(β)`.
    pub fn optimal(hbar: &EffectiveChannels, w: &CMat, noise: &NoiseModel) -> Result<Self> {
        let beta = update_beta(hbar, w, noise)?;
        let alpha = update_alpha(hbar, w, &beta, noise)?;
        Ok(Self { beta, alpha })
    }
}

/// Per-user effective channels `h̄_n` (length `M`).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    pub hbar: Vec<CVec>,
}

impl EffectiveChannels {
    pub fn compute(
        channels: &ChannelSet,
        theta: &ScatteringMatrix,
        groups: &[Group],
    ) -> Result<Self> {
        if groups.len() != channels.num_users() {
            return Err(Error::dim("effective channels", channels.num_users(), groups.len()));
        }
        let hbar = channels
            .h
            .iter()
            .zip(groups)
            .map(|(h, &grp)| effective_channel(h, &theta.block(grp), &channels.g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { hbar })
    }

    pub fn len(&self) -> usize {
        self.hbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hbar.is_empty()
    }

    fn check(&self, w: &CMat) -> Result<()> {
        if w.ncols() != self.hbar.len() {
            return Err(Error::dim("precoder columns", self.hbar.len(), w.ncols()));
        }
        for h in &self.hbar {
            if h.len() != w.nrows() {
                return Err(Error::dim("precoder rows", h.len(), w.nrows()));
            }
        }
        Ok(())
    }

    /// `C[n][n'] = h̄_nᴴ w_{n'}`.
    pub fn cross(&self, w: &CMat) -> Result<CMat> {
        self.check(w)?;
        let n = self.hbar.len();
        let mut c = CMat::zeros(n, n);
        for (i, h) in self.hbar.iter().enumerate() {
            let row = h.adjoint() * w;
            c.row_mut(i).copy_from(&row);
        }
        Ok(c)
    }
}

/// `(h_nᴴ Θ_i G)ᴴ = Gᴴ Θ_iᴴ h_n`.
pub fn effective_channel(h: &CVec, theta_i: &CMat, g: &CMat) -> Result<CVec> {
    if theta_i.nrows() != h.len() || theta_i.ncols() != g.nrows() {
        return Err(Error::dim(
            "effective channel",
            format!("Θ_i {}×{}", h.len(), g.nrows()),
            format!("Θ_i {}×{}", theta_i.nrows(), theta_i.ncols()),
        ));
    }
    Ok(g.adjoint() * (theta_i.adjoint() * h))
}

/// Signal and total received power of user `n` from the cross-gain matrix.
fn powers(cross: &CMat, n: usize) -> (f64, f64) {
    let signal = cross[(n, n)].norm_sqr();
    (signal, signal + interference(cross, n))
}

fn interference(cross: &CMat, n: usize) -> f64 {
    cross
        .row(n)
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != n)
        .map(|(_, x)| x.norm_sqr())
        .sum()
}

fn sinr_from_cross(cross: &CMat, n: usize, sigma2: f64) -> f64 {
    cross[(n, n)].norm_sqr() / (interference(cross, n) + sigma2)
}

pub fn sinr(n: usize, hbar: &EffectiveChannels, w: &CMat, noise: &NoiseModel) -> Result<f64> {
    if n >= hbar.len() {
        return Err(Error::dim("user index", format!("< {}", hbar.len()), n));
    }
    let cross = hbar.cross(w)?;
    Ok(sinr_from_cross(&cross, n, noise.sigma2))
}

pub fn sinrs(hbar: &EffectiveChannels, w: &CMat, noise: &NoiseModel) -> Result<Vec<f64>> {
    let cross = hbar.cross(w)?;
    Ok((0..hbar.len())
        .map(|n| sinr_from_cross(&cross, n, noise.sigma2))
        .collect())
}

pub fn sum_rate(hbar: &EffectiveChannels, w: &CMat, noise: &NoiseModel) -> Result<f64> {
    Ok(sinrs(hbar, w, noise)?.iter().map(|g| (1.0 + g).log2()).sum())
}

pub fn fp_objective(
    hbar: &EffectiveChannels,
    w: &CMat,
    aux: &AuxState,
    noise: &NoiseModel,
) -> Result<f64> {
    if aux.len() != hbar.len() || aux.alpha.len() != hbar.len() {
        return Err(Error::dim("auxiliary variables", hbar.len(), aux.len()));
    }
    let cross = hbar.cross(w)?;
    Ok(surrogate_from_cross(&cross, aux, noise.sigma2))
}

pub(crate) fn surrogate_from_cross(cross: &CMat, aux: &AuxState, sigma2: f64) -> f64 {
    (0..aux.len())
        .map(|n| {
            let b = aux.beta[n];
            let a = aux.alpha[n];
            let (_, total) = powers(cross, n);
            (1.0 + b).log2() - b + 2.0 * (1.0 + b).sqrt() * (a.conj() * cross[(n, n)]).re
                - a.norm_sqr() * (total + sigma2)
        })
        .sum()
}

/// Part of the surrogate that does not depend on `Θ` or the precoders:
/// `Σ_n log₂(1+β_n) − β_n − |α_n|²σ²`.
pub fn precoder_free_terms(aux: &AuxState, noise: &NoiseModel) -> f64 {
    aux.beta
        .iter()
        .zip(&aux.alpha)
        .map(|(&b, a)| (1.0 + b).log2() - b - a.norm_sqr() * noise.sigma2)
        .sum()
}

/// `β_n = γ_n`.
pub fn update_beta(hbar: &EffectiveChannels, w: &CMat, noise: &NoiseModel) -> Result<Vec<f64>> {
    sinrs(hbar, w, noise)
}

/// `α_n = √(1+β_n)·h̄_nᴴ w_n / (Σ_{n'} |h̄_nᴴ w_{n'}|² + σ²)`.
pub fn update_alpha(
    hbar: &EffectiveChannels,
    w: &CMat,
    beta: &[f64],
    noise: &NoiseModel,
) -> Result<Vec<Complex64>> {
    if beta.len() != hbar.len() {
        return Err(Error::dim("beta", hbar.len(), beta.len()));
    }
    if let Some(b) = beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(Error::Domain {
            what: "beta",
            reason: format!("{b} must be finite and non-negative"),
        });
    }
    let cross = hbar.cross(w)?;
    Ok((0..hbar.len())
        .map(|n| {
            let (_, total) = powers(&cross, n);
            cross[(n, n)] * ((1.0 + beta[n]).sqrt() / (total + noise.sigma2))
        })
        .collect())
}
