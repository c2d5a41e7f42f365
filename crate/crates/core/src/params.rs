//! Experiment description shared by every statistics routine.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::interferometer::{build_transform, ModeTransform};

/// Misalignment angle for a given misalignment fraction: `arcsin(sqrt(fraction))`.
pub fn misalignment_angle(fraction: f64) -> f64 {
    fraction.sqrt().asin()
}

/// Default misalignment fraction between the reference party and the others.
pub const DEFAULT_MISALIGNMENT: f64 = 0.02;
pub const DEFAULT_DECOYS: (f64, f64) = (0.5, 0.0);
pub const DEFAULT_CUTOFF: u32 = 4;

/// Symmetric-channel protocol parameters.
///
/// Party `A_0` is the reference: its polarization sits at `theta` relative
/// to every other party (the others share one angle), and every other party
/// picks up the phase offset `phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n_parties: usize,
    /// Layer count `s`; the relay has `M = 2^s` detectors.
    pub layers: u32,
    /// Signal amplitude.
    pub alpha: f64,
    /// Party-to-relay transmittance.
    pub eta: f64,
    /// Dark-count probability per detector and round.
    pub p_dark: f64,
    pub theta: f64,
    pub phi: f64,
    /// Decoy intensities `(beta_0, beta_1)`, `beta_0 > beta_1`.
    pub decoys: (f64, f64),
    /// Photon-number cutoff of the phase-error bound (even).
    pub cutoff: u32,
}

/// Smallest layer count with `2^s >= n`.
pub fn min_layers(n_parties: usize) -> u32 {
    let mut s = 1;
    while (1usize << s) < n_parties {
        s += 1;
    }
    s
}

impl ProtocolParams {
    /// `n` parties on the smallest network that fits them, with the default
    /// misalignment, decoys and cutoff, unit transmittance, no dark counts
    /// and zero amplitude.
    pub fn new(n_parties: usize) -> Self {
        let angle = misalignment_angle(DEFAULT_MISALIGNMENT);
        Self {
            n_parties,
            layers: min_layers(n_parties),
            alpha: 0.0,
            eta: 1.0,
            p_dark: 0.0,
            theta: angle,
            phi: angle,
            decoys: DEFAULT_DECOYS,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    pub fn with_layers(mut self, layers: u32) -> Self {
        self.layers = layers;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_dark_count(mut self, p_dark: f64) -> Self {
        self.p_dark = p_dark;
        self
    }

    pub fn with_misalignment(mut self, theta: f64, phi: f64) -> Self {
        self.theta = theta;
        self.phi = phi;
        self
    }

    pub fn with_decoys(mut self, beta0: f64, beta1: f64) -> Self {
        self.decoys = (beta0, beta1);
        self
    }

    pub fn with_cutoff(mut self, cutoff: u32) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn modes(&self) -> usize {
        1usize << self.layers
    }

    pub fn transform(&self) -> Result<ModeTransform> {
        build_transform(self.layers)
    }

    /// Polarization angles `(theta_0, theta_1)` of the reference party and of
    /// the others. Only the difference is physical; the others sit at zero.
    pub fn polarization_angles(&self) -> (f64, f64) {
        (self.theta, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_parties < 2 {
            return Err(domain(format!(
                "need at least 2 parties, got {}",
                self.n_parties
            )));
        }
        let transform = self.transform()?;
        if transform.modes() < self.n_parties {
            return Err(domain(format!(
                "{} detectors cannot host {} parties",
                transform.modes(),
                self.n_parties
            )));
        }
        self.validate_channel()?;
        let (b0, b1) = self.decoys;
        if !(b1 >= 0.0 && b0 > b1 && b0.is_finite()) {
            return Err(domain(format!(
                "decoys must satisfy beta0 > beta1 >= 0, got ({b0}, {b1})"
            )));
        }
        if !self.cutoff.is_multiple_of(2) {
            return Err(domain(format!("cutoff must be even, got {}", self.cutoff)));
        }
        Ok(())
    }

    /// Checks the fields used by the detection statistics only.
    pub(crate) fn validate_channel(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(domain(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(domain(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.p_dark) {
            return Err(domain(format!(
                "p_dark must lie in [0, 1), got {}",
                self.p_dark
            )));
        }
        if !self.theta.is_finite() || !self.phi.is_finite() {
            return Err(domain("misalignment angles must be finite"));
        }
        self.transform()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let p = ProtocolParams::new(3);
        assert_eq!(p.layers, 2);
        assert_eq!(p.modes(), 4);
        assert!((p.theta.sin().powi(2) - 0.02).abs() < 1e-15);
        assert_eq!(p.decoys, (0.5, 0.0));
        assert_eq!(p.cutoff, 4);
        p.validate().unwrap();
        assert_eq!(ProtocolParams::new(5).layers, 3);
        assert_eq!(ProtocolParams::new(2).layers, 1);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ProtocolParams::new(1).validate().is_err());
        assert!(ProtocolParams::new(5).with_layers(2).validate().is_err());
        assert!(ProtocolParams::new(3)
            .with_decoys(0.1, 0.1)
            .validate()
            .is_err());
        assert!(ProtocolParams::new(3).with_cutoff(3).validate().is_err());
        assert!(ProtocolParams::new(3).with_eta(1.5).validate().is_err());
        assert!(ProtocolParams::new(3)
            .with_dark_count(1.0)
            .validate()
            .is_err());
    }
}
