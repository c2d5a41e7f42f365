//! Brute-force simulation of the relay, independent of the closed forms in
//! [`channel_stats`](crate::channel_stats).
//!
//! Photon-number inputs are propagated exactly: loss turns each party's
//! Fock state into a binomial mixture, and every surviving branch is
//! expanded in the occupation basis of the `2M` output modes (spatial mode
//! times polarization). Coherent inputs stay coherent, so their click
//! probabilities follow from the mean photon number at each detector.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::interferometer::ModeTransform;
use crate::math::{binomial, factorial, powu};
use crate::params::ProtocolParams;
use crate::quadrature::MeanAccumulator;
use crate::tables::PhotonTuple;

/// Largest total photon number the oracle propagates.
pub const MAX_ORACLE_PHOTONS: u32 = 4;
pub const MAX_ORACLE_PARTIES: usize = 4;
pub const MAX_ORACLE_MODES: usize = 8;

/// Pure state over `modes` bosonic modes, stored as occupation tuples with
/// their amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFockState {
    modes: usize,
    n_max: u32,
    amplitudes: BTreeMap<Vec<u8>, Complex64>,
}

impl TruncatedFockState {
    /// `prod_i |n_i>`.
    pub fn number_state(counts: &[u32], n_max: u32) -> Result<Self> {
        let total: u32 = counts.iter().sum();
        if total > n_max {
            return Err(Error::TupleTooLarge {
                tuple: PhotonTuple::from(counts),
                limit: n_max,
            });
        }
        let key = counts.iter().map(|&c| c as u8).collect();
        Ok(Self {
            modes: counts.len(),
            n_max,
            amplitudes: BTreeMap::from([(key, Complex64::new(1.0, 0.0))]),
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn amplitudes(&self) -> &BTreeMap<Vec<u8>, Complex64> {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Applies the linear map `a_in^dag -> sum_out u[in][out] a_out^dag`
    /// (each row describes where one input mode's photons go).
    pub fn apply_linear(&self, u: &[Vec<Complex64>]) -> Result<Self> {
        if u.len() != self.modes {
            return Err(domain(format!(
                "map has {} input modes, state has {}",
                u.len(),
                self.modes
            )));
        }
        let out_modes = u.first().map_or(0, Vec::len);
        let mut result: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
        for (occupation, &amp) in &self.amplitudes {
            // |n> = prod_i (a_i^dag)^{n_i} / sqrt(n_i!) |0>; expand the
            // creation-operator polynomial monomial by monomial
            let norm: f64 = occupation.iter().map(|&n| factorial(n as usize)).product();
            let mut poly: BTreeMap<Vec<u8>, Complex64> =
                BTreeMap::from([(vec![0u8; out_modes], amp / norm.sqrt())]);
            for (input, &count) in occupation.iter().enumerate() {
                for _ in 0..count {
                    let mut next = BTreeMap::new();
                    for (monomial, &c) in &poly {
                        for (out, &w) in u[input].iter().enumerate() {
                            if w == Complex64::new(0.0, 0.0) {
                                continue;
                            }
                            let mut m = monomial.clone();
                            m[out] += 1;
                            *next.entry(m).or_insert(Complex64::new(0.0, 0.0)) += c * w;
                        }
                    }
                    poly = next;
                }
            }
            // monomial prod (b^dag)^{o} |0> = sqrt(prod o!) |o>
            for (o, c) in poly {
                let scale: f64 = o.iter().map(|&n| factorial(n as usize)).product();
                *result.entry(o).or_insert(Complex64::new(0.0, 0.0)) += c * scale.sqrt();
            }
        }
        Ok(Self {
            modes: out_modes,
            n_max: self.n_max,
            amplitudes: result,
        })
    }
}

/// Weighted mixture of pure states.
#[derive(Debug, Clone, PartialEq)]
pub struct FockEnsemble {
    branches: Vec<(f64, TruncatedFockState)>,
}

impl FockEnsemble {
    pub fn branches(&self) -> &[(f64, TruncatedFockState)] {
        &self.branches
    }

    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(|(w, _)| w).sum()
    }

    /// Each party's `n_i` photons cross a pure-loss channel of
    /// transmittance `eta`: the surviving number is binomial, and distinct
    /// survivor counts leave orthogonal environment states behind.
    pub fn lossy_number_state(counts: &[u32], eta: f64, n_max: u32) -> Result<Self> {
        let mut k = vec![0u32; counts.len()];
        let mut branches = Vec::new();
        loop {
            let w: f64 = counts
                .iter()
                .zip(&k)
                .map(|(&n, &ki)| {
                    binomial(n as usize, ki as usize) * powu(eta, ki) * powu(1.0 - eta, n - ki)
                })
                .product();
            if w > 0.0 {
                branches.push((w, TruncatedFockState::number_state(&k, n_max)?));
            }
            // odometer over 0..=counts
            let mut i = 0;
            while i < k.len() && k[i] == counts[i] {
                k[i] = 0;
                i += 1;
            }
            if i == k.len() {
                break;
            }
            k[i] += 1;
        }
        Ok(Self { branches })
    }
}

fn check_scale(p: &ProtocolParams, photons: u32) -> Result<()> {
    p.validate_channel()?;
    if p.n_parties > MAX_ORACLE_PARTIES || p.modes() > MAX_ORACLE_MODES {
        return Err(domain(format!(
            "oracle handles at most {MAX_ORACLE_PARTIES} parties and {MAX_ORACLE_MODES} detectors"
        )));
    }
    if p.modes() < p.n_parties {
        return Err(domain("more parties than detectors"));
    }
    if photons > MAX_ORACLE_PHOTONS {
        return Err(domain(format!(
            "oracle handles at most {MAX_ORACLE_PHOTONS} photons, got {photons}"
        )));
    }
    Ok(())
}

/// Polarization angle and phase of party `i`.
fn party_setting(p: &ProtocolParams, i: usize) -> (f64, f64) {
    let (theta0, theta1) = p.polarization_angles();
    if i == 0 {
        (theta0, 0.0)
    } else {
        (theta1, p.phi)
    }
}

/// Where one photon of each party ends up: output mode `2k` is detector
/// `k` in the reference polarization, `2k + 1` the orthogonal one.
pub fn input_to_output_map(p: &ProtocolParams, t: &ModeTransform) -> Vec<Vec<Complex64>> {
    let m = t.modes();
    let scale = 1.0 / (m as f64).sqrt();
    (0..p.n_parties)
        .map(|i| {
            let (theta, phase) = party_setting(p, i);
            let rot = Complex64::from_polar(1.0, phase);
            let mut row = vec![Complex64::new(0.0, 0.0); 2 * m];
            for k in 0..m {
                let f = f64::from(t.sign(k, i)) * scale;
                row[2 * k] = rot * (f * theta.cos());
                row[2 * k + 1] = rot * (-f * theta.sin());
            }
            row
        })
        .collect()
}

/// Probability of each click pattern (bit `k` set when detector `k`
/// clicks) when party `i` sends exactly `n[i]` photons.
pub fn click_distribution(p: &ProtocolParams, n: &PhotonTuple) -> Result<Vec<f64>> {
    check_scale(p, n.total())?;
    if n.len() != p.n_parties {
        return Err(domain(format!(
            "photon tuple {n} does not match {} parties",
            p.n_parties
        )));
    }
    let t = p.transform()?;
    let m = t.modes();
    let map = input_to_output_map(p, &t);
    let ensemble = FockEnsemble::lossy_number_state(n.counts(), p.eta, MAX_ORACLE_PHOTONS)?;

    // distribution of the set of detectors hit by photons
    let mut photon_sets = vec![0.0; 1 << m];
    for (w, state) in ensemble.branches() {
        let out = state.apply_linear(&map)?;
        for (o, amp) in out.amplitudes() {
            let mut set = 0usize;
            for k in 0..m {
                if o[2 * k] + o[2 * k + 1] > 0 {
                    set |= 1 << k;
                }
            }
            photon_sets[set] += w * amp.norm_sqr();
        }
    }

    // dark counts fire independently on every detector
    let pd = p.p_dark;
    let mut clicks = vec![0.0; 1 << m];
    for (s, &ps) in photon_sets.iter().enumerate() {
        if ps == 0.0 {
            continue;
        }
        for (c, slot) in clicks.iter_mut().enumerate() {
            if c & s != s {
                continue;
            }
            let dark = (c & !s).count_ones() as i32;
            let quiet = m as i32 - c.count_ones() as i32;
            *slot += ps * pd.powi(dark) * (1.0 - pd).powi(quiet);
        }
    }
    Ok(clicks)
}

/// Probability that only detector 0 clicks, checking along the way that
/// every detector gives the same value.
pub fn simulate_yield(p: &ProtocolParams, n: &PhotonTuple) -> Result<f64> {
    let clicks = click_distribution(p, n)?;
    let m = p.modes();
    let y0 = clicks[1];
    for j in 1..m {
        let yj = clicks[1 << j];
        if (yj - y0).abs() > 1e-10 {
            return Err(Error::Oracle(format!(
                "single-click probability depends on the detector: {y0:e} at 0, {yj:e} at {j}"
            )));
        }
    }
    Ok(y0)
}

/// Mean photon number at each detector for coherent inputs with complex
/// amplitudes `fields[i]` (before loss), given the map from
/// [`input_to_output_map`].
fn detector_intensities(map: &[Vec<Complex64>], eta: f64, fields: &[Complex64], mu: &mut [f64]) {
    let loss = eta.sqrt();
    for (k, slot) in mu.iter_mut().enumerate() {
        let mut par = Complex64::new(0.0, 0.0);
        let mut perp = Complex64::new(0.0, 0.0);
        for (row, &field) in map.iter().zip(fields) {
            par += row[2 * k] * field;
            perp += row[2 * k + 1] * field;
        }
        *slot = (par.norm_sqr() + perp.norm_sqr()) * loss * loss;
    }
}

/// Only detector `j` clicks, given independent Poisson photon counts of
/// the given means and dark counts.
fn single_click(mu: &[f64], pd: f64, j: usize) -> f64 {
    let mut quiet = 1.0;
    for (k, &mk) in mu.iter().enumerate() {
        if k != j {
            quiet *= (1.0 - pd) * (-mk).exp();
        }
    }
    // 1 - (1 - pd) e^{-mu}, kept accurate for small mu
    let click = -(-mu[j]).exp_m1() + pd * (-mu[j]).exp();
    quiet * click
}

/// Single-click probability at detector `j` for signs `x`, from the
/// propagated coherent amplitudes.
pub fn simulate_kg_click(p: &ProtocolParams, x: &[i8], j: usize) -> Result<f64> {
    p.validate_channel()?;
    let t = p.transform()?;
    if j >= t.modes() {
        return Err(Error::IndexOutOfRange {
            index: j,
            limit: t.modes(),
        });
    }
    if x.len() != p.n_parties || x.iter().any(|&s| s != 1 && s != -1) {
        return Err(domain("signs must be +1 or -1, one per party"));
    }
    let fields: Vec<Complex64> = x
        .iter()
        .map(|&s| Complex64::new(f64::from(s) * p.alpha, 0.0))
        .collect();
    let mut mu = vec![0.0; t.modes()];
    detector_intensities(&input_to_output_map(p, &t), p.eta, &fields, &mut mu);
    Ok(single_click(&mu, p.p_dark, j))
}

/// Monte Carlo gain: averages the coherent single-click probability at
/// detector 0 over uniformly random phases. Returns the estimate and its
/// standard error.
pub fn sample_gain(
    p: &ProtocolParams,
    intensities: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    p.validate_channel()?;
    if n_samples < 1000 {
        return Err(domain(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    if intensities.iter().any(|b| !(*b >= 0.0)) {
        return Err(domain("intensities must be >= 0"));
    }
    let t = p.transform()?;
    if intensities.len() > t.modes() {
        return Err(domain("more senders than detectors"));
    }
    // parties beyond the intensity list do not exist here
    let mut q = p.clone();
    q.n_parties = intensities.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = MeanAccumulator::default();
    let map = input_to_output_map(&q, &t);
    let mut fields = vec![Complex64::new(0.0, 0.0); intensities.len()];
    let mut mu = vec![0.0; t.modes()];
    for _ in 0..n_samples {
        for (f, &b) in fields.iter_mut().zip(intensities) {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            *f = Complex64::from_polar(b.sqrt(), phase);
        }
        detector_intensities(&map, p.eta, &fields, &mut mu);
        acc.push(single_click(&mu, p.p_dark, 0));
    }
    Ok((acc.mean(), acc.std_error()))
}
