//! Closed-form detection statistics of the symmetric channel model.
//!
//! Every party sits behind the same transmittance `eta`; the reference party
//! `A_0` is misaligned from the rest by the polarization angle `theta` and
//! the phase `phi`. Key-generation rounds send `x_i * alpha` coherent
//! states, test rounds send phase-randomized states of intensity `beta_i`.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::math::{binomial, factorial, powu};
use crate::params::ProtocolParams;
use crate::quadrature::{PairwiseCosine, QuadratureSpec};
use crate::tables::{
    canonical_unique, even_tuples, intensities_for, GainTable, PhotonTuple, Symmetry, YieldKind,
    YieldTable,
};

/// Largest total photon number accepted by [`exact_yield`].
pub const MAX_YIELD_PHOTONS: u32 = 12;

fn check(p: &ProtocolParams) -> Result<()> {
    p.validate_channel()?;
    if p.n_parties < 2 || p.modes() < p.n_parties {
        return Err(domain(format!(
            "{} detectors cannot host {} parties",
            p.modes(),
            p.n_parties
        )));
    }
    Ok(())
}

/// Probability that only detector `j` clicks when the parties send signs
/// `x` in a key-generation round.
pub fn pr_click_given_signs(p: &ProtocolParams, j: usize, x: &[i8]) -> Result<f64> {
    check(p)?;
    let t = p.transform()?;
    let m = p.modes();
    if j >= m {
        return Err(Error::IndexOutOfRange { index: j, limit: m });
    }
    if x.len() != p.n_parties {
        return Err(domain(format!(
            "expected {} signs, got {}",
            p.n_parties,
            x.len()
        )));
    }
    if let Some(bad) = x.iter().find(|&&s| s != 1 && s != -1) {
        return Err(domain(format!("sign entries must be +1 or -1, got {bad}")));
    }
    // post-processed sum of the non-reference signs
    let s: f64 = (1..p.n_parties)
        .map(|i| f64::from(x[i]) * f64::from(t.sign(j, i)))
        .sum();
    let x0 = f64::from(x[0]);
    Ok(click_from_exponent(p, s * s + 2.0 * s * x0 * alignment(p)))
}

/// `cos(theta) cos(phi)`: the overlap between reference and other parties.
fn alignment(p: &ProtocolParams) -> f64 {
    p.theta.cos() * p.phi.cos()
}

/// Single-click probability for a detector whose mean photon number is
/// `eta alpha^2 (1 + e) / M` out of a total `N eta alpha^2`.
///
/// Written as `(1-p_d)^{M-1} e^{-N mu} [expm1(mu (1 + e) / M) + p_d]` so the
/// two large terms of the difference never cancel numerically.
fn click_from_exponent(p: &ProtocolParams, e: f64) -> f64 {
    let m = p.modes() as f64;
    let mu = p.eta * p.alpha * p.alpha;
    let value =
        common_factor(p, mu * p.n_parties as f64) * ((mu * (1.0 + e) / m).exp_m1() + p.p_dark);
    value.clamp(0.0, 1.0)
}

/// `(1-p_d)^{M-1} e^{-total}`, the factor shared by every single-click
/// probability when `total` photons are expected at the relay.
fn common_factor(p: &ProtocolParams, total: f64) -> f64 {
    (1.0 - p.p_dark).powf(p.modes() as f64 - 1.0) * (-total).exp()
}

/// `e^u cosh(v) - 1` without cancellation.
fn exp_cosh_m1(u: f64, v: f64) -> f64 {
    0.5 * ((u + v).exp_m1() + (u - v).exp_m1())
}

/// Probability that a given detector (any one) is the only one to click in
/// a key-generation round, averaged over all sign choices.
pub fn pr_click_kg(p: &ProtocolParams) -> Result<f64> {
    check(p)?;
    Ok((common_factor(p, total_signal(p)) * kg_bracket(p)).clamp(0.0, 1.0))
}

fn total_signal(p: &ProtocolParams) -> f64 {
    p.n_parties as f64 * p.eta * p.alpha * p.alpha
}

/// Binomial average over the post-processed sign sum `s` of
/// `e^{mu (1 + s^2)/M} cosh(2 mu s cc / M) - 1`, plus `p_d`.
fn kg_bracket(p: &ProtocolParams) -> f64 {
    let n = p.n_parties;
    let m = p.modes() as f64;
    let mu = p.eta * p.alpha * p.alpha;
    let cc = alignment(p);
    let mut sum = 0.0;
    for k in 0..n {
        let s = (2 * k + 1) as f64 - n as f64;
        sum += binomial(n - 1, k) * exp_cosh_m1(mu * (1.0 + s * s) / m, 2.0 * mu * s * cc / m);
    }
    sum / 2f64.powi(n as i32 - 1) + p.p_dark
}

/// Bit-error rate between the reference party and any other party,
/// conditioned on a single click.
pub fn qber(p: &ProtocolParams) -> Result<f64> {
    check(p)?;
    let n = p.n_parties;
    let m = p.modes() as f64;
    let mu = p.eta * p.alpha * p.alpha;
    let cc = alignment(p);
    let clicks = kg_bracket(p);
    if !(common_factor(p, total_signal(p)) * clicks > 0.0) {
        return Err(domain(
            "click probability is zero; the error rate is undefined",
        ));
    }
    // errors: the reference and party 1 disagree after post-processing;
    // t is the sign sum over the remaining N - 2 parties
    let mut sum = 0.0;
    for k in 0..=n - 2 {
        let t = (2 * k + 2) as f64 - n as f64;
        sum += binomial(n - 2, k)
            * exp_cosh_m1(
                mu * (2.0 - 2.0 * cc + t * t) / m,
                2.0 * mu * t * (1.0 - cc) / m,
            );
    }
    let errors = sum / 2f64.powi(n as i32 - 1) + 0.5 * p.p_dark;
    Ok((errors / clicks).clamp(0.0, 1.0))
}

/// The same error rate assembled by Bayes' rule from the per-sign click
/// probabilities at detector `j`, comparing the reference with `party`.
pub fn qber_bayes(p: &ProtocolParams, j: usize, party: usize) -> Result<f64> {
    check(p)?;
    let n = p.n_parties;
    if party == 0 || party >= n {
        return Err(Error::IndexOutOfRange {
            index: party,
            limit: n,
        });
    }
    let t = p.transform()?;
    let flip = t.sign(j, party);
    let mut total = 0.0;
    let mut errors = 0.0;
    for bits in 0..1usize << n {
        let x: Vec<i8> = (0..n)
            .map(|i| if bits >> i & 1 == 0 { 1 } else { -1 })
            .collect();
        let pr = pr_click_given_signs(p, j, &x)?;
        total += pr;
        if i32::from(x[0]) != i32::from(x[party]) * flip {
            errors += pr;
        }
    }
    if total <= 0.0 {
        return Err(domain(
            "click probability is zero; the error rate is undefined",
        ));
    }
    Ok(errors / total)
}

/// Coupling matrix of the gain phase integral over the parties with
/// nonzero intensity.
fn gain_couplings(p: &ProtocolParams, intensities: &[f64]) -> PairwiseCosine {
    let m = p.modes() as f64;
    let scale = 2.0 * p.eta / m;
    let active: Vec<usize> = (0..intensities.len())
        .filter(|&i| intensities[i] > 0.0)
        .collect();
    let weights = active
        .iter()
        .map(|&a| {
            active
                .iter()
                .map(|&b| {
                    if a == b {
                        return 0.0;
                    }
                    let w = scale * (intensities[a] * intensities[b]).sqrt();
                    if a == 0 || b == 0 {
                        w * p.theta.cos()
                    } else {
                        w
                    }
                })
                .collect()
        })
        .collect();
    PairwiseCosine::new(weights).expect("square by construction")
}

/// Single-click probability when party `i` sends a phase-randomized
/// coherent state of intensity `intensities[i]`. The number of parties is
/// taken from `intensities`.
pub fn gain(p: &ProtocolParams, intensities: &[f64], quad: &QuadratureSpec) -> Result<f64> {
    p.validate_channel()?;
    if let Some(bad) = intensities.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(domain(format!(
            "intensities must be finite and >= 0, got {bad}"
        )));
    }
    let m = p.modes() as f64;
    let total = p.eta * intensities.iter().sum::<f64>();
    let integral = gain_couplings(p, intensities).integrate(quad)?;
    // e^{total/M} I - 1 + p_d, expanded to keep small gains accurate
    let bracket = (total / m).exp_m1() + (total / m).exp() * integral.excess + p.p_dark;
    Ok((common_factor(p, total) * bracket).clamp(0.0, 1.0))
}

/// Gains for every assignment of the two decoy intensities to the parties.
pub fn gain_table(p: &ProtocolParams, quad: &QuadratureSpec) -> Result<GainTable> {
    check(p)?;
    let n = p.n_parties;
    let values = (0..1usize << n)
        .into_par_iter()
        .map(|choice| gain(p, &intensities_for(choice, n, p.decoys), quad))
        .collect::<Result<Vec<_>>>()?;
    GainTable::new(n, p.decoys, values)
}

/// Probability that only one given detector clicks when party `i` sends
/// exactly `n[i]` photons.
pub fn exact_yield(p: &ProtocolParams, n: &PhotonTuple) -> Result<f64> {
    let (theta0, theta1) = p.polarization_angles();
    exact_yield_with_angles(p, n, theta0, theta1)
}

/// [`exact_yield`] with explicit polarization angles for the reference
/// party (`theta0`) and the others (`theta1`). Only the difference matters.
pub fn exact_yield_with_angles(
    p: &ProtocolParams,
    n: &PhotonTuple,
    theta0: f64,
    theta1: f64,
) -> Result<f64> {
    check(p)?;
    if n.len() != p.n_parties {
        return Err(domain(format!(
            "photon tuple {n} does not match {} parties",
            p.n_parties
        )));
    }
    if n.total() > MAX_YIELD_PHOTONS {
        return Err(Error::TupleTooLarge {
            tuple: n.clone(),
            limit: MAX_YIELD_PHOTONS,
        });
    }
    let m = p.modes() as f64;
    let keep = 1.0 - p.p_dark;
    let angles: Vec<(f64, f64)> = (0..n.len())
        .map(|i| {
            let t = if i == 0 { theta0 } else { theta1 };
            (t.cos(), t.sin())
        })
        .collect();

    // Sum over surviving photon numbers k_i <= n_i.
    let counts = n.counts();
    let mut k = vec![0u32; counts.len()];
    let mut q = 0.0;
    loop {
        let survive: f64 = counts
            .iter()
            .zip(&k)
            .map(|(&ni, &ki)| {
                binomial(ni as usize, ki as usize) * powu(p.eta, ki) * powu(1.0 - p.eta, ni - ki)
            })
            .product();
        // the all-lost branch cancels against the no-click term
        if survive > 0.0 && k.iter().any(|&ki| ki > 0) {
            q += survive * all_in_one_mode(&k, &angles) / m.powi(k.iter().sum::<u32>() as i32);
        }
        if !advance(&mut k, counts) {
            break;
        }
    }
    let lost = powu(1.0 - p.eta, n.total());
    let value = keep.powf(m - 1.0) * (q + p.p_dark * lost);
    Ok(value.clamp(0.0, 1.0))
}

/// Odometer increment of `k` within `0..=limit`; false once it wraps.
fn advance(k: &mut [u32], limit: &[u32]) -> bool {
    for (ki, &li) in k.iter_mut().zip(limit) {
        if *ki < li {
            *ki += 1;
            return true;
        }
        *ki = 0;
    }
    false
}

/// `|<all k photons in one output mode>|^2 * M^K`: the squared norm of the
/// component of `prod_i (c_i a_P^dag + s_i a_perp^dag)^{k_i} / sqrt(k_i!)`
/// where every photon exits the same spatial mode.
fn all_in_one_mode(k: &[u32], angles: &[(f64, f64)]) -> f64 {
    // a[l] accumulates prod_i C(k_i, l_i) c_i^{l_i} s_i^{k_i - l_i} over
    // splits with sum l_i = l.
    let total: u32 = k.iter().sum();
    let mut a = vec![0.0; total as usize + 1];
    a[0] = 1.0;
    let mut filled = 0usize;
    for (&ki, &(c, s)) in k.iter().zip(angles) {
        if ki == 0 {
            continue;
        }
        let ki = ki as usize;
        let mut next = vec![0.0; a.len()];
        for (l_prev, &prev) in a.iter().enumerate().take(filled + 1) {
            if prev == 0.0 {
                continue;
            }
            for l in 0..=ki {
                next[l_prev + l] +=
                    prev * binomial(ki, l) * powu(c, l as u32) * powu(s, (ki - l) as u32);
            }
        }
        a = next;
        filled += ki;
    }
    let denom: f64 = k.iter().map(|&ki| factorial(ki as usize)).product();
    let t = total as usize;
    a.iter()
        .enumerate()
        .map(|(l, &al)| al * al * factorial(l) * factorial(t - l))
        .sum::<f64>()
        / denom
}

/// Tuples whose yields enter the phase-error bound at cutoff `cutoff`.
///
/// A tuple contributes only if its total is even (each `n_i + v_i` even
/// for some even-weight `v`), so this is every even-total tuple up to the
/// cutoff.
pub fn required_tuples(n_parties: usize, cutoff: u32) -> Vec<PhotonTuple> {
    even_tuples(n_parties, cutoff)
}

/// Exact yields for `tuples`, evaluated once per permutation class of the
/// non-reference parties.
pub fn exact_yield_table(p: &ProtocolParams, tuples: &[PhotonTuple]) -> Result<YieldTable> {
    let symmetry = Symmetry::PartyPermutation;
    let classes = canonical_unique(tuples, symmetry);
    let values = classes
        .par_iter()
        .map(|t| exact_yield(p, t))
        .collect::<Result<Vec<_>>>()?;
    let mut table = YieldTable::new(p.n_parties, YieldKind::Exact, symmetry);
    for (t, v) in classes.iter().zip(values) {
        table.insert(t, v)?;
    }
    Ok(table)
}
