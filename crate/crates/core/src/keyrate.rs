//! Asymptotic conference key rate and the repeaterless benchmarks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_stats::{exact_yield_table, gain_table, pr_click_kg, qber, required_tuples};
use crate::decoy::DecoyContext;
use crate::error::{domain, Result};
use crate::params::ProtocolParams;
use crate::phase_error::phase_error_bound;
use crate::quadrature::QuadratureSpec;
use crate::tables::YieldTable;

/// `h(x) = -x log2 x - (1 - x) log2(1 - x)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!(
            "entropy argument must lie in [0, 1], got {x}"
        )));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Capacity of a pure-loss link of transmittance `eta^2`:
/// `-log2(1 - eta^2)`.
pub fn multicast_bound_star(eta: f64) -> Result<f64> {
    let t = eta * eta;
    if !(t > 0.0 && t < 1.0) {
        return Err(domain(format!("need 0 < eta^2 < 1, got {t}")));
    }
    Ok(-(-t).ln_1p() / std::f64::consts::LN_2)
}

/// Benchmark for a fully connected network of `n_parties`:
/// `(N - 1)` times [`multicast_bound_star`].
pub fn multicast_bound_full(eta: f64, n_parties: usize) -> Result<f64> {
    if n_parties < 2 {
        return Err(domain(format!("need at least 2 parties, got {n_parties}")));
    }
    Ok((n_parties - 1) as f64 * multicast_bound_star(eta)?)
}

/// Where the yields entering the phase-error bound come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YieldMode {
    /// The channel model's yields, as if known exactly.
    ExactYields,
    /// Upper bounds from two decoy intensities.
    TwoDecoy,
}

impl std::str::FromStr for YieldMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-yields" => Ok(Self::ExactYields),
            "two-decoy" => Ok(Self::TwoDecoy),
            other => Err(domain(format!(
                "unknown yield mode {other:?}; expected exact-yields or two-decoy"
            ))),
        }
    }
}

impl std::fmt::Display for YieldMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ExactYields => "exact-yields",
            Self::TwoDecoy => "two-decoy",
        })
    }
}

/// Key rate and the statistics it was assembled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRatePoint {
    /// Party-to-party loss, `-20 log10(eta)`.
    pub loss_db: f64,
    pub eta: f64,
    pub alpha_opt: f64,
    pub pr_kg: f64,
    pub q_x: f64,
    pub q_z_bar: f64,
    /// Key bits per round.
    pub rate: f64,
    pub r1: f64,
    pub r2: f64,
    /// The phase-error bound reached 1/2.
    pub clamped: bool,
    /// No amplitude on the search grid gave a positive rate.
    pub no_key: bool,
}

/// Everything about a rate evaluation that does not depend on `alpha`.
#[derive(Debug, Clone)]
pub struct RateModel {
    params: ProtocolParams,
    yields: YieldTable,
}

impl RateModel {
    /// Builds the yield table for `p` (its `alpha` is ignored).
    pub fn new(p: &ProtocolParams, mode: YieldMode, quad: &QuadratureSpec) -> Result<Self> {
        p.validate()?;
        let yields = match mode {
            YieldMode::ExactYields => {
                exact_yield_table(p, &required_tuples(p.n_parties, p.cutoff))?
            }
            YieldMode::TwoDecoy => {
                DecoyContext::new(gain_table(p, quad)?)?.bound_table(p.cutoff)?
            }
        };
        Ok(Self::with_yields(p, yields))
    }

    /// Uses a caller-supplied yield table.
    pub fn with_yields(p: &ProtocolParams, yields: YieldTable) -> Self {
        Self {
            params: p.clone(),
            yields,
        }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn yields(&self) -> &YieldTable {
        &self.yields
    }

    /// Key rate at amplitude `alpha`.
    pub fn evaluate(&self, alpha: f64) -> Result<KeyRatePoint> {
        let p = self.params.clone().with_alpha(alpha);
        let pr_kg = pr_click_kg(&p)?;
        let m = p.modes() as f64;
        let (eta, n) = (p.eta, p.n_parties);
        let r1 = multicast_bound_star(eta).unwrap_or(f64::INFINITY);
        let r2 = multicast_bound_full(eta, n).unwrap_or(f64::INFINITY);
        let loss_db = -20.0 * eta.log10();
        if pr_kg <= 0.0 {
            // nothing clicks: no key, and nothing to bound
            return Ok(KeyRatePoint {
                loss_db,
                eta,
                alpha_opt: alpha,
                pr_kg,
                q_x: 0.5,
                q_z_bar: 0.5,
                rate: 0.0,
                r1,
                r2,
                clamped: true,
                no_key: false,
            });
        }
        let q_x = qber(&p)?;
        let bound = phase_error_bound(&p, &self.yields, pr_kg)?;
        Ok(KeyRatePoint {
            loss_db,
            eta,
            alpha_opt: alpha,
            pr_kg,
            q_x,
            q_z_bar: bound.value,
            rate: assemble_rate(m, pr_kg, q_x, bound.value, bound.clamped)?,
            r1,
            r2,
            clamped: bound.clamped,
            no_key: false,
        })
    }
}

/// `max(0, M P (1 - h(Q_Z) - h(Q_X)))`, or 0 when the phase-error bound
/// was clipped.
pub fn assemble_rate(modes: f64, pr_kg: f64, q_x: f64, q_z: f64, clamped: bool) -> Result<f64> {
    if clamped {
        return Ok(0.0);
    }
    let r = modes * pr_kg * (1.0 - binary_entropy(q_z)? - binary_entropy(q_x)?);
    Ok(r.max(0.0))
}

/// Key rate of `p` at its own amplitude.
pub fn key_rate_symmetric(
    p: &ProtocolParams,
    mode: YieldMode,
    quad: &QuadratureSpec,
) -> Result<KeyRatePoint> {
    RateModel::new(p, mode, quad)?.evaluate(p.alpha)
}

/// Amplitude search: a grid followed by golden-section refinement around
/// the best grid point.
///
/// The grid is geometric by default: optimal amplitudes range over more
/// than a decade (they shrink with the number of parties), and a uniform
/// grid would skip the whole optimum region for larger networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub points: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Tolerance on the refined amplitude, absolute and relative.
    pub tolerance: f64,
    pub log_spaced: bool,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            points: 40,
            alpha_min: 1e-3,
            alpha_max: 1.2,
            tolerance: 1e-3,
            log_spaced: true,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(domain("alpha search needs at least 2 grid points"));
        }
        if !(self.alpha_min > 0.0 && self.alpha_max > self.alpha_min && self.alpha_max.is_finite())
        {
            return Err(domain(format!(
                "alpha range must satisfy 0 < min < max, got ({}, {})",
                self.alpha_min, self.alpha_max
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(domain("alpha tolerance must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let last = (self.points - 1) as f64;
        let mut grid: Vec<f64> = if self.log_spaced {
            let ratio = (self.alpha_max / self.alpha_min).ln() / last;
            (0..self.points)
                .map(|i| self.alpha_min * (ratio * i as f64).exp())
                .collect()
        } else {
            let step = (self.alpha_max - self.alpha_min) / last;
            (0..self.points)
                .map(|i| self.alpha_min + step * i as f64)
                .collect()
        };
        grid[self.points - 1] = self.alpha_max;
        grid
    }
}

/// Result of maximizing a function of `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub alpha: f64,
    pub value: f64,
    /// Every grid value was zero (or below).
    pub no_key: bool,
}

/// Maximizes `f` over the search range. `f` must be deterministic; grid
/// points are evaluated concurrently, and the outcome does not depend on
/// evaluation order.
pub fn maximize<F>(f: F, search: &SearchSpec) -> Result<SearchOutcome>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    search.validate()?;
    let grid = search.grid();
    let values = grid.par_iter().map(|&a| f(a)).collect::<Result<Vec<_>>>()?;
    // first index wins ties
    let best = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best });
    if !(values[best] > 0.0) {
        return Ok(SearchOutcome {
            alpha: grid[0],
            value: 0.0,
            no_key: true,
        });
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (alpha, value) = golden_section(&f, lo, hi, search.tolerance)?;
    Ok(if value > values[best] {
        SearchOutcome {
            alpha,
            value,
            no_key: false,
        }
    } else {
        SearchOutcome {
            alpha: grid[best],
            value: values[best],
            no_key: false,
        }
    })
}

/// Golden-section maximization on `[lo, hi]` until the bracket is below
/// `tol`, both absolutely and relative to its position.
fn golden_section<F>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol * lo.min(1.0) {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Maximizes the key rate over the signal amplitude.
pub fn optimize_alpha(
    p: &ProtocolParams,
    mode: YieldMode,
    quad: &QuadratureSpec,
    search: &SearchSpec,
) -> Result<(f64, KeyRatePoint)> {
    optimize_model(&RateModel::new(p, mode, quad)?, search)
}

/// As [`optimize_alpha`] with a prepared model.
pub fn optimize_model(model: &RateModel, search: &SearchSpec) -> Result<(f64, KeyRatePoint)> {
    let outcome = maximize(|a| Ok(model.evaluate(a)?.rate), search)?;
    let mut point = model.evaluate(outcome.alpha)?;
    point.no_key = outcome.no_key;
    if outcome.no_key {
        point.rate = 0.0;
    }
    Ok((outcome.alpha, point))
}
