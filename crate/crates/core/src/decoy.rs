//! Two-intensity decoy-state upper bounds on multiparty yields.
//!
//! Every party draws its test-round intensity from `{beta0, beta1}`. The
//! rescaled gains `G_f * prod_i e^{beta_{f_i}}` are power series in the
//! intensities with the yields as coefficients; a signed combination over
//! all `2^N` intensity choices isolates the yields sharing an occupation
//! pattern, from which each yield is bounded above.

use log::warn;

use crate::error::{domain, Result};
use crate::math::{binomial, factorial, powu};
use crate::tables::{
    canonical_unique, even_tuples, GainTable, PhotonTuple, Symmetry, YieldKind, YieldTable,
};

/// Gains and intensities the bounds are computed from.
#[derive(Debug, Clone)]
pub struct DecoyContext {
    beta0: f64,
    beta1: f64,
    gains: GainTable,
}

impl DecoyContext {
    /// Takes the intensities from the table. Fails when they coincide, as
    /// every bound divides by their difference.
    pub fn new(gains: GainTable) -> Result<Self> {
        let (beta0, beta1) = gains.decoys();
        if !(beta0 > beta1 && beta1 >= 0.0) {
            return Err(domain(format!(
                "decoy intensities must satisfy beta0 > beta1 >= 0, got ({beta0}, {beta1})"
            )));
        }
        Ok(Self {
            beta0,
            beta1,
            gains,
        })
    }

    pub fn n_parties(&self) -> usize {
        self.gains.n_parties()
    }

    pub fn gains(&self) -> &GainTable {
        &self.gains
    }

    fn beta(&self, bit: usize) -> f64 {
        if bit == 0 {
            self.beta0
        } else {
            self.beta1
        }
    }

    /// `G_f * prod_i e^{beta_{f_i}}` for intensity choice `f` (bit `i` set
    /// selects `beta1` for party `i`).
    pub fn rescaled_gain(&self, f: usize) -> Result<f64> {
        let g = self.gains.get(f)?;
        let exponent: f64 = (0..self.n_parties()).map(|i| self.beta(f >> i & 1)).sum();
        Ok(g * exponent.exp())
    }

    /// Signed combination of rescaled gains selecting occupation pattern
    /// `h` (bit `i` set when party `i` holds at least one photon).
    pub fn b_of_h(&self, h: usize) -> Result<f64> {
        let n = self.n_parties();
        let mut sum = 0.0;
        for f in 0..1usize << n {
            let mut weight = if f.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..n {
                if h >> i & 1 == 0 {
                    // unoccupied parties weight their term by the other intensity
                    weight *= if f >> i & 1 == 1 {
                        self.beta0
                    } else {
                        self.beta1
                    };
                }
            }
            if weight != 0.0 {
                sum += weight * self.rescaled_gain(f)?;
            }
        }
        Ok(sum)
    }

    /// Upper bound on the yield of `n`, clipped to `[0, 1]`.
    pub fn yield_upper_bound(&self, n: &PhotonTuple) -> Result<f64> {
        let raw = self.raw_upper_bound(n)?;
        if raw < 0.0 {
            warn!("negative yield bound {raw:e} for {n}; using 0");
        }
        Ok(raw.clamp(0.0, 1.0))
    }

    /// The bound before clipping; may be negative when the gains are
    /// inconsistent with any set of yields.
    pub fn raw_upper_bound(&self, n: &PhotonTuple) -> Result<f64> {
        let parties = self.n_parties();
        if n.len() != parties {
            return Err(domain(format!(
                "photon tuple {n} does not match {parties} parties"
            )));
        }
        let (b0, b1) = (self.beta0, self.beta1);
        let h = n.occupied_mask();
        let m = h.count_ones() as usize;
        let free = parties - m;

        let prefactor: f64 = n
            .counts()
            .iter()
            .filter(|&&ni| ni > 0)
            .map(|&ni| factorial(ni as usize) / (powu(b0, ni) - powu(b1, ni)))
            .product();

        let sign = if free.is_multiple_of(2) { 1.0 } else { -1.0 };
        let main = self.b_of_h(h)? * sign / powu(b0 - b1, free as u32);

        let ratio = (b1 * b0.exp() - b0 * b1.exp() + b0 - b1) / (b0 - b1);
        let mut correction = 0.0;
        if free > 0 {
            for k in 0..=(free - 1) / 2 {
                correction += binomial(free, 2 * k + 1) * powu(ratio, 2 * k as u32 + 1);
            }
        }
        correction *= powu(b0.exp() - b1.exp(), m as u32);

        Ok(prefactor * (main + correction))
    }

    /// Bounds for every even-total tuple up to `cutoff`, one per decoy
    /// class (reference occupancy plus the multiset of nonzero counts).
    pub fn bound_table(&self, cutoff: u32) -> Result<YieldTable> {
        self.bound_table_with(cutoff, Symmetry::DecoyClass)
    }

    /// As [`bound_table`](Self::bound_table) with an explicit symmetry;
    /// `Symmetry::None` bounds every tuple individually.
    pub fn bound_table_with(&self, cutoff: u32, symmetry: Symmetry) -> Result<YieldTable> {
        if !cutoff.is_multiple_of(2) {
            return Err(domain(format!("cutoff must be even, got {cutoff}")));
        }
        let tuples = canonical_unique(&even_tuples(self.n_parties(), cutoff), symmetry);
        let mut table = YieldTable::new(self.n_parties(), YieldKind::UpperBound, symmetry);
        for t in &tuples {
            table.insert(t, self.yield_upper_bound(t)?)?;
        }
        Ok(table)
    }
}
