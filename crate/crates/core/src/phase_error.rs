//! Upper bound on the phase-error rate from a table of yields.
//!
//! The signal states decompose into even and odd "cat" components. For
//! every even-weight parity pattern `v`, the photon-number tuples whose
//! parities match `v` contribute `prod_i c(n_i, v_i) sqrt(Y_n)`; tuples
//! above the cutoff are bounded by `Y = 1`, which is the residual `Delta`.

use crate::error::{domain, Error, Result};
use crate::math::factorial;
use crate::params::ProtocolParams;
use crate::tables::{even_tuples, PhotonTuple, YieldTable};

/// Largest cutoff supported by the photon-number tables.
pub const MAX_CUTOFF: u32 = 20;

/// Fock coefficients of the even (`l = 0`) and odd (`l = 1`) cat components
/// of a coherent state of amplitude `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatCoefficients {
    alpha: f64,
}

impl CatCoefficients {
    pub fn new(alpha: f64) -> Self {
        Self { alpha }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `e^{-alpha^2/2} alpha^n / sqrt(n!)` when `n + l` is even, else 0.
    pub fn c(&self, n: u32, l: u32) -> f64 {
        cat_coefficient(self.alpha, n, l)
    }

    /// `sum_n c(n, l)`, summed until the tail is below `1e-16`.
    pub fn series_sum(&self, l: u32) -> f64 {
        let a = self.alpha;
        let mut sum = 0.0;
        // term_n = alpha^n / sqrt(n!), updated incrementally
        let mut term = 1.0;
        let mut n = 0u32;
        loop {
            if (n + l).is_multiple_of(2) {
                sum += term;
            }
            n += 1;
            term *= a / f64::from(n).sqrt();
            // past the peak, successive ratios are below 1/2 once n > 4 a^2
            if f64::from(n) > 4.0 * a * a + 2.0 && term < 1e-17 * sum.max(1e-300) {
                break;
            }
            if term == 0.0 {
                break;
            }
        }
        (-a * a / 2.0).exp() * sum
    }
}

pub fn cat_coefficient(alpha: f64, n: u32, l: u32) -> f64 {
    if !(n + l).is_multiple_of(2) {
        return 0.0;
    }
    if n == 0 {
        return (-alpha * alpha / 2.0).exp();
    }
    let log = -alpha * alpha / 2.0 + f64::from(n) * alpha.ln() - 0.5 * ln_factorial(n);
    log.exp()
}

fn ln_factorial(n: u32) -> f64 {
    if (n as usize) <= crate::math::MAX_FACTORIAL {
        factorial(n as usize).ln()
    } else {
        (1..=n).map(|k| f64::from(k).ln()).sum()
    }
}

/// Bit patterns over `N` parties with even Hamming weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParitySet {
    n_parties: usize,
}

impl ParitySet {
    pub fn new(n_parties: usize) -> Self {
        Self { n_parties }
    }

    pub fn len(&self) -> usize {
        1 << self.n_parties.saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        (0..1usize << self.n_parties).filter(|v| v.count_ones() % 2 == 0)
    }
}

fn bit(v: usize, i: usize) -> u32 {
    (v >> i & 1) as u32
}

/// `prod_i c(n_i, v_i)`.
pub fn coefficient_product(cat: &CatCoefficients, n: &PhotonTuple, v: usize) -> f64 {
    n.counts()
        .iter()
        .enumerate()
        .map(|(i, &ni)| cat.c(ni, bit(v, i)))
        .product()
}

/// Parity pattern of a tuple: bit `i` is `n_i mod 2`. This is the only `v`
/// for which the tuple's coefficient is nonzero.
fn parity_of(n: &PhotonTuple) -> usize {
    n.counts()
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &ni)| acc | ((ni as usize & 1) << i))
}

/// Sum of `prod_i c(n_i, v_i)` over all tuples with total above `cutoff`.
pub fn delta_residual(alpha: f64, n_parties: usize, v: usize, cutoff: u32) -> f64 {
    let cat = CatCoefficients::new(alpha);
    let full: f64 = (0..n_parties).map(|i| cat.series_sum(bit(v, i))).product();
    let truncated: f64 = even_tuples(n_parties, cutoff)
        .iter()
        .filter(|t| parity_of(t) == v)
        .map(|t| coefficient_product(&cat, t, v))
        .sum();
    (full - truncated).max(0.0)
}

/// Phase-error bound clipped to `[0, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorBound {
    pub value: f64,
    /// The bound before clipping.
    pub raw: f64,
    /// Set when the raw bound reached 1/2; no key can be certified then.
    pub clamped: bool,
}

/// Bounds the phase-error rate from `yields` (exact values or upper
/// bounds) and the key-generation click probability.
///
/// Every even-total tuple up to `p.cutoff` must be present in `yields`;
/// a missing one is an error rather than silently treated as 1.
pub fn phase_error_bound(
    p: &ProtocolParams,
    yields: &YieldTable,
    pr_kg: f64,
) -> Result<PhaseErrorBound> {
    phase_error_bound_at(p, yields, pr_kg, None)
}

/// As [`phase_error_bound`], for the statistics of one detector. The
/// symmetric model makes every detector equivalent, so `detector` is only
/// range-checked.
pub fn phase_error_bound_at(
    p: &ProtocolParams,
    yields: &YieldTable,
    pr_kg: f64,
    detector: Option<usize>,
) -> Result<PhaseErrorBound> {
    if let Some(j) = detector {
        if j >= p.modes() {
            return Err(Error::IndexOutOfRange {
                index: j,
                limit: p.modes(),
            });
        }
    }
    if !(pr_kg > 0.0) {
        return Err(domain(format!(
            "click probability must be positive, got {pr_kg}"
        )));
    }
    if !p.cutoff.is_multiple_of(2) || p.cutoff > MAX_CUTOFF {
        return Err(domain(format!(
            "cutoff must be even and at most {MAX_CUTOFF}, got {}",
            p.cutoff
        )));
    }
    let n = p.n_parties;
    if yields.n_parties() != n {
        return Err(domain(format!(
            "yield table covers {} parties, expected {n}",
            yields.n_parties()
        )));
    }
    let cat = CatCoefficients::new(p.alpha);
    let mut sums = vec![0.0; 1 << n];
    for t in even_tuples(n, p.cutoff) {
        let v = parity_of(&t);
        let c = coefficient_product(&cat, &t, v);
        let y = yields.require(&t)?;
        if c != 0.0 {
            sums[v] += c * y.sqrt();
        }
    }
    let raw = ParitySet::new(n)
        .iter()
        .map(|v| {
            let s = sums[v] + delta_residual(p.alpha, n, v, p.cutoff);
            s * s
        })
        .sum::<f64>()
        / pr_kg;
    let clamped = raw >= 0.5;
    Ok(PhaseErrorBound {
        value: raw.clamp(0.0, 0.5),
        raw,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::{Symmetry, YieldKind};

    #[test]
    fn coefficient_examples() {
        let a: f64 = 0.7;
        assert_eq!(cat_coefficient(a, 0, 0), (-a * a / 2.0).exp());
        assert_eq!(cat_coefficient(a, 1, 0), 0.0);
        assert_eq!(cat_coefficient(a, 0, 1), 0.0);
        let expected = (-0.125f64).exp() * 0.25 / 2f64.sqrt();
        assert!((cat_coefficient(0.5, 2, 0) - expected).abs() < 1e-16);
        assert!(
            (cat_coefficient(0.5, 3, 1) - (-0.125f64).exp() * 0.125 / 6f64.sqrt()).abs() < 1e-16
        );
    }

    #[test]
    fn cat_components_partition_the_norm() {
        for a in [0.0, 0.1, 0.5, 1.2, 2.0] {
            let norm: f64 = (0..=60)
                .map(|n| cat_coefficient(a, n, 0).powi(2) + cat_coefficient(a, n, 1).powi(2))
                .sum();
            assert!((norm - 1.0).abs() < 1e-12, "alpha = {a}");
        }
    }

    #[test]
    fn series_sum_matches_explicit_sum() {
        for a in [0.0, 0.3, 0.8, 1.5] {
            let cat = CatCoefficients::new(a);
            for l in 0..2 {
                let explicit: f64 = (0..80).map(|n| cat.c(n, l)).sum();
                assert!((cat.series_sum(l) - explicit).abs() < 1e-15 * explicit.max(1.0) * 4.0);
            }
        }
    }

    #[test]
    fn parity_set() {
        let v: Vec<usize> = ParitySet::new(2).iter().collect();
        assert_eq!(v, vec![0b00, 0b11]);
        for n in 1..=6 {
            let set = ParitySet::new(n);
            assert_eq!(set.iter().count(), set.len());
            assert_eq!(set.len(), 1 << (n - 1));
        }
    }

    #[test]
    fn coefficient_sparsity() {
        // over even-weight v, a coefficient is nonzero exactly when every
        // n_i + v_i is even; this forces an even total, so restricting the
        // bound to even-total tuples and v = n mod 2 skips only zeros
        let cat = CatCoefficients::new(0.6);
        for n_parties in 2..=4 {
            let mut counts = vec![0u32; n_parties];
            loop {
                let t = PhotonTuple::new(counts.clone());
                for v in ParitySet::new(n_parties).iter() {
                    let c = coefficient_product(&cat, &t, v);
                    let all_even =
                        (0..n_parties).all(|i| (counts[i] + bit(v, i)).is_multiple_of(2));
                    assert_eq!(c != 0.0, all_even, "{t} v={v:b}");
                    if all_even {
                        assert_eq!(t.total() % 2, 0);
                        assert_eq!(parity_of(&t), v);
                    }
                }
                // odometer over 0..=3 per party
                let mut i = 0;
                while i < n_parties && counts[i] == 3 {
                    counts[i] = 0;
                    i += 1;
                }
                if i == n_parties {
                    break;
                }
                counts[i] += 1;
            }
        }
    }

    #[test]
    fn delta_residual_properties() {
        for v in ParitySet::new(3).iter() {
            assert_eq!(delta_residual(0.0, 3, v, 4), 0.0);
            for a in [0.2, 0.5, 0.9] {
                let d4 = delta_residual(a, 3, v, 4);
                let d6 = delta_residual(a, 3, v, 6);
                assert!(d6 <= d4);
            }
        }
    }

    #[test]
    fn delta_residual_brute_force() {
        let a = 0.8;
        let cat = CatCoefficients::new(a);
        let mut expected = 0.0;
        for n0 in 0..=40u32 {
            for n1 in 0..=(40 - n0) {
                if n0 + n1 >= 6 {
                    expected += cat.c(n0, 0) * cat.c(n1, 0);
                }
            }
        }
        assert!((delta_residual(a, 2, 0b00, 4) - expected).abs() < 1e-14);
    }

    fn table_with(n: usize, cutoff: u32, value: f64) -> YieldTable {
        let mut t = YieldTable::new(n, YieldKind::UpperBound, Symmetry::None);
        for tuple in even_tuples(n, cutoff) {
            t.insert(&tuple, value).unwrap();
        }
        t
    }

    #[test]
    fn zero_amplitude_bound_is_vacuum_ratio() {
        let p = ProtocolParams::new(3).with_alpha(0.0);
        let yields = table_with(3, 4, 1e-7);
        let b = phase_error_bound(&p, &yields, 1e-7).unwrap();
        assert!((b.raw - 1.0).abs() < 1e-12);
        assert!(b.clamped);
        assert_eq!(b.value, 0.5);
    }

    #[test]
    fn monotone_in_each_yield() {
        let p = ProtocolParams::new(3).with_alpha(0.3);
        let base = table_with(3, 4, 1e-3);
        let reference = phase_error_bound(&p, &base, 1e-2).unwrap().raw;
        for t in even_tuples(3, 4) {
            let mut bumped = base.clone();
            bumped.insert(&t, 2e-3).unwrap();
            assert!(phase_error_bound(&p, &bumped, 1e-2).unwrap().raw >= reference);
        }
    }

    #[test]
    fn missing_tuple_is_an_error() {
        let p = ProtocolParams::new(3).with_alpha(0.3);
        let partial = table_with(3, 2, 1e-3);
        match phase_error_bound(&p, &partial, 1e-2) {
            Err(Error::MissingTuple(t)) => assert_eq!(t.total(), 4),
            other => panic!("expected a missing tuple, got {other:?}"),
        }
    }

    #[test]
    fn argument_checks() {
        let p = ProtocolParams::new(2).with_alpha(0.3);
        let yields = table_with(2, 4, 1e-3);
        assert!(phase_error_bound(&p, &yields, 0.0).is_err());
        assert!(phase_error_bound_at(&p, &yields, 1e-2, Some(2)).is_err());
        assert!(phase_error_bound_at(&p, &yields, 1e-2, Some(1)).is_ok());
        assert!(phase_error_bound(&p, &table_with(3, 4, 1e-3), 1e-2).is_err());
    }
}
