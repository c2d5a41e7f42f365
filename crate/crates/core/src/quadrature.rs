//! Phase averages of `exp(sum_{a<b} w_ab cos(phi_a - phi_b))` over uniform
//! phases.
//!
//! The integrand only sees phase differences, so the first phase is pinned
//! to zero and the remaining `d = n - 1` phases are integrated. Up to
//! `max_grid_dims` dimensions this uses the tensor trapezoidal rule, which
//! converges spectrally for smooth periodic integrands; the node count is
//! doubled until two successive estimates agree. Beyond that a seeded Monte
//! Carlo estimate is used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math::exp_m1_m_x;

/// Controls how phase integrals are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Trapezoidal nodes per dimension for the first estimate.
    pub nodes: usize,
    /// Node count above which the refinement gives up.
    pub max_nodes: usize,
    /// Relative agreement required between successive estimates.
    pub rel_tol: f64,
    /// Largest dimension handled by the grid rule.
    pub max_grid_dims: usize,
    /// Target relative standard error of the Monte Carlo fallback.
    pub mc_rel_stderr: f64,
    pub mc_batch: usize,
    pub mc_max_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 32,
            max_nodes: 128,
            rel_tol: 1e-10,
            max_grid_dims: 4,
            mc_rel_stderr: 1e-5,
            mc_batch: 20_000,
            mc_max_samples: 50_000_000,
            seed: 0x00C0_FFEE,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 || self.max_nodes < self.nodes {
            return Err(domain(format!(
                "need 2 <= nodes <= max_nodes, got {} and {}",
                self.nodes, self.max_nodes
            )));
        }
        if !(self.rel_tol > 0.0) || !(self.mc_rel_stderr > 0.0) {
            return Err(domain("tolerances must be positive"));
        }
        if self.mc_batch == 0 || self.mc_max_samples < self.mc_batch {
            return Err(domain(
                "Monte Carlo batch must be positive and below the sample cap",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegrationMethod {
    /// Tensor trapezoidal rule with the given nodes per dimension.
    Grid {
        nodes: usize,
    },
    MonteCarlo {
        samples: usize,
    },
    /// No free phases; the integrand is constant.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralEstimate {
    pub value: f64,
    /// `value - 1`, computed without cancellation; the integrand is
    /// `exp(X)` with `E[X] = 0`, so this is the informative part for weak
    /// couplings.
    pub excess: f64,
    /// Difference of the last two grid estimates, or the Monte Carlo
    /// standard error.
    pub error_estimate: f64,
    pub method: IntegrationMethod,
}

/// Symmetric coupling matrix of the exponent; only `a < b` entries are read.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseCosine {
    weights: Vec<Vec<f64>>,
}

impl PairwiseCosine {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        let n = weights.len();
        if weights.iter().any(|row| row.len() != n) {
            return Err(domain("coupling matrix must be square"));
        }
        Ok(Self { weights })
    }

    pub fn phases(&self) -> usize {
        self.weights.len()
    }

    /// Exponent at the given phases.
    pub fn exponent(&self, phases: &[f64]) -> f64 {
        let n = self.phases();
        let mut e = 0.0;
        for b in 1..n {
            for a in 0..b {
                e += self.weights[a][b] * (phases[a] - phases[b]).cos();
            }
        }
        e
    }

    /// Trapezoidal estimate with `nodes` points per free phase.
    pub fn grid_mean(&self, nodes: usize) -> f64 {
        1.0 + self.grid_excess(nodes)
    }

    /// Trapezoidal estimate of `E[exp(X)] - 1`.
    pub fn grid_excess(&self, nodes: usize) -> f64 {
        let n = self.phases();
        if n < 2 {
            return 0.0;
        }
        let cos_table: Vec<f64> = (0..nodes)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / nodes as f64).cos())
            .collect();
        let mut idx = vec![0usize; n];
        let sum = self.grid_recurse(1, &mut idx, 0.0, &cos_table);
        sum / (nodes as f64).powi(n as i32 - 1)
    }

    fn grid_recurse(&self, b: usize, idx: &mut [usize], partial: f64, cos_table: &[f64]) -> f64 {
        let nodes = cos_table.len();
        let mut sum = 0.0;
        for k in 0..nodes {
            let mut add = 0.0;
            for a in 0..b {
                let w = self.weights[a][b];
                if w != 0.0 {
                    add += w * cos_table[(idx[a] + nodes - k) % nodes];
                }
            }
            idx[b] = k;
            sum += if b + 1 == idx.len() {
                // the linear part averages to zero exactly on the grid
                exp_m1_m_x(partial + add)
            } else {
                self.grid_recurse(b + 1, idx, partial + add, cos_table)
            };
        }
        sum
    }

    /// Seeded Monte Carlo estimate and standard error from `samples` draws.
    pub fn monte_carlo(&self, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = MeanAccumulator::default();
        self.sample_into(&mut rng, samples, &mut acc);
        (acc.mean(), acc.std_error())
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, samples: usize, acc: &mut MeanAccumulator) {
        let n = self.phases();
        let mut phases = vec![0.0; n];
        for _ in 0..samples {
            for p in phases.iter_mut().skip(1) {
                *p = rng.random::<f64>() * std::f64::consts::TAU;
            }
            acc.push(self.exponent(&phases).exp());
        }
    }

    /// Evaluates the phase average according to `spec`.
    pub fn integrate(&self, spec: &QuadratureSpec) -> Result<IntegralEstimate> {
        spec.validate()?;
        let n = self.phases();
        let all_zero = self
            .weights
            .iter()
            .enumerate()
            .all(|(a, row)| row.iter().skip(a + 1).all(|&w| w == 0.0));
        if n < 2 || all_zero {
            return Ok(IntegralEstimate {
                value: 1.0,
                excess: 0.0,
                error_estimate: 0.0,
                method: IntegrationMethod::Trivial,
            });
        }
        if n - 1 <= spec.max_grid_dims {
            self.integrate_grid(spec)
        } else {
            self.integrate_monte_carlo(spec)
        }
    }

    fn integrate_grid(&self, spec: &QuadratureSpec) -> Result<IntegralEstimate> {
        let mut nodes = spec.nodes;
        let mut previous = self.grid_excess(nodes);
        loop {
            let next_nodes = nodes * 2;
            if next_nodes > spec.max_nodes {
                return Err(Error::Quadrature {
                    estimate: 1.0 + previous,
                    error_estimate: f64::NAN,
                });
            }
            let current = self.grid_excess(next_nodes);
            let diff = (current - previous).abs();
            // relative to the excess, which is stricter than relative to the
            // full integral
            if diff <= spec.rel_tol * current.abs() || diff == 0.0 {
                return Ok(IntegralEstimate {
                    value: 1.0 + current,
                    excess: current,
                    error_estimate: diff,
                    method: IntegrationMethod::Grid { nodes: next_nodes },
                });
            }
            if next_nodes * 2 > spec.max_nodes {
                return Err(Error::Quadrature {
                    estimate: 1.0 + current,
                    error_estimate: diff,
                });
            }
            nodes = next_nodes;
            previous = current;
        }
    }

    /// Half the sum of squared couplings: `E[X^2]` for the exponent `X`,
    /// since distinct cosine terms are uncorrelated under uniform phases.
    fn second_moment(&self) -> f64 {
        let n = self.phases();
        let mut sum = 0.0;
        for b in 1..n {
            for a in 0..b {
                sum += self.weights[a][b] * self.weights[a][b];
            }
        }
        0.5 * sum
    }

    /// `exp(X) - 1` with the second-order Taylor polynomial as a control
    /// variate; its mean `E[X^2]/2` is known exactly.
    fn controlled_batch(&self, seed: u64, stream: u64, samples: usize) -> MeanAccumulator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let n = self.phases();
        let offset = 0.5 * self.second_moment();
        let mut cos = vec![1.0; n];
        let mut sin = vec![0.0; n];
        let mut acc = MeanAccumulator::default();
        for _ in 0..samples {
            for k in 1..n {
                let (s, c) = (rng.random::<f64>() * std::f64::consts::TAU).sin_cos();
                sin[k] = s;
                cos[k] = c;
            }
            let mut x = 0.0;
            for b in 1..n {
                for a in 0..b {
                    x += self.weights[a][b] * (cos[a] * cos[b] + sin[a] * sin[b]);
                }
            }
            acc.push(exp_m1_m_x(x) - 0.5 * x * x + offset);
        }
        acc
    }

    /// Controlled Monte Carlo over the free phases. Batches use
    /// independent ChaCha streams and are merged in index order, so the
    /// result does not depend on the thread count.
    fn integrate_monte_carlo(&self, spec: &QuadratureSpec) -> Result<IntegralEstimate> {
        let mut acc = MeanAccumulator::default();
        let mut next_stream = 0u64;
        while acc.count < spec.mc_max_samples {
            let streams: Vec<u64> = (next_stream..next_stream + MC_BATCHES_PER_ROUND).collect();
            next_stream += MC_BATCHES_PER_ROUND;
            let batches: Vec<MeanAccumulator> = streams
                .par_iter()
                .map(|&stream| self.controlled_batch(spec.seed, stream, spec.mc_batch))
                .collect();
            for batch in &batches {
                acc.merge(batch);
            }
            if acc.std_error() <= spec.mc_rel_stderr * (1.0 + acc.mean()) {
                return Ok(IntegralEstimate {
                    value: 1.0 + acc.mean(),
                    excess: acc.mean(),
                    error_estimate: acc.std_error(),
                    method: IntegrationMethod::MonteCarlo { samples: acc.count },
                });
            }
        }
        Err(Error::Quadrature {
            estimate: 1.0 + acc.mean(),
            error_estimate: acc.std_error(),
        })
    }
}

const MC_BATCHES_PER_ROUND: u64 = 16;

/// Welford running mean and variance.
#[derive(Debug, Clone, Default)]
pub struct MeanAccumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Combines two partial accumulators (Chan et al.).
    pub fn merge(&mut self, other: &MeanAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let var = self.m2 / (self.count - 1) as f64;
        (var / self.count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Modified Bessel function I_0 by its power series.
    fn bessel_i0(x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= (x / 2.0) * (x / 2.0) / (k as f64 * k as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn one_dimensional_average_is_bessel_i0() {
        // mean of exp(w cos t) over a period is I_0(w)
        for w in [0.01, 0.3, 1.7] {
            let f = PairwiseCosine::new(vec![vec![0.0, w], vec![w, 0.0]]).unwrap();
            let est = f.integrate(&QuadratureSpec::default()).unwrap();
            assert!((est.value - bessel_i0(w)).abs() < 1e-14, "w = {w}");
        }
    }

    #[test]
    fn chain_factorizes_into_bessel_product() {
        // a path 0-1-2 with no 0-2 coupling factorizes after a change of variables
        let (w1, w2) = (0.4, 0.9);
        let f = PairwiseCosine::new(vec![
            vec![0.0, w1, 0.0],
            vec![w1, 0.0, w2],
            vec![0.0, w2, 0.0],
        ])
        .unwrap();
        let est = f.integrate(&QuadratureSpec::default()).unwrap();
        assert!((est.value - bessel_i0(w1) * bessel_i0(w2)).abs() < 1e-13);
        assert!(matches!(est.method, IntegrationMethod::Grid { nodes: 64 }));
    }

    #[test]
    fn excess_keeps_precision_for_weak_coupling() {
        // E[exp(w cos t)] - 1 = w^2/4 + w^4/64 + ...
        let w = 1e-6;
        let f = PairwiseCosine::new(vec![vec![0.0, w], vec![w, 0.0]]).unwrap();
        let est = f.integrate(&QuadratureSpec::default()).unwrap();
        let expected = w * w / 4.0 + w.powi(4) / 64.0;
        assert!((est.excess / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_is_trivial() {
        let f = PairwiseCosine::new(vec![vec![0.0; 3]; 3]).unwrap();
        let est = f.integrate(&QuadratureSpec::default()).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.method, IntegrationMethod::Trivial);
    }

    #[test]
    fn monte_carlo_fallback_beyond_grid_dims() {
        let w = 0.05;
        let weights = (0..6)
            .map(|a| (0..6).map(|b| if a == b { 0.0 } else { w }).collect())
            .collect();
        let f = PairwiseCosine::new(weights).unwrap();
        let spec = QuadratureSpec {
            mc_rel_stderr: 2e-6,
            ..Default::default()
        };
        let est = f.integrate(&spec).unwrap();
        assert!(matches!(est.method, IntegrationMethod::MonteCarlo { .. }));
        assert!(est.error_estimate <= spec.mc_rel_stderr * est.value);
        assert_eq!(f.integrate(&spec).unwrap(), est);
        // the same integrand on a (slow but exact) 5-dim grid
        let grid = f.grid_mean(8);
        assert!(
            (grid - est.value).abs() < 4.0 * est.error_estimate,
            "{grid} vs {est:?}"
        );
    }

    #[test]
    fn monte_carlo_is_thread_count_independent() {
        let weights = (0..7)
            .map(|a| {
                (0..7)
                    .map(|b| {
                        if a == b {
                            0.0
                        } else {
                            0.02 + 0.01 * (a + b) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let f = PairwiseCosine::new(weights).unwrap();
        let spec = QuadratureSpec::default();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = single.install(|| f.integrate(&spec).unwrap());
        let b = f.integrate(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut all = MeanAccumulator::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut left, mut right) = (MeanAccumulator::default(), MeanAccumulator::default());
        xs[..17].iter().for_each(|&x| left.push(x));
        xs[17..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        assert_eq!(left.count(), all.count());
        assert!((left.mean() - all.mean()).abs() < 1e-13);
        assert!((left.std_error() - all.std_error()).abs() < 1e-13);
    }

    #[test]
    fn non_convergence_is_reported() {
        let w = 40.0;
        let f = PairwiseCosine::new(vec![vec![0.0, w], vec![w, 0.0]]).unwrap();
        let spec = QuadratureSpec {
            nodes: 4,
            max_nodes: 8,
            ..Default::default()
        };
        assert!(matches!(f.integrate(&spec), Err(Error::Quadrature { .. })));
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let mut acc = MeanAccumulator::default();
        xs.iter().for_each(|&x| acc.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((acc.mean() - mean).abs() < 1e-14);
        assert!((acc.std_error() - (var / 5.0).sqrt()).abs() < 1e-14);
    }
}
