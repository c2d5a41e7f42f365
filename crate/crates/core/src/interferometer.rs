//! Balanced beam-splitter (BBS) network algebra.
//!
//! An `M = 2^s` port network built from `s` layers of 50:50 beam splitters
//! maps input creation operators to
//! `a_i† -> M^{-1/2} sum_k f(k, i) d_k†` with `f(k, i) = (-1)^{popcount(k & i)}`.
//! Party `A_i` always feeds input port `i`.

use crate::error::{domain, Error, Result};

/// Largest supported layer count (`M = 256`).
pub const MAX_LAYERS: u32 = 8;

/// Sign pattern and normalization of the BBS network unitary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeTransform {
    layers: u32,
}

impl ModeTransform {
    pub fn layers(&self) -> u32 {
        self.layers
    }

    pub fn modes(&self) -> usize {
        1usize << self.layers
    }

    /// `1 / sqrt(M)`.
    pub fn normalization(&self) -> f64 {
        (self.modes() as f64).sqrt().recip()
    }

    /// Sign coefficient `f(k, i)`, computed on demand from the bit overlap.
    #[inline]
    pub fn sign(&self, k: usize, i: usize) -> i32 {
        sign(k, i)
    }

    /// Checked variant of [`ModeTransform::sign`].
    pub fn coefficient(&self, k: usize, i: usize) -> Result<i32> {
        let m = self.modes();
        for idx in [k, i] {
            if idx >= m {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    limit: m,
                });
            }
        }
        Ok(sign(k, i))
    }

    /// Dense closed-form sign matrix, `out[k][i] = f(k, i)`.
    pub fn dense_signs(&self) -> Vec<Vec<i32>> {
        let m = self.modes();
        (0..m)
            .map(|k| (0..m).map(|i| sign(k, i)).collect())
            .collect()
    }

    /// Dense sign matrix obtained by pushing every input mode through the
    /// network one layer at a time, `out[k][i]` being the coefficient of
    /// output `k` in the image of input `i` (unnormalized).
    ///
    /// In layer `r` mode `i` (bit `r` clear) is mixed with `i + 2^r`:
    /// `a_i -> a_i + a_{i+2^r}`, `a_{i+2^r} -> a_i - a_{i+2^r}`.
    pub fn layered_signs(&self) -> Vec<Vec<i32>> {
        let m = self.modes();
        // rows[i] = expansion of input i over the modes of the current layer
        let mut rows: Vec<Vec<i32>> = (0..m)
            .map(|i| (0..m).map(|k| i32::from(k == i)).collect())
            .collect();
        for r in 0..self.layers {
            let stride = 1usize << r;
            for row in rows.iter_mut() {
                for lo in (0..m).filter(|i| i & stride == 0) {
                    let hi = lo + stride;
                    let (a, b) = (row[lo], row[hi]);
                    row[lo] = a + b;
                    row[hi] = a - b;
                }
            }
        }
        // transpose to [output][input]
        (0..m)
            .map(|k| (0..m).map(|i| rows[i][k]).collect())
            .collect()
    }

    /// Checks that the layered construction reproduces the closed form.
    pub fn self_test(&self) -> Result<()> {
        if self.layered_signs() == self.dense_signs() {
            Ok(())
        } else {
            Err(Error::Oracle(format!(
                "layered BBS construction disagrees with closed form for s = {}",
                self.layers
            )))
        }
    }
}

#[inline]
fn sign(k: usize, i: usize) -> i32 {
    if (k & i).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

fn check_layers(s: u32) -> Result<()> {
    if s == 0 || s > MAX_LAYERS {
        return Err(domain(format!(
            "layer count must lie in 1..={MAX_LAYERS}, got {s}"
        )));
    }
    Ok(())
}

/// Builds the transform of an `s`-layer network.
pub fn build_transform(s: u32) -> Result<ModeTransform> {
    check_layers(s)?;
    Ok(ModeTransform { layers: s })
}

/// Literal row sum `sum_i f(k, i)`; equals `M` for `k = 0` and `0` otherwise.
pub fn row_sum(t: &ModeTransform, k: usize) -> Result<i64> {
    let m = t.modes();
    if k >= m {
        return Err(Error::IndexOutOfRange { index: k, limit: m });
    }
    Ok((0..m).map(|i| i64::from(t.sign(k, i))).sum())
}

/// `sum_k f(k, i) f(k, i')`, equal to `M` when `i = i'` and `0` otherwise.
pub fn column_overlap(t: &ModeTransform, i: usize, i_prime: usize) -> Result<i64> {
    let m = t.modes();
    for idx in [i, i_prime] {
        if idx >= m {
            return Err(Error::IndexOutOfRange {
                index: idx,
                limit: m,
            });
        }
    }
    Ok((0..m)
        .map(|k| i64::from(t.sign(k, i) * t.sign(k, i_prime)))
        .sum())
}

/// Number of beam splitters, `(M/2) log2 M = s 2^(s-1)`.
pub fn beamsplitter_count(s: u32) -> Result<u64> {
    check_layers(s)?;
    Ok(u64::from(s) << (s - 1))
}
