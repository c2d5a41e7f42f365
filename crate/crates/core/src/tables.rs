//! Gain and yield tables.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Photon numbers `(n_0, ..., n_{N-1})` sent by the parties.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhotonTuple(pub Vec<u32>);

impl PhotonTuple {
    pub fn new(counts: impl Into<Vec<u32>>) -> Self {
        Self(counts.into())
    }

    pub fn vacuum(n_parties: usize) -> Self {
        Self(vec![0; n_parties])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    /// Bit mask with bit `i` set iff party `i` sends at least one photon.
    pub fn occupied_mask(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }
}

impl fmt::Display for PhotonTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

impl From<&[u32]> for PhotonTuple {
    fn from(v: &[u32]) -> Self {
        Self(v.to_vec())
    }
}

impl<const K: usize> From<[u32; K]> for PhotonTuple {
    fn from(v: [u32; K]) -> Self {
        Self(v.to_vec())
    }
}

/// Which tuple relabelings a table treats as equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    /// Every tuple is its own class.
    None,
    /// Parties `1..N-1` are interchangeable (symmetric channel). Canonical
    /// form sorts their counts in descending order.
    PartyPermutation,
    /// Classes of the two-decoy bound: the bound depends only on whether the
    /// reference party is occupied and on the multiset of nonzero counts.
    /// Canonical form lists the nonzero counts in ascending order, starting
    /// at party 0 when it is occupied and at party 1 otherwise.
    DecoyClass,
}

impl Symmetry {
    pub fn canonicalize(&self, tuple: &PhotonTuple) -> PhotonTuple {
        let counts = tuple.counts();
        match self {
            Symmetry::None => tuple.clone(),
            Symmetry::PartyPermutation => {
                let mut out = counts.to_vec();
                if out.len() > 1 {
                    out[1..].sort_unstable_by(|a, b| b.cmp(a));
                }
                PhotonTuple(out)
            }
            Symmetry::DecoyClass => {
                let mut nonzero: Vec<u32> = counts.iter().copied().filter(|&n| n > 0).collect();
                nonzero.sort_unstable();
                let mut out = vec![0; counts.len()];
                let start = usize::from(counts.first().is_some_and(|&n| n == 0));
                for (slot, n) in out[start..].iter_mut().zip(nonzero) {
                    *slot = n;
                }
                PhotonTuple(out)
            }
        }
    }
}

/// Whether the stored yields are exact model values or upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YieldKind {
    Exact,
    UpperBound,
}

/// Yields (or yield bounds) indexed by photon tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldTable {
    n_parties: usize,
    kind: YieldKind,
    symmetry: Symmetry,
    entries: BTreeMap<PhotonTuple, f64>,
}

impl YieldTable {
    pub fn new(n_parties: usize, kind: YieldKind, symmetry: Symmetry) -> Self {
        Self {
            n_parties,
            kind,
            symmetry,
            entries: BTreeMap::new(),
        }
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn kind(&self) -> YieldKind {
        self.kind
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores a value under the canonical form of `tuple`.
    pub fn insert(&mut self, tuple: &PhotonTuple, value: f64) -> Result<()> {
        if tuple.len() != self.n_parties {
            return Err(domain(format!(
                "tuple {tuple} does not have {} entries",
                self.n_parties
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(domain(format!(
                "yield {value} for {tuple} is outside [0, 1]"
            )));
        }
        self.entries
            .insert(self.symmetry.canonicalize(tuple), value);
        Ok(())
    }

    pub fn get(&self, tuple: &PhotonTuple) -> Option<f64> {
        if tuple.len() != self.n_parties {
            return None;
        }
        self.entries
            .get(&self.symmetry.canonicalize(tuple))
            .copied()
    }

    /// Like [`YieldTable::get`] but reports the missing tuple.
    pub fn require(&self, tuple: &PhotonTuple) -> Result<f64> {
        self.get(tuple)
            .ok_or_else(|| Error::MissingTuple(tuple.clone()))
    }

    pub fn contains(&self, tuple: &PhotonTuple) -> bool {
        self.get(tuple).is_some()
    }

    /// Canonical tuples in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&PhotonTuple, f64)> {
        self.entries.iter().map(|(t, &v)| (t, v))
    }
}

/// Gains `G_f` for every intensity choice `f in {0,1}^N`; bit `i` of the
/// index selects `beta_{f_i}` for party `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTable {
    n_parties: usize,
    decoys: (f64, f64),
    values: Vec<f64>,
}

impl GainTable {
    pub fn new(n_parties: usize, decoys: (f64, f64), values: Vec<f64>) -> Result<Self> {
        if values.len() != 1 << n_parties {
            return Err(domain(format!(
                "gain table for {n_parties} parties needs {} entries, got {}",
                1usize << n_parties,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(domain(format!("gain {bad} is outside [0, 1]")));
        }
        Ok(Self {
            n_parties,
            decoys,
            values,
        })
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn decoys(&self) -> (f64, f64) {
        self.decoys
    }

    pub fn get(&self, choice: usize) -> Result<f64> {
        self.values
            .get(choice)
            .copied()
            .ok_or(Error::MissingGain(choice))
    }

    /// Intensity sent by each party for choice `f`.
    pub fn intensities(&self, choice: usize) -> Vec<f64> {
        intensities_for(choice, self.n_parties, self.decoys)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn intensities_for(choice: usize, n_parties: usize, decoys: (f64, f64)) -> Vec<f64> {
    (0..n_parties)
        .map(|i| {
            if choice >> i & 1 == 0 {
                decoys.0
            } else {
                decoys.1
            }
        })
        .collect()
}

/// All tuples of `n_parties` counts with an even total not above `cutoff`,
/// ordered by total and then lexicographically (descending).
pub fn even_tuples(n_parties: usize, cutoff: u32) -> Vec<PhotonTuple> {
    let mut out = Vec::new();
    for total in (0..=cutoff).step_by(2) {
        let mut current = vec![0; n_parties];
        compositions(total, 0, &mut current, &mut out);
    }
    out
}

fn compositions(remaining: u32, idx: usize, current: &mut Vec<u32>, out: &mut Vec<PhotonTuple>) {
    if idx + 1 == current.len() {
        current[idx] = remaining;
        out.push(PhotonTuple(current.clone()));
        return;
    }
    for n in (0..=remaining).rev() {
        current[idx] = n;
        compositions(remaining - n, idx + 1, current, out);
    }
}

/// Deduplicates `tuples` up to `symmetry`, keeping first occurrences and
/// returning canonical forms.
pub fn canonical_unique(tuples: &[PhotonTuple], symmetry: Symmetry) -> Vec<PhotonTuple> {
    let mut seen = std::collections::BTreeSet::new();
    tuples
        .iter()
        .map(|t| symmetry.canonicalize(t))
        .filter(|c| seen.insert(c.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[u32]) -> PhotonTuple {
        PhotonTuple::from(v)
    }

    #[test]
    fn party_permutation_canonical_form() {
        let s = Symmetry::PartyPermutation;
        assert_eq!(s.canonicalize(&t(&[0, 1, 3])), t(&[0, 3, 1]));
        assert_eq!(s.canonicalize(&t(&[3, 0, 1])), t(&[3, 1, 0]));
        assert_ne!(
            s.canonicalize(&t(&[3, 1, 0])),
            s.canonicalize(&t(&[1, 3, 0]))
        );
    }

    #[test]
    fn decoy_class_canonical_form() {
        let s = Symmetry::DecoyClass;
        assert_eq!(s.canonicalize(&t(&[3, 1, 0])), t(&[1, 3, 0]));
        assert_eq!(s.canonicalize(&t(&[2, 1, 1])), t(&[1, 1, 2]));
        assert_eq!(s.canonicalize(&t(&[0, 3, 1])), t(&[0, 1, 3]));
        assert_eq!(s.canonicalize(&t(&[0, 0, 2, 0, 0])), t(&[0, 2, 0, 0, 0]));
        assert_eq!(s.canonicalize(&t(&[0, 1, 1, 1, 1])), t(&[0, 1, 1, 1, 1]));
    }

    #[test]
    fn even_tuple_counts() {
        // compositions of 0, 2, 4 into 3 parts: 1 + 6 + 15
        assert_eq!(even_tuples(3, 4).len(), 22);
        assert_eq!(even_tuples(2, 0), vec![t(&[0, 0])]);
        assert!(even_tuples(4, 4).iter().all(|x| x.total() % 2 == 0));
    }

    #[test]
    fn canonical_class_counts() {
        let all3 = even_tuples(3, 4);
        assert_eq!(
            canonical_unique(&all3, Symmetry::PartyPermutation).len(),
            14
        );
        assert_eq!(canonical_unique(&all3, Symmetry::DecoyClass).len(), 12);
        assert_eq!(
            canonical_unique(&even_tuples(4, 4), Symmetry::DecoyClass).len(),
            14
        );
        assert_eq!(
            canonical_unique(&even_tuples(5, 4), Symmetry::DecoyClass).len(),
            15
        );
    }

    #[test]
    fn table_lookup_goes_through_canonical_form() {
        let mut table = YieldTable::new(3, YieldKind::Exact, Symmetry::PartyPermutation);
        table.insert(&t(&[0, 1, 1]), 0.25).unwrap();
        table.insert(&t(&[1, 0, 1]), 0.5).unwrap();
        assert_eq!(table.get(&t(&[1, 1, 0])), Some(0.5));
        assert_eq!(table.len(), 2);
        assert!(matches!(
            table.require(&t(&[2, 0, 0])),
            Err(Error::MissingTuple(_))
        ));
        assert!(table.insert(&t(&[0, 0, 0]), 1.5).is_err());
        assert!(table.insert(&t(&[0, 0]), 0.5).is_err());
    }

    #[test]
    fn gain_table_shape() {
        assert!(GainTable::new(2, (0.5, 0.0), vec![0.1; 3]).is_err());
        let g = GainTable::new(2, (0.5, 0.0), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(g.get(2).unwrap(), 0.3);
        assert_eq!(g.intensities(2), vec![0.5, 0.0]);
        assert!(g.get(4).is_err());
    }
}
