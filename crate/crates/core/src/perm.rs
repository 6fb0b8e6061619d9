//! Permutations of `0..n` in one-line notation.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A bijection of `0..n`, stored as its image list.
///
/// Composition follows function notation: `a.compose(&b)` applies `b` first.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Perm(Vec<u32>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a permutation: {0:?}")]
pub struct NotAPermutation(pub Vec<u32>);

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm((0..n as u32).collect())
    }

    pub fn from_images(images: Vec<u32>) -> Result<Self, NotAPermutation> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i as usize >= n || std::mem::replace(&mut seen[i as usize], true) {
                return Err(NotAPermutation(images));
            }
        }
        Ok(Perm(images))
    }

    /// The transposition of `a` and `b` on `0..n`.
    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut p = Self::identity(n);
        p.0.swap(a, b);
        p
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.0[i] as usize
    }

    pub fn images(&self) -> &[u32] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i as u32 == j)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Perm) -> Perm {
        assert_eq!(self.len(), other.len(), "composing permutations of different degree");
        Perm(other.0.iter().map(|&j| self.0[j as usize]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0u32; self.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j as usize] = i as u32;
        }
        Perm(inv)
    }

    pub fn pow(&self, k: usize) -> Perm {
        let mut acc = Perm::identity(self.len());
        for _ in 0..k {
            acc = self.compose(&acc);
        }
        acc
    }

    pub fn swap_images(&mut self, a: usize, b: usize) {
        self.0.swap(a, b);
    }
}

impl TryFrom<Vec<u32>> for Perm {
    type Error = NotAPermutation;
    fn try_from(v: Vec<u32>) -> Result<Self, Self::Error> {
        Perm::from_images(v)
    }
}

impl From<Perm> for Vec<u32> {
    fn from(p: Perm) -> Self {
        p.0
    }
}

impl fmt::Debug for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Perm{:?}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_applies_right_first() {
        let a = Perm::from_images(vec![1, 2, 0]).unwrap();
        let b = Perm::transposition(3, 0, 1);
        let ab = a.compose(&b);
        for i in 0..3 {
            assert_eq!(ab.apply(i), a.apply(b.apply(i)));
        }
        assert!(a.compose(&a.inverse()).is_identity());
        assert!(a.pow(3).is_identity());
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Perm::from_images(vec![0, 0]).is_err());
        assert!(Perm::from_images(vec![2, 0]).is_err());
        assert!(serde_json::from_str::<Perm>("[1,1]").is_err());
        assert_eq!(serde_json::to_string(&Perm::identity(3)).unwrap(), "[0,1,2]");
    }
}
