//! Finite-resolution models of the Cantor set and the circle.
//!
//! A Cantor point is a bit string of the working depth `D`. Bit 0 is the most
//! significant, so comparing the packed integers is lexicographic order.
//! Distances are exact: `2^-lcp` on the Cantor model, arc length on a circle of
//! circumference one.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Distance, Dyadic};

/// Largest supported working depth.
pub const MAX_DEPTH: u32 = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("model mismatch: depth {0} vs depth {1}")]
    DepthMismatch(u32, u32),
    #[error("depth {depth} out of range 1..={max}")]
    DepthOutOfRange { depth: u32, max: u32 },
    #[error("bit string {0:?} is not a valid point")]
    BadBits(String),
    #[error("circle position {0} outside [0,1)")]
    BadPosition(String),
    #[error("sample is empty")]
    EmptySample,
    #[error("duplicate sample point {0}")]
    DuplicatePoint(String),
    #[error("partition cells overlap or leave a gap")]
    NotAPartition,
}

/// A point of a compact metric model with an exact metric.
pub trait MetricPoint: Clone + Ord + fmt::Debug + fmt::Display + Send + Sync {
    type Distance: Distance;

    /// Fails when the two points live in different models (e.g. depths differ).
    fn compatible(&self, other: &Self) -> Result<(), ModelError>;

    /// Distance, assuming [`MetricPoint::compatible`] holds.
    fn distance_unchecked(&self, other: &Self) -> Self::Distance;
}

/// Checked distance between two points of the same model.
pub fn distance<P: MetricPoint>(x: &P, y: &P) -> Result<P::Distance, ModelError> {
    x.compatible(y)?;
    Ok(x.distance_unchecked(y))
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CantorPoint {
    depth: u8,
    bits: u64,
}

impl CantorPoint {
    /// `bits` holds the point with its first bit at position `depth - 1`.
    pub fn new(bits: u64, depth: u32) -> Result<Self, ModelError> {
        check_depth(depth)?;
        if depth < 64 && bits >> depth != 0 {
            return Err(ModelError::BadBits(format!("{bits:#b}")));
        }
        Ok(CantorPoint {
            depth: depth as u8,
            bits,
        })
    }

    pub fn zeros(depth: u32) -> Result<Self, ModelError> {
        Self::new(0, depth)
    }

    pub fn depth(&self) -> u32 {
        self.depth as u32
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Bit `i`, counted from the left.
    pub fn bit(&self, i: u32) -> u8 {
        debug_assert!(i < self.depth());
        ((self.bits >> (self.depth() - 1 - i)) & 1) as u8
    }

    /// The first `len` bits as an integer.
    pub fn prefix(&self, len: u32) -> u64 {
        debug_assert!(len <= self.depth());
        if len == 0 {
            0
        } else {
            self.bits >> (self.depth() - len)
        }
    }

    /// Replaces the first `len` bits by `prefix`, keeping the tail.
    pub fn with_prefix(&self, len: u32, prefix: u64) -> Self {
        let shift = self.depth() - len;
        let tail_mask = if shift == 0 { 0 } else { (1u64 << shift) - 1 };
        CantorPoint {
            depth: self.depth,
            bits: (prefix << shift) | (self.bits & tail_mask),
        }
    }

    /// Length of the longest common prefix; `None` when the points are equal.
    pub fn common_prefix_len(&self, other: &Self) -> Option<u32> {
        let x = self.bits ^ other.bits;
        if x == 0 {
            None
        } else {
            Some(x.leading_zeros() - (64 - self.depth()))
        }
    }

    /// True if every bit after the first `len` is zero.
    pub fn has_zero_tail(&self, len: u32) -> bool {
        let shift = self.depth() - len.min(self.depth());
        shift == 0 || self.bits & ((1u64 << shift) - 1) == 0
    }

    /// Every point of the model at the given depth, in lexicographic order.
    pub fn all(depth: u32) -> Result<impl Iterator<Item = CantorPoint>, ModelError> {
        check_depth(depth)?;
        if depth > 24 {
            return Err(ModelError::DepthOutOfRange { depth, max: 24 });
        }
        Ok((0..(1u64 << depth)).map(move |bits| CantorPoint {
            depth: depth as u8,
            bits,
        }))
    }
}

impl MetricPoint for CantorPoint {
    type Distance = Dyadic;

    fn compatible(&self, other: &Self) -> Result<(), ModelError> {
        if self.depth == other.depth {
            Ok(())
        } else {
            Err(ModelError::DepthMismatch(self.depth(), other.depth()))
        }
    }

    fn distance_unchecked(&self, other: &Self) -> Dyadic {
        match self.common_prefix_len(other) {
            None => Dyadic::ZERO,
            Some(k) => Dyadic::pow(k),
        }
    }
}

impl fmt::Display for CantorPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.depth() {
            write!(f, "{}", self.bit(i))?;
        }
        Ok(())
    }
}

impl fmt::Debug for CantorPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CantorPoint({self})")
    }
}

impl FromStr for CantorPoint {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let depth = s.len() as u32;
        check_depth(depth).map_err(|_| ModelError::BadBits(s.to_string()))?;
        let mut bits = 0u64;
        for c in s.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(ModelError::BadBits(s.to_string())),
                };
        }
        CantorPoint::new(bits, depth)
    }
}

impl Serialize for CantorPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CantorPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_depth(depth: u32) -> Result<(), ModelError> {
    if depth == 0 || depth > MAX_DEPTH {
        Err(ModelError::DepthOutOfRange {
            depth,
            max: MAX_DEPTH,
        })
    } else {
        Ok(())
    }
}

/// The set of points whose first `len` bits equal `prefix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cylinder {
    len: u32,
    prefix: u64,
}

impl Cylinder {
    pub fn new(prefix: u64, len: u32) -> Self {
        debug_assert!(len <= MAX_DEPTH && (len == 0 || prefix >> len == 0));
        Cylinder { len, prefix }
    }

    pub fn depth(&self) -> u32 {
        self.len
    }

    pub fn prefix(&self) -> u64 {
        self.prefix
    }

    pub fn contains(&self, x: &CantorPoint) -> bool {
        self.len <= x.depth() && x.prefix(self.len) == self.prefix
    }

    /// The cylinder of depth `len` containing `x`.
    pub fn of(x: &CantorPoint, len: u32) -> Self {
        Cylinder::new(x.prefix(len), len)
    }

    /// True if one prefix extends the other.
    pub fn overlaps(&self, other: &Cylinder) -> bool {
        let l = self.len.min(other.len);
        self.prefix >> (self.len - l) == other.prefix >> (other.len - l)
    }
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.len {
            write!(f, "{}", (self.prefix >> (self.len - 1 - i)) & 1)?;
        }
        write!(f, "]")
    }
}

/// A finite partition of `{0,1}^D` into cylinders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClopenPartition {
    total_depth: u32,
    cells: Vec<Cylinder>,
}

impl ClopenPartition {
    /// Validates disjointness and coverage (cell measures sum to one).
    pub fn new(mut cells: Vec<Cylinder>, total_depth: u32) -> Result<Self, ModelError> {
        check_depth(total_depth)?;
        cells.sort();
        let mut measure = Ratio::<u128>::zero();
        for (i, c) in cells.iter().enumerate() {
            if c.len > total_depth {
                return Err(ModelError::NotAPartition);
            }
            if cells[i + 1..].iter().any(|d| c.overlaps(d)) {
                return Err(ModelError::NotAPartition);
            }
            measure += Ratio::new(1u128, 1u128 << c.len);
        }
        if measure != Ratio::one() {
            return Err(ModelError::NotAPartition);
        }
        Ok(ClopenPartition { total_depth, cells })
    }

    pub fn cells(&self) -> &[Cylinder] {
        &self.cells
    }

    pub fn total_depth(&self) -> u32 {
        self.total_depth
    }

    pub fn cell_of(&self, x: &CantorPoint) -> Option<&Cylinder> {
        self.cells.iter().find(|c| c.contains(x))
    }

    /// Largest within-cell distance (`2^-len` of the shallowest cell, zero at full depth).
    pub fn diameter(&self) -> Dyadic {
        self.cells
            .iter()
            .map(|c| {
                if c.len >= self.total_depth {
                    Dyadic::ZERO
                } else {
                    Dyadic::pow(c.len)
                }
            })
            .max()
            .unwrap_or(Dyadic::ZERO)
    }

    /// Least distance between points of distinct cells.
    pub fn gap(&self) -> Dyadic {
        let mut gap: Option<Dyadic> = None;
        for (i, a) in self.cells.iter().enumerate() {
            for b in &self.cells[i + 1..] {
                let l = a.len.min(b.len);
                let x = (a.prefix >> (a.len - l)) ^ (b.prefix >> (b.len - l));
                // disjoint cells differ somewhere in their common prefix length
                let k = x.leading_zeros() - (64 - l);
                let d = Dyadic::pow(k);
                gap = Some(gap.map_or(d, |g| g.min(d)));
            }
        }
        gap.unwrap_or(Dyadic::ONE)
    }
}

/// All `2^d` cylinders of depth `d`.
pub fn depth_partition(d: u32, total_depth: u32) -> Result<ClopenPartition, ModelError> {
    check_depth(total_depth)?;
    if d == 0 || d > total_depth || d > 24 {
        return Err(ModelError::DepthOutOfRange {
            depth: d,
            max: total_depth.min(24),
        });
    }
    let cells = (0..(1u64 << d)).map(|p| Cylinder::new(p, d)).collect();
    Ok(ClopenPartition {
        total_depth,
        cells,
    })
}

/// A point of the unit-circumference circle, stored as an exact fraction in `[0,1)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CirclePoint(Ratio<i64>);

impl CirclePoint {
    pub fn new(position: Ratio<i64>) -> Result<Self, ModelError> {
        if position.is_negative() || position >= Ratio::one() {
            return Err(ModelError::BadPosition(position.to_string()));
        }
        Ok(CirclePoint(position))
    }

    /// Reduces any rational modulo one.
    pub fn wrap(position: Ratio<i64>) -> Self {
        let frac = position - position.floor();
        CirclePoint(frac)
    }

    pub fn from_fraction(num: i64, den: i64) -> Result<Self, ModelError> {
        if den == 0 {
            return Err(ModelError::BadPosition(format!("{num}/{den}")));
        }
        Self::new(Ratio::new(num, den))
    }

    pub fn position(&self) -> Ratio<i64> {
        self.0
    }
}

impl MetricPoint for CirclePoint {
    type Distance = Ratio<i64>;

    fn compatible(&self, _other: &Self) -> Result<(), ModelError> {
        Ok(())
    }

    fn distance_unchecked(&self, other: &Self) -> Ratio<i64> {
        let d = (self.0 - other.0).abs();
        d.min(Ratio::one() - d)
    }
}

impl fmt::Display for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CirclePoint({self})")
    }
}

impl FromStr for CirclePoint {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::BadPosition(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: i64 = n.parse().map_err(|_| bad())?;
        let d: i64 = d.parse().map_err(|_| bad())?;
        CirclePoint::from_fraction(n, d)
    }
}

impl Serialize for CirclePoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CirclePoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A finite set of distinct points in canonical (sorted) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "P: Serialize + serde::de::DeserializeOwned")]
pub struct FiniteSample<P> {
    index: usize,
    points: Vec<P>,
}

impl<P: MetricPoint> FiniteSample<P> {
    pub fn new(index: usize, mut points: Vec<P>) -> Result<Self, ModelError> {
        points.sort();
        if let Some(w) = points.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicatePoint(w[0].to_string()));
        }
        if let Some(p) = points.first() {
            for q in &points[1..] {
                p.compatible(q)?;
            }
        }
        Ok(FiniteSample { index, points })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Position of `x` in canonical order.
    pub fn position(&self, x: &P) -> Option<usize> {
        self.points.binary_search(x).ok()
    }

    pub fn contains(&self, x: &P) -> bool {
        self.position(x).is_some()
    }
}

/// One point per depth-`m` cylinder: the prefix padded with zeros to depth `D`.
pub fn tail_aligned_sample(
    m: u32,
    total_depth: u32,
    index: usize,
) -> Result<FiniteSample<CantorPoint>, ModelError> {
    check_depth(total_depth)?;
    if m > total_depth || m > 24 {
        return Err(ModelError::DepthOutOfRange {
            depth: m,
            max: total_depth.min(24),
        });
    }
    let shift = total_depth - m;
    let points = (0..(1u64 << m))
        .map(|p| CantorPoint {
            depth: total_depth as u8,
            bits: p << shift,
        })
        .collect();
    Ok(FiniteSample { index, points })
}

/// The sample point closest to `x`; ties go to the lowest point in canonical order.
pub fn nearest_point_projection<P: MetricPoint>(
    x: &P,
    sample: &FiniteSample<P>,
) -> Result<P, ModelError> {
    let mut best: Option<(&P, P::Distance)> = None;
    for p in sample.points() {
        let d = distance(x, p)?;
        if best.as_ref().is_none_or(|(_, bd)| d < *bd) {
            best = Some((p, d));
        }
    }
    best.map(|(p, _)| p.clone()).ok_or(ModelError::EmptySample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(s: &str) -> CantorPoint {
        s.parse().unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = pt("000000");
        assert_eq!(distance(&x, &x).unwrap(), Dyadic::ZERO);
        assert_eq!(distance(&pt("0110"), &pt("1110")).unwrap(), Dyadic::ONE);
        assert_eq!(distance(&pt("001011"), &pt("001101")).unwrap(), Dyadic::pow(3));
        assert!(matches!(
            distance(&pt("01"), &pt("011")),
            Err(ModelError::DepthMismatch(2, 3))
        ));
    }

    #[test]
    fn circle_distance_wraps() {
        let a = CirclePoint::from_fraction(1, 10).unwrap();
        let b = CirclePoint::from_fraction(9, 10).unwrap();
        assert_eq!(distance(&a, &b).unwrap(), Ratio::new(1, 5));
        assert_eq!("7/10".parse::<CirclePoint>().unwrap().to_string(), "7/10");
        assert!(CirclePoint::from_fraction(1, 1).is_err());
    }

    #[test]
    fn text_round_trip() {
        let p = pt("0110100");
        assert_eq!(p.to_string(), "0110100");
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "\"0110100\"");
        assert_eq!(serde_json::from_str::<CantorPoint>(&json).unwrap(), p);
        assert!("0120".parse::<CantorPoint>().is_err());
    }

    #[test]
    fn depth_partition_small_cases() {
        let p = depth_partition(1, 4).unwrap();
        assert_eq!(p.cells(), &[Cylinder::new(0, 1), Cylinder::new(1, 1)]);
        let p = depth_partition(2, 4).unwrap();
        assert_eq!(p.cells().len(), 4);
        assert_eq!(p.gap(), Dyadic::pow(1));
        assert_eq!(p.diameter(), Dyadic::pow(2));
        assert!(depth_partition(0, 4).is_err());
        assert!(depth_partition(5, 4).is_err());
    }

    #[test]
    fn depth_three_cells_exhaustive() {
        let part = depth_partition(3, 6).unwrap();
        let pts: Vec<_> = CantorPoint::all(6).unwrap().collect();
        for x in &pts {
            for y in &pts {
                let d = distance(x, y).unwrap();
                if part.cell_of(x) == part.cell_of(y) {
                    assert!(d <= Dyadic::pow(3));
                } else {
                    assert!(d >= Dyadic::pow(2));
                }
            }
        }
    }

    #[test]
    fn partition_validation() {
        let ok = ClopenPartition::new(
            vec![Cylinder::new(0, 1), Cylinder::new(2, 2), Cylinder::new(3, 2)],
            4,
        )
        .unwrap();
        assert_eq!(ok.gap(), Dyadic::pow(1));
        assert_eq!(ok.diameter(), Dyadic::pow(1));
        assert!(ClopenPartition::new(vec![Cylinder::new(0, 1), Cylinder::new(1, 2)], 4).is_err());
        assert!(ClopenPartition::new(vec![Cylinder::new(0, 1), Cylinder::new(0, 2)], 4).is_err());
    }

    #[test]
    fn tail_aligned_examples() {
        let s = tail_aligned_sample(1, 3, 0).unwrap();
        let want: Vec<_> = ["000", "100"].iter().map(|s| pt(s)).collect();
        assert_eq!(s.points(), &want[..]);
        let s = tail_aligned_sample(2, 4, 0).unwrap();
        let want: Vec<_> = ["0000", "0100", "1000", "1100"].iter().map(|s| pt(s)).collect();
        assert_eq!(s.points(), &want[..]);
    }

    #[test]
    fn tail_aligned_density_exhaustive() {
        let s = tail_aligned_sample(2, 6, 0).unwrap();
        for x in CantorPoint::all(6).unwrap() {
            let best = s.points().iter().map(|p| distance(&x, p).unwrap()).min().unwrap();
            assert!(best <= Dyadic::pow(2));
        }
    }

    #[test]
    fn projection_examples() {
        let s = tail_aligned_sample(1, 4, 0).unwrap();
        assert_eq!(nearest_point_projection(&pt("0110"), &s).unwrap(), pt("0000"));
        assert_eq!(nearest_point_projection(&pt("1000"), &s).unwrap(), pt("1000"));
        let empty = FiniteSample::<CantorPoint>::new(0, vec![]).unwrap();
        assert_eq!(
            nearest_point_projection(&pt("1000"), &empty),
            Err(ModelError::EmptySample)
        );
    }

    #[test]
    fn duplicate_sample_rejected() {
        assert!(FiniteSample::new(0, vec![pt("01"), pt("01")]).is_err());
    }
}
