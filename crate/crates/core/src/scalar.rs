//! Scalar types shared across the crate.
//!
//! The dynamical side is exact: Cantor distances are dyadic ([`Dyadic`]) and
//! circle distances are rationals. The matrix side is generic over a real
//! floating type implementing [`Real`].

use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

/// Floating point scalar used by the matrix lifting code: `f32` or `f64`.
pub trait Real:
    nalgebra::RealField + num_traits::Float + Copy + fmt::Debug + fmt::Display + Send + Sync
{
    /// Default residual tolerance for "exact" outputs at this precision.
    fn default_tolerance() -> Self;

    fn from_f64_lossy(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Real for f64 {
    fn default_tolerance() -> Self {
        1e-10
    }
    fn from_f64_lossy(x: f64) -> Self {
        x
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Real for f32 {
    fn default_tolerance() -> Self {
        1e-4
    }
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

/// Exact value of a metric: either zero or `2^-k`.
///
/// Ordered by numeric value, so `Dyadic::pow(1) > Dyadic::pow(3) > Dyadic::ZERO`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dyadic(Option<u32>);

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic(None);
    pub const ONE: Dyadic = Dyadic(Some(0));

    /// `2^-k`.
    pub const fn pow(k: u32) -> Self {
        Dyadic(Some(k))
    }

    pub fn is_zero(self) -> bool {
        self.0.is_none()
    }

    /// The exponent `k` of `2^-k`, `None` for zero.
    pub fn exponent(self) -> Option<u32> {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        match self.0 {
            None => 0.0,
            Some(k) => (-(k as f64)).exp2(),
        }
    }

    /// Twice the value (`2^-(k-1)`); zero stays zero. Saturates at 1.
    pub fn doubled(self) -> Self {
        match self.0 {
            None => Dyadic::ZERO,
            Some(k) => Dyadic(Some(k.saturating_sub(1))),
        }
    }

    /// Parses `"0"`, `"1"`, `"2^-k"` or `"1/2^k"` / `"1/n"` with `n` a power of two.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s == "0" {
            return Some(Dyadic::ZERO);
        }
        if s == "1" {
            return Some(Dyadic::ONE);
        }
        if let Some(rest) = s.strip_prefix("2^-") {
            return rest.parse().ok().map(Dyadic::pow);
        }
        if let Some(rest) = s.strip_prefix("1/") {
            let rest = rest.strip_prefix("2^").map(|r| r.parse::<u32>().ok());
            return match rest {
                Some(k) => k.map(Dyadic::pow),
                None => {
                    let den: u64 = s[2..].parse().ok()?;
                    den.is_power_of_two().then(|| Dyadic::pow(den.trailing_zeros()))
                }
            };
        }
        None
    }

    /// Smallest `k` with `2^-k <= eps`, for a positive finite `eps <= 1`.
    pub fn ceil_log2_inv(eps: f64) -> Option<u32> {
        if !(eps > 0.0 && eps.is_finite()) {
            return None;
        }
        if eps >= 1.0 {
            return Some(0);
        }
        let mut k = 0u32;
        while Dyadic::pow(k).to_f64() > eps {
            k += 1;
            if k > 1000 {
                return None;
            }
        }
        Some(k)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.0, other.0) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(a), Some(b)) => b.cmp(&a),
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            None => write!(f, "0"),
            Some(0) => write!(f, "1"),
            Some(k) => write!(f, "2^-{k}"),
        }
    }
}

impl std::str::FromStr for Dyadic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Dyadic::parse(s).ok_or_else(|| format!("not a dyadic value: {s}"))
    }
}

impl serde::Serialize for Dyadic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Dyadic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Value type of a metric on one of the point models.
pub trait Distance: Copy + Ord + fmt::Debug + fmt::Display + Send + Sync {
    fn zero() -> Self;
    fn to_f64(self) -> f64;
}

impl Distance for Dyadic {
    fn zero() -> Self {
        Dyadic::ZERO
    }
    fn to_f64(self) -> f64 {
        Dyadic::to_f64(self)
    }
}

impl Distance for Ratio<i64> {
    fn zero() -> Self {
        <Ratio<i64> as Zero>::zero()
    }
    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_order_matches_value() {
        let mut v = vec![Dyadic::pow(3), Dyadic::ZERO, Dyadic::ONE, Dyadic::pow(1)];
        v.sort();
        assert_eq!(v, vec![Dyadic::ZERO, Dyadic::pow(3), Dyadic::pow(1), Dyadic::ONE]);
        for w in v.windows(2) {
            assert!(w[0].to_f64() < w[1].to_f64());
        }
    }

    #[test]
    fn dyadic_parse() {
        assert_eq!(Dyadic::parse("1/8"), Some(Dyadic::pow(3)));
        assert_eq!(Dyadic::parse("2^-5"), Some(Dyadic::pow(5)));
        assert_eq!(Dyadic::parse("1/2^4"), Some(Dyadic::pow(4)));
        assert_eq!(Dyadic::parse("0"), Some(Dyadic::ZERO));
        assert_eq!(Dyadic::parse("1/3"), None);
    }

    #[test]
    fn ceil_log2() {
        assert_eq!(Dyadic::ceil_log2_inv(1.0), Some(0));
        assert_eq!(Dyadic::ceil_log2_inv(0.25), Some(2));
        assert_eq!(Dyadic::ceil_log2_inv(0.2), Some(3));
        assert_eq!(Dyadic::ceil_log2_inv(0.0), None);
    }
}
