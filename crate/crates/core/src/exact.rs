//! Exact scaled-integer arithmetic for shifted dyadic geometry.
//!
//! Every endpoint of a shifted dyadic interval is an integer multiple of
//! `2^j / 3`. Storing values as integers over the fixed denominator
//! `3 * 2^FRAC_BITS` makes all membership and containment tests bit-exact
//! for scales `j >= MIN_SCALE`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

pub const FRAC_BITS: u32 = 40;
/// Smallest scale exponent whose half-length is still representable.
pub const MIN_SCALE: i32 = -(FRAC_BITS as i32) + 1;
/// Largest scale exponent supported without overflow in dilation predicates.
pub const MAX_SCALE: i32 = 40;

const DENOM: i128 = 3 * (1i128 << FRAC_BITS);

pub type Rat = Ratio<i128>;

/// A rational number of the form `units / (3 * 2^FRAC_BITS)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Exact(i128);

impl Exact {
    pub const ZERO: Exact = Exact(0);

    pub const fn from_units(units: i128) -> Self {
        Exact(units)
    }

    pub const fn units(self) -> i128 {
        self.0
    }

    pub fn from_int(n: i64) -> Self {
        Exact(n as i128 * DENOM)
    }

    /// `2^j`, exactly.
    pub fn pow2(j: i32) -> Self {
        assert!(
            (MIN_SCALE - 1..=MAX_SCALE).contains(&j),
            "scale 2^{j} outside the exact range"
        );
        Exact(3i128 << (FRAC_BITS as i32 + j))
    }

    /// `num / den` if it is representable on the fixed grid.
    pub fn from_ratio(num: i128, den: i128) -> Option<Self> {
        let scaled = num.checked_mul(DENOM)?;
        if den == 0 || scaled % den != 0 {
            return None;
        }
        Some(Exact(scaled / den))
    }

    pub fn to_rat(self) -> Rat {
        Rat::new(self.0, DENOM)
    }

    /// Nearest grid point below `x` (floor on the fixed grid).
    pub fn from_f64_floor(x: f64) -> Self {
        Exact((x * DENOM as f64).floor() as i128)
    }

    pub fn to_f64(self) -> f64 {
        // Split to keep full precision for large magnitudes.
        let whole = self.0.div_euclid(DENOM);
        let frac = self.0.rem_euclid(DENOM);
        whole as f64 + frac as f64 / DENOM as f64
    }

    pub fn abs(self) -> Self {
        Exact(self.0.abs())
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Exact midpoint; panics if the sum is odd on the unit grid.
    pub fn midpoint(a: Exact, b: Exact) -> Exact {
        let s = a.0 + b.0;
        assert!(s % 2 == 0, "midpoint not representable");
        Exact(s / 2)
    }

    /// `floor(self / step)` for a positive step.
    pub fn div_floor(self, step: Exact) -> i64 {
        assert!(step.0 > 0);
        self.0.div_euclid(step.0) as i64
    }

    /// Ratio `self / other` as an exact rational.
    pub fn ratio(self, other: Exact) -> Rat {
        Rat::new(self.0, other.0)
    }
}

impl Add for Exact {
    type Output = Exact;
    fn add(self, rhs: Exact) -> Exact {
        Exact(self.0 + rhs.0)
    }
}

impl Sub for Exact {
    type Output = Exact;
    fn sub(self, rhs: Exact) -> Exact {
        Exact(self.0 - rhs.0)
    }
}

impl Neg for Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact(-self.0)
    }
}

impl Mul<i64> for Exact {
    type Output = Exact;
    fn mul(self, rhs: i64) -> Exact {
        Exact(self.0 * rhs as i128)
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Reduced fraction, e.g. `-2/3` or `4`.
impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.to_rat();
        if *r.denom() == 1 {
            write!(f, "{}", r.numer())
        } else {
            write!(f, "{}/{}", r.numer(), r.denom())
        }
    }
}

/// Parses the `Display` form back (`"a"` or `"a/b"`).
impl std::str::FromStr for Exact {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: i128 = n.parse().map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
        let d: i128 = d.parse().map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
        Exact::from_ratio(n, d).ok_or_else(|| format!("{s} is not on the exact grid"))
    }
}

impl serde::Serialize for Exact {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Exact {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rational dilation factor `num / den` applied about an interval's center.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dilation {
    pub num: i128,
    pub den: i128,
}

impl Dilation {
    pub const fn int(c: i128) -> Self {
        Dilation { num: c, den: 1 }
    }

    pub const fn frac(num: i128, den: i128) -> Self {
        Dilation { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Half-open interval `[lo, hi)` with exact endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub lo: Exact,
    pub hi: Exact,
}

/// A dilated segment with endpoints `lo/scale`, `hi/scale` in exact units.
#[derive(Clone, Copy, Debug)]
struct ScaledSpan {
    lo: i128,
    hi: i128,
    scale: i128,
}

impl Segment {
    pub fn new(lo: Exact, hi: Exact) -> Self {
        debug_assert!(lo <= hi);
        Segment { lo, hi }
    }

    pub fn len(&self) -> Exact {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn center(&self) -> Exact {
        Exact::midpoint(self.lo, self.hi)
    }

    pub fn contains_point(&self, x: Exact) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn contains(&self, other: &Segment) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Segment) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    pub fn intersection_len(&self, other: &Segment) -> Exact {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if hi > lo {
            hi - lo
        } else {
            Exact::ZERO
        }
    }

    /// Distance between the closures of two segments.
    pub fn distance(&self, other: &Segment) -> Exact {
        if other.lo >= self.hi {
            other.lo - self.hi
        } else if self.lo >= other.hi {
            self.lo - other.hi
        } else {
            Exact::ZERO
        }
    }

    pub fn reflect(&self) -> Segment {
        Segment::new(-self.hi, -self.lo)
    }

    fn scaled(&self, c: Dilation) -> ScaledSpan {
        let sum = self.lo.0 + self.hi.0;
        let len = self.hi.0 - self.lo.0;
        ScaledSpan {
            lo: c.den * sum - c.num * len,
            hi: c.den * sum + c.num * len,
            scale: 2 * c.den,
        }
    }

    /// `(ca * self) ⊆ (cb * other)`.
    pub fn dilated_subset(&self, ca: Dilation, other: &Segment, cb: Dilation) -> bool {
        let a = self.scaled(ca);
        let b = other.scaled(cb);
        a.lo * b.scale >= b.lo * a.scale && a.hi * b.scale <= b.hi * a.scale
    }

    /// `(ca * self) ∩ (cb * other) ≠ ∅`.
    pub fn dilated_intersects(&self, ca: Dilation, other: &Segment, cb: Dilation) -> bool {
        let a = self.scaled(ca);
        let b = other.scaled(cb);
        a.lo * b.scale < b.hi * a.scale && b.lo * a.scale < a.hi * b.scale
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.lo.to_f64(), self.hi.to_f64())
    }
}

/// Half-open interval with arbitrary rational endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RatSegment {
    pub lo: Rat,
    pub hi: Rat,
}

impl RatSegment {
    pub fn new(lo: Rat, hi: Rat) -> Self {
        RatSegment { lo, hi }
    }

    pub fn from_f64_pair(lo: f64, hi: f64) -> Self {
        // Decimal inputs like 0.4 are read as the shortest fraction.
        RatSegment::new(rat_from_decimal(lo), rat_from_decimal(hi))
    }

    pub fn len(&self) -> Rat {
        self.hi - self.lo
    }

    /// `self ⊆ c * seg` where `seg` is exact.
    pub fn inside_dilated(&self, seg: &Segment, c: Dilation) -> bool {
        let center = (seg.lo.to_rat() + seg.hi.to_rat()) / Rat::from_integer(2);
        let half = seg.len().to_rat() * Rat::new(c.num, 2 * c.den);
        center - half <= self.lo && self.hi <= center + half
    }
}

/// Reads a decimal `f64` as the fraction its shortest decimal form denotes.
pub fn rat_from_decimal(x: f64) -> Rat {
    let s = format!("{x}");
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i.to_string(), f.to_string()),
        None => (s.clone(), String::new()),
    };
    let den = 10i128.pow(frac_part.len() as u32);
    let digits: i128 = format!("{int_part}{frac_part}").parse().expect("finite decimal");
    let num = if int_part.starts_with('-') && digits > 0 { -digits } else { digits };
    Rat::new(num, den)
}

pub fn rat_to_f64(r: Rat) -> f64 {
    if r.is_zero() {
        0.0
    } else {
        r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
    }
}

pub fn cmp_rat(a: Rat, b: Rat) -> Ordering {
    a.cmp(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow2_and_display() {
        assert_eq!(Exact::pow2(0), Exact::from_int(1));
        assert_eq!(Exact::pow2(-1).to_string(), "1/2");
        assert_eq!((Exact::pow2(1) * 2 - Exact::from_ratio(2, 3).unwrap()).to_string(), "10/3");
        assert_eq!("-2/3".parse::<Exact>().unwrap(), -Exact::from_ratio(2, 3).unwrap());
        assert!(Exact::from_ratio(1, 5).is_none());
    }

    #[test]
    fn dilation_predicates() {
        let a = Segment::new(Exact::from_int(0), Exact::from_int(1));
        let b = Segment::new(Exact::from_int(0), Exact::from_int(2));
        // 3*[0,1) = [-1,2) ⊆ 3*[0,2) = [-2,4)
        assert!(a.dilated_subset(Dilation::int(3), &b, Dilation::int(3)));
        assert!(!b.dilated_subset(Dilation::int(3), &a, Dilation::int(3)));
        // (7/10)[0,2) = [0.3, 1.7)
        let q = RatSegment::from_f64_pair(0.4, 0.9);
        assert!(q.inside_dilated(&b, Dilation::frac(7, 10)));
        let q = RatSegment::from_f64_pair(0.2, 0.9);
        assert!(!q.inside_dilated(&b, Dilation::frac(7, 10)));
    }

    #[test]
    fn decimal_reading() {
        assert_eq!(rat_from_decimal(0.4), Rat::new(2, 5));
        assert_eq!(rat_from_decimal(-1.25), Rat::new(-5, 4));
        assert_eq!(rat_from_decimal(3.0), Rat::from_integer(3));
    }
}
