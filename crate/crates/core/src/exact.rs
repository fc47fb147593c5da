//! Exact arithmetic on dyadic rationals.
//!
//! Every coordinate produced by repeated midpoint construction from dyadic
//! input is itself dyadic, so signed areas and orientation signs can be
//! evaluated exactly with 128-bit integers. Functions return `None` when the
//! operands do not fit, and callers fall back to floating point.

use std::cmp::Ordering;

/// `mant * 2^exp`, normalized so that `mant` is odd (or zero with `exp == 0`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    pub mant: i128,
    pub exp: i32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { mant: 0, exp: 0 };

    fn normalized(mant: i128, exp: i32) -> Self {
        if mant == 0 {
            return Self::ZERO;
        }
        let tz = mant.trailing_zeros() as i32;
        Dyadic { mant: mant >> tz, exp: exp + tz }
    }

    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Self::ZERO);
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i128 } else { 1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mant, exp) = if raw_exp == 0 { (frac, -1074) } else { (frac | (1i128 << 52), raw_exp - 1075) };
        Some(Self::normalized(sign * mant, exp))
    }

    pub fn signum(&self) -> i32 {
        self.mant.signum() as i32
    }

    /// Multiply by `2^k`.
    pub fn scale(self, k: i32) -> Self {
        if self.mant == 0 {
            self
        } else {
            Dyadic { mant: self.mant, exp: self.exp + k }
        }
    }

    /// Bits of the odd mantissa.
    pub fn significant_bits(&self) -> u32 {
        128 - self.mant.unsigned_abs().leading_zeros()
    }

    pub fn to_f64(self) -> f64 {
        self.mant as f64 * (self.exp as f64).exp2()
    }
}

/// Brings a set of dyadics to a common exponent; `None` if any scaled
/// mantissa would exceed `limit_bits`.
fn common_scale(values: &[Dyadic], limit_bits: u32) -> Option<(Vec<i128>, i32)> {
    let emin = values.iter().filter(|d| d.mant != 0).map(|d| d.exp).min().unwrap_or(0);
    let mut out = Vec::with_capacity(values.len());
    for d in values {
        if d.mant == 0 {
            out.push(0);
            continue;
        }
        let shift = (d.exp - emin) as u32;
        let bits = 128 - d.mant.unsigned_abs().leading_zeros();
        if bits + shift > limit_bits {
            return None;
        }
        out.push(d.mant << shift);
    }
    Some((out, emin))
}

/// Twice the signed area of the triangle `(a, b, c)`, exactly.
pub fn double_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<Dyadic> {
    let vals = [a[0], a[1], b[0], b[1], c[0], c[1]].iter().map(|&x| Dyadic::from_f64(x)).collect::<Option<Vec<_>>>()?;
    // Differences gain one bit, products double: 61 bits keeps everything below 2^125.
    let (s, e) = common_scale(&vals, 61)?;
    let (ax, ay, bx, by, cx, cy) = (s[0], s[1], s[2], s[3], s[4], s[5]);
    let cross = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay);
    Some(Dyadic::normalized(cross, 2 * e))
}

/// Sign of the orientation of `(a, b, c)`; exact when possible.
pub fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Ordering {
    match double_area(a, b, c) {
        Some(d) => d.mant.cmp(&0),
        None => {
            let v = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            v.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
        }
    }
}

/// True if `p` lies strictly inside the segment `(a, b)`.
pub fn strictly_inside_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    if orient(a, b, p) != Ordering::Equal {
        return false;
    }
    if p == a || p == b {
        return false;
    }
    let within = |i: usize| {
        let (lo, hi) = if a[i] <= b[i] { (a[i], b[i]) } else { (b[i], a[i]) };
        lo <= p[i] && p[i] <= hi
    };
    within(0) && within(1)
}
