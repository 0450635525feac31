//! Floating-point element types and their precision tags.

use std::fmt;

use half::f16;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Storage / evaluation precision of a floating-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Precision {
    P16,
    P32,
    P64,
}

impl Precision {
    /// Unit roundoff: half the spacing of representable numbers just above 1.
    pub fn eps(self) -> f64 {
        match self {
            Precision::P16 => 2f64.powi(-11),
            Precision::P32 => 2f64.powi(-24),
            Precision::P64 => 2f64.powi(-53),
        }
    }

    pub fn bytes_per_value(self) -> usize {
        match self {
            Precision::P16 => 2,
            Precision::P32 => 4,
            Precision::P64 => 8,
        }
    }

    /// Number of significand bits including the implicit leading one.
    pub fn significand_bits(self) -> u32 {
        match self {
            Precision::P16 => 11,
            Precision::P32 => 24,
            Precision::P64 => 53,
        }
    }

    /// Largest finite value of the format.
    pub fn max_finite(self) -> f64 {
        match self {
            Precision::P16 => f16::MAX.to_f64(),
            Precision::P32 => f32::MAX as f64,
            Precision::P64 => f64::MAX,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::P16 => "p16",
            Precision::P32 => "p32",
            Precision::P64 => "p64",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p16" | "f16" | "16" => Ok(Precision::P16),
            "p32" | "f32" | "32" => Ok(Precision::P32),
            "p64" | "f64" | "64" => Ok(Precision::P64),
            other => Err(format!("unknown precision `{other}` (expected p16, p32 or p64)")),
        }
    }
}

/// Element type of every matrix and operator in the crate.
///
/// All arithmetic goes through the type's own IEEE operations, so a kernel
/// instantiated at `f16` really rounds every product and sum to 11 bits.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    const PRECISION: Precision;

    /// Round-to-nearest-even conversion from `f64`.
    fn from_f64_rne(v: f64) -> Self;

    /// Exact widening to `f64`.
    fn widen(self) -> f64;

    /// Lossless conversion of a small count (used for means and divisors).
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_f64_rne(n as f64)
    }

    /// Pairwise (divide-and-conquer) dot product.
    ///
    /// Products are formed in `Self`, then the buffer is folded in halves:
    /// `buf[i] += buf[i + ceil(len/2)]`. Every product passes through at most
    /// `ceil(log2(len))` additions.
    fn dot_pairwise(a: &[Self], b: &[Self], scratch: &mut Vec<Self>) -> Self {
        debug_assert_eq!(a.len(), b.len());
        if a.is_empty() {
            return Self::zero();
        }
        scratch.clear();
        scratch.extend(a.iter().zip(b).map(|(&x, &y)| x * y));
        fold_halves(scratch)
    }

    /// `LANES` dot products of `a` against each of `b`, each bit-identical
    /// to [`Scalar::dot_pairwise`].
    fn dot_pairwise_lanes(a: &[Self], b: [&[Self]; LANES], scratch: &mut Vec<Lanes<Self>>) -> [Self; LANES] {
        let d = a.len();
        let b: [&[Self]; LANES] = std::array::from_fn(|l| &b[l][..d]);
        if d == 0 {
            return [Self::zero(); LANES];
        }
        scratch.clear();
        scratch.resize(d, Lanes([Self::zero(); LANES]));
        for (t, (w, &x)) in scratch.iter_mut().zip(a).enumerate() {
            for l in 0..LANES {
                w.0[l] = x * b[l][t];
            }
        }
        fold_halves(scratch).0
    }
}

/// Number of columns evaluated together by [`Scalar::dot_pairwise_lanes`].
pub const LANES: usize = 8;

/// Independent values reduced side by side; addition is per lane.
#[derive(Debug, Clone, Copy)]
pub struct Lanes<T>(pub [T; LANES]);

impl<T: Copy + std::ops::Add<Output = T>> std::ops::Add for Lanes<T> {
    type Output = Self;
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        Lanes(std::array::from_fn(|l| self.0[l] + o.0[l]))
    }
}

/// In-place pairwise reduction used by [`Scalar::dot_pairwise`].
pub fn fold_halves<T: Copy + std::ops::Add<Output = T>>(buf: &mut [T]) -> T {
    let mut len = buf.len();
    while len > 1 {
        let half = len.div_ceil(2);
        let (lo, hi) = buf.split_at_mut(half);
        for (x, &y) in lo.iter_mut().zip(&hi[..len - half]) {
            *x = *x + y;
        }
        len = half;
    }
    buf[0]
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::P64;

    #[inline]
    fn from_f64_rne(v: f64) -> Self {
        v
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::P32;

    #[inline]
    fn from_f64_rne(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Scalar for f16 {
    const PRECISION: Precision = Precision::P16;

    #[inline]
    fn from_f64_rne(v: f64) -> Self {
        f64_to_f16_rne(v)
    }

    #[inline]
    fn widen(self) -> f64 {
        self.to_f64()
    }

    // Same fold as the default, carried out on f32 values that are rounded
    // back onto the f16 grid after every operation. A single f32 operation on
    // two f16 operands is exact enough that the extra rounding step yields the
    // correctly rounded f16 result, so this is bit-identical to native f16
    // arithmetic while skipping the per-op format conversions.
    fn dot_pairwise(a: &[Self], b: &[Self], _scratch: &mut Vec<Self>) -> Self {
        debug_assert_eq!(a.len(), b.len());
        if a.is_empty() {
            return f16::ZERO;
        }
        let mut buf: Vec<f32> = Vec::new();
        let mut stack = [0f32; 128];
        let work: &mut [f32] = if a.len() <= stack.len() {
            &mut stack[..a.len()]
        } else {
            buf.resize(a.len(), 0.0);
            &mut buf
        };
        for ((w, x), y) in work.iter_mut().zip(a).zip(b) {
            *w = round_to_f16_grid(f16::to_f32(*x) * f16::to_f32(*y));
        }
        let mut len = work.len();
        while len > 1 {
            let half = len.div_ceil(2);
            let (lo, hi) = work.split_at_mut(half);
            for (x, &y) in lo.iter_mut().zip(&hi[..len - half]) {
                *x = round_to_f16_grid(*x + y);
            }
            len = half;
        }
        f16::from_f32(work[0])
    }

    fn dot_pairwise_lanes(a: &[Self], b: [&[Self]; LANES], _scratch: &mut Vec<Lanes<Self>>) -> [Self; LANES] {
        let d = a.len();
        let b: [&[Self]; LANES] = std::array::from_fn(|l| &b[l][..d]);
        if d == 0 {
            return [f16::ZERO; LANES];
        }
        let mut buf: Vec<[f32; LANES]> = Vec::new();
        let mut stack = [[0f32; LANES]; 128];
        let work: &mut [[f32; LANES]] = if d <= stack.len() {
            &mut stack[..d]
        } else {
            buf.resize(d, [0.0; LANES]);
            &mut buf
        };
        for (t, w) in work.iter_mut().enumerate() {
            let x = f16::to_f32(a[t]);
            *w = std::array::from_fn(|l| round_to_f16_grid(x * f16::to_f32(b[l][t])));
        }
        let mut len = d;
        while len > 1 {
            let half = len.div_ceil(2);
            let (lo, hi) = work.split_at_mut(half);
            for (x, y) in lo.iter_mut().zip(&hi[..len - half]) {
                *x = std::array::from_fn(|l| round_to_f16_grid(x[l] + y[l]));
            }
            len = half;
        }
        work[0].map(f16::from_f32)
    }
}

/// Single-rounding f64 → f16 conversion. `f16::from_f64` goes through f32
/// and can round twice.
pub(crate) fn f64_to_f16_rne(v: f64) -> f16 {
    if v.is_nan() {
        return f16::NAN;
    }
    let sign: u16 = if v.is_sign_negative() { 0x8000 } else { 0 };
    let a = v.abs();
    let mag: u16 = if a >= 65520.0 {
        0x7c00
    } else if a < 2f64.powi(-14) {
        // Subnormal spacing is 2^-24; scaling by a power of two is exact.
        (a * 2f64.powi(24)).round_ties_even() as u16
    } else {
        let e = ((a.to_bits() >> 52) as i32) - 1023;
        let m = (a * 2f64.powi(10 - e)).round_ties_even() as u16;
        // m == 2048 carries into the exponent field, which is still correct.
        (((e + 15) as u16) << 10) + (m - 1024)
    };
    f16::from_bits(sign | mag)
}

/// Round an `f32` to the nearest `f16` value (ties to even), keeping it in `f32`.
#[inline]
pub(crate) fn round_to_f16_grid(x: f32) -> f32 {
    let bits = x.to_bits();
    let abs = bits & 0x7fff_ffff;
    if abs >= 0x477f_f000 {
        // At or beyond the rounding boundary of f16::MAX (65520), or NaN.
        if abs > 0x7f80_0000 {
            return x;
        }
        return f32::from_bits((bits & 0x8000_0000) | 0x7f80_0000);
    }
    if abs < 0x3880_0000 {
        // Below 2^-14: f16 subnormal spacing is 2^-24, which is exact in f32.
        const SCALE: f32 = 16_777_216.0;
        return (x * SCALE).round_ties_even() / SCALE;
    }
    // Normal range: drop 13 of the 23 fraction bits with round-half-even.
    let lsb = (bits >> 13) & 1;
    let rounded = bits.wrapping_add(0x0fff + lsb) & !0x1fff;
    f32::from_bits(rounded)
}
