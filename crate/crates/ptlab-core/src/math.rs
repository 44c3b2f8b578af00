//! Dimension-dependent constants and small numeric helpers shared by the
//! geometry and transport modules.

use core::cmp::Ordering;

/// Volume of the unit ball in `R^d` for the supported dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => core::f64::consts::PI,
        3 => 4.0 * core::f64::consts::PI / 3.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Side ratio `l_d = omega_d^(-1/d)` of the unit-volume ball, i.e. the radius
/// of the ball with volume one.
pub fn unit_volume_ball_radius(dim: usize) -> f64 {
    powf(unit_ball_volume(dim), -1.0 / dim as f64)
}

/// Localization constant `C0(d) = (3^(1/d) + 2) * l_d`. Any optimal transport
/// target of a set `E` stays within distance `C0(d) * vol(E)^(1/d)` of `E`,
/// which is what the transport window construction relies on.
pub fn localization_constant(dim: usize) -> f64 {
    (powf(3.0, 1.0 / dim as f64) + 2.0) * unit_volume_ball_radius(dim)
}

/// Scaling exponent `alpha = 2 + d(1/p - 1)` governing how the transport term
/// reacts to dilations relative to the perimeter term.
pub fn alpha_exponent(dim: usize, p: f64) -> f64 {
    2.0 + dim as f64 * (1.0 / p - 1.0)
}

/// The regime in which small masses prefer a single ball: `1/p + 2/d > 1`.
pub fn admissible_exponents(dim: usize, p: f64) -> bool {
    p >= 1.0 && 1.0 / p + 2.0 / dim as f64 > 1.0
}

/// `powf` that works identically with and without `std`.
#[inline]
pub fn powf(base: f64, exp: f64) -> f64 {
    num_traits::Float::powf(base, exp)
}

/// `sqrt` that works identically with and without `std`.
#[inline]
pub fn sqrt(x: f64) -> f64 {
    num_traits::Float::sqrt(x)
}

/// `exp` that works identically with and without `std`.
#[inline]
pub fn exp(x: f64) -> f64 {
    num_traits::Float::exp(x)
}

/// `ln` that works identically with and without `std`.
#[inline]
pub fn ln(x: f64) -> f64 {
    num_traits::Float::ln(x)
}

/// `abs` that works identically with and without `std`.
#[inline]
pub fn abs(x: f64) -> f64 {
    num_traits::Float::abs(x)
}

/// `floor` that works identically with and without `std`.
#[inline]
pub fn floor(x: f64) -> f64 {
    num_traits::Float::floor(x)
}

/// `round` that works identically with and without `std`.
#[inline]
pub fn round(x: f64) -> f64 {
    num_traits::Float::round(x)
}

/// `ceil` that works identically with and without `std`.
#[inline]
pub fn ceil(x: f64) -> f64 {
    num_traits::Float::ceil(x)
}

/// `|x|^p` evaluated so that the common exponents stay exact: `p = 1` is the
/// plain absolute value and `p = 2` a product, with `powf` only for the rest.
#[inline]
pub fn abs_pow(x: f64, p: f64) -> f64 {
    let a = abs(x);
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else {
        powf(a, p)
    }
}

/// Total order on `f64` keys for heaps and argmin scans. The solver never
/// produces NaN; `total_cmp` keeps ties deterministic anyway.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
