//! Scalar float helpers routed through `libm`.
//!
//! Transcendental functions are not exactly rounded, so the system math
//! library is free to differ between targets. Routing every call through
//! `libm` keeps simulation output bit-identical regardless of host and of
//! whether the crate is built with or without `std`.

pub use libm::{atan2, ceil, cos, exp, floor, hypot, round, sin, sqrt};

pub const TAU: f64 = core::f64::consts::TAU;
pub const PI: f64 = core::f64::consts::PI;

/// Normalize an angle to the half-open interval (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut a = a % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// Degrees to radians.
pub fn deg(d: f64) -> f64 {
    d * PI / 180.0
}
