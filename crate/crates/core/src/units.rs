//! Unit conversions. Everything inside the crate is angular frequency in
//! rad/µs and time in µs.

use core::f64::consts::PI;

/// Axial zero-field splitting, MHz.
pub const ZFS_MHZ: f64 = 2870.0;
/// Secular nitrogen-14 hyperfine coupling, MHz.
pub const HYPERFINE_N14_MHZ: f64 = 2.16;

/// MHz (cycles per µs) to rad/µs.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz
}

/// rad/µs to MHz.
pub fn angular_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI)
}

pub fn ns_to_us(t_ns: f64) -> f64 {
    t_ns * 1e-3
}

pub fn deg_to_rad(d: f64) -> f64 {
    d * PI / 180.0
}

pub fn rad_to_deg(r: f64) -> f64 {
    r * 180.0 / PI
}
