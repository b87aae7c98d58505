//! Microstrip control fields and the Gaussian focal-volume model.
//!
//! Cross-section coordinates are in µm: x runs across the strips, z is the
//! height above the top face of the conductors. Strip 1 occupies
//! x ∈ [0, L], strip 2 occupies x ∈ [L+w, 2L+w], both span z ∈ [−h, 0] and
//! extend without limit along y, so w_y = 0 everywhere.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

use core::f64::consts::PI;

/// One channel's field at a point. Units follow the geometry's `mu0` and
/// currents; the Hamiltonian layer applies an explicit Rabi scale.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FieldVector {
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
}

impl FieldVector {
    pub const ZERO: FieldVector = FieldVector { wx: 0.0, wy: 0.0, wz: 0.0 };

    pub fn new(wx: f64, wy: f64, wz: f64) -> Self {
        FieldVector { wx, wy, wz }
    }

    pub fn as_vec(&self) -> Vec3 {
        [self.wx, self.wy, self.wz]
    }

    pub fn scaled(&self, s: f64) -> Self {
        FieldVector::new(self.wx * s, self.wy * s, self.wz * s)
    }

    pub fn magnitude(&self) -> f64 {
        crate::geometry::norm(self.as_vec())
    }

    /// Angle to `other` in degrees, in [0, 180].
    pub fn angle_deg(&self, other: &FieldVector) -> Result<f64> {
        let (a, b) = (self.magnitude(), other.magnitude());
        if !(a > 0.0) || !(b > 0.0) {
            return Err(Error::ZeroField);
        }
        let c = crate::geometry::dot(self.as_vec(), other.as_vec()) / (a * b);
        Ok(c.clamp(-1.0, 1.0).acos() * 180.0 / PI)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    One,
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicrostripGeometry {
    /// L: strip extent across x, µm.
    pub strip_width: f64,
    /// w: gap between the strips, µm.
    pub gap: f64,
    /// h: conductor thickness, µm.
    pub thickness: f64,
    pub current1: f64,
    pub current2: f64,
    pub mu0: f64,
    /// Points closer than this to a conductor are rejected, µm.
    pub edge_epsilon: f64,
}

impl Default for MicrostripGeometry {
    /// The board used for the (100) experiments: 127 µm strips, 150 µm
    /// apart, 17.5 µm copper; unit currents and permeability.
    fn default() -> Self {
        MicrostripGeometry {
            strip_width: 127.0,
            gap: 150.0,
            thickness: 17.5,
            current1: 1.0,
            current2: 1.0,
            mu0: 1.0,
            edge_epsilon: 0.01,
        }
    }
}

impl MicrostripGeometry {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.strip_width, self.gap, self.thickness, self.current1, self.current2, self.mu0, self.edge_epsilon]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("microstrip geometry"));
        }
        if !(self.strip_width > 0.0) {
            return Err(Error::InvalidGeometry("strip width must be positive"));
        }
        if !(self.gap >= 0.0) {
            return Err(Error::InvalidGeometry("gap must be non-negative"));
        }
        if !(self.thickness > 0.0) {
            return Err(Error::InvalidGeometry("thickness must be positive"));
        }
        if !(self.edge_epsilon >= 0.0) {
            return Err(Error::InvalidGeometry("edge epsilon must be non-negative"));
        }
        Ok(())
    }

    /// x of the plane midway between the strips.
    pub fn midplane_x(&self) -> f64 {
        self.strip_width + 0.5 * self.gap
    }

    /// x-extent of a channel's conductor.
    pub fn strip_span(&self, channel: Channel) -> (f64, f64) {
        match channel {
            Channel::One => (0.0, self.strip_width),
            Channel::Two => (self.strip_width + self.gap, 2.0 * self.strip_width + self.gap),
        }
    }

    fn near_conductor(&self, x: f64, z: f64) -> bool {
        [Channel::One, Channel::Two].iter().any(|&ch| {
            let (x0, x1) = self.strip_span(ch);
            let dx = (x0 - x).max(0.0).max(x - x1);
            let dz = (-self.thickness - z).max(0.0).max(z);
            (dx * dx + dz * dz).sqrt() <= self.edge_epsilon
        })
    }
}

/// arctan(n/d) as printed, with the d → 0 limit taken from the side of n.
fn atan_ratio(n: f64, d: f64) -> f64 {
    if d == 0.0 {
        if n == 0.0 {
            0.0
        } else {
            n.signum() * 0.5 * PI
        }
    } else {
        (n / d).atan()
    }
}

/// Closed-form field of one strip at (x, z).
pub fn strip_field(geom: &MicrostripGeometry, channel: Channel, x: f64, z: f64) -> Result<FieldVector> {
    geom.validate()?;
    if !x.is_finite() || !z.is_finite() {
        return Err(Error::NonFinite("field point"));
    }
    if geom.near_conductor(x, z) {
        return Err(Error::OnConductor { x, z });
    }
    let l = geom.strip_width;
    let h = geom.thickness;
    let zh = z + h;
    match channel {
        Channel::One => {
            let k = geom.mu0 * geom.current1 / (2.0 * PI * l);
            let wx = k * (atan_ratio(x - l, z) - atan_ratio(x, z) + atan_ratio(x - l, zh) - atan_ratio(x, zh));
            let wz = 0.5
                * k
                * (((z * z + x * x) / (z * z + (x - l) * (x - l))).ln()
                    + ((zh * zh + x * x) / (zh * zh + (x - l) * (x - l))).ln());
            Ok(FieldVector::new(wx, 0.0, wz))
        }
        Channel::Two => {
            let k = geom.mu0 * geom.current2 / (2.0 * PI * l);
            let a = l + geom.gap - x;
            let b = 2.0 * l + geom.gap - x;
            let wx = k * (atan_ratio(a, z) - atan_ratio(b, z) + atan_ratio(a, zh) - atan_ratio(b, zh));
            let wz = 0.5 * k * (((z * z + a * a) / (z * z + b * b)).ln() + ((zh * zh + a * a) / (zh * zh + b * b)).ln());
            Ok(FieldVector::new(wx, 0.0, wz))
        }
    }
}

/// Both channel fields at one point.
pub fn channel_fields(geom: &MicrostripGeometry, x: f64, z: f64) -> Result<(FieldVector, FieldVector)> {
    Ok((strip_field(geom, Channel::One, x, z)?, strip_field(geom, Channel::Two, x, z)?))
}

/// η: angle between the two channel fields at (x, z), degrees in [0, 180].
pub fn field_orthogonality(geom: &MicrostripGeometry, x: f64, z: f64) -> Result<f64> {
    let (f1, f2) = channel_fields(geom, x, z)?;
    f1.angle_deg(&f2)
}

/// Gaussian focal spot. Lengths in µm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianBeam {
    pub waist_radius: f64,
    pub rayleigh_range: f64,
}

impl GaussianBeam {
    /// Measured spot: 0.59 µm diameter, 2.51 µm depth of field.
    pub const MEASURED: GaussianBeam = GaussianBeam { waist_radius: 0.295, rayleigh_range: 1.255 };

    pub fn new(waist_radius: f64, rayleigh_range: f64) -> Result<Self> {
        if !(waist_radius > 0.0) || !(rayleigh_range > 0.0) || !waist_radius.is_finite() || !rayleigh_range.is_finite() {
            return Err(Error::InvalidGeometry("beam waist and Rayleigh range must be positive"));
        }
        Ok(GaussianBeam { waist_radius, rayleigh_range })
    }

    /// Beam radius w(z).
    pub fn radius_at(&self, z: f64) -> f64 {
        let q = z / self.rayleigh_range;
        self.waist_radius * (1.0 + q * q).sqrt()
    }
}

/// Intensity relative to the focus at radial offset `r` and axial offset `z`.
pub fn beam_intensity(beam: &GaussianBeam, r: f64, z: f64) -> f64 {
    let w = beam.radius_at(z);
    let ratio = beam.waist_radius / w;
    ratio * ratio * (-2.0 * r * r / (w * w)).exp()
}
