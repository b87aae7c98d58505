//! Lab-frame reference integrator for checking the rotating-wave
//! Hamiltonians.
//!
//! The lab-frame Hamiltonian is Δ·S_z² + Σ_j c_j(t)·S_j with
//! c_j(t) = Σ_ch (I_ch cos ω_T t + Q_ch sin ω_T t)·(ĵ_NV·w_ch). It is
//! integrated with exponential-midpoint steps using the Taylor exponential,
//! so it shares no code path with the spectral propagator.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fields::FieldVector;
use crate::geometry::{dot, PasRotation};
use crate::hamiltonian::ControlValues;
use crate::linalg::expm_taylor;
use crate::spin::{spin1_basis, SpinMatrix};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabFrameDrive {
    pub rotation: PasRotation,
    /// Channel fields, rad/µs per unit AWG value.
    pub field1: FieldVector,
    pub field2: FieldVector,
    pub controls: ControlValues,
    /// Zero-field splitting Δ, rad/µs.
    pub zfs: f64,
    /// Transmitter frequency ω_T, rad/µs.
    pub transmitter: f64,
}

impl LabFrameDrive {
    pub fn hamiltonian_at(&self, t: f64) -> SpinMatrix {
        let b = spin1_basis();
        let (s, c) = (self.transmitter * t).sin_cos();
        let u = &self.controls;
        let c1 = u.i1 * c + u.q1 * s;
        let c2 = u.i2 * c + u.q2 * s;
        let (w1, w2) = (self.field1.as_vec(), self.field2.as_vec());
        let field = [c1 * w1[0] + c2 * w2[0], c1 * w1[1] + c2 * w2[1], c1 * w1[2] + c2 * w2[2]];
        b.sz2 * self.zfs
            + b.sx * dot(self.rotation.row(0), field)
            + b.sy * dot(self.rotation.row(1), field)
            + b.sz * dot(self.rotation.row(2), field)
    }
}

/// Lab-frame propagator over [0, duration] µs with at most `max_step` µs per
/// step, returned in the frame rotating at ω_T: e^{iω_T S_z² T}·U_lab(T).
pub fn rotating_frame_propagator(drive: &LabFrameDrive, duration: f64, max_step: f64) -> Result<SpinMatrix> {
    if !(duration > 0.0) || !(max_step > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidJob(alloc::format!("invalid integration window {duration} / {max_step}")));
    }
    let n = (duration / max_step).ceil() as usize;
    let dt = duration / n as f64;
    let mut u = SpinMatrix::identity();
    let mi = C64::new(0.0, -dt);
    for k in 0..n {
        let t = (k as f64 + 0.5) * dt;
        u = expm_taylor(&(drive.hamiltonian_at(t) * mi)) * u;
    }
    let frame = SpinMatrix::diag([1.0, 0.0, 1.0]) * C64::new(0.0, drive.transmitter * duration);
    Ok(expm_taylor(&frame) * u)
}
