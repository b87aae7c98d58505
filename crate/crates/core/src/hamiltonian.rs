//! Rotating-frame Hamiltonians for the NV triplet under two-channel
//! microwave control, and the incoherent ensembles built from them.
//!
//! With the transmitter at the zero-field splitting, every control
//! Hamiltonian has the form A·S_x + B·S'_y + C·S_y + D·S'_x, linear in the
//! four AWG values (I₁, Q₁, I₂, Q₂).

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fields::FieldVector;
use crate::geometry::{dot, PasRotation};
use crate::spin::{pseudo_spin_operators, spin1_basis, twisted_operators, SpinMatrix, SubspaceSign};
use crate::units::{deg_to_rad, mhz_to_angular, HYPERFINE_N14_MHZ};

/// AWG values for both channels in Cartesian form.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ControlValues {
    pub i1: f64,
    pub q1: f64,
    pub i2: f64,
    pub q2: f64,
}

impl ControlValues {
    pub fn iq(i1: f64, q1: f64, i2: f64, q2: f64) -> Self {
        ControlValues { i1, q1, i2, q2 }
    }

    /// From amplitudes and phases (radians): I = Ω·cos θ, Q = Ω·sin θ.
    pub fn polar(omega1: f64, theta1: f64, omega2: f64, theta2: f64) -> Self {
        ControlValues {
            i1: omega1 * theta1.cos(),
            q1: omega1 * theta1.sin(),
            i2: omega2 * theta2.cos(),
            q2: omega2 * theta2.sin(),
        }
    }

    /// (Ω, θ) of channel 1 or 2.
    pub fn to_polar(&self, channel: usize) -> (f64, f64) {
        let (i, q) = if channel == 1 { (self.i1, self.q1) } else { (self.i2, self.q2) };
        (i.hypot(q), q.atan2(i))
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.i1, self.q1, self.i2, self.q2]
    }
}

/// Letter coefficients of A·S_x + B·S'_y + C·S_y + D·S'_x, rad/µs.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AprioriCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Coefficients for a given lab→NV rotation and channel fields. Fields are
/// expected in rad/µs per unit AWG value (the Rabi scale already applied).
///
/// A = ½ x̂_NV·(I₁w₁ + I₂w₂), B = −½ x̂_NV·(Q₁w₁ + Q₂w₂),
/// C = ½ ŷ_NV·(I₁w₁ + I₂w₂), D = −½ ŷ_NV·(Q₁w₁ + Q₂w₂).
pub fn apriori_coefficients(
    r: &PasRotation,
    f1: &FieldVector,
    f2: &FieldVector,
    u: &ControlValues,
) -> AprioriCoefficients {
    let (w1, w2) = (f1.as_vec(), f2.as_vec());
    let comb = |a: f64, b: f64| [a * w1[0] + b * w2[0], a * w1[1] + b * w2[1], a * w1[2] + b * w2[2]];
    let i = comb(u.i1, u.i2);
    let q = comb(u.q1, u.q2);
    AprioriCoefficients {
        a: 0.5 * dot(r.row(0), i),
        b: -0.5 * dot(r.row(0), q),
        c: 0.5 * dot(r.row(1), i),
        d: -0.5 * dot(r.row(1), q),
    }
}

pub fn apriori_hamiltonian(k: &AprioriCoefficients) -> SpinMatrix {
    let b = spin1_basis();
    let t = twisted_operators();
    b.sx * k.a + t.sy_t * k.b + b.sy * k.c + t.sx_t * k.d
}

/// Coefficients of Ã·S_x⁺ + B̃·S_y⁺ + C̃·S_x⁻ + D̃·S_y⁻.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PseudoCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl PseudoCoefficients {
    pub fn hamiltonian(&self) -> SpinMatrix {
        let p = pseudo_spin_operators(SubspaceSign::Plus);
        let m = pseudo_spin_operators(SubspaceSign::Minus);
        p.sx * self.a + p.sy * self.b + m.sx * self.c + m.sy * self.d
    }
}

/// Rewrites the letter form in the pseudo spin-1/2 basis, using
/// S_x = (S_x⁺ + S_x⁻)/√2, S_y = (S_y⁻ − S_y⁺)/√2,
/// S'_x = (S_x⁻ − S_x⁺)/√2 and S'_y = −(S_y⁺ + S_y⁻)/√2.
pub fn pseudo_coefficients(k: &AprioriCoefficients) -> PseudoCoefficients {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    PseudoCoefficients {
        a: s * (k.a - k.d),
        b: -s * (k.b + k.c),
        c: s * (k.a + k.d),
        d: s * (k.c - k.b),
    }
}

/// Axial zero-field term Δ·S_z².
pub fn internal_hamiltonian(delta: f64) -> SpinMatrix {
    spin1_basis().sz2 * delta
}

/// Measured-parameter model for one sub-ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhenomenologicalParams {
    /// Rabi drive strength of the sub-ensemble, MHz.
    pub omega_nv_mhz: f64,
    /// Angle between the two channel fields, degrees.
    pub eta_deg: f64,
    /// Fixed phase of channel 2 relative to channel 1, degrees.
    pub dtheta_deg: f64,
    /// Zero-field splitting, MHz.
    pub zfs_mhz: f64,
    /// Transmitter frequency, MHz.
    pub transmitter_mhz: f64,
}

impl PhenomenologicalParams {
    pub fn model(&self) -> ControlModel {
        ControlModel::Phenomenological {
            omega_nv: mhz_to_angular(self.omega_nv_mhz),
            eta: deg_to_rad(self.eta_deg),
        }
    }

    /// (Δ − ω_T) in rad/µs.
    pub fn residual(&self) -> f64 {
        mhz_to_angular(self.zfs_mhz - self.transmitter_mhz)
    }
}

/// Ω_NV·½[Ω₁S_x + Ω₂cosΔθ(cosη S_x + sinη S_y) + Ω₂sinΔθ(sinη S'_x + cosη S'_y)]
/// with amplitudes in [0, 1].
pub fn phenomenological_hamiltonian(p: &PhenomenologicalParams, omega1: f64, omega2: f64) -> Result<SpinMatrix> {
    for v in [omega1, omega2] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::AmplitudeOutOfBounds { value: v, lo: 0.0, hi: 1.0 });
        }
    }
    if !(p.omega_nv_mhz > 0.0) {
        return Err(Error::InvalidJob(alloc::format!("omega_nv must be positive, got {}", p.omega_nv_mhz)));
    }
    let u = ControlValues::polar(omega1, 0.0, omega2, deg_to_rad(p.dtheta_deg));
    Ok(p.model().hamiltonian(&u))
}

/// How one ensemble member turns AWG values into a control Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlModel {
    /// Geometry-derived: PAS rotation plus channel fields in rad/µs.
    Apriori { rotation: PasRotation, field1: FieldVector, field2: FieldVector },
    /// Measured drive strength Ω_NV (rad/µs) and field angle η (radians).
    /// Channel 1 defines S_x; channel 2's in-phase part drives
    /// cosη S_x + sinη S_y and its quadrature part sinη S'_x + cosη S'_y.
    Phenomenological { omega_nv: f64, eta: f64 },
}

impl ControlModel {
    /// Hamiltonians generated by unit I₁, Q₁, I₂, Q₂.
    pub fn iq_generators(&self) -> [SpinMatrix; 4] {
        match self {
            ControlModel::Apriori { rotation, field1, field2 } => {
                let z = FieldVector::ZERO;
                [
                    (field1, &z, ControlValues::iq(1.0, 0.0, 0.0, 0.0)),
                    (field1, &z, ControlValues::iq(0.0, 1.0, 0.0, 0.0)),
                    (&z, field2, ControlValues::iq(0.0, 0.0, 1.0, 0.0)),
                    (&z, field2, ControlValues::iq(0.0, 0.0, 0.0, 1.0)),
                ]
                .map(|(a, b, u)| apriori_hamiltonian(&apriori_coefficients(rotation, a, b, &u)))
            }
            ControlModel::Phenomenological { omega_nv, eta } => {
                let b = spin1_basis();
                let t = twisted_operators();
                let (s, c) = eta.sin_cos();
                let h = 0.5 * omega_nv;
                [b.sx * h, t.sy_t * h, (b.sx * c + b.sy * s) * h, (t.sx_t * s + t.sy_t * c) * h]
            }
        }
    }

    pub fn hamiltonian(&self, u: &ControlValues) -> SpinMatrix {
        let g = self.iq_generators();
        let v = u.as_array();
        g[0] * v[0] + g[1] * v[1] + g[2] * v[2] + g[3] * v[3]
    }

    /// Letter coefficients for the given controls.
    pub fn coefficients(&self, u: &ControlValues) -> AprioriCoefficients {
        match self {
            ControlModel::Apriori { rotation, field1, field2 } => apriori_coefficients(rotation, field1, field2, u),
            ControlModel::Phenomenological { omega_nv, eta } => {
                let (s, c) = eta.sin_cos();
                let h = 0.5 * omega_nv;
                AprioriCoefficients {
                    a: h * (u.i1 + c * u.i2),
                    b: h * (u.q1 + c * u.q2),
                    c: h * s * u.i2,
                    d: h * s * u.q2,
                }
            }
        }
    }
}

/// Which control variables the optimizer and pulse files use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlLayout {
    /// Amplitudes (Ω₁, Ω₂) with fixed channel phases in radians.
    Amplitude { theta1: f64, theta2: f64 },
    /// (I₁, Q₁, I₂, Q₂).
    Iq,
}

impl ControlLayout {
    pub fn n_controls(&self) -> usize {
        match self {
            ControlLayout::Amplitude { .. } => 2,
            ControlLayout::Iq => 4,
        }
    }

    pub fn control_values(&self, u: &[f64]) -> ControlValues {
        match *self {
            ControlLayout::Amplitude { theta1, theta2 } => ControlValues::polar(u[0], theta1, u[1], theta2),
            ControlLayout::Iq => ControlValues::iq(u[0], u[1], u[2], u[3]),
        }
    }

    /// ∂H/∂u_c for each control variable; H is linear in u.
    pub fn generators(&self, model: &ControlModel) -> Vec<SpinMatrix> {
        let g = model.iq_generators();
        match *self {
            ControlLayout::Amplitude { theta1, theta2 } => {
                let (s1, c1) = theta1.sin_cos();
                let (s2, c2) = theta2.sin_cos();
                alloc::vec![g[0] * c1 + g[1] * s1, g[2] * c2 + g[3] * s2]
            }
            ControlLayout::Iq => g.to_vec(),
        }
    }
}

/// One element of the incoherent Hamiltonian distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleMember {
    /// Sub-ensemble or orientation name, shared by robustness copies.
    pub label: String,
    pub model: ControlModel,
    /// Rotating-frame residual (Δ − ω_T), rad/µs.
    pub residual: f64,
    /// Zero-field splitting offset δ, rad/µs.
    pub zfs_offset: f64,
    /// Nitrogen spin projection m ∈ {−1, 0, 1} for the hyperfine branch.
    pub hyperfine_m: i8,
    /// Hyperfine coupling A_N, rad/µs.
    pub hyperfine_coupling: f64,
    pub weight: f64,
}

impl EnsembleMember {
    pub fn new(label: impl Into<String>, model: ControlModel) -> Self {
        EnsembleMember {
            label: label.into(),
            model,
            residual: 0.0,
            zfs_offset: 0.0,
            hyperfine_m: 0,
            hyperfine_coupling: mhz_to_angular(HYPERFINE_N14_MHZ),
            weight: 1.0,
        }
    }

    /// (Δ − ω_T + δ)·S_z² + m·A_N·S_z.
    pub fn drift(&self) -> SpinMatrix {
        let b = spin1_basis();
        b.sz2 * (self.residual + self.zfs_offset) + b.sz * (self.hyperfine_m as f64 * self.hyperfine_coupling)
    }

    pub fn hamiltonian(&self, u: &ControlValues) -> SpinMatrix {
        self.drift() + self.model.hamiltonian(u)
    }
}

/// Weights scaled to sum to one. Rejects empty ensembles and non-positive or
/// non-finite weights.
pub fn normalized_weights(members: &[EnsembleMember]) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let sum: f64 = members.iter().map(|m| m.weight).sum();
    if members.iter().any(|m| !(m.weight > 0.0) || !m.weight.is_finite()) || !sum.is_finite() {
        return Err(Error::InvalidWeights { sum });
    }
    Ok(members.iter().map(|m| m.weight / sum).collect())
}

/// Expands each base member over ZFS offsets (rad/µs) and, optionally, the
/// three nitrogen hyperfine branches with equal weight. Output weights are
/// renormalized to sum to one. An empty offset list means no ZFS spread.
pub fn robustness_ensemble(base: &[EnsembleMember], zfs_offsets: &[f64], hyperfine: bool) -> Result<Vec<EnsembleMember>> {
    normalized_weights(base)?;
    let offsets: &[f64] = if zfs_offsets.is_empty() { &[0.0] } else { zfs_offsets };
    if offsets.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("zfs offsets"));
    }
    let branches: &[i8] = if hyperfine { &[-1, 0, 1] } else { &[0] };
    let mut out = Vec::with_capacity(base.len() * offsets.len() * branches.len());
    for m in base {
        for &d in offsets {
            for &hf in branches {
                let mut e = m.clone();
                e.zfs_offset = m.zfs_offset + d;
                e.hyperfine_m = hf;
                e.weight = m.weight / (offsets.len() * branches.len()) as f64;
                out.push(e);
            }
        }
    }
    let w = normalized_weights(&out)?;
    for (m, w) in out.iter_mut().zip(w) {
        m.weight = w;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pas_rotation, CrystalCut, NvOrientation};
    use crate::spin::Level;
    use crate::C64;
    use core::f64::consts::{FRAC_1_SQRT_2, PI};
    use proptest::prelude::*;

    #[test]
    fn apriori_simple_cases() {
        let r = PasRotation::IDENTITY;
        let f1 = FieldVector::new(1.0, 0.0, 0.0);
        let k = apriori_coefficients(&r, &f1, &FieldVector::ZERO, &ControlValues::iq(1.0, 0.0, 0.0, 0.0));
        assert_eq!(k, AprioriCoefficients { a: 0.5, b: 0.0, c: 0.0, d: 0.0 });
        let h = apriori_hamiltonian(&k);
        assert!(h.max_abs_diff(&(spin1_basis().sx * 0.5)) < 1e-15);
        let k = apriori_coefficients(&r, &FieldVector::new(0.3, 0.2, 0.9), &f1, &ControlValues::iq(0.4, 0.0, -0.7, 0.0));
        assert_eq!((k.b, k.d), (0.0, 0.0));
        assert_eq!(apriori_hamiltonian(&AprioriCoefficients::default()), SpinMatrix::zero());
    }

    /// Rotating-frame average of the lab-frame control term, computed from
    /// scratch: H_lab(t) = Σ_j (x̂_j·C(t)) S_j with C(t) = Σ_ch (I cos ωt +
    /// Q sin ωt) w_ch, moved into the frame of Δ S_z² (Δ = ω) and averaged
    /// over one period.
    fn averaged_interaction_frame(r: &PasRotation, f1: &FieldVector, f2: &FieldVector, u: &ControlValues) -> SpinMatrix {
        let b = spin1_basis();
        let ops = [b.sx, b.sy, b.sz];
        let omega = 1.0;
        let n = 64;
        let mut acc = SpinMatrix::zero();
        for k in 0..n {
            let t = 2.0 * PI * k as f64 / n as f64;
            let (s, c) = (omega * t).sin_cos();
            let c1 = u.i1 * c + u.q1 * s;
            let c2 = u.i2 * c + u.q2 * s;
            let field = [
                c1 * f1.wx + c2 * f2.wx,
                c1 * f1.wy + c2 * f2.wy,
                c1 * f1.wz + c2 * f2.wz,
            ];
            let mut h = SpinMatrix::zero();
            for j in 0..3 {
                h += ops[j] * dot(r.row(j), field);
            }
            let d = SpinMatrix::diag([1.0, 0.0, 1.0]);
            let mut frame = SpinMatrix::identity();
            for i in 0..3 {
                frame.0[i][i] = C64::new(0.0, omega * t * d.0[i][i].re).exp();
            }
            acc += frame * h * frame.adjoint();
        }
        acc * (1.0 / n as f64)
    }

    proptest! {
        #[test]
        fn apriori_matches_interaction_frame_average(
            f in proptest::array::uniform6(-1.0f64..1.0),
            u in proptest::array::uniform4(-1.0f64..1.0),
            o in 0usize..4,
            cut in 0usize..3,
        ) {
            let r = pas_rotation(CrystalCut::ALL[cut], NvOrientation::ALL[o]);
            let f1 = FieldVector::new(f[0], f[1], f[2]);
            let f2 = FieldVector::new(f[3], f[4], f[5]);
            let u = ControlValues::iq(u[0], u[1], u[2], u[3]);
            let h = apriori_hamiltonian(&apriori_coefficients(&r, &f1, &f2, &u));
            let oracle = averaged_interaction_frame(&r, &f1, &f2, &u);
            prop_assert!(h.max_abs_diff(&oracle) < 1e-12);
        }

        #[test]
        fn apriori_is_real_linear(
            a in proptest::array::uniform4(-1.0f64..1.0),
            b in proptest::array::uniform4(-1.0f64..1.0),
            s in -2.0f64..2.0,
        ) {
            let m = ControlModel::Apriori {
                rotation: pas_rotation(CrystalCut::C110, NvOrientation::MPM),
                field1: FieldVector::new(0.3, 0.0, -0.8),
                field2: FieldVector::new(0.9, 0.1, 0.4),
            };
            let ua = ControlValues::iq(a[0], a[1], a[2], a[3]);
            let ub = ControlValues::iq(b[0], b[1], b[2], b[3]);
            let sum = ControlValues::iq(a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]);
            let lhs = m.hamiltonian(&sum);
            let rhs = m.hamiltonian(&ua) + m.hamiltonian(&ub) * s;
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            prop_assert!(lhs.is_hermitian(1e-12));
        }

        #[test]
        fn pseudo_round_trip(k in proptest::array::uniform4(-5.0f64..5.0)) {
            let k = AprioriCoefficients { a: k[0], b: k[1], c: k[2], d: k[3] };
            let h = apriori_hamiltonian(&k);
            prop_assert!(pseudo_coefficients(&k).hamiltonian().max_abs_diff(&h) < 1e-12);
        }
    }

    #[test]
    fn pseudo_coefficient_cases() {
        assert_eq!(pseudo_coefficients(&AprioriCoefficients::default()), PseudoCoefficients::default());
        // In-phase drive only: the S_x part splits evenly over both
        // subspaces, the S_y part with opposite signs.
        let k = AprioriCoefficients { a: 1.0, b: 0.0, c: 0.5, d: 0.0 };
        let p = pseudo_coefficients(&k);
        assert!((p.a - FRAC_1_SQRT_2).abs() < 1e-15 && (p.c - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((p.b + 0.5 * FRAC_1_SQRT_2).abs() < 1e-15 && (p.d - 0.5 * FRAC_1_SQRT_2).abs() < 1e-15);
        // C̃ = D̃ = 0 leaves the {|0⟩,|−1⟩} block untouched.
        let k = AprioriCoefficients { a: 0.7, b: 0.3, c: 0.3, d: -0.7 };
        let p = pseudo_coefficients(&k);
        assert!(p.c.abs() < 1e-15 && p.d.abs() < 1e-15);
        let h = apriori_hamiltonian(&k);
        let (z, m) = (Level::Zero.index(), Level::Minus.index());
        for (r, c) in [(z, m), (m, z), (m, m)] {
            assert!(h.0[r][c].norm() < 1e-15);
        }
    }

    #[test]
    fn internal_term() {
        assert_eq!(internal_hamiltonian(0.0), SpinMatrix::zero());
        let h = internal_hamiltonian(2.5);
        let mut v = crate::linalg::eigh(&h).values;
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v, [0.0, 2.5, 2.5]);
        let p = PhenomenologicalParams { omega_nv_mhz: 1.0, eta_deg: 0.0, dtheta_deg: 0.0, zfs_mhz: 2870.0, transmitter_mhz: 2870.0 };
        assert_eq!(internal_hamiltonian(p.residual()), SpinMatrix::zero());
    }

    fn params(eta: f64, dtheta: f64, omega_mhz: f64) -> PhenomenologicalParams {
        PhenomenologicalParams { omega_nv_mhz: omega_mhz, eta_deg: eta, dtheta_deg: dtheta, zfs_mhz: 2870.0, transmitter_mhz: 2870.0 }
    }

    #[test]
    fn phenomenological_substitutions() {
        let b = spin1_basis();
        let t = twisted_operators();
        let w = 2.0 * PI * 1.5;
        let h = phenomenological_hamiltonian(&params(115.0, 270.0, 1.5), 0.6, 0.0).unwrap();
        assert!(h.max_abs_diff(&(b.sx * (0.5 * w * 0.6))) < 1e-14);
        let h = phenomenological_hamiltonian(&params(90.0, 0.0, 1.5), 0.6, 0.8).unwrap();
        assert!(h.max_abs_diff(&((b.sx * 0.6 + b.sy * 0.8) * (0.5 * w))) < 1e-14);

        // Direct transcription of the five-term form.
        let (eta, dt) = (115f64.to_radians(), 270f64.to_radians());
        let w = 2.0 * PI * 2.64;
        let expect = (b.sx * 1.0
            + b.sx * (dt.cos() * eta.cos())
            + b.sy * (dt.cos() * eta.sin())
            + t.sx_t * (dt.sin() * eta.sin())
            + t.sy_t * (dt.sin() * eta.cos()))
            * (0.5 * w);
        let h = phenomenological_hamiltonian(&params(115.0, 270.0, 2.64), 1.0, 1.0).unwrap();
        assert!(h.max_abs_diff(&expect) < 1e-13);
        assert!(h.is_hermitian(1e-14));
        let k = params(115.0, 270.0, 2.64).model().coefficients(&ControlValues::polar(1.0, 0.0, 1.0, dt));
        assert!(k.b.abs() > 1.0 && k.d.abs() > 1.0);
        assert!(apriori_hamiltonian(&k).max_abs_diff(&h) < 1e-13);

        assert!(matches!(
            phenomenological_hamiltonian(&params(115.0, 0.0, 1.0), 1.2, 0.0),
            Err(Error::AmplitudeOutOfBounds { .. })
        ));
    }

    #[test]
    fn layout_generators_are_partial_derivatives() {
        let m = params(115.0, 270.0, 2.64).model();
        let layout = ControlLayout::Amplitude { theta1: 0.0, theta2: 270f64.to_radians() };
        let g = layout.generators(&m);
        let u = [0.3, 0.8];
        let h = m.hamiltonian(&layout.control_values(&u));
        assert!(h.max_abs_diff(&(g[0] * u[0] + g[1] * u[1])) < 1e-13);
        assert_eq!(ControlLayout::Iq.generators(&m).len(), 4);
    }

    #[test]
    fn polar_round_trip() {
        let u = ControlValues::polar(0.7, 0.4, 0.2, -2.0);
        let (o, t) = u.to_polar(1);
        assert!((o - 0.7).abs() < 1e-15 && (t - 0.4).abs() < 1e-15);
        let (o, t) = u.to_polar(2);
        assert!((o - 0.2).abs() < 1e-15 && (t + 2.0).abs() < 1e-15);
    }

    #[test]
    fn ensemble_expansion() {
        let m = params(115.0, 270.0, 2.64).model();
        let base = [EnsembleMember::new("A", m), EnsembleMember::new("B", m)];
        let d = mhz_to_angular(0.1);
        let e = robustness_ensemble(&base, &[-d, 0.0, d], false).unwrap();
        assert_eq!(e.len(), 6);
        let e = robustness_ensemble(&base, &[-d, 0.0, d], true).unwrap();
        assert_eq!(e.len(), 18);
        assert!((e.iter().map(|m| m.weight).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(e.iter().all(|m| (m.weight - 1.0 / 18.0).abs() < 1e-15));
        let hf = e.iter().find(|m| m.hyperfine_m == 1 && m.zfs_offset == d).unwrap();
        let b = spin1_basis();
        let want = b.sz2 * d + b.sz * mhz_to_angular(2.16);
        assert!(hf.drift().max_abs_diff(&want) < 1e-13);
        assert_eq!(robustness_ensemble(&[], &[0.0], false), Err(Error::EmptyEnsemble));
        let mut bad = base.clone();
        bad[0].weight = -1.0;
        assert!(matches!(robustness_ensemble(&bad, &[], false), Err(Error::InvalidWeights { .. })));
    }
}
