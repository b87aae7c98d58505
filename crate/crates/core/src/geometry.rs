//! Crystal cuts, NV bond orientations and lab→NV frame rotations.
//!
//! The lab frame has z along the optical axis, which is the outward normal of
//! the polished cut. The crystal→lab rotation is the minimal (Rodrigues)
//! rotation that carries the cut normal onto lab z. Each NV frame has z along
//! the bond direction; its x axis is the projection of lab x onto the plane
//! normal to the bond, which keeps mirror-image orientations related by a
//! mirror-image frame.

use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fields::FieldVector;
use crate::hamiltonian::{apriori_coefficients, ControlValues};

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Result<Vec3> {
    let n = norm(a);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok([a[0] / n, a[1] / n, a[2] / n])
}

/// A proper rotation stored as a row-major 3×3 matrix. When it comes from
/// [`pas_rotation`] it maps lab-frame components to NV-frame components, so
/// row j is the NV axis j expressed in lab coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PasRotation {
    pub m: [[f64; 3]; 3],
}

impl PasRotation {
    pub const IDENTITY: PasRotation = PasRotation { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };

    pub fn apply(&self, v: Vec3) -> Vec3 {
        [dot(self.m[0], v), dot(self.m[1], v), dot(self.m[2], v)]
    }

    pub fn transpose(&self) -> PasRotation {
        let mut t = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                t[r][c] = self.m[c][r];
            }
        }
        PasRotation { m: t }
    }

    /// self · other
    pub fn compose(&self, other: &PasRotation) -> PasRotation {
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = (0..3).map(|k| self.m[r][k] * other.m[k][c]).sum();
            }
        }
        PasRotation { m: out }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest entrywise deviation of RᵀR from 𝟙.
    pub fn orthogonality_error(&self) -> f64 {
        let g = self.transpose().compose(self);
        let mut e = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                e = e.max((g.m[r][c] - want).abs());
            }
        }
        e
    }

    pub fn max_abs_diff(&self, other: &PasRotation) -> f64 {
        let mut e = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                e = e.max((self.m[r][c] - other.m[r][c]).abs());
            }
        }
        e
    }

    /// Row j as a vector (NV axis j in lab coordinates for a PAS rotation).
    pub fn row(&self, j: usize) -> Vec3 {
        self.m[j]
    }
}

/// Rotation by `angle` about the unit vector `k` (Rodrigues formula).
pub fn axis_angle(k: Vec3, angle: f64) -> PasRotation {
    let (s, c) = angle.sin_cos();
    let v = 1.0 - c;
    let [x, y, z] = k;
    PasRotation {
        m: [
            [c + x * x * v, x * y * v - z * s, x * z * v + y * s],
            [y * x * v + z * s, c + y * y * v, y * z * v - x * s],
            [z * x * v - y * s, z * y * v + x * s, c + z * z * v],
        ],
    }
}

/// Minimal rotation taking the direction of `a` onto the direction of `b`:
/// axis â×b̂, angle arccos(â·b̂). Antiparallel inputs are turned by π about
/// â×e_k, where e_k is the coordinate axis most orthogonal to â.
pub fn rotation_between(a: Vec3, b: Vec3) -> Result<PasRotation> {
    let a = normalize(a)?;
    let b = normalize(b)?;
    let axis = cross(a, b);
    let s = norm(axis);
    let c = dot(a, b).clamp(-1.0, 1.0);
    if s < 1e-15 {
        if c > 0.0 {
            return Ok(PasRotation::IDENTITY);
        }
        let mut k = 0;
        for i in 1..3 {
            if a[i].abs() < a[k].abs() {
                k = i;
            }
        }
        let mut e = [0.0; 3];
        e[k] = 1.0;
        return Ok(axis_angle(normalize(cross(a, e))?, core::f64::consts::PI));
    }
    let k = [axis[0] / s, axis[1] / s, axis[2] / s];
    Ok(axis_angle(k, s.atan2(c)))
}

/// The four NV bond directions, as integer indices in the crystal frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NvOrientation([i8; 3]);

impl NvOrientation {
    pub const PPP: NvOrientation = NvOrientation([1, 1, 1]);
    pub const MMP: NvOrientation = NvOrientation([-1, -1, 1]);
    pub const MPM: NvOrientation = NvOrientation([-1, 1, -1]);
    pub const PMM: NvOrientation = NvOrientation([1, -1, -1]);

    /// Sorted by triple.
    pub const ALL: [NvOrientation; 4] = [Self::MMP, Self::MPM, Self::PMM, Self::PPP];

    pub fn new(triple: [i8; 3]) -> Option<Self> {
        Self::ALL.iter().copied().find(|o| o.0 == triple)
    }

    pub fn triple(&self) -> [i8; 3] {
        self.0
    }

    /// Unit bond direction in crystal coordinates.
    pub fn direction(&self) -> Vec3 {
        let s = 1.0 / 3.0f64.sqrt();
        [self.0[0] as f64 * s, self.0[1] as f64 * s, self.0[2] as f64 * s]
    }

    /// Parse "(1,-1,-1)", "1,-1,-1" or "1 -1 -1".
    pub fn parse(s: &str) -> Option<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let mut t = [0i8; 3];
        let mut n = 0;
        for part in inner.split(|c: char| c == ',' || c.is_whitespace()).filter(|p| !p.is_empty()) {
            if n == 3 {
                return None;
            }
            t[n] = part.parse().ok()?;
            n += 1;
        }
        if n != 3 {
            return None;
        }
        Self::new(t)
    }
}

impl fmt::Display for NvOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CrystalCut {
    C100,
    C110,
    C111,
}

impl CrystalCut {
    pub const ALL: [CrystalCut; 3] = [CrystalCut::C100, CrystalCut::C110, CrystalCut::C111];

    pub fn normal(&self) -> Vec3 {
        match self {
            CrystalCut::C100 => [1.0, 0.0, 0.0],
            CrystalCut::C110 => [1.0, 1.0, 0.0],
            CrystalCut::C111 => [1.0, 1.0, 1.0],
        }
    }

    /// Accepts "100", "(100)", "c100" and the like.
    pub fn parse(s: &str) -> Option<Self> {
        let t = s.trim().trim_start_matches(['c', 'C']).trim_start_matches('(').trim_end_matches(')');
        match t {
            "100" => Some(CrystalCut::C100),
            "110" => Some(CrystalCut::C110),
            "111" => Some(CrystalCut::C111),
            _ => None,
        }
    }

    /// Crystal→lab rotation: cut normal onto lab z.
    pub fn crystal_to_lab(&self) -> PasRotation {
        rotation_between(self.normal(), [0.0, 0.0, 1.0]).expect("cut normals are nonzero")
    }
}

impl fmt::Display for CrystalCut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CrystalCut::C100 => "100",
            CrystalCut::C110 => "110",
            CrystalCut::C111 => "111",
        };
        f.write_str(s)
    }
}

/// Bond direction of `orientation` in lab coordinates.
pub fn nv_axis_lab(cut: CrystalCut, orientation: NvOrientation) -> Vec3 {
    cut.crystal_to_lab().apply(orientation.direction())
}

/// Lab→NV rotation for one orientation in a given cut. Row 2 is the bond
/// direction in lab coordinates; row 0 is lab x projected onto the plane
/// normal to the bond (lab y is used if the bond lies along lab x).
pub fn pas_rotation(cut: CrystalCut, orientation: NvOrientation) -> PasRotation {
    let z = nv_axis_lab(cut, orientation);
    // Bring the bond onto z with the minimal rotation, then twist about z so
    // the projected lab x lands on NV x.
    let to_z = rotation_between(z, [0.0, 0.0, 1.0]).expect("bond directions are unit vectors");
    let mut reference = [1.0, 0.0, 0.0];
    let mut offset = 0.0;
    if 1.0 - dot(reference, z).abs() < 1e-9 {
        reference = [0.0, 1.0, 0.0];
        offset = core::f64::consts::FRAC_PI_2;
    }
    let r = to_z.apply(reference);
    let psi = r[1].atan2(r[0]) - offset;
    axis_angle([0.0, 0.0, 1.0], -psi).compose(&to_z)
}

/// Groups orientations whose control-coefficient tuples agree.
///
/// For each channel, the coefficients (A, B, C, D) are evaluated for a unit
/// in-phase and a unit quadrature drive; two orientations are degenerate if
/// every one of these numbers agrees within `rel_tol` of the largest
/// magnitude among all orientations. Groups are sorted internally and by
/// their first member.
pub fn subensemble_partition(cut: CrystalCut, fields: &[FieldVector], rel_tol: f64) -> Vec<Vec<NvOrientation>> {
    let sig = |o: NvOrientation| -> Vec<f64> {
        let r = pas_rotation(cut, o);
        let mut out = Vec::new();
        // The coefficients are linear in each channel, so every channel field
        // can be probed through the channel-1 slot.
        for f in fields {
            for u in [ControlValues::iq(1.0, 0.0, 0.0, 0.0), ControlValues::iq(0.0, 1.0, 0.0, 0.0)] {
                let c = apriori_coefficients(&r, f, &FieldVector::ZERO, &u);
                out.extend_from_slice(&[c.a, c.b, c.c, c.d]);
            }
        }
        out
    };
    let sigs: Vec<(NvOrientation, Vec<f64>)> = NvOrientation::ALL.iter().map(|&o| (o, sig(o))).collect();
    let scale = sigs.iter().flat_map(|(_, s)| s.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = rel_tol * scale;
    let mut groups: Vec<(Vec<f64>, Vec<NvOrientation>)> = Vec::new();
    for (o, s) in sigs {
        match groups
            .iter_mut()
            .find(|(rep, _)| rep.iter().zip(s.iter()).all(|(a, b)| (a - b).abs() <= tol))
        {
            Some((_, members)) => members.push(o),
            None => groups.push((s, alloc::vec![o])),
        }
    }
    let mut out: Vec<Vec<NvOrientation>> = groups.into_iter().map(|(_, mut g)| {
        g.sort();
        g
    }).collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn rotation_between_examples() {
        let r = rotation_between([0.0, 0.0, 1.0], [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(r, PasRotation::IDENTITY);

        let r = rotation_between([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap();
        assert!(close(r.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], 1e-15));
        assert!(close(r.apply([0.0, 0.0, 1.0]), [0.0, 0.0, 1.0], 1e-15));

        let r = rotation_between([1.0, 1.0, 1.0], [0.0, 0.0, 1.0]).unwrap();
        let s = 1.0 / 3.0f64.sqrt();
        assert!(close(r.apply([s, s, s]), [0.0, 0.0, 1.0], 1e-15));
        // rotation angle from the trace: 1 + 2cos(angle)
        let tr = r.m[0][0] + r.m[1][1] + r.m[2][2];
        let angle = ((tr - 1.0) / 2.0).acos();
        assert!((angle - s.acos()).abs() < 1e-12);
        assert!((angle.to_degrees() - 54.7356).abs() < 1e-4);
    }

    #[test]
    fn antiparallel_tie_break() {
        for a in [[0.0, 0.0, 1.0], [1.0, 2.0, -0.5], [1.0, 0.0, 0.0]] {
            let b = [-a[0], -a[1], -a[2]];
            let r = rotation_between(a, b).unwrap();
            let ah = normalize(a).unwrap();
            let bh = normalize(b).unwrap();
            assert!(close(r.apply(ah), bh, 1e-12));
            assert!((r.det() - 1.0).abs() < 1e-12);
        }
        assert_eq!(rotation_between([0.0; 3], [1.0, 0.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn c100_lab_frame() {
        let c = CrystalCut::C100.crystal_to_lab();
        assert!(close(c.apply([1.0, 0.0, 0.0]), [0.0, 0.0, 1.0], 1e-15));
        assert!(close(c.apply([0.0, 1.0, 0.0]), [0.0, 1.0, 0.0], 1e-15));
        assert!(close(c.apply([0.0, 0.0, 1.0]), [-1.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn c111_ppp_is_aligned() {
        let r = pas_rotation(CrystalCut::C111, NvOrientation::PPP);
        // Oracle: the bond mapped through the cut rotation is lab z.
        let lab = CrystalCut::C111.crystal_to_lab().apply(NvOrientation::PPP.direction());
        assert!(close(lab, [0.0, 0.0, 1.0], 1e-15));
        assert!(close(r.row(2), lab, 1e-15));
        assert!(r.max_abs_diff(&PasRotation::IDENTITY) < 1e-15);
    }

    #[test]
    fn pas_rows_are_nv_axes() {
        for cut in CrystalCut::ALL {
            for o in NvOrientation::ALL {
                let r = pas_rotation(cut, o);
                assert!(r.orthogonality_error() < 1e-12, "{cut} {o}");
                assert!((r.det() - 1.0).abs() < 1e-12);
                assert!(close(r.row(2), nv_axis_lab(cut, o), 1e-12));
                // NV x lies in the plane spanned by lab x and the bond.
                let n = cross([1.0, 0.0, 0.0], r.row(2));
                assert!(dot(n, r.row(0)).abs() < 1e-12);
                assert!(r.row(0)[0] > 0.0);
            }
        }
    }

    #[test]
    fn c100_bonds_share_polar_angle() {
        for o in NvOrientation::ALL {
            let z = pas_rotation(CrystalCut::C100, o).row(2);
            let acute = z[2].abs().acos();
            assert!((acute - (1.0 / 3.0f64.sqrt()).acos()).abs() < 1e-12);
        }
    }

    #[test]
    fn tetrahedral_separation() {
        let tet = (-1.0f64 / 3.0).acos();
        for cut in CrystalCut::ALL {
            for (i, a) in NvOrientation::ALL.iter().enumerate() {
                for b in &NvOrientation::ALL[i + 1..] {
                    let za = pas_rotation(cut, *a).row(2);
                    let zb = pas_rotation(cut, *b).row(2);
                    assert!((dot(za, zb).clamp(-1.0, 1.0).acos() - tet).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn c100_mirror_pairs() {
        // Reflection in the lab xz-plane (y → −y) maps one pair member onto
        // the other; the frames then differ by the same reflection applied to
        // NV y.
        let refl = PasRotation { m: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]] };
        for (a, b) in [(NvOrientation::PPP, NvOrientation::MPM), (NvOrientation::MMP, NvOrientation::PMM)] {
            let ra = pas_rotation(CrystalCut::C100, a);
            let rb = pas_rotation(CrystalCut::C100, b);
            let za = ra.row(2);
            let zb = rb.row(2);
            let mirrored = [za[0], -za[1], za[2]];
            let neg = [-zb[0], -zb[1], -zb[2]];
            assert!(close(mirrored, zb, 1e-12) || close(mirrored, neg, 1e-12));
            // x rows agree up to the mirror; y rows up to mirror and sign.
            let lhs = ra.compose(&refl);
            for j in 0..3 {
                let s = if close(lhs.row(j), rb.row(j), 1e-12) { 1.0 } else { -1.0 };
                assert!(close(lhs.row(j), rb.row(j).map(|v| v * s), 1e-12));
            }
        }
    }

    #[test]
    fn orientation_parsing() {
        assert_eq!(NvOrientation::parse("(1,-1,-1)"), Some(NvOrientation::PMM));
        assert_eq!(NvOrientation::parse("-1 -1 1"), Some(NvOrientation::MMP));
        assert_eq!(NvOrientation::parse("(1,1,-1)"), None);
        assert_eq!(NvOrientation::parse("1,1"), None);
        assert_eq!(CrystalCut::parse("(110)"), Some(CrystalCut::C110));
        assert_eq!(CrystalCut::parse("c100"), Some(CrystalCut::C100));
        assert_eq!(CrystalCut::parse("101"), None);
        assert_eq!(NvOrientation::MMP.to_string(), "(-1,-1,1)");
    }

    proptest! {
        #[test]
        fn rotation_between_round_trip(
            a in proptest::array::uniform3(-1.0f64..1.0),
            b in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            prop_assume!(norm(a) > 1e-3 && norm(b) > 1e-3);
            let r = rotation_between(a, b).unwrap();
            let back = rotation_between(b, a).unwrap();
            prop_assert!(r.compose(&back).max_abs_diff(&PasRotation::IDENTITY) < 1e-10);
            prop_assert!(close(r.apply(normalize(a).unwrap()), normalize(b).unwrap(), 1e-12));
            prop_assert!(r.orthogonality_error() < 1e-12);
            prop_assert!((r.det() - 1.0).abs() < 1e-12);
        }
    }
}
