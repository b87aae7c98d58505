//! Spin-1 operators on the NV ground-state triplet.
//!
//! Basis order is (|+1⟩, |0⟩, |−1⟩) everywhere, so index 0 is m=+1, index 1
//! is m=0 and index 2 is m=−1.

use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// A 3×3 complex matrix on the spin-1 triplet. Used for operators,
/// Hamiltonians, propagators and density matrices alike.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinMatrix(pub [[C64; 3]; 3]);

impl Default for SpinMatrix {
    fn default() -> Self {
        Self::zero()
    }
}

impl SpinMatrix {
    pub const fn zero() -> Self {
        SpinMatrix([[ZERO; 3]; 3])
    }

    pub const fn identity() -> Self {
        SpinMatrix([[ONE, ZERO, ZERO], [ZERO, ONE, ZERO], [ZERO, ZERO, ONE]])
    }

    pub fn from_real(m: [[f64; 3]; 3]) -> Self {
        let mut out = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] = C64::new(m[r][c], 0.0);
            }
        }
        out
    }

    pub fn diag(d: [f64; 3]) -> Self {
        let mut out = Self::zero();
        for k in 0..3 {
            out.0[k][k] = C64::new(d[k], 0.0);
        }
        out
    }

    /// |ψ⟩⟨ψ| for a (not necessarily normalized) ket.
    pub fn outer(ket: [C64; 3]) -> Self {
        let mut out = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] = ket[r] * ket[c].conj();
            }
        }
        out
    }

    /// Projector onto a single basis level.
    pub fn level_projector(level: Level) -> Self {
        let mut out = Self::zero();
        let k = level.index();
        out.0[k][k] = ONE;
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] = self.0[c][r].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// [A, B] = AB − BA.
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    pub fn apply(&self, ket: [C64; 3]) -> [C64; 3] {
        let mut out = [ZERO; 3];
        for r in 0..3 {
            out[r] = self.0[r][0] * ket[0] + self.0[r][1] * ket[1] + self.0[r][2] * ket[2];
        }
        out
    }

    /// Tr(A·B) without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let mut acc = ZERO;
        for r in 0..3 {
            for k in 0..3 {
                acc += self.0[r][k] * other.0[k][r];
            }
        }
        acc
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                m = m.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs_diff(&Self::zero())
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for row in self.0.iter() {
            for v in row.iter() {
                s += v.norm_sqr();
            }
        }
        s.sqrt()
    }

    /// Spectral (largest singular value) norm.
    pub fn operator_norm(&self) -> f64 {
        let gram = self.adjoint() * *self;
        let eig = crate::linalg::eigh(&gram);
        eig.values.iter().fold(0.0f64, |m, &v| m.max(v)).max(0.0).sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.adjoint() * *self).max_abs_diff(&Self::identity()) <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Hermitian, unit trace, eigenvalues ≥ −1e−10.
    pub fn check_density(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidState("non-finite entries"));
        }
        if !self.is_hermitian(1e-12) {
            return Err(Error::InvalidState("density matrix is not Hermitian"));
        }
        if (self.trace() - ONE).norm() > 1e-12 {
            return Err(Error::InvalidState("density matrix trace is not 1"));
        }
        let eig = crate::linalg::eigh(self);
        if eig.values.iter().any(|&v| v < -1e-10) {
            return Err(Error::InvalidState("density matrix has a negative eigenvalue"));
        }
        Ok(())
    }

    /// Real parts of the diagonal (level populations for a density matrix),
    /// in basis order (+1, 0, −1).
    pub fn diagonal_re(&self) -> [f64; 3] {
        [self.0[0][0].re, self.0[1][1].re, self.0[2][2].re]
    }
}

impl Index<(usize, usize)> for SpinMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.0[r][c]
    }
}

impl IndexMut<(usize, usize)> for SpinMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.0[r][c]
    }
}

impl Add for SpinMatrix {
    type Output = SpinMatrix;
    fn add(mut self, rhs: SpinMatrix) -> SpinMatrix {
        self += rhs;
        self
    }
}

impl AddAssign for SpinMatrix {
    fn add_assign(&mut self, rhs: SpinMatrix) {
        for r in 0..3 {
            for c in 0..3 {
                self.0[r][c] += rhs.0[r][c];
            }
        }
    }
}

impl Sub for SpinMatrix {
    type Output = SpinMatrix;
    fn sub(mut self, rhs: SpinMatrix) -> SpinMatrix {
        for r in 0..3 {
            for c in 0..3 {
                self.0[r][c] -= rhs.0[r][c];
            }
        }
        self
    }
}

impl Neg for SpinMatrix {
    type Output = SpinMatrix;
    fn neg(self) -> SpinMatrix {
        self.scale_real(-1.0)
    }
}

impl Mul for SpinMatrix {
    type Output = SpinMatrix;
    fn mul(self, rhs: SpinMatrix) -> SpinMatrix {
        let mut out = SpinMatrix::zero();
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] =
                    self.0[r][0] * rhs.0[0][c] + self.0[r][1] * rhs.0[1][c] + self.0[r][2] * rhs.0[2][c];
            }
        }
        out
    }
}

impl Mul<f64> for SpinMatrix {
    type Output = SpinMatrix;
    fn mul(self, rhs: f64) -> SpinMatrix {
        self.scale_real(rhs)
    }
}

impl Mul<SpinMatrix> for f64 {
    type Output = SpinMatrix;
    fn mul(self, rhs: SpinMatrix) -> SpinMatrix {
        rhs.scale_real(self)
    }
}

impl Mul<C64> for SpinMatrix {
    type Output = SpinMatrix;
    fn mul(self, rhs: C64) -> SpinMatrix {
        self.scale(rhs)
    }
}

/// One of the three magnetic sublevels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Plus,
    Zero,
    Minus,
}

impl Level {
    pub const fn index(self) -> usize {
        match self {
            Level::Plus => 0,
            Level::Zero => 1,
            Level::Minus => 2,
        }
    }

    pub fn ket(self) -> [C64; 3] {
        let mut k = [ZERO; 3];
        k[self.index()] = ONE;
        k
    }

    pub fn density(self) -> SpinMatrix {
        SpinMatrix::level_projector(self)
    }
}

/// Selects the {|0⟩,|+1⟩} (`Plus`) or {|0⟩,|−1⟩} (`Minus`) two-level subspace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubspaceSign {
    Plus,
    Minus,
}

impl SubspaceSign {
    pub const BOTH: [SubspaceSign; 2] = [SubspaceSign::Plus, SubspaceSign::Minus];

    /// The |±1⟩ level that pairs with |0⟩.
    pub const fn level(self) -> Level {
        match self {
            SubspaceSign::Plus => Level::Plus,
            SubspaceSign::Minus => Level::Minus,
        }
    }

    /// The level left alone by operators on this subspace.
    pub const fn untouched(self) -> Level {
        match self {
            SubspaceSign::Plus => Level::Minus,
            SubspaceSign::Minus => Level::Plus,
        }
    }
}

/// Rotation angle (radians) and unit axis of a pseudo spin-1/2 rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationSpec {
    alpha: f64,
    axis: [f64; 3],
}

impl RotationSpec {
    pub fn new(alpha: f64, axis: [f64; 3]) -> Result<Self> {
        if !alpha.is_finite() || axis.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rotation spec"));
        }
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NonUnitAxis { norm });
        }
        Ok(RotationSpec { alpha, axis })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinBasis {
    pub sx: SpinMatrix,
    pub sy: SpinMatrix,
    pub sz: SpinMatrix,
    pub sz2: SpinMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwistedOperators {
    /// S'_x = i[S_y, S_z²]
    pub sx_t: SpinMatrix,
    /// S'_y = i[S_x, S_z²]
    pub sy_t: SpinMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoSpin {
    pub sx: SpinMatrix,
    pub sy: SpinMatrix,
    pub sz: SpinMatrix,
}

impl PseudoSpin {
    pub fn components(&self) -> [SpinMatrix; 3] {
        [self.sx, self.sy, self.sz]
    }
}

pub fn spin1_basis() -> SpinBasis {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let sx = SpinMatrix::from_real([[0.0, s, 0.0], [s, 0.0, s], [0.0, s, 0.0]]);
    let mi = C64::new(0.0, -s);
    let pi = C64::new(0.0, s);
    let sy = SpinMatrix([[ZERO, mi, ZERO], [pi, ZERO, mi], [ZERO, pi, ZERO]]);
    let sz = SpinMatrix::diag([1.0, 0.0, -1.0]);
    let sz2 = sz * sz;
    SpinBasis { sx, sy, sz, sz2 }
}

pub fn twisted_operators() -> TwistedOperators {
    let b = spin1_basis();
    TwistedOperators {
        sx_t: b.sy.commutator(&b.sz2) * I,
        sy_t: b.sx.commutator(&b.sz2) * I,
    }
}

/// Pauli-like operators on one pseudo subspace, defined by their action:
/// S_x couples |0⟩ and |±1⟩ symmetrically, S_y = −i|0⟩⟨±1| + i|±1⟩⟨0|, and
/// S_z = |0⟩⟨0| − |±1⟩⟨±1| so that |0⟩ is the +z pole of both spheres.
pub fn pseudo_spin_operators(sign: SubspaceSign) -> PseudoSpin {
    let z = Level::Zero.index();
    let p = sign.level().index();
    let mut sx = SpinMatrix::zero();
    sx.0[z][p] = ONE;
    sx.0[p][z] = ONE;
    let mut sy = SpinMatrix::zero();
    sy.0[z][p] = -I;
    sy.0[p][z] = I;
    let mut sz = SpinMatrix::zero();
    sz.0[z][z] = ONE;
    sz.0[p][p] = -ONE;
    PseudoSpin { sx, sy, sz }
}

/// Projector onto the two-level subspace selected by `sign`.
pub fn subspace_projector(sign: SubspaceSign) -> SpinMatrix {
    SpinMatrix::level_projector(Level::Zero) + SpinMatrix::level_projector(sign.level())
}

/// U = 𝟙 − P + cos(α/2)·P − i·sin(α/2)·(n̂·S), with S the pseudo spin-1/2
/// operators of the chosen subspace and P its projector.
pub fn target_unitary(spec: &RotationSpec, sign: SubspaceSign) -> SpinMatrix {
    let p = subspace_projector(sign);
    let s = pseudo_spin_operators(sign);
    let n = spec.axis();
    let half = 0.5 * spec.alpha();
    let ns = s.sx * n[0] + s.sy * n[1] + s.sz * n[2];
    SpinMatrix::identity() - p + p * half.cos() - ns * C64::new(0.0, half.sin())
}
