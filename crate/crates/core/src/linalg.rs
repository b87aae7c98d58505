//! Dense 3×3 linear algebra: Hermitian eigendecomposition, propagators and
//! their exact directional derivatives, and a Taylor exponential used as an
//! independent check.

#[allow(unused_imports)]
use num_traits::Float;

use crate::spin::SpinMatrix;
use crate::C64;

/// Eigendecomposition H = V·diag(values)·V†; eigenvectors are the columns of V.
#[derive(Clone, Copy, Debug)]
pub struct Eigen {
    pub values: [f64; 3],
    pub vectors: SpinMatrix,
}

/// Cyclic complex Jacobi sweeps on a Hermitian matrix. Only the Hermitian
/// part of the input is used.
pub fn eigh(h: &SpinMatrix) -> Eigen {
    let mut a = (*h + h.adjoint()) * 0.5;
    let mut v = SpinMatrix::identity();
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Eigen { values: [0.0; 3], vectors: v };
    }
    for _sweep in 0..64 {
        let off = a.0[0][1].norm_sqr() + a.0[0][2].norm_sqr() + a.0[1][2].norm_sqr();
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a.0[p][q];
            let r = apq.norm();
            if r <= 1e-300 {
                continue;
            }
            // Phase the q axis so the off-diagonal element becomes real, then
            // apply a real Jacobi rotation in the (p, q) plane.
            let phase = apq / r;
            let app = a.0[p][p].re;
            let aqq = a.0[q][q].re;
            let tau = (aqq - app) / (2.0 * r);
            let t = if tau >= 0.0 {
                1.0 / (tau + (1.0 + tau * tau).sqrt())
            } else {
                -1.0 / (-tau + (1.0 + tau * tau).sqrt())
            };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;
            let mut g = SpinMatrix::identity();
            g.0[p][p] = C64::new(c, 0.0);
            g.0[p][q] = C64::new(s, 0.0);
            g.0[q][p] = -phase.conj() * s;
            g.0[q][q] = phase.conj() * c;
            a = g.adjoint() * a * g;
            v = v * g;
            a.0[p][q] = C64::new(0.0, 0.0);
            a.0[q][p] = C64::new(0.0, 0.0);
        }
    }
    Eigen { values: [a.0[0][0].re, a.0[1][1].re, a.0[2][2].re], vectors: v }
}

impl Eigen {
    /// V·diag(f(λ))·V†.
    pub fn map<F: Fn(f64) -> C64>(&self, f: F) -> SpinMatrix {
        let d = [f(self.values[0]), f(self.values[1]), f(self.values[2])];
        let v = &self.vectors;
        let mut out = SpinMatrix::zero();
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..3 {
                    acc += v.0[r][k] * d[k] * v.0[c][k].conj();
                }
                out.0[r][c] = acc;
            }
        }
        out
    }

    /// Express `m` in the eigenbasis: V†·m·V.
    pub fn to_eigenbasis(&self, m: &SpinMatrix) -> SpinMatrix {
        self.vectors.adjoint() * *m * self.vectors
    }

    pub fn from_eigenbasis(&self, m: &SpinMatrix) -> SpinMatrix {
        self.vectors * *m * self.vectors.adjoint()
    }
}

/// exp(−i·H·t) for Hermitian H.
pub fn propagator(h: &SpinMatrix, t: f64) -> SpinMatrix {
    propagator_with_eigen(h, t).0
}

pub fn propagator_with_eigen(h: &SpinMatrix, t: f64) -> (SpinMatrix, Eigen) {
    let e = eigh(h);
    let u = e.map(|l| C64::new(0.0, -l * t).exp());
    (u, e)
}

/// sin(x)/x, accurate near zero.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Divided-difference kernel for d/dε exp(−i(H+εG)t) in the eigenbasis of H:
/// Γ_jl = (e^{−iλ_j t} − e^{−iλ_l t}) / (−i(λ_j − λ_l)t), written in a form
/// that is smooth across degenerate eigenvalues.
pub fn derivative_kernel(e: &Eigen, t: f64) -> [[C64; 3]; 3] {
    let mut g = [[C64::new(0.0, 0.0); 3]; 3];
    for j in 0..3 {
        for l in 0..3 {
            let mid = 0.5 * (e.values[j] + e.values[l]);
            let half = 0.5 * (e.values[j] - e.values[l]) * t;
            g[j][l] = C64::new(0.0, -mid * t).exp() * sinc(half);
        }
    }
    g
}

/// Exact derivative of exp(−i(H+εG)t) at ε=0, given the eigendecomposition
/// of H and the kernel from [`derivative_kernel`].
pub fn propagator_derivative(e: &Eigen, kernel: &[[C64; 3]; 3], g: &SpinMatrix, t: f64) -> SpinMatrix {
    let mut k = e.to_eigenbasis(g);
    let f = C64::new(0.0, -t);
    for j in 0..3 {
        for l in 0..3 {
            k.0[j][l] *= kernel[j][l] * f;
        }
    }
    e.from_eigenbasis(&k)
}

/// exp(M) for a general complex 3×3 matrix by scaling and squaring with a
/// Taylor series. Independent of the spectral path; used for validation and
/// the lab-frame integrator.
pub fn expm_taylor(m: &SpinMatrix) -> SpinMatrix {
    let norm = m.frobenius_norm();
    let mut squarings = 0u32;
    let mut s = 1.0;
    while norm * s > 0.25 {
        s *= 0.5;
        squarings += 1;
    }
    let a = *m * s;
    let mut term = SpinMatrix::identity();
    let mut sum = SpinMatrix::identity();
    for k in 1..=18 {
        term = term * a * (1.0 / k as f64);
        sum += term;
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Solve a small dense real system by Gaussian elimination with partial
/// pivoting. Returns `None` if the matrix is singular.
pub fn solve_real<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let mut piv = col;
        for r in col + 1..N {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..N {
            let f = a[r][col] / a[col][col];
            for c in col..N {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for r in (0..N).rev() {
        let mut acc = b[r];
        for c in r + 1..N {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}
