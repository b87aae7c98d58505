//! GRAPE over an incoherent ensemble.
//!
//! Each member evolves under H_k = D + Σ_c u_{k,c}·G_c for one step of length
//! dt, where D is the member's drift and G_c the generator of control c for
//! the chosen layout. The objective is the weighted mean of member
//! fidelities minus a quadratic smoothness penalty. Gradients use the exact
//! derivative of each step exponential, so they agree with finite
//! differences to rounding.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hamiltonian::{normalized_weights, ControlLayout, EnsembleMember};
use crate::linalg::{derivative_kernel, eigh, Eigen};
use crate::par;
use crate::propagate::ControlPulse;
use crate::spin::SpinMatrix;
use crate::units::ns_to_us;
use crate::C64;

/// What one member should achieve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    /// Unitary map, compared on the subspace selected by `mask`.
    Map { unitary: SpinMatrix, mask: SpinMatrix },
    /// State transfer from `initial` to `target`.
    State { initial: SpinMatrix, target: SpinMatrix },
}

impl Target {
    /// Full-map target (mask 𝟙₃).
    pub fn map(unitary: SpinMatrix) -> Self {
        Target::Map { unitary, mask: SpinMatrix::identity() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Target::Map { unitary, mask } => {
                if !unitary.is_unitary(1e-10) {
                    return Err(Error::InvalidJob(String::from("map target is not unitary")));
                }
                if mask.trace().norm() == 0.0 {
                    return Err(Error::ZeroMask);
                }
                Ok(())
            }
            Target::State { initial, target } => {
                initial.check_density()?;
                target.check_density()
            }
        }
    }
}

/// |Tr(P·U_t†·U)|² / |Tr P|², invariant under a global phase of U.
pub fn fidelity_map(achieved: &SpinMatrix, target: &SpinMatrix, mask: &SpinMatrix) -> Result<f64> {
    let m = mask.trace().norm();
    if m == 0.0 {
        return Err(Error::ZeroMask);
    }
    let g = (*mask * target.adjoint()).trace_product(achieved);
    Ok(g.norm_sqr() / (m * m))
}

/// Tr(ρ_target·ρ).
pub fn fidelity_state(rho: &SpinMatrix, target: &SpinMatrix) -> f64 {
    target.trace_product(rho).re
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationJob {
    pub members: Vec<EnsembleMember>,
    /// One target per member.
    pub targets: Vec<Target>,
    pub layout: ControlLayout,
    pub n_steps: usize,
    pub dt_ns: f64,
    /// Bounds applied to every control value.
    pub bounds: (f64, f64),
    /// Required fidelity on every member.
    pub goal: f64,
    pub max_iter: usize,
    /// λ of the smoothness penalty λ·Σ(u_{k+1} − u_k)².
    pub smoothness: f64,
    pub seed: u64,
    /// Scale of the random initial guess relative to the bound range.
    pub initial_scale: f64,
    /// Starting pulse; a seeded random guess is used when absent.
    pub initial: Option<ControlPulse>,
    /// Stop when the projected gradient norm drops below this.
    pub grad_tol: f64,
}

impl OptimizationJob {
    /// A job with the default optimizer settings: goal 0.99, amplitude
    /// bounds [0, 1], λ = 1e−4, 2000 iterations.
    pub fn new(members: Vec<EnsembleMember>, targets: Vec<Target>, layout: ControlLayout, n_steps: usize, dt_ns: f64) -> Self {
        OptimizationJob {
            members,
            targets,
            layout,
            n_steps,
            dt_ns,
            bounds: (0.0, 1.0),
            goal: 0.99,
            max_iter: 2000,
            smoothness: 1e-4,
            seed: 0,
            initial_scale: 0.2,
            initial: None,
            grad_tol: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        normalized_weights(&self.members)?;
        if self.targets.len() != self.members.len() {
            return Err(Error::InvalidJob(alloc::format!(
                "{} targets for {} members",
                self.targets.len(),
                self.members.len()
            )));
        }
        for t in &self.targets {
            t.validate()?;
        }
        if self.n_steps == 0 {
            return Err(Error::EmptyPulse);
        }
        if !(self.dt_ns > 0.0) || !self.dt_ns.is_finite() {
            return Err(Error::InvalidJob(alloc::format!("dt_ns must be positive, got {}", self.dt_ns)));
        }
        let (lo, hi) = self.bounds;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidJob(alloc::format!("invalid bounds [{lo}, {hi}]")));
        }
        if !(self.goal > 0.0 && self.goal <= 1.0) {
            return Err(Error::InvalidJob(alloc::format!("goal must be in (0, 1], got {}", self.goal)));
        }
        if !(self.smoothness >= 0.0) || !self.smoothness.is_finite() {
            return Err(Error::InvalidJob(alloc::format!("smoothness must be non-negative, got {}", self.smoothness)));
        }
        if let Some(p) = &self.initial {
            if p.n_steps() != self.n_steps || p.layout != self.layout {
                return Err(Error::InvalidJob(String::from("initial pulse does not match the job shape")));
            }
        }
        Ok(())
    }

    fn shape_check(&self, pulse: &ControlPulse) -> Result<()> {
        if pulse.layout.n_controls() != self.layout.n_controls() || pulse.n_steps() == 0 {
            return Err(Error::InvalidJob(String::from("pulse does not match the job layout")));
        }
        Ok(())
    }
}

struct MemberEval {
    fidelity: f64,
    grad: Vec<f64>,
}

/// Forward/backward pass for one member. `u` is step-major with `nc` values
/// per step.
fn member_eval(member: &EnsembleMember, target: &Target, layout: &ControlLayout, u: &[f64], nc: usize, dt: f64, want_grad: bool) -> MemberEval {
    let n = u.len() / nc;
    let drift = member.drift();
    let gens = layout.generators(&member.model);
    let mut eigs: Vec<Eigen> = Vec::with_capacity(n);
    let mut props: Vec<SpinMatrix> = Vec::with_capacity(n);
    for k in 0..n {
        let mut h = drift;
        for c in 0..nc {
            h += gens[c] * u[k * nc + c];
        }
        let e = eigh(&h);
        props.push(e.map(|l| C64::new(0.0, -l * dt).exp()));
        eigs.push(e);
    }
    // forward[k] is the state (or cumulative map) before step k.
    let start = match target {
        Target::Map { .. } => SpinMatrix::identity(),
        Target::State { initial, .. } => *initial,
    };
    let mut forward = Vec::with_capacity(n + 1);
    forward.push(start);
    for k in 0..n {
        let x = forward[k];
        forward.push(match target {
            Target::Map { .. } => props[k] * x,
            Target::State { .. } => props[k] * x * props[k].adjoint(),
        });
    }
    let last = forward[n];
    let (fidelity, overlap, norm2) = match target {
        Target::Map { unitary, mask } => {
            let m = mask.trace().norm();
            let g = (*mask * unitary.adjoint()).trace_product(&last);
            (g.norm_sqr() / (m * m), g, m * m)
        }
        Target::State { target, .. } => (fidelity_state(&last, target), C64::new(0.0, 0.0), 1.0),
    };
    if !want_grad {
        return MemberEval { fidelity, grad: Vec::new() };
    }
    let mut grad = alloc::vec![0.0; u.len()];
    // back = Λ_k (map) or λ_k (state) after step k.
    let mut back = match target {
        Target::Map { unitary, mask } => *mask * unitary.adjoint(),
        Target::State { target, .. } => *target,
    };
    let mi_dt = C64::new(0.0, -dt);
    for k in (0..n).rev() {
        let e = &eigs[k];
        let m = match target {
            Target::Map { .. } => forward[k] * back,
            Target::State { .. } => forward[k] * props[k].adjoint() * back,
        };
        let mp = e.to_eigenbasis(&m);
        let kernel = derivative_kernel(e, dt);
        for c in 0..nc {
            let kc = e.to_eigenbasis(&gens[c]);
            // Tr(M·dU) with dU = V(Γ∘(−i dt K'))V†.
            let mut tr = C64::new(0.0, 0.0);
            for j in 0..3 {
                for l in 0..3 {
                    tr += mp.0[l][j] * kernel[j][l] * kc.0[j][l];
                }
            }
            tr *= mi_dt;
            grad[k * nc + c] = match target {
                Target::Map { .. } => 2.0 * (overlap.conj() * tr).re / norm2,
                Target::State { .. } => 2.0 * tr.re,
            };
        }
        back = match target {
            Target::Map { .. } => back * props[k],
            Target::State { .. } => props[k].adjoint() * back * props[k],
        };
    }
    MemberEval { fidelity, grad }
}

struct Evaluation {
    objective: f64,
    fidelities: Vec<f64>,
    grad: Vec<f64>,
}

fn penalty(u: &[f64], nc: usize, lambda: f64, grad: Option<&mut [f64]>) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let n = u.len() / nc;
    let mut p = 0.0;
    let mut g = grad;
    for k in 0..n.saturating_sub(1) {
        for c in 0..nc {
            let d = u[(k + 1) * nc + c] - u[k * nc + c];
            p += d * d;
            if let Some(g) = g.as_deref_mut() {
                g[(k + 1) * nc + c] -= 2.0 * lambda * d;
                g[k * nc + c] += 2.0 * lambda * d;
            }
        }
    }
    lambda * p
}

fn evaluate(job: &OptimizationJob, weights: &[f64], layout: &ControlLayout, u: &[f64], dt: f64, want_grad: bool) -> Evaluation {
    let nc = layout.n_controls();
    let idx: Vec<usize> = (0..job.members.len()).collect();
    let evals = par::map(&idx, |_, &i| member_eval(&job.members[i], &job.targets[i], layout, u, nc, dt, want_grad));
    let mut objective = 0.0;
    let mut grad = if want_grad { alloc::vec![0.0; u.len()] } else { Vec::new() };
    for (w, e) in weights.iter().zip(&evals) {
        objective += w * e.fidelity;
        if want_grad {
            for (g, v) in grad.iter_mut().zip(&e.grad) {
                *g += w * v;
            }
        }
    }
    // The penalty gradient has the opposite sign of the penalty, so it adds
    // directly to the ascent direction.
    let pen = penalty(u, nc, job.smoothness, if want_grad { Some(&mut grad) } else { None });
    objective -= pen;
    Evaluation { objective, fidelities: evals.into_iter().map(|e| e.fidelity).collect(), grad }
}

fn flatten(pulse: &ControlPulse) -> Vec<f64> {
    pulse.steps.iter().flatten().copied().collect()
}

fn unflatten(u: &[f64], nc: usize) -> Vec<Vec<f64>> {
    u.chunks(nc).map(|c| c.to_vec()).collect()
}

/// Fidelity of every member under `pulse`.
pub fn member_fidelities(job: &OptimizationJob, pulse: &ControlPulse) -> Result<Vec<f64>> {
    job.validate()?;
    job.shape_check(pulse)?;
    let w = normalized_weights(&job.members)?;
    Ok(evaluate(job, &w, &pulse.layout, &flatten(pulse), pulse.dt_us(), false).fidelities)
}

/// Weighted mean fidelity minus λ·Σ(u_{k+1,c} − u_{k,c})².
pub fn objective(job: &OptimizationJob, pulse: &ControlPulse) -> Result<f64> {
    job.validate()?;
    job.shape_check(pulse)?;
    let w = normalized_weights(&job.members)?;
    Ok(evaluate(job, &w, &pulse.layout, &flatten(pulse), pulse.dt_us(), false).objective)
}

/// ∂objective/∂u_{k,c}, shaped like `pulse.steps`.
pub fn gradient(job: &OptimizationJob, pulse: &ControlPulse) -> Result<Vec<Vec<f64>>> {
    job.validate()?;
    job.shape_check(pulse)?;
    let w = normalized_weights(&job.members)?;
    let e = evaluate(job, &w, &pulse.layout, &flatten(pulse), pulse.dt_us(), true);
    Ok(unflatten(&e.grad, pulse.layout.n_controls()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub min_fidelity: f64,
    pub mean_fidelity: f64,
    pub step_size: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GoalReached,
    GradientFloor,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizedPulse {
    pub pulse: ControlPulse,
    pub fidelities: Vec<f64>,
    pub objective: f64,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
    pub stop: StopReason,
}

impl OptimizedPulse {
    pub fn min_fidelity(&self) -> f64 {
        self.fidelities.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Seeded low-amplitude guess: uniform noise smoothed by a 5-step moving
/// average, scaled by `initial_scale` of the bound range and offset from the
/// bound nearest zero.
pub fn initial_guess(job: &OptimizationJob) -> Vec<f64> {
    let nc = job.layout.n_controls();
    let n = job.n_steps;
    let (lo, hi) = job.bounds;
    let base = 0.0f64.clamp(lo, hi);
    let symmetric = lo < 0.0 && hi > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let mut u = alloc::vec![0.0; n * nc];
    for c in 0..nc {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        for k in 0..n {
            let (a, b) = (k.saturating_sub(2), (k + 3).min(n));
            let v = raw[a..b].iter().sum::<f64>() / (b - a) as f64;
            let v = if symmetric { 2.0 * v - 1.0 } else if base == hi { -v } else { v };
            u[k * nc + c] = (base + job.initial_scale * (hi - lo) * v).clamp(lo, hi);
        }
    }
    u
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected gradient ascent with Barzilai–Borwein step proposals and
/// Armijo backtracking, so the logged objective never decreases. Controls
/// are clamped to the bounds after every step.
pub fn optimize(job: &OptimizationJob) -> Result<OptimizedPulse> {
    job.validate()?;
    let weights = normalized_weights(&job.members)?;
    let layout = job.layout;
    let nc = layout.n_controls();
    let dt = ns_to_us(job.dt_ns);
    let (lo, hi) = job.bounds;
    let clamp = |v: f64| v.clamp(lo, hi);
    let mut u: Vec<f64> = match &job.initial {
        Some(p) => flatten(p).into_iter().map(clamp).collect(),
        None => initial_guess(job),
    };
    let mut cur = evaluate(job, &weights, &layout, &u, dt, true);
    let stats = |f: &[f64]| {
        let min = f.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = f.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>();
        (min, mean)
    };
    let (min0, mean0) = stats(&cur.fidelities);
    let mut log = alloc::vec![IterationRecord { iteration: 0, objective: cur.objective, min_fidelity: min0, mean_fidelity: mean0, step_size: 0.0 }];
    let gmax = cur.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut alpha = if gmax > 0.0 { 0.1 / gmax } else { 1.0 };
    let mut stop = StopReason::MaxIterations;
    for it in 1..=job.max_iter + 1 {
        if stats(&cur.fidelities).0 >= job.goal {
            stop = StopReason::GoalReached;
            break;
        }
        if it > job.max_iter {
            break;
        }
        let pg: f64 = u.iter().zip(&cur.grad).map(|(x, g)| (clamp(x + g) - x).powi(2)).sum::<f64>().sqrt();
        if pg < job.grad_tol {
            stop = StopReason::GradientFloor;
            break;
        }
        let mut accepted = None;
        let mut a = alpha;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&cur.grad).map(|(x, g)| clamp(x + a * g)).collect();
            let d: Vec<f64> = trial.iter().zip(&u).map(|(t, x)| t - x).collect();
            let gd = dot(&cur.grad, &d);
            if gd <= 0.0 {
                a *= 0.5;
                continue;
            }
            let next = evaluate(job, &weights, &layout, &trial, dt, true);
            if next.objective >= cur.objective + 1e-4 * gd {
                accepted = Some((trial, d, next, a));
                break;
            }
            a *= 0.5;
        }
        let Some((trial, s, next, a)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        let y: Vec<f64> = cur.grad.iter().zip(&next.grad).map(|(g0, g1)| g0 - g1).collect();
        let sy = dot(&s, &y);
        alpha = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-6 * a, 1e6 * a) } else { 2.0 * a };
        u = trial;
        cur = next;
        let (min, mean) = stats(&cur.fidelities);
        log.push(IterationRecord { iteration: it, objective: cur.objective, min_fidelity: min, mean_fidelity: mean, step_size: a });
    }
    let pulse = ControlPulse::new(job.dt_ns, layout, unflatten(&u, nc))?;
    let converged = stop == StopReason::GoalReached;
    Ok(OptimizedPulse { pulse, fidelities: cur.fidelities, objective: cur.objective, log, converged, stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{ControlModel, PhenomenologicalParams};
    use crate::spin::{spin1_basis, target_unitary, Level, RotationSpec, SubspaceSign};
    use crate::linalg::propagator;
    use core::f64::consts::PI;

    fn pheno(omega_mhz: f64) -> ControlModel {
        PhenomenologicalParams { omega_nv_mhz: omega_mhz, eta_deg: 115.0, dtheta_deg: 270.0, zfs_mhz: 2870.0, transmitter_mhz: 2870.0 }
            .model()
    }

    fn layout() -> ControlLayout {
        ControlLayout::Amplitude { theta1: 0.0, theta2: 270f64.to_radians() }
    }

    #[test]
    fn map_fidelity_cases() {
        let u = target_unitary(&RotationSpec::new(PI, [0.0, 1.0, 0.0]).unwrap(), SubspaceSign::Plus);
        let id = SpinMatrix::identity();
        assert!((fidelity_map(&u, &u, &id).unwrap() - 1.0).abs() < 1e-15);
        let phased = u * C64::new(0.0, 0.7).exp();
        assert!((fidelity_map(&phased, &u, &id).unwrap() - 1.0).abs() < 1e-15);
        // Tr(Z) = 0 for Z = diag(1, −1, …) restricted by a mask.
        let mask = SpinMatrix::diag([1.0, 1.0, 0.0]);
        let z = SpinMatrix::diag([1.0, -1.0, 1.0]);
        assert!(fidelity_map(&z, &id, &mask).unwrap() < 1e-30);
        assert_eq!(fidelity_map(&z, &id, &SpinMatrix::zero()), Err(Error::ZeroMask));
    }

    #[test]
    fn state_fidelity_cases() {
        let z = Level::Zero.density();
        assert_eq!(fidelity_state(&z, &z), 1.0);
        assert_eq!(fidelity_state(&Level::Plus.density(), &z), 0.0);
        let mixed = SpinMatrix::identity() * (1.0 / 3.0);
        assert!((fidelity_state(&mixed, &z) - 1.0 / 3.0).abs() < 1e-15);
    }

    fn state_job(n: usize) -> OptimizationJob {
        let members = alloc::vec![EnsembleMember::new("A", pheno(2.64)), EnsembleMember::new("B", pheno(1.03))];
        let t = Target::State { initial: Level::Zero.density(), target: Level::Plus.density() };
        OptimizationJob::new(members, alloc::vec![t, t], layout(), n, 40.0)
    }

    #[test]
    fn objective_cases() {
        let mut job = state_job(4);
        job.smoothness = 0.0;
        job.targets = alloc::vec![Target::State { initial: Level::Zero.density(), target: Level::Zero.density() }; 2];
        let zero = ControlPulse::constant(40.0, layout(), &[0.0, 0.0], 4).unwrap();
        assert!((objective(&job, &zero).unwrap() - 1.0).abs() < 1e-15);
        // fidelities (1, 0) with equal weights
        job.targets[1] = Target::State { initial: Level::Zero.density(), target: Level::Plus.density() };
        assert!((objective(&job, &zero).unwrap() - 0.5).abs() < 1e-15);
        job.smoothness = 3.0;
        let flat = ControlPulse::constant(40.0, layout(), &[0.0, 0.0], 4).unwrap();
        assert!((objective(&job, &flat).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn objective_is_permutation_invariant() {
        let job = state_job(20);
        let pulse = ControlPulse::new(40.0, layout(), unflatten(&initial_guess(&job), 2)).unwrap();
        let mut swapped = job.clone();
        swapped.members.reverse();
        swapped.targets.reverse();
        let (a, b) = (objective(&job, &pulse).unwrap(), objective(&swapped, &pulse).unwrap());
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_perfect_pulse() {
        // Zero controls implement the identity exactly.
        let mut job = state_job(6);
        job.smoothness = 0.0;
        job.bounds = (-1.0, 1.0);
        job.targets = alloc::vec![Target::map(SpinMatrix::identity()); 2];
        let zero = ControlPulse::constant(40.0, layout(), &[0.0, 0.0], 6).unwrap();
        let g = gradient(&job, &zero).unwrap();
        let norm: f64 = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-8, "{norm}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut job = state_job(12);
        job.targets[1] = Target::map(target_unitary(&RotationSpec::new(PI, [0.0, 1.0, 0.0]).unwrap(), SubspaceSign::Plus));
        job.members[1].zfs_offset = 0.4;
        job.members[1].hyperfine_m = 1;
        let steps: Vec<Vec<f64>> = (0..12).map(|_| alloc::vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let pulse = ControlPulse::new(40.0, layout(), steps).unwrap();
        let g = gradient(&job, &pulse).unwrap();
        let h = 1e-6;
        for k in 0..12 {
            for c in 0..2 {
                let mut p = pulse.clone();
                p.steps[k][c] += h;
                let fp = objective(&job, &p).unwrap();
                p.steps[k][c] -= 2.0 * h;
                let fm = objective(&job, &p).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let rel = (g[k][c] - fd).abs() / fd.abs().max(1e-3);
                assert!(rel <= 1e-5, "step {k} control {c}: {} vs {fd}", g[k][c]);
            }
        }
    }

    #[test]
    fn short_pulse_gradient_follows_first_order_expansion() {
        // For one short step from |0⟩ toward |+1⟩, F ≈ |⟨+1|−i dt H|0⟩|², so
        // ∂F/∂u_c ≈ 2 dt² Σ_d u_d Re(g_c g_d*) with g_c = ⟨+1|G_c|0⟩.
        let mut job = state_job(1);
        job.smoothness = 0.0;
        job.dt_ns = 1.0;
        let u = [0.3, 0.7];
        let pulse = ControlPulse::new(1.0, layout(), alloc::vec![u.to_vec()]).unwrap();
        let g = gradient(&job, &pulse).unwrap();
        let dt = 1e-3;
        let w = normalized_weights(&job.members).unwrap();
        for c in 0..2 {
            let mut want = 0.0;
            for (m, wm) in job.members.iter().zip(&w) {
                let gens = layout().generators(&m.model);
                let amp = |d: usize| gens[d].0[Level::Plus.index()][Level::Zero.index()];
                let mut s = 0.0;
                for d in 0..2 {
                    s += u[d] * (amp(c) * amp(d).conj()).re;
                }
                want += wm * 2.0 * dt * dt * s;
            }
            assert_eq!(g[0][c].signum(), want.signum());
            assert!((g[0][c] - want).abs() < 1e-3 * want.abs());
        }
    }

    #[test]
    fn optimizer_respects_bounds_and_is_monotone() {
        let mut job = state_job(40);
        job.max_iter = 60;
        job.goal = 0.999;
        let r = optimize(&job).unwrap();
        assert!(r.pulse.steps.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        for w in r.log.windows(2) {
            assert!(w[1].objective >= w[0].objective);
        }
        // Reported fidelities equal a fresh evaluation.
        let again = member_fidelities(&job, &r.pulse).unwrap();
        for (a, b) in again.iter().zip(&r.fidelities) {
            assert!((a - b).abs() < 1e-10);
        }
        let r2 = optimize(&job).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn optimizer_finds_single_member_transfer() {
        let members = alloc::vec![EnsembleMember::new("A", pheno(2.64))];
        let t = Target::State { initial: Level::Zero.density(), target: Level::Plus.density() };
        let mut job = OptimizationJob::new(members, alloc::vec![t], ControlLayout::Iq, 60, 40.0);
        job.bounds = (-1.0, 1.0);
        job.max_iter = 500;
        let r = optimize(&job).unwrap();
        assert!(r.converged, "{:?} {:?}", r.fidelities, r.stop);
        assert!(r.fidelities[0] >= 0.99);
        let p = crate::propagate::propagate(&job.members, &r.pulse, &Level::Zero.density()).unwrap();
        let pop = p[0].final_state().diagonal_re()[Level::Plus.index()];
        assert!((pop - r.fidelities[0]).abs() < 1e-10);
    }

    #[test]
    fn non_convergence_is_data() {
        let mut job = state_job(2);
        job.max_iter = 3;
        let r = optimize(&job).unwrap();
        assert!(!r.converged);
        assert!(r.log.len() <= 4);
    }

    #[test]
    fn rejects_bad_jobs() {
        let mut job = state_job(10);
        job.targets.pop();
        assert!(matches!(job.validate(), Err(Error::InvalidJob(_))));
        let mut job = state_job(0);
        assert_eq!(job.validate(), Err(Error::EmptyPulse));
        job.n_steps = 3;
        job.goal = 1.5;
        assert!(job.validate().is_err());
        let mut job = state_job(3);
        job.targets[0] = Target::map(spin1_basis().sx);
        assert!(job.validate().is_err());
        let _ = propagator(&SpinMatrix::zero(), 1.0);
    }
}
