//! Piecewise-constant propagation and the simulated experiments built on it:
//! dual-channel Rabi scans, spin locking and the fluorescence model.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{nv_axis_lab, CrystalCut, NvOrientation};
use crate::hamiltonian::{ControlLayout, ControlValues, EnsembleMember};
use crate::linalg::propagator;
use crate::spectral::{dominant_frequency, SpectralPeak};
use crate::spin::{pseudo_spin_operators, Level, SpinMatrix, SubspaceSign};
use crate::units::{deg_to_rad, ns_to_us, rad_to_deg};
use crate::par;

/// Piecewise-constant controls: one row of control variables per step, in
/// the order given by the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPulse {
    pub dt_ns: f64,
    pub layout: ControlLayout,
    pub steps: Vec<Vec<f64>>,
}

impl ControlPulse {
    pub fn new(dt_ns: f64, layout: ControlLayout, steps: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt_ns > 0.0) || !dt_ns.is_finite() {
            return Err(Error::InvalidJob(alloc::format!("step duration must be positive, got {dt_ns} ns")));
        }
        if steps.is_empty() {
            return Err(Error::EmptyPulse);
        }
        let n = layout.n_controls();
        for (k, s) in steps.iter().enumerate() {
            if s.len() != n {
                return Err(Error::InvalidJob(alloc::format!("step {k} has {} values, expected {n}", s.len())));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("pulse values"));
            }
        }
        Ok(ControlPulse { dt_ns, layout, steps })
    }

    /// The same control values repeated `n` times.
    pub fn constant(dt_ns: f64, layout: ControlLayout, values: &[f64], n: usize) -> Result<Self> {
        Self::new(dt_ns, layout, alloc::vec![values.to_vec(); n])
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn dt_us(&self) -> f64 {
        ns_to_us(self.dt_ns)
    }

    pub fn duration_us(&self) -> f64 {
        self.dt_us() * self.n_steps() as f64
    }

    pub fn control_values(&self, k: usize) -> ControlValues {
        self.layout.control_values(&self.steps[k])
    }

    pub fn check_bounds(&self, lo: f64, hi: f64) -> Result<()> {
        for s in &self.steps {
            for &v in s {
                if v < lo || v > hi {
                    return Err(Error::AmplitudeOutOfBounds { value: v, lo, hi });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evolution {
    /// Cumulative propagators starting from 𝟙.
    Map,
    /// Density matrices.
    State,
}

/// Per-member record of the evolution; `states[0]` is the initial value and
/// `states[k]` follows step k.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub member: usize,
    pub label: String,
    pub evolution: Evolution,
    pub states: Vec<SpinMatrix>,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpinMatrix {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    /// Density matrices along the trajectory; map trajectories are applied
    /// to `rho0`.
    pub fn densities(&self, rho0: &SpinMatrix) -> Vec<SpinMatrix> {
        match self.evolution {
            Evolution::State => self.states.clone(),
            Evolution::Map => self.states.iter().map(|u| *u * *rho0 * u.adjoint()).collect(),
        }
    }
}

/// Step propagators exp(−i·H_k·dt) for one member.
pub fn step_propagators(member: &EnsembleMember, pulse: &ControlPulse) -> Vec<SpinMatrix> {
    let dt = pulse.dt_us();
    (0..pulse.n_steps()).map(|k| propagator(&member.hamiltonian(&pulse.control_values(k)), dt)).collect()
}

/// Propagates every member through the pulse. An identity `initial`
/// records cumulative propagators; anything else must be a valid density
/// matrix.
pub fn propagate(members: &[EnsembleMember], pulse: &ControlPulse, initial: &SpinMatrix) -> Result<Vec<Trajectory>> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if pulse.steps.is_empty() {
        return Err(Error::EmptyPulse);
    }
    let evolution = if initial.max_abs_diff(&SpinMatrix::identity()) < 1e-12 {
        Evolution::Map
    } else {
        initial.check_density()?;
        Evolution::State
    };
    Ok(par::map(members, |i, m| {
        let mut states = Vec::with_capacity(pulse.n_steps() + 1);
        let mut cur = *initial;
        states.push(cur);
        for u in step_propagators(m, pulse) {
            cur = match evolution {
                Evolution::Map => u * cur,
                Evolution::State => u * cur * u.adjoint(),
            };
            states.push(cur);
        }
        Trajectory { member: i, label: m.label.clone(), evolution, states }
    }))
}

/// Expectation values ⟨S^±_{x,y,z}⟩ on both pseudo spin-1/2 spheres.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BlochPoint {
    pub xp: f64,
    pub yp: f64,
    pub zp: f64,
    pub xm: f64,
    pub ym: f64,
    pub zm: f64,
}

impl BlochPoint {
    pub fn sphere(&self, sign: SubspaceSign) -> [f64; 3] {
        match sign {
            SubspaceSign::Plus => [self.xp, self.yp, self.zp],
            SubspaceSign::Minus => [self.xm, self.ym, self.zm],
        }
    }
}

pub fn bloch_coordinates(rho: &SpinMatrix) -> BlochPoint {
    let p = pseudo_spin_operators(SubspaceSign::Plus);
    let m = pseudo_spin_operators(SubspaceSign::Minus);
    let ev = |op: &SpinMatrix| op.trace_product(rho).re;
    BlochPoint { xp: ev(&p.sx), yp: ev(&p.sy), zp: ev(&p.sz), xm: ev(&m.sx), ym: ev(&m.sy), zm: ev(&m.sz) }
}

/// Level populations of a density matrix.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Populations {
    pub zero: f64,
    pub plus: f64,
    pub minus: f64,
}

pub fn populations(rho: &SpinMatrix) -> Populations {
    let d = rho.diagonal_re();
    Populations { plus: d[Level::Plus.index()], zero: d[Level::Zero.index()], minus: d[Level::Minus.index()] }
}

/// Total path length of a Bloch trajectory on one sphere.
pub fn bloch_arc_length(points: &[BlochPoint], sign: SubspaceSign) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].sphere(sign), w[1].sphere(sign));
            crate::geometry::norm([b[0] - a[0], b[1] - a[1], b[2] - a[2]])
        })
        .sum()
}

/// |0⟩ population sampled every `dt_us` for a constant Hamiltonian,
/// starting at t = 0.
pub fn zero_population_trace(h: &SpinMatrix, dt_us: f64, n: usize) -> Vec<f64> {
    let u = propagator(h, dt_us);
    let mut psi = Level::Zero.ket();
    let z = Level::Zero.index();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(psi[z].norm_sqr());
        psi = u.apply(psi);
    }
    out
}

/// Constant-drive Rabi frequency of one member for the given controls.
pub fn rabi_frequency(member: &EnsembleMember, u: &ControlValues, duration_us: f64, dt_ns: f64) -> Result<SpectralPeak> {
    let dt = ns_to_us(dt_ns);
    if !(dt > 0.0) || !(duration_us > dt) {
        return Err(Error::InvalidJob(alloc::format!("invalid Rabi window {duration_us} µs at {dt_ns} ns")));
    }
    let n = (duration_us / dt).round() as usize;
    dominant_frequency(&zero_population_trace(&member.hamiltonian(u), dt, n), dt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RabiPoint {
    pub dtheta_deg: f64,
    pub member: usize,
    pub label: String,
    pub peak: SpectralPeak,
}

/// Dual-channel Rabi scan: Ω₁ = Ω₂ = 1, θ₁ = 0, θ₂ = Δθ. For each Δθ and
/// member the |0⟩ population under constant drive is sampled for
/// `duration_us` at `dt_ns` and its dominant frequency extracted. Rows are
/// ordered by Δθ, then member.
pub fn rabi_scan(members: &[EnsembleMember], dtheta_deg: &[f64], duration_us: f64, dt_ns: f64) -> Result<Vec<RabiPoint>> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let jobs: Vec<(f64, usize)> = dtheta_deg.iter().flat_map(|&d| (0..members.len()).map(move |m| (d, m))).collect();
    par::map(&jobs, |_, &(d, m)| {
        let u = ControlValues::polar(1.0, 0.0, 1.0, deg_to_rad(d));
        let peak = rabi_frequency(&members[m], &u, duration_us, dt_ns)?;
        Ok(RabiPoint { dtheta_deg: d, member: m, label: members[m].label.clone(), peak })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinLockConfig {
    /// Label of the sub-ensemble to lock.
    pub lock_label: String,
    pub evolve_times_us: Vec<f64>,
    /// Record length and sampling step for the π/2 calibration.
    pub calibration_us: f64,
    pub calibration_dt_ns: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinLockTrace {
    pub member: usize,
    pub label: String,
    /// Final |0⟩ population for each evolve time.
    pub zero_population: Vec<f64>,
}

impl SpinLockTrace {
    pub fn band_width(&self) -> f64 {
        let (lo, hi) = min_max(&self.zero_population);
        hi - lo
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinLockResult {
    /// Channel-1 Rabi frequency of the locked sub-ensemble, MHz.
    pub target_rabi_mhz: f64,
    /// Calibrated π/2 duration, µs.
    pub half_pi_us: f64,
    pub traces: Vec<SpinLockTrace>,
}

/// π/2 — lock — π/2 on channel 1. The π/2 pulses have phase 0 and a length
/// of a quarter Rabi period of the locked sub-ensemble (measured from a
/// simulated channel-1 Rabi trace). The lock pulse has phase 90°, so the
/// locked sub-ensemble sits on an eigenstate of its Hamiltonian while the
/// others, whose π/2 is mis-set, precess about it.
pub fn spin_locking(members: &[EnsembleMember], config: &SpinLockConfig) -> Result<SpinLockResult> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let target = members
        .iter()
        .find(|m| m.label == config.lock_label)
        .ok_or_else(|| Error::UnknownGroup(config.lock_label.clone()))?;
    if config.evolve_times_us.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::NonFinite("evolve times"));
    }
    let pulse = ControlValues::polar(1.0, 0.0, 0.0, 0.0);
    let lock = ControlValues::polar(1.0, 0.5 * core::f64::consts::PI, 0.0, 0.0);
    let peak = rabi_frequency(target, &pulse, config.calibration_us, config.calibration_dt_ns)?;
    let half_pi = 0.25 / peak.freq_mhz;
    let traces = par::map(members, |i, m| {
        let p = propagator(&m.hamiltonian(&pulse), half_pi);
        let hl = m.hamiltonian(&lock);
        let zero_population = config
            .evolve_times_us
            .iter()
            .map(|&t| {
                let psi = p.apply(propagator(&hl, t).apply(p.apply(Level::Zero.ket())));
                psi[Level::Zero.index()].norm_sqr()
            })
            .collect();
        SpinLockTrace { member: i, label: m.label.clone(), zero_population }
    });
    Ok(SpinLockResult { target_rabi_mhz: peak.freq_mhz, half_pi_us: half_pi, traces })
}

/// θ: tilt of the NV axis from the optical axis; φ: angle between the light
/// polarization and the NV axis' projection on the polarization plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpticalAngles {
    pub theta: f64,
    pub phi: f64,
}

/// Relative emission sin²φ + cos²θ·cos²φ.
pub fn fluorescence(angles: &OpticalAngles) -> f64 {
    let (s, c) = angles.phi.sin_cos();
    let ct = angles.theta.cos();
    s * s + ct * ct * c * c
}

/// Optical angles of one orientation for a polarization angle (degrees,
/// measured from lab x).
pub fn optical_angles(cut: CrystalCut, orientation: NvOrientation, polarization_deg: f64) -> OpticalAngles {
    let n = nv_axis_lab(cut, orientation);
    let theta = n[2].abs().min(1.0).acos();
    let azimuth = if n[0].hypot(n[1]) < 1e-12 { 0.0 } else { n[1].atan2(n[0]) };
    OpticalAngles { theta, phi: deg_to_rad(polarization_deg) - azimuth }
}

/// max − min of the four orientations' emission at one polarization angle.
pub fn fluorescence_spread(cut: CrystalCut, polarization_deg: f64) -> f64 {
    let v: Vec<f64> = NvOrientation::ALL.iter().map(|&o| fluorescence(&optical_angles(cut, o, polarization_deg))).collect();
    let (lo, hi) = min_max(&v);
    hi - lo
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Equalization {
    /// Polarization angle in [0, 180) degrees.
    pub polarization_deg: f64,
    pub spread: f64,
}

/// Polarization angle that minimizes the emission spread across the four
/// orientations: a 0.05° grid over [0, 180) refined by golden-section search.
pub fn equalize_polarization(cut: CrystalCut) -> Equalization {
    let step = 0.05;
    let n = (180.0 / step) as usize;
    let (mut best, mut best_s) = (0.0, f64::INFINITY);
    for k in 0..n {
        let p = k as f64 * step;
        let s = fluorescence_spread(cut, p);
        if s < best_s {
            best = p;
            best_s = s;
        }
    }
    let g = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut a, mut b) = (best - step, best + step);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if fluorescence_spread(cut, c) < fluorescence_spread(cut, d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mid = 0.5 * (a + b);
    let s = fluorescence_spread(cut, mid);
    if s < best_s {
        best = mid;
        best_s = s;
    }
    Equalization { polarization_deg: num_traits::Euclid::rem_euclid(&best, &180.0), spread: best_s }
}

/// Angle of the NV axis projection from lab x, degrees.
pub fn projected_azimuth_deg(cut: CrystalCut, orientation: NvOrientation) -> f64 {
    let n = nv_axis_lab(cut, orientation);
    rad_to_deg(n[1].atan2(n[0]))
}
