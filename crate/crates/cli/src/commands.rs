//! Subcommand implementations. Each returns the files it wrote.

use std::path::{Path, PathBuf};

use nvctl_core::fields::{channel_fields, field_orthogonality};
use nvctl_core::geometry::{pas_rotation, CrystalCut, NvOrientation};
use nvctl_core::grape::{optimize, StopReason};
use nvctl_core::propagate::{
    bloch_arc_length, bloch_coordinates, populations, propagate, rabi_scan, spin_locking, ControlPulse, SpinLockConfig,
};
use nvctl_core::spectral::fit_cos2;
use nvctl_core::spin::SubspaceSign;
use nvctl_core::units::{angular_to_mhz, deg_to_rad, rad_to_deg};
use serde::Serialize;

use crate::config::{parse_level, JobConfig};
use crate::error::CliError;
use crate::io::{num, read_pulse, write_json, write_pulse, CsvOut};

pub fn rotations(cut: CrystalCut, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut csv = CsvOut::create(
        &out.join("rotations.csv"),
        &["orientation", "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22", "det"],
    )?;
    for o in NvOrientation::ALL {
        let r = pas_rotation(cut, o);
        let mut row = vec![o.to_string()];
        row.extend(r.m.iter().flatten().map(|&v| num(v)));
        row.push(num(r.det()));
        csv.row(row)?;
    }
    Ok(vec![csv.finish()?])
}

pub fn fields(cfg: &JobConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let g = cfg.geometry()?;
    let span = 2.0 * g.strip_width + g.gap;
    let grid = cfg.fields.scan.clone().unwrap_or(crate::config::ScanGrid {
        x_min_um: 0.0,
        x_max_um: span,
        nx: 81,
        z_min_um: 10.0,
        z_max_um: 200.0,
        nz: 39,
    });
    if grid.nx == 0 || grid.nz == 0 {
        return Err(CliError::Config("fields.scan: nx and nz must be positive".into()));
    }
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        if n == 1 {
            vec![lo]
        } else {
            (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
        }
    };
    let mut csv = CsvOut::create(&out.join("fields.csv"), &["x", "z", "wx1", "wz1", "wx2", "wz2", "eta_deg"])?;
    for z in axis(grid.z_min_um, grid.z_max_um, grid.nz) {
        for x in axis(grid.x_min_um, grid.x_max_um, grid.nx) {
            // Points on or next to a conductor have no field value.
            let Ok((f1, f2)) = channel_fields(&g, x, z) else { continue };
            let eta = field_orthogonality(&g, x, z).map(num).unwrap_or_default();
            csv.row([num(x), num(z), num(f1.wx), num(f1.wz), num(f2.wx), num(f2.wz), eta])?;
        }
    }
    let mut files = vec![csv.finish()?];
    let (x, z) = cfg.focal_point()?;
    let mut groups = CsvOut::create(&out.join("groups.csv"), &["group_id", "orientations", "focal_x", "focal_z", "eta_deg"])?;
    let eta = field_orthogonality(&g, x, z).map_err(|e| CliError::Config(format!("fields: focal point: {e}")))?;
    for (k, grp) in cfg.partition()?.iter().enumerate() {
        let names: Vec<String> = grp.iter().map(|o| o.to_string()).collect();
        groups.row([k.to_string(), names.join("&"), num(x), num(z), num(eta)])?;
    }
    files.push(groups.finish()?);
    Ok(files)
}

#[derive(Serialize)]
struct OptimizeReport {
    converged: bool,
    stop: &'static str,
    iterations: usize,
    objective: f64,
    min_fidelity: f64,
    goal: f64,
    n_steps: usize,
    dt_ns: f64,
    seed: u64,
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::GoalReached => "goal_reached",
        StopReason::GradientFloor => "gradient_floor",
        StopReason::LineSearchFailed => "line_search_failed",
        StopReason::MaxIterations => "max_iterations",
    }
}

pub fn optimize_cmd(cfg: &JobConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (job, ens) = cfg.optimization_job()?;
    let r = optimize(&job)?;
    let mut files = vec![write_pulse(&out.join("pulse.csv"), &r.pulse)?];
    let mut fid = CsvOut::create(&out.join("fidelities.csv"), &["member_id", "label", "group_id", "zfs_offset_mhz", "hyperfine_m", "weight", "fidelity"])?;
    for (i, (m, f)) in job.members.iter().zip(&r.fidelities).enumerate() {
        fid.row([
            i.to_string(),
            m.label.clone(),
            ens.group_of[i].to_string(),
            num(angular_to_mhz(m.zfs_offset)),
            m.hyperfine_m.to_string(),
            num(m.weight),
            num(*f),
        ])?;
    }
    files.push(fid.finish()?);
    let mut log = CsvOut::create(&out.join("iterations.csv"), &["iteration", "objective", "min_fidelity", "mean_fidelity", "step_size"])?;
    for l in &r.log {
        log.row([l.iteration.to_string(), num(l.objective), num(l.min_fidelity), num(l.mean_fidelity), num(l.step_size)])?;
    }
    files.push(log.finish()?);
    let report = OptimizeReport {
        converged: r.converged,
        stop: stop_name(r.stop),
        iterations: r.log.len() - 1,
        objective: r.objective,
        min_fidelity: r.min_fidelity(),
        goal: job.goal,
        n_steps: job.n_steps,
        dt_ns: job.dt_ns,
        seed: job.seed,
    };
    files.push(write_json(&out.join("report.json"), &report)?);
    Ok(files)
}

fn load_pulse(cfg: &JobConfig, config_dir: &Path, flag: Option<&Path>) -> Result<ControlPulse, CliError> {
    let path = match (flag, &cfg.simulate.pulse) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => config_dir.join(p),
        (None, None) => return Err(CliError::Config("no pulse file: pass --pulse or set simulate.pulse".into())),
    };
    let pulse = read_pulse(&path, (0.0, cfg.hamiltonian.dtheta_deg))?;
    let (lo, hi) = cfg.bounds()?;
    // Amplitude pulses are checked against the configured bounds.
    if let nvctl_core::hamiltonian::ControlLayout::Amplitude { .. } = pulse.layout {
        pulse.check_bounds(lo.min(0.0), hi).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(pulse)
}

fn initial_density(cfg: &JobConfig) -> Result<nvctl_core::spin::SpinMatrix, CliError> {
    parse_level(&cfg.simulate.initial)
        .map(|l| l.density())
        .ok_or_else(|| CliError::Config(format!("simulate.initial: expected \"0\", \"+1\" or \"-1\", got `{}`", cfg.simulate.initial)))
}

pub fn simulate(cfg: &JobConfig, config_dir: &Path, pulse_flag: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let pulse = load_pulse(cfg, config_dir, pulse_flag)?;
    let ens = cfg.ensemble()?;
    let rho0 = initial_density(cfg)?;
    let traj = propagate(&ens.members, &pulse, &rho0)?;
    let mut csv = CsvOut::create(
        &out.join("trajectory.csv"),
        &["step", "t_ns", "member_id", "xp", "yp", "zp", "xm", "ym", "zm", "pop0", "pop+1", "pop-1"],
    )?;
    for t in &traj {
        for (k, rho) in t.densities(&rho0).iter().enumerate() {
            let b = bloch_coordinates(rho);
            let p = populations(rho);
            csv.row([
                k.to_string(),
                num(k as f64 * pulse.dt_ns),
                t.member.to_string(),
                num(b.xp),
                num(b.yp),
                num(b.zp),
                num(b.xm),
                num(b.ym),
                num(b.zm),
                num(p.zero),
                num(p.plus),
                num(p.minus),
            ])?;
        }
    }
    Ok(vec![csv.finish()?])
}

pub fn bloch_export(cfg: &JobConfig, config_dir: &Path, pulse_flag: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let pulse = load_pulse(cfg, config_dir, pulse_flag)?;
    let ens = cfg.ensemble()?;
    let rho0 = initial_density(cfg)?;
    let traj = propagate(&ens.members, &pulse, &rho0)?;
    let mut csv = CsvOut::create(&out.join("bloch.csv"), &["step", "t_ns", "member_id", "sphere", "x", "y", "z"])?;
    let mut arcs = CsvOut::create(&out.join("bloch_arcs.csv"), &["member_id", "label", "arc_plus", "arc_minus"])?;
    for t in &traj {
        let points: Vec<_> = t.densities(&rho0).iter().map(bloch_coordinates).collect();
        for sign in SubspaceSign::BOTH {
            let name = if sign == SubspaceSign::Plus { "+" } else { "-" };
            for (k, p) in points.iter().enumerate() {
                let [x, y, z] = p.sphere(sign);
                csv.row([k.to_string(), num(k as f64 * pulse.dt_ns), t.member.to_string(), name.to_string(), num(x), num(y), num(z)])?;
            }
        }
        arcs.row([
            t.member.to_string(),
            t.label.clone(),
            num(bloch_arc_length(&points, SubspaceSign::Plus)),
            num(bloch_arc_length(&points, SubspaceSign::Minus)),
        ])?;
    }
    Ok(vec![csv.finish()?, arcs.finish()?])
}

pub fn rabi_scan_cmd(cfg: &JobConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rs = &cfg.rabi_scan;
    let angles = rs.angles()?;
    let ens = cfg.ensemble()?;
    let points = rabi_scan(&ens.members, &angles, rs.duration_us, rs.dt_ns)?;
    let mut csv = CsvOut::create(&out.join("rabi_scan.csv"), &["dtheta_deg", "member_id", "label", "freq_mhz", "fwhm_mhz", "resolved"])?;
    for p in &points {
        csv.row([num(p.dtheta_deg), p.member.to_string(), p.label.clone(), num(p.peak.freq_mhz), num(p.peak.fwhm_mhz), p.peak.resolved.to_string()])?;
    }
    let mut fits = CsvOut::create(&out.join("rabi_fits.csv"), &["member_id", "label", "a_mhz", "b_mhz", "delta0_deg", "r_squared"])?;
    for (i, m) in ens.members.iter().enumerate() {
        let (x, y): (Vec<f64>, Vec<f64>) =
            points.iter().filter(|p| p.member == i).map(|p| (deg_to_rad(p.dtheta_deg), p.peak.freq_mhz)).unzip();
        match fit_cos2(&x, &y) {
            Ok(f) => fits.row([i.to_string(), m.label.clone(), num(f.a), num(f.b), num(rad_to_deg(f.delta0)), num(f.r_squared)])?,
            Err(_) => fits.row([i.to_string(), m.label.clone(), String::new(), String::new(), String::new(), String::new()])?,
        }
    }
    Ok(vec![csv.finish()?, fits.finish()?])
}

#[derive(Serialize)]
struct SpinLockReport {
    lock: String,
    target_rabi_mhz: f64,
    half_pi_us: f64,
    band_widths: Vec<(String, f64)>,
}

pub fn spinlock(cfg: &JobConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let s = cfg.spinlock.as_ref().ok_or_else(|| CliError::Config("missing [spinlock] section".into()))?;
    let times = s.times()?;
    let ens = cfg.ensemble()?;
    if !ens.members.iter().any(|m| m.label == s.lock) {
        return Err(CliError::Config(format!("spinlock.lock: no group labelled `{}`", s.lock)));
    }
    let lc = SpinLockConfig {
        lock_label: s.lock.clone(),
        evolve_times_us: times.clone(),
        calibration_us: s.calibration_us,
        calibration_dt_ns: s.calibration_dt_ns,
    };
    let r = spin_locking(&ens.members, &lc)?;
    let mut csv = CsvOut::create(&out.join("spinlock.csv"), &["t_us", "member_id", "label", "pop0"])?;
    for t in &r.traces {
        for (k, p) in t.zero_population.iter().enumerate() {
            csv.row([num(times[k]), t.member.to_string(), t.label.clone(), num(*p)])?;
        }
    }
    let report = SpinLockReport {
        lock: s.lock.clone(),
        target_rabi_mhz: r.target_rabi_mhz,
        half_pi_us: r.half_pi_us,
        band_widths: r.traces.iter().map(|t| (t.label.clone(), t.band_width())).collect(),
    };
    Ok(vec![csv.finish()?, write_json(&out.join("spinlock_report.json"), &report)?])
}
