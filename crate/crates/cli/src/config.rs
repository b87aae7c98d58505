//! Job configuration: one TOML document per run.

use std::f64::consts::PI;

use nvctl_core::fields::{channel_fields, FieldVector, MicrostripGeometry};
use nvctl_core::geometry::{pas_rotation, subensemble_partition, CrystalCut, NvOrientation};
use nvctl_core::grape::{OptimizationJob, Target};
use nvctl_core::hamiltonian::{robustness_ensemble, ControlLayout, ControlModel, EnsembleMember, PhenomenologicalParams};
use nvctl_core::spin::{target_unitary, Level, RotationSpec, SpinMatrix, SubspaceSign};
use nvctl_core::units::{deg_to_rad, mhz_to_angular};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub crystal: CrystalConfig,
    #[serde(default)]
    pub fields: FieldsConfig,
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    pub pulse: Option<PulseConfig>,
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub rabi_scan: RabiScanConfig,
    pub spinlock: Option<SpinLockSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    /// "100", "110" or "111".
    pub cut: String,
    /// Orientations to include, e.g. "(1,1,1)". All four when absent.
    pub orientations: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldsConfig {
    pub strip_width_um: f64,
    pub gap_um: f64,
    pub thickness_um: f64,
    pub current1: f64,
    pub current2: f64,
    pub mu0: f64,
    pub edge_epsilon_um: f64,
    /// Focal point; x defaults to the midplane between the strips.
    pub focal_x_um: Option<f64>,
    pub focal_z_um: f64,
    /// Rabi frequency in MHz per raw field unit. Required for a priori
    /// Hamiltonians.
    pub gyro_scale_mhz: Option<f64>,
    pub scan: Option<ScanGrid>,
}

impl Default for FieldsConfig {
    fn default() -> Self {
        let g = MicrostripGeometry::default();
        FieldsConfig {
            strip_width_um: g.strip_width,
            gap_um: g.gap,
            thickness_um: g.thickness,
            current1: g.current1,
            current2: g.current2,
            mu0: g.mu0,
            edge_epsilon_um: g.edge_epsilon,
            focal_x_um: None,
            focal_z_um: 70.0,
            gyro_scale_mhz: None,
            scan: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGrid {
    pub x_min_um: f64,
    pub x_max_um: f64,
    pub nx: usize,
    pub z_min_um: f64,
    pub z_max_um: f64,
    pub nz: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianMode {
    Apriori,
    Phenomenological,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ControlsMode {
    #[default]
    Amplitude,
    Iq,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub mode: HamiltonianMode,
    #[serde(default = "default_zfs")]
    pub zfs_mhz: f64,
    #[serde(default = "default_zfs")]
    pub transmitter_mhz: f64,
    /// Measured angle between the channel fields (phenomenological mode).
    pub eta_deg: Option<f64>,
    /// Channel-2 phase for amplitude-only controls.
    #[serde(default = "default_dtheta")]
    pub dtheta_deg: f64,
    /// Measured Rabi strengths, one per sub-ensemble (phenomenological mode).
    pub omega_nv_mhz: Option<Vec<f64>>,
    /// Sub-ensemble labels, in group order.
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub controls: ControlsMode,
}

fn default_zfs() -> f64 {
    nvctl_core::units::ZFS_MHZ
}

fn default_dtheta() -> f64 {
    270.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub zfs_offsets_mhz: Vec<f64>,
    pub hyperfine: bool,
    pub hyperfine_mhz: f64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig { zfs_offsets_mhz: Vec::new(), hyperfine: false, hyperfine_mhz: nvctl_core::units::HYPERFINE_N14_MHZ }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub n_steps: usize,
    pub dt_ns: f64,
    /// Control bounds; [0, 1] for amplitudes and [−1, 1] for IQ by default.
    pub bounds: Option<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Map,
    State,
    Identity,
}

/// Target applied to every group not listed in `groups`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: Option<TargetKind>,
    pub alpha_deg: Option<f64>,
    pub axis: Option<[f64; 3]>,
    pub sign: Option<String>,
    pub initial: Option<String>,
    #[serde(rename = "final")]
    pub final_state: Option<String>,
    /// Diagonal of the map mask.
    pub mask: Option<[f64; 3]>,
    #[serde(default)]
    pub groups: Vec<GroupTarget>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupTarget {
    /// Group label or one of its orientations.
    pub group: String,
    pub kind: TargetKind,
    pub alpha_deg: Option<f64>,
    pub axis: Option<[f64; 3]>,
    pub sign: Option<String>,
    pub initial: Option<String>,
    #[serde(rename = "final")]
    pub final_state: Option<String>,
    pub mask: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub goal: f64,
    pub max_iter: usize,
    pub smoothness: f64,
    pub seed: u64,
    pub initial_scale: f64,
    pub grad_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { goal: 0.99, max_iter: 2000, smoothness: 1e-4, seed: 0, initial_scale: 0.2, grad_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Pulse CSV, relative to the config file.
    pub pulse: Option<String>,
    /// Initial level: "0", "+1" or "-1".
    pub initial: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { pulse: None, initial: "0".into() }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiScanConfig {
    pub dtheta_start_deg: f64,
    pub dtheta_stop_deg: f64,
    pub dtheta_step_deg: f64,
    pub duration_us: f64,
    pub dt_ns: f64,
}

impl Default for RabiScanConfig {
    fn default() -> Self {
        RabiScanConfig { dtheta_start_deg: 0.0, dtheta_stop_deg: 360.0, dtheta_step_deg: 10.0, duration_us: 10.0, dt_ns: 10.0 }
    }
}

impl RabiScanConfig {
    pub fn angles(&self) -> Result<Vec<f64>, CliError> {
        if !(self.dtheta_step_deg > 0.0) || !(self.dtheta_stop_deg >= self.dtheta_start_deg) {
            return Err(CliError::Config("rabi_scan: need dtheta_step_deg > 0 and stop ≥ start".into()));
        }
        let n = ((self.dtheta_stop_deg - self.dtheta_start_deg) / self.dtheta_step_deg + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.dtheta_start_deg + k as f64 * self.dtheta_step_deg).collect())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinLockSection {
    /// Label of the group to lock.
    pub lock: String,
    #[serde(default)]
    pub t_start_us: f64,
    #[serde(default = "default_lock_stop")]
    pub t_stop_us: f64,
    #[serde(default = "default_lock_count")]
    pub n_times: usize,
    #[serde(default = "default_lock_stop")]
    pub calibration_us: f64,
    #[serde(default = "default_calibration_dt")]
    pub calibration_dt_ns: f64,
}

fn default_lock_stop() -> f64 {
    10.0
}

fn default_lock_count() -> usize {
    201
}

fn default_calibration_dt() -> f64 {
    5.0
}

impl SpinLockSection {
    pub fn times(&self) -> Result<Vec<f64>, CliError> {
        if self.n_times < 2 || !(self.t_stop_us > self.t_start_us) || self.t_start_us < 0.0 {
            return Err(CliError::Config("spinlock: need n_times ≥ 2 and 0 ≤ t_start_us < t_stop_us".into()));
        }
        let step = (self.t_stop_us - self.t_start_us) / (self.n_times - 1) as f64;
        Ok((0..self.n_times).map(|k| self.t_start_us + k as f64 * step).collect())
    }
}

/// Parses a TOML document; errors carry the offending key path.
pub fn parse(text: &str) -> Result<JobConfig, CliError> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })
}

/// One sub-ensemble before robustness expansion.
#[derive(Clone, Debug)]
pub struct Group {
    pub label: String,
    pub orientations: Vec<NvOrientation>,
    pub member: EnsembleMember,
}

/// Ensemble with each expanded member's group index.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub groups: Vec<Group>,
    pub members: Vec<EnsembleMember>,
    pub group_of: Vec<usize>,
}

impl JobConfig {
    pub fn cut(&self) -> Result<CrystalCut, CliError> {
        CrystalCut::parse(&self.crystal.cut).ok_or_else(|| CliError::Config(format!("crystal.cut: unknown cut `{}`", self.crystal.cut)))
    }

    pub fn orientations(&self) -> Result<Vec<NvOrientation>, CliError> {
        match &self.crystal.orientations {
            None => Ok(NvOrientation::ALL.to_vec()),
            Some(list) => list
                .iter()
                .map(|s| NvOrientation::parse(s).ok_or_else(|| CliError::Config(format!("crystal.orientations: cannot parse `{s}`"))))
                .collect(),
        }
    }

    pub fn geometry(&self) -> Result<MicrostripGeometry, CliError> {
        let f = &self.fields;
        let g = MicrostripGeometry {
            strip_width: f.strip_width_um,
            gap: f.gap_um,
            thickness: f.thickness_um,
            current1: f.current1,
            current2: f.current2,
            mu0: f.mu0,
            edge_epsilon: f.edge_epsilon_um,
        };
        g.validate().map_err(|e| CliError::Config(format!("fields: {e}")))?;
        Ok(g)
    }

    pub fn focal_point(&self) -> Result<(f64, f64), CliError> {
        let g = self.geometry()?;
        Ok((self.fields.focal_x_um.unwrap_or_else(|| g.midplane_x()), self.fields.focal_z_um))
    }

    /// Channel fields at the focal point in rad/µs per unit control.
    pub fn drive_fields(&self) -> Result<(FieldVector, FieldVector), CliError> {
        let scale = self
            .fields
            .gyro_scale_mhz
            .ok_or_else(|| CliError::Config("fields.gyro_scale_mhz is required for a priori Hamiltonians".into()))?;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(CliError::Config("fields.gyro_scale_mhz must be positive".into()));
        }
        let g = self.geometry()?;
        let (x, z) = self.focal_point()?;
        let (f1, f2) = channel_fields(&g, x, z).map_err(|e| CliError::Config(format!("fields: {e}")))?;
        let s = 2.0 * PI * scale;
        Ok((f1.scaled(s), f2.scaled(s)))
    }

    pub fn layout(&self) -> ControlLayout {
        match self.hamiltonian.controls {
            ControlsMode::Amplitude => ControlLayout::Amplitude { theta1: 0.0, theta2: deg_to_rad(self.hamiltonian.dtheta_deg) },
            ControlsMode::Iq => ControlLayout::Iq,
        }
    }

    pub fn bounds(&self) -> Result<(f64, f64), CliError> {
        let default = match self.hamiltonian.controls {
            ControlsMode::Amplitude => [0.0, 1.0],
            ControlsMode::Iq => [-1.0, 1.0],
        };
        let [lo, hi] = self.pulse.as_ref().and_then(|p| p.bounds).unwrap_or(default);
        if self.hamiltonian.controls == ControlsMode::Amplitude && lo < 0.0 {
            return Err(CliError::Config("pulse.bounds: amplitudes cannot be negative".into()));
        }
        Ok((lo, hi))
    }

    fn residual(&self) -> f64 {
        mhz_to_angular(self.hamiltonian.zfs_mhz - self.hamiltonian.transmitter_mhz)
    }

    fn label(&self, k: usize, default: String) -> String {
        self.hamiltonian.labels.as_ref().and_then(|l| l.get(k).cloned()).unwrap_or(default)
    }

    /// Sub-ensembles without robustness expansion.
    pub fn groups(&self) -> Result<Vec<Group>, CliError> {
        let h = &self.hamiltonian;
        let groups = match h.mode {
            HamiltonianMode::Phenomenological => {
                let omegas = h
                    .omega_nv_mhz
                    .as_ref()
                    .filter(|o| !o.is_empty())
                    .ok_or_else(|| CliError::Config("hamiltonian.omega_nv_mhz is required in phenomenological mode".into()))?;
                let eta = h.eta_deg.ok_or_else(|| CliError::Config("hamiltonian.eta_deg is required in phenomenological mode".into()))?;
                let cut = self.cut()?;
                let pairs = self.partition()?;
                omegas
                    .iter()
                    .enumerate()
                    .map(|(k, &omega)| {
                        if !(omega > 0.0) || !omega.is_finite() {
                            return Err(CliError::Config(format!("hamiltonian.omega_nv_mhz[{k}] must be positive")));
                        }
                        let p = PhenomenologicalParams {
                            omega_nv_mhz: omega,
                            eta_deg: eta,
                            dtheta_deg: h.dtheta_deg,
                            zfs_mhz: h.zfs_mhz,
                            transmitter_mhz: h.transmitter_mhz,
                        };
                        let label = self.label(k, ((b'A' + (k % 26) as u8) as char).to_string());
                        let mut member = EnsembleMember::new(label.clone(), p.model());
                        member.residual = p.residual();
                        // Orientation membership is informational here: the
                        // measured strengths are listed in partition order.
                        let orientations = if pairs.len() == omegas.len() && cut != CrystalCut::C111 { pairs[k].clone() } else { Vec::new() };
                        Ok(Group { label, orientations, member })
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
            HamiltonianMode::Apriori => {
                let cut = self.cut()?;
                let (f1, f2) = self.drive_fields()?;
                self.partition()?
                    .into_iter()
                    .enumerate()
                    .map(|(k, orientations)| {
                        let names: Vec<String> = orientations.iter().map(|o| o.to_string()).collect();
                        let label = self.label(k, names.join("&"));
                        let model = ControlModel::Apriori { rotation: pas_rotation(cut, orientations[0]), field1: f1, field2: f2 };
                        let mut member = EnsembleMember::new(label.clone(), model);
                        member.residual = self.residual();
                        Group { label, orientations, member }
                    })
                    .collect()
            }
        };
        Ok(groups)
    }

    /// Degenerate groups among the configured orientations.
    pub fn partition(&self) -> Result<Vec<Vec<NvOrientation>>, CliError> {
        let cut = self.cut()?;
        let wanted = self.orientations()?;
        let g = self.geometry()?;
        let (x, z) = self.focal_point()?;
        let (f1, f2) = channel_fields(&g, x, z).map_err(|e| CliError::Config(format!("fields: {e}")))?;
        Ok(subensemble_partition(cut, &[f1, f2], 1e-9)
            .into_iter()
            .map(|grp| grp.into_iter().filter(|o| wanted.contains(o)).collect::<Vec<_>>())
            .filter(|grp| !grp.is_empty())
            .collect())
    }

    /// Groups expanded over the robustness ensemble.
    pub fn ensemble(&self) -> Result<Ensemble, CliError> {
        let mut groups = self.groups()?;
        let r = &self.robustness;
        if !(r.hyperfine_mhz >= 0.0) {
            return Err(CliError::Config("robustness.hyperfine_mhz must be non-negative".into()));
        }
        for g in &mut groups {
            g.member.hyperfine_coupling = mhz_to_angular(r.hyperfine_mhz);
        }
        let base: Vec<EnsembleMember> = groups.iter().map(|g| g.member.clone()).collect();
        let offsets: Vec<f64> = r.zfs_offsets_mhz.iter().map(|&d| mhz_to_angular(d)).collect();
        let members = robustness_ensemble(&base, &offsets, r.hyperfine).map_err(|e| CliError::Config(format!("robustness: {e}")))?;
        let per = members.len() / base.len();
        let group_of = (0..members.len()).map(|i| i / per).collect();
        Ok(Ensemble { groups, members, group_of })
    }

    /// Target of every group, in group order.
    pub fn group_targets(&self, groups: &[Group]) -> Result<Vec<Target>, CliError> {
        let t = self.target.as_ref().ok_or_else(|| CliError::Config("missing [target] section".into()))?;
        for gt in &t.groups {
            if !groups.iter().any(|g| group_matches(g, &gt.group)) {
                return Err(CliError::Config(format!("target.groups: no group matches `{}`", gt.group)));
            }
        }
        groups
            .iter()
            .map(|g| {
                if let Some(gt) = t.groups.iter().find(|gt| group_matches(g, &gt.group)) {
                    let ctx = format!("target.groups[{}]", gt.group);
                    build_target(&ctx, gt.kind, gt.alpha_deg, gt.axis, gt.sign.as_deref(), gt.initial.as_deref(), gt.final_state.as_deref(), gt.mask)
                } else {
                    let kind = t.kind.ok_or_else(|| CliError::Config(format!("target: no target for group `{}`", g.label)))?;
                    build_target("target", kind, t.alpha_deg, t.axis, t.sign.as_deref(), t.initial.as_deref(), t.final_state.as_deref(), t.mask)
                }
            })
            .collect()
    }

    pub fn optimization_job(&self) -> Result<(OptimizationJob, Ensemble), CliError> {
        let ens = self.ensemble()?;
        let p = self.pulse.as_ref().ok_or_else(|| CliError::Config("missing [pulse] section".into()))?;
        let per_group = self.group_targets(&ens.groups)?;
        let targets = ens.group_of.iter().map(|&g| per_group[g]).collect();
        let o = &self.optimizer;
        let mut job = OptimizationJob::new(ens.members.clone(), targets, self.layout(), p.n_steps, p.dt_ns);
        job.bounds = self.bounds()?;
        job.goal = o.goal;
        job.max_iter = o.max_iter;
        job.smoothness = o.smoothness;
        job.seed = o.seed;
        job.initial_scale = o.initial_scale;
        job.grad_tol = o.grad_tol;
        job.validate().map_err(|e| CliError::Config(format!("job: {e}")))?;
        Ok((job, ens))
    }
}

fn group_matches(g: &Group, key: &str) -> bool {
    g.label == key || NvOrientation::parse(key).is_some_and(|o| g.orientations.contains(&o))
}

pub fn parse_level(s: &str) -> Option<Level> {
    match s.trim() {
        "0" => Some(Level::Zero),
        "+1" | "1" | "+" => Some(Level::Plus),
        "-1" | "-" => Some(Level::Minus),
        _ => None,
    }
}

fn parse_sign(s: &str) -> Option<SubspaceSign> {
    match s.trim() {
        "+" | "plus" | "+1" => Some(SubspaceSign::Plus),
        "-" | "minus" | "-1" => Some(SubspaceSign::Minus),
        _ => None,
    }
}

#[allow(clippy::too_many_arguments)]
fn build_target(
    ctx: &str,
    kind: TargetKind,
    alpha_deg: Option<f64>,
    axis: Option<[f64; 3]>,
    sign: Option<&str>,
    initial: Option<&str>,
    final_state: Option<&str>,
    mask: Option<[f64; 3]>,
) -> Result<Target, CliError> {
    let err = |m: &str| CliError::Config(format!("{ctx}: {m}"));
    let mask = match mask {
        Some(d) => SpinMatrix::diag(d),
        None => SpinMatrix::identity(),
    };
    let target = match kind {
        TargetKind::Identity => Target::Map { unitary: SpinMatrix::identity(), mask },
        TargetKind::Map => {
            let alpha = alpha_deg.ok_or_else(|| err("map targets need alpha_deg"))?;
            let axis = axis.ok_or_else(|| err("map targets need axis"))?;
            let sign = sign.ok_or_else(|| err("map targets need sign"))?;
            let sign = parse_sign(sign).ok_or_else(|| err("sign must be \"+\" or \"-\""))?;
            let spec = RotationSpec::new(deg_to_rad(alpha), axis).map_err(|e| err(&e.to_string()))?;
            Target::Map { unitary: target_unitary(&spec, sign), mask }
        }
        TargetKind::State => {
            let i = initial.and_then(parse_level).ok_or_else(|| err("state targets need initial = \"0\" | \"+1\" | \"-1\""))?;
            let f = final_state.and_then(parse_level).ok_or_else(|| err("state targets need final = \"0\" | \"+1\" | \"-1\""))?;
            Target::State { initial: i.density(), target: f.density() }
        }
    };
    target.validate().map_err(|e| err(&e.to_string()))?;
    Ok(target)
}
