//! CSV and manifest files.

use std::fs::File;
use std::path::{Path, PathBuf};

use nvctl_core::hamiltonian::ControlLayout;
use nvctl_core::propagate::ControlPulse;
use nvctl_core::units::{deg_to_rad, rad_to_deg};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// 12 significant digits, printed as the shortest decimal of the rounded
/// value.
pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    // Avoid "-0".
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        let mut out = CsvOut { path: path.to_path_buf(), writer: csv::Writer::from_writer(file) };
        out.row(header.iter().map(|s| s.to_string()))?;
        Ok(out)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<(), CliError> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.writer.write_record(&fields).map_err(|e| CliError::io(self.path.display().to_string(), e.into()))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush().map_err(|e| CliError::io(self.path.display().to_string(), e))?;
        Ok(self.path)
    }
}

/// Per-step (Ω₁, θ₁, Ω₂, θ₂) in radians.
fn polar_steps(pulse: &ControlPulse) -> Vec<[f64; 4]> {
    (0..pulse.n_steps())
        .map(|k| match pulse.layout {
            // Keep the configured phases even where an amplitude is zero.
            ControlLayout::Amplitude { theta1, theta2 } => [pulse.steps[k][0], theta1, pulse.steps[k][1], theta2],
            ControlLayout::Iq => {
                let u = pulse.control_values(k);
                let ((o1, t1), (o2, t2)) = (u.to_polar(1), u.to_polar(2));
                [o1, t1, o2, t2]
            }
        })
        .collect()
}

pub fn write_pulse(path: &Path, pulse: &ControlPulse) -> Result<PathBuf, CliError> {
    let mut out = CsvOut::create(path, &["step", "dt_ns", "omega1", "omega2", "theta1_deg", "theta2_deg"])?;
    for (k, [o1, t1, o2, t2]) in polar_steps(pulse).into_iter().enumerate() {
        out.row([k.to_string(), num(pulse.dt_ns), num(o1), num(o2), num(rad_to_deg(t1)), num(rad_to_deg(t2))])?;
    }
    out.finish()
}

/// Reads a pulse file. Without phase columns, or with phases constant over
/// the pulse, the result is amplitude-only; otherwise it is converted to IQ.
pub fn read_pulse(path: &Path, default_phases_deg: (f64, f64)) -> Result<ControlPulse, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(|s| s.trim().to_string()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let required = ["step", "dt_ns", "omega1", "omega2"];
    let idx: Vec<usize> = required
        .iter()
        .map(|n| col(n).ok_or_else(|| bad(format!("missing column `{n}`"))))
        .collect::<Result<_, _>>()?;
    let phase_cols = match (col("theta1_deg"), col("theta2_deg")) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(bad("theta1_deg and theta2_deg must appear together".into())),
    };
    let mut dt = None;
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: column {} is not a number", line + 1, header[i])))
        };
        let step = field(idx[0])?;
        if step != line as f64 {
            return Err(bad(format!("row {}: expected step {line}, found {step}", line + 1)));
        }
        let d = field(idx[1])?;
        match dt {
            None => dt = Some(d),
            Some(prev) if prev != d => return Err(bad(format!("row {}: dt_ns changes from {prev} to {d}", line + 1))),
            _ => {}
        }
        let (t1, t2) = match phase_cols {
            Some((a, b)) => (field(a)?, field(b)?),
            None => default_phases_deg,
        };
        rows.push([field(idx[2])?, t1, field(idx[3])?, t2]);
    }
    let dt = dt.ok_or_else(|| bad("pulse has no steps".into()))?;
    let (t1, t2) = (rows[0][1], rows[0][3]);
    let constant = rows.iter().all(|r| r[1] == t1 && r[3] == t2);
    let pulse = if constant {
        let layout = ControlLayout::Amplitude { theta1: deg_to_rad(t1), theta2: deg_to_rad(t2) };
        ControlPulse::new(dt, layout, rows.iter().map(|r| vec![r[0], r[2]]).collect())
    } else {
        let steps = rows
            .iter()
            .map(|r| {
                let (a, b) = (deg_to_rad(r[1]), deg_to_rad(r[3]));
                vec![r[0] * a.cos(), r[0] * a.sin(), r[2] * b.cos(), r[2] * b.sin()]
            })
            .collect();
        ControlPulse::new(dt, ControlLayout::Iq, steps)
    };
    pulse.map_err(|e| bad(e.to_string()))
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}
