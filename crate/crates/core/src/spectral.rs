//! Frequency estimation for simulated Rabi traces and the curve fits used on
//! phase scans.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::solve_real;

use core::f64::consts::PI;

/// Zero padding factor for the spectrum.
const PAD: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPeak {
    /// Peak frequency, MHz (cycles per µs).
    pub freq_mhz: f64,
    /// Full width at half maximum of the magnitude peak, MHz.
    pub fwhm_mhz: f64,
    /// Number of periods of the peak frequency inside the record.
    pub periods: f64,
    /// False when the record holds fewer than three periods.
    pub resolved: bool,
}

fn dft_magnitude(x: &[f64], dt_us: f64, f_mhz: f64) -> f64 {
    let (s, c) = (2.0 * PI * f_mhz * dt_us).sin_cos();
    // Phasor recurrence, renormalized periodically.
    let (mut pr, mut pi) = (1.0f64, 0.0f64);
    let (mut re, mut im) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        re += v * pr;
        im -= v * pi;
        let npr = pr * c - pi * s;
        pi = pr * s + pi * c;
        pr = npr;
        if k % 256 == 255 {
            let n = (pr * pr + pi * pi).sqrt();
            pr /= n;
            pi /= n;
        }
    }
    (re * re + im * im).sqrt()
}

/// Dominant oscillation frequency of a uniformly sampled trace: mean removal,
/// Hann window, zero-padded DFT, parabolic interpolation of the log
/// magnitude around the peak. Frequencies below one period per record are
/// not searched.
pub fn dominant_frequency(samples: &[f64], dt_us: f64) -> Result<SpectralPeak> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InvalidJob(alloc::format!("need at least 8 samples, got {n}")));
    }
    if !(dt_us > 0.0) || samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral input"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
            (v - mean) * w
        })
        .collect();
    let m = n * PAD;
    let df = 1.0 / (m as f64 * dt_us);
    let kmax = m / 2;
    let kmin = PAD;
    let mags: Vec<f64> = (0..=kmax).map(|k| if k < kmin { 0.0 } else { dft_magnitude(&x, dt_us, k as f64 * df) }).collect();
    let (kpk, &peak) = mags
        .iter()
        .enumerate()
        .skip(kmin)
        .fold((kmin, &mags[kmin]), |best, (k, v)| if *v > *best.1 { (k, v) } else { best });
    let mut f = kpk as f64 * df;
    if kpk > kmin && kpk < kmax && peak > 0.0 {
        let (a, b, c) = (mags[kpk - 1].max(1e-300).ln(), peak.ln(), mags[kpk + 1].max(1e-300).ln());
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            let p = 0.5 * (a - c) / den;
            f = (kpk as f64 + p.clamp(-0.5, 0.5)) * df;
        }
    }
    let half = 0.5 * peak;
    let edge = |dir: isize| -> f64 {
        let mut k = kpk as isize;
        loop {
            let next = k + dir;
            if next < 0 || next as usize > kmax {
                return k as f64 * df;
            }
            let (v0, v1) = (mags[k as usize], mags[next as usize]);
            if v1 < half {
                let frac = if v0 > v1 { (v0 - half) / (v0 - v1) } else { 0.0 };
                return (k as f64 + dir as f64 * frac) * df;
            }
            k = next;
        }
    };
    let fwhm = edge(1) - edge(-1);
    let periods = f * n as f64 * dt_us;
    Ok(SpectralPeak { freq_mhz: f, fwhm_mhz: fwhm, periods, resolved: periods >= 3.0 })
}

fn r_squared(y: &[f64], fit: impl Fn(usize) -> f64) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = y.iter().enumerate().map(|(k, v)| (v - fit(k)) * (v - fit(k))).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// y ≈ a + b·cos²(x − δ₀), with b ≥ 0 and δ₀ in (−π/2, π/2].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cos2Fit {
    pub a: f64,
    pub b: f64,
    pub delta0: f64,
    pub r_squared: f64,
}

impl Cos2Fit {
    pub fn eval(&self, x: f64) -> f64 {
        let c = (x - self.delta0).cos();
        self.a + self.b * c * c
    }
}

/// Least-squares fit of a + b·cos²(x − δ₀); x in radians. Written as
/// c₀ + c₁cos 2x + c₂sin 2x, which is linear.
pub fn fit_cos2(x: &[f64], y: &[f64]) -> Result<Cos2Fit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidJob(alloc::string::String::from("cos² fit needs at least 3 matching points")));
    }
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (xi, yi) in x.iter().zip(y) {
        let row = [1.0, (2.0 * xi).cos(), (2.0 * xi).sin()];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            aty[r] += row[r] * yi;
        }
    }
    let c = solve_real(ata, aty).ok_or_else(|| Error::InvalidJob(alloc::string::String::from("degenerate cos² fit")))?;
    let half_b = c[1].hypot(c[2]);
    let fit = Cos2Fit { a: c[0] - half_b, b: 2.0 * half_b, delta0: 0.5 * c[2].atan2(c[1]), r_squared: 0.0 };
    let r2 = r_squared(y, |k| fit.eval(x[k]));
    Ok(Cos2Fit { r_squared: r2, ..fit })
}

/// y ≈ a·|cos x|; returns (a, R²).
pub fn fit_abs_cos(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidJob(alloc::string::String::from("|cos| fit needs matching points")));
    }
    let num: f64 = x.iter().zip(y).map(|(xi, yi)| xi.cos().abs() * yi).sum();
    let den: f64 = x.iter().map(|xi| xi.cos() * xi.cos()).sum();
    if den == 0.0 {
        return Err(Error::InvalidJob(alloc::string::String::from("degenerate |cos| fit")));
    }
    let a = num / den;
    Ok((a, r_squared(y, |k| a * x[k].cos().abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(f: f64, phase: f64, n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| 0.5 + 0.5 * (2.0 * PI * f * k as f64 * dt + phase).cos()).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn recovers_pure_sinusoid(f in 0.5f64..20.0, phase in 0.0f64..6.28) {
            let p = dominant_frequency(&trace(f, phase, 2000, 0.01), 0.01).unwrap();
            prop_assert!((p.freq_mhz - f).abs() / f <= 5e-3);
            prop_assert!(p.resolved);
            prop_assert!(p.fwhm_mhz > 0.0 && p.fwhm_mhz < 0.5);
        }
    }

    #[test]
    fn flags_short_records() {
        let p = dominant_frequency(&trace(0.1, 0.0, 2000, 0.01), 0.01).unwrap();
        assert!(!p.resolved);
        assert!(dominant_frequency(&[1.0; 4], 0.01).is_err());
    }

    #[test]
    fn cos2_fit_recovers_parameters() {
        let x: Vec<f64> = (0..36).map(|k| (k as f64 * 10.0).to_radians()).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.2 + 0.7 * (v - 0.3).cos().powi(2)).collect();
        let f = fit_cos2(&x, &y).unwrap();
        assert!((f.a - 1.2).abs() < 1e-12 && (f.b - 0.7).abs() < 1e-12 && (f.delta0 - 0.3).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn abs_cos_fit() {
        let x: Vec<f64> = (0..37).map(|k| (k as f64 * 10.0).to_radians()).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v.cos().abs()).collect();
        let (a, r2) = fit_abs_cos(&x, &y).unwrap();
        assert!((a - 2.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
