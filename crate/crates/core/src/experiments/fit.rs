use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line through `(log N, log value)`: `log value = intercept - slope log N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fits a power law to the positive entries of `series`.
pub fn fit_decay(series: &[(usize, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(n, v)| *n > 0 && *v > 0.0 && v.is_finite())
        .map(|&(n, v)| ((n as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::pre(format!(
            "need at least 3 positive points, got {}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::pre("all N are equal"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        slope: -b,
        intercept: a,
        r2,
        points: pts.len(),
    })
}
