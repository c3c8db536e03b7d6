//! RCS comparison between two `rcs.csv`-style files on a common grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::run::{read_rcs_csv, RcsRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub phi_deg: f64,
    pub sigma: f64,
    pub reference: f64,
    /// `100 |sigma - reference| / |reference|`, absent where the reference is zero.
    pub diff_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// `100 |sigma - reference|_2 / |reference|_2`.
    pub l2_percent: f64,
    /// `100 max |sigma - reference| / max |reference|`.
    pub max_percent: f64,
    /// Bound on `l2_percent`, if one was given.
    pub tolerance_percent: Option<f64>,
    pub pass: bool,
    pub rows: Vec<CompareRow>,
}

/// Compare `sigma` against `reference`; the angle grids must agree.
pub fn compare_rows(sigma: &[RcsRow], reference: &[RcsRow], tolerance_percent: Option<f64>) -> Result<CompareReport> {
    if sigma.len() != reference.len() {
        return Err(Error::GridMismatch(format!("{} angles vs {}", sigma.len(), reference.len())));
    }
    if sigma.is_empty() {
        return Err(Error::GridMismatch("empty grid".into()));
    }
    let mut rows = Vec::with_capacity(sigma.len());
    let (mut num, mut den, mut dmax, mut rmax) = (0.0, 0.0, 0.0_f64, 0.0_f64);
    for (a, b) in sigma.iter().zip(reference) {
        if (a.phi_deg - b.phi_deg).abs() > 1e-9 * (1.0 + b.phi_deg.abs()) {
            return Err(Error::GridMismatch(format!("angle {} vs {}", a.phi_deg, b.phi_deg)));
        }
        let d = (a.sigma_m2 - b.sigma_m2).abs();
        num += d * d;
        den += b.sigma_m2 * b.sigma_m2;
        dmax = dmax.max(d);
        rmax = rmax.max(b.sigma_m2.abs());
        rows.push(CompareRow {
            phi_deg: b.phi_deg,
            sigma: a.sigma_m2,
            reference: b.sigma_m2,
            diff_percent: (b.sigma_m2 != 0.0).then(|| 100.0 * d / b.sigma_m2.abs()),
        });
    }
    if den == 0.0 {
        return Err(Error::GridMismatch("reference is identically zero".into()));
    }
    let l2_percent = 100.0 * (num / den).sqrt();
    let max_percent = 100.0 * dmax / rmax;
    Ok(CompareReport {
        l2_percent,
        max_percent,
        tolerance_percent,
        pass: tolerance_percent.map_or(true, |t| l2_percent <= t),
        rows,
    })
}

pub fn compare_files(sigma: &Path, reference: &Path, tolerance_percent: Option<f64>) -> Result<CompareReport> {
    compare_rows(&read_rcs_csv(sigma)?, &read_rcs_csv(reference)?, tolerance_percent)
}
