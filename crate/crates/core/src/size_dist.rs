//! Burst size distributions per origin class and their power-law fits.

use serde::Serialize;

use crate::features::{EpisodePair, Origin};
use crate::stats;
use crate::{Error, Result};

pub const DEFAULT_R2_MIN: f64 = 0.96;
pub const DEFAULT_MIN_POINTS: usize = 5;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CcdfPoint {
    pub size: f64,
    /// Fraction of sizes `>= size`.
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// Log-log slope of the CCDF.
    pub ccdf_exponent: f64,
    /// Density exponent, `ccdf_exponent − 1`.
    pub pdf_exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Distinct sizes used.
    pub n_points: usize,
    pub passed: bool,
}

/// Acceptance gates applied to [`PowerLawFit::passed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitGates {
    pub r2_min: f64,
    pub min_points: usize,
}

impl Default for FitGates {
    fn default() -> Self {
        FitGates {
            r2_min: DEFAULT_R2_MIN,
            min_points: DEFAULT_MIN_POINTS,
        }
    }
}

/// Complementary cumulative distribution at each distinct size.
pub fn ccdf(sizes: &[f64]) -> Result<Vec<CcdfPoint>> {
    if sizes.is_empty() {
        return Err(Error::arg("ccdf needs at least one size"));
    }
    if sizes.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::arg("burst sizes must be positive and finite"));
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let size = sorted[i];
        points.push(CcdfPoint {
            size,
            fraction: (sorted.len() - i) as f64 / n,
        });
        while i < sorted.len() && sorted[i] == size {
            i += 1;
        }
    }
    Ok(points)
}

/// OLS of `ln(fraction)` on `ln(size)` over the CCDF points.
pub fn fit_power_law(points: &[CcdfPoint], gates: FitGates) -> Result<PowerLawFit> {
    let xs: Vec<f64> = points.iter().map(|p| p.size.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.fraction.ln()).collect();
    let fit = stats::ols(&xs, &ys)
        .ok_or_else(|| Error::FitDegenerate(format!("power-law fit needs two distinct sizes, got {}", points.len())))?;
    let n_points = points.len();
    Ok(PowerLawFit {
        ccdf_exponent: fit.slope,
        pdf_exponent: fit.slope - 1.0,
        intercept: fit.intercept,
        r2: fit.r2,
        n_points,
        passed: fit.r2 > gates.r2_min && n_points >= gates.min_points,
    })
}

/// One class's sizes and, when at least two distinct sizes exist, its fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDistribution {
    pub ccdf: Vec<CcdfPoint>,
    pub fit: Option<PowerLawFit>,
    pub median_size: f64,
    pub n_bursts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDistributions {
    pub endogenous: Option<ClassDistribution>,
    pub exogenous: Option<ClassDistribution>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn class_distribution(sizes: &[f64], gates: FitGates) -> Result<Option<ClassDistribution>> {
    if sizes.is_empty() {
        return Ok(None);
    }
    let points = ccdf(sizes)?;
    let fit = match fit_power_law(&points, gates) {
        Ok(fit) => Some(fit),
        Err(Error::FitDegenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let mut sorted = sizes.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Some(ClassDistribution {
        ccdf: points,
        fit,
        median_size: median(&sorted),
        n_bursts: sizes.len(),
    }))
}

/// Splits burst sizes by label and fits each class. An empty class is absent.
pub fn class_distributions(pairs: &[EpisodePair], gates: FitGates) -> Result<ClassDistributions> {
    let sizes_of =
        |origin: Origin| -> Vec<f64> { pairs.iter().filter(|p| p.label == origin).map(|p| p.size).collect() };
    Ok(ClassDistributions {
        endogenous: class_distribution(&sizes_of(Origin::Endogenous), gates)?,
        exogenous: class_distribution(&sizes_of(Origin::Exogenous), gates)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub endo_count: usize,
    pub exo_count: usize,
}

fn bin_index(exponent: f64) -> i64 {
    (exponent * (1.0 / HISTOGRAM_BIN_WIDTH)).floor() as i64
}

/// Histogram of CCDF exponents of passing fits, 0.1 wide bins over the
/// observed range of both classes.
pub fn exponent_histogram(endo: &[PowerLawFit], exo: &[PowerLawFit]) -> Vec<HistogramBin> {
    let endo_idx: Vec<i64> = endo
        .iter()
        .filter(|f| f.passed)
        .map(|f| bin_index(f.ccdf_exponent))
        .collect();
    let exo_idx: Vec<i64> = exo
        .iter()
        .filter(|f| f.passed)
        .map(|f| bin_index(f.ccdf_exponent))
        .collect();
    let all = endo_idx.iter().chain(&exo_idx);
    let (Some(&lo), Some(&hi)) = (all.clone().min(), all.max()) else {
        return Vec::new();
    };
    let scale = 1.0 / HISTOGRAM_BIN_WIDTH;
    (lo..=hi)
        .map(|k| HistogramBin {
            bin_low: k as f64 / scale,
            bin_high: (k + 1) as f64 / scale,
            endo_count: endo_idx.iter().filter(|i| **i == k).count(),
            exo_count: exo_idx.iter().filter(|i| **i == k).count(),
        })
        .collect()
}
