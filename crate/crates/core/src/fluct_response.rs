//! Fluctuation-response scatter, ROC analysis of the endo/exo split against
//! baseline fluctuation, and the critical threshold.
//!
//! The positive class is [`Origin::Endogenous`]; at threshold `θ` a burst is
//! predicted endogenous when its scaled fluctuation `σ/E` is below `θ`.

use serde::Serialize;

use crate::features::{EpisodePair, Origin};
use crate::{Error, Result};

pub const FPR_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    /// Fluctuation threshold; `None` on averaged curves.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalThreshold {
    pub theta: f64,
    pub youden_j: f64,
}

/// Threshold sweep with exact class counts at each threshold.
struct Sweep {
    thresholds: Vec<f64>,
    endo_below: Vec<usize>,
    exo_below: Vec<usize>,
    n_endo: usize,
    n_exo: usize,
}

fn split_classes(pairs: &[EpisodePair]) -> (Vec<f64>, Vec<f64>) {
    let mut endo = Vec::new();
    let mut exo = Vec::new();
    for p in pairs {
        match p.label {
            Origin::Endogenous => endo.push(p.fluct),
            Origin::Exogenous => exo.push(p.fluct),
            Origin::Unlabeled => {}
        }
    }
    (endo, exo)
}

fn sweep(endo: &[f64], exo: &[f64]) -> Result<Sweep> {
    if endo.is_empty() || exo.is_empty() {
        return Err(Error::RocUndefined(format!(
            "need both classes, got {} endogenous and {} exogenous",
            endo.len(),
            exo.len()
        )));
    }
    if endo.iter().chain(exo).any(|v| !v.is_finite()) {
        return Err(Error::arg("fluctuation values must be finite"));
    }
    let mut endo = endo.to_vec();
    let mut exo = exo.to_vec();
    endo.sort_by(f64::total_cmp);
    exo.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = endo.iter().chain(&exo).copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    let mut thresholds = Vec::with_capacity(distinct.len() + 2);
    thresholds.push(f64::NEG_INFINITY);
    thresholds.extend(distinct);
    thresholds.push(f64::INFINITY);
    let below = |sorted: &[f64], theta: f64| sorted.partition_point(|v| *v < theta);
    let endo_below = thresholds.iter().map(|&t| below(&endo, t)).collect();
    let exo_below = thresholds.iter().map(|&t| below(&exo, t)).collect();
    Ok(Sweep {
        thresholds,
        endo_below,
        exo_below,
        n_endo: endo.len(),
        n_exo: exo.len(),
    })
}

/// Trapezoidal area under an ordered point list.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// ROC curve from per-class fluctuation values.
pub fn roc_from_scores(endo: &[f64], exo: &[f64]) -> Result<RocCurve> {
    let sw = sweep(endo, exo)?;
    let points: Vec<RocPoint> = sw
        .thresholds
        .iter()
        .zip(sw.endo_below.iter().zip(&sw.exo_below))
        .map(|(&theta, (&tp, &fp))| RocPoint {
            threshold: Some(theta),
            fpr: fp as f64 / sw.n_exo as f64,
            tpr: tp as f64 / sw.n_endo as f64,
        })
        .collect();
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

pub fn roc_curve(pairs: &[EpisodePair]) -> Result<RocCurve> {
    let (endo, exo) = split_classes(pairs);
    roc_from_scores(&endo, &exo)
}

/// TPR at `fpr` on a curve: the highest TPR where the curve has a vertical
/// run at `fpr`, otherwise linear interpolation between neighbours.
fn tpr_at(points: &[RocPoint], fpr: f64) -> f64 {
    let mut exact: Option<f64> = None;
    for p in points.iter().filter(|p| p.fpr == fpr) {
        exact = Some(exact.map_or(p.tpr, |t: f64| t.max(p.tpr)));
    }
    if let Some(t) = exact {
        return t;
    }
    let after = points.partition_point(|p| p.fpr < fpr);
    if after == 0 {
        return points[0].tpr;
    }
    if after == points.len() {
        return points[points.len() - 1].tpr;
    }
    let (a, b) = (points[after - 1], points[after]);
    a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr)
}

/// Vertical averaging on a `grid_points`-point FPR grid over `[0, 1]`.
pub fn average_roc_on_grid(curves: &[RocCurve], grid_points: usize) -> Result<RocCurve> {
    if curves.is_empty() {
        return Err(Error::arg("average_roc needs at least one curve"));
    }
    if grid_points < 2 {
        return Err(Error::arg("FPR grid needs at least two points"));
    }
    let steps = (grid_points - 1) as f64;
    let mut points = Vec::with_capacity(grid_points + 1);
    for k in 0..grid_points {
        let fpr = k as f64 / steps;
        let tpr = curves.iter().map(|c| tpr_at(&c.points, fpr)).sum::<f64>() / curves.len() as f64;
        if k == 0 && tpr > 0.0 {
            points.push(RocPoint {
                threshold: None,
                fpr: 0.0,
                tpr: 0.0,
            });
        }
        points.push(RocPoint {
            threshold: None,
            fpr,
            tpr,
        });
    }
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

pub fn average_roc(curves: &[RocCurve]) -> Result<RocCurve> {
    average_roc_on_grid(curves, FPR_GRID_POINTS)
}

/// Threshold maximising Youden's J = TPR − FPR, smallest θ on ties.
pub fn critical_threshold(pairs: &[EpisodePair]) -> Result<CriticalThreshold> {
    let (endo, exo) = split_classes(pairs);
    critical_threshold_from_scores(&endo, &exo)
}

pub fn critical_threshold_from_scores(endo: &[f64], exo: &[f64]) -> Result<CriticalThreshold> {
    let sw = sweep(endo, exo)?;
    // compare J exactly as tp·n_exo − fp·n_endo
    let score = |i: usize| sw.endo_below[i] as i128 * sw.n_exo as i128 - sw.exo_below[i] as i128 * sw.n_endo as i128;
    let mut best = 0;
    for i in 1..sw.thresholds.len() {
        if score(i) > score(best) {
            best = i;
        }
    }
    let j = sw.endo_below[best] as f64 / sw.n_endo as f64 - sw.exo_below[best] as f64 / sw.n_exo as f64;
    Ok(CriticalThreshold {
        theta: sw.thresholds[best],
        youden_j: j,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterRow {
    pub fluct: f64,
    pub response: f64,
    pub label: Origin,
}

pub fn response_scatter(pairs: &[EpisodePair]) -> Vec<ScatterRow> {
    pairs
        .iter()
        .map(|p| ScatterRow {
            fluct: p.fluct,
            response: p.response,
            label: p.label,
        })
        .collect()
}
