//! Endogenous/exogenous labelling on the (scaled size, peak ratio) plane.
//!
//! For each keyword the peak ratio `P/S` is regressed on the scaled size
//! `S/E` in log-log space, giving `P/S ≈ α·(S/E)^(−β)`. Labels come from a
//! separator with the slope pinned at −1: a burst below `α_sep/(S/E)` is
//! endogenous, anything on or above it exogenous.

use serde::Serialize;

use crate::features::{EpisodePair, Origin};
use crate::stats;
use crate::{Error, Result};

/// Free-slope fit `y = alpha·x^(−beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub alpha: f64,
    pub beta: f64,
    pub n_points: usize,
}

/// Per-keyword classifier outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparatorFit {
    pub beta: Option<f64>,
    pub alpha_free: Option<f64>,
    pub alpha_sep: f64,
    pub n_points: usize,
    /// Pairs dropped because a log was not finite.
    pub excluded: usize,
    pub n_endo: usize,
    pub n_exo: usize,
}

impl SeparatorFit {
    /// β outside `(0, 1]` is reported, never clipped.
    pub fn beta_anomalous(&self) -> bool {
        self.beta.is_some_and(|b| !(b > 0.0 && b <= 1.0))
    }
}

fn log_points(pairs: &[EpisodePair]) -> (Vec<f64>, Vec<f64>) {
    pairs
        .iter()
        .filter_map(|p| {
            let lx = p.scaled_size.ln();
            let ly = p.peak_ratio.ln();
            (lx.is_finite() && ly.is_finite()).then_some((lx, ly))
        })
        .unzip()
}

/// OLS of `ln(peak_ratio)` on `ln(scaled_size)`.
pub fn fit_beta(pairs: &[EpisodePair]) -> Result<PowerFit> {
    let (xs, ys) = log_points(pairs);
    let fit = stats::ols(&xs, &ys).ok_or_else(|| {
        Error::FitDegenerate(format!(
            "free-slope fit needs two distinct scaled sizes, got {} usable points",
            xs.len()
        ))
    })?;
    Ok(PowerFit {
        alpha: fit.intercept.exp(),
        beta: 0.0 - fit.slope,
        n_points: xs.len(),
    })
}

/// Least-squares prefactor of the slope −1 line: the geometric mean of
/// `peak_ratio·scaled_size`, computed in log space.
pub fn fit_separator(pairs: &[EpisodePair]) -> Result<f64> {
    let (xs, ys) = log_points(pairs);
    if xs.is_empty() {
        return Err(Error::FitDegenerate("separator needs at least one usable pair".into()));
    }
    let sum: f64 = xs.iter().zip(&ys).map(|(lx, ly)| ly + lx).sum();
    Ok((sum / xs.len() as f64).exp())
}

/// Endogenous strictly below the separator, exogenous otherwise.
pub fn label_for(peak_ratio: f64, scaled_size: f64, alpha_sep: f64) -> Origin {
    if peak_ratio < alpha_sep / scaled_size {
        Origin::Endogenous
    } else {
        Origin::Exogenous
    }
}

pub fn label_pairs(pairs: &mut [EpisodePair], alpha_sep: f64) -> Result<()> {
    if !(alpha_sep > 0.0) {
        return Err(Error::arg(format!("alpha_sep must be positive, got {alpha_sep}")));
    }
    for p in pairs.iter_mut() {
        p.label = label_for(p.peak_ratio, p.scaled_size, alpha_sep);
    }
    Ok(())
}

/// Fits both lines and labels the pairs in place. A failed free-slope fit
/// leaves `beta` empty but still labels.
pub fn classify_keyword(pairs: &mut [EpisodePair]) -> Result<SeparatorFit> {
    let alpha_sep = fit_separator(pairs)?;
    label_pairs(pairs, alpha_sep)?;
    let free = fit_beta(pairs).ok();
    let usable = log_points(pairs).0.len();
    let n_endo = pairs.iter().filter(|p| p.label == Origin::Endogenous).count();
    Ok(SeparatorFit {
        beta: free.map(|f| f.beta),
        alpha_free: free.map(|f| f.alpha),
        alpha_sep,
        n_points: usable,
        excluded: pairs.len() - usable,
        n_endo,
        n_exo: pairs.len() - n_endo,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordBeta {
    pub keyword: String,
    pub total_frequency: f64,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaRow {
    pub keyword: String,
    /// 1 = highest total frequency.
    pub rank: usize,
    pub beta: f64,
}

/// Ranks keywords by descending total frequency (ties by keyword) and lists
/// the fitted β of each. Keywords without a fit keep their rank but are
/// omitted from the table.
pub fn beta_rank_table(keywords: &[KeywordBeta]) -> Vec<BetaRow> {
    let mut order: Vec<&KeywordBeta> = keywords.iter().collect();
    order.sort_by(|a, b| {
        b.total_frequency
            .total_cmp(&a.total_frequency)
            .then_with(|| a.keyword.cmp(&b.keyword))
    });
    order
        .into_iter()
        .enumerate()
        .filter_map(|(i, k)| {
            k.beta.map(|beta| BetaRow {
                keyword: k.keyword.clone(),
                rank: i + 1,
                beta,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{Segment, SegmentKind};

    pub(crate) fn point(scaled_size: f64, peak_ratio: f64) -> EpisodePair {
        let seg = Segment {
            kind: SegmentKind::Baseline,
            start: 0,
            end: 1,
        };
        EpisodePair {
            index: 0,
            baseline: seg,
            burst: Segment {
                kind: SegmentKind::Burst,
                ..seg
            },
            sigma: 0.0,
            e_mean: 1.0,
            size: scaled_size,
            peak: scaled_size * peak_ratio,
            peak_ratio,
            scaled_size,
            fluct: 0.0,
            response: scaled_size * peak_ratio,
            label: Origin::Unlabeled,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn beta_examples() {
        let f = fit_beta(&[point(1.0, 1.0), point(10.0, 0.1)]).unwrap();
        assert!(close(f.beta, 1.0) && close(f.alpha, 1.0));
        let f = fit_beta(&[point(1.0, 1.0), point(100.0, 1.0)]).unwrap();
        assert!(close(f.beta, 0.0) && close(f.alpha, 1.0));
        let f = fit_beta(&[point(1.0, 0.5), point(10.0, 0.05), point(100.0, 0.005)]).unwrap();
        assert!(close(f.beta, 1.0) && close(f.alpha, 0.5));
        assert_eq!(f.n_points, 3);
    }

    #[test]
    fn beta_degenerate() {
        assert!(matches!(fit_beta(&[point(2.0, 0.5)]), Err(Error::FitDegenerate(_))));
        assert!(matches!(
            fit_beta(&[point(2.0, 0.5), point(2.0, 0.1)]),
            Err(Error::FitDegenerate(_))
        ));
    }

    #[test]
    fn separator_examples() {
        assert!(close(fit_separator(&[point(4.0, 0.25)]).unwrap(), 1.0));
        assert!(close(fit_separator(&[point(1.0, 1.0), point(1.0, 0.01)]).unwrap(), 0.1));
        let on_line: Vec<_> = [1.0, 3.0, 20.0].iter().map(|&x| point(x, 2.0 / x)).collect();
        assert!(close(fit_separator(&on_line).unwrap(), 2.0));
        assert!(fit_separator(&[]).is_err());
    }

    #[test]
    fn labelling_rule() {
        assert_eq!(label_for(0.01, 10.0, 1.0), Origin::Endogenous);
        assert_eq!(label_for(0.5, 10.0, 1.0), Origin::Exogenous);
        assert_eq!(label_for(0.25, 4.0, 1.0), Origin::Exogenous);
        let mut pairs = vec![point(10.0, 0.01)];
        assert!(label_pairs(&mut pairs, 0.0).is_err());
    }

    #[test]
    fn classify_counts() {
        let mut pairs = vec![point(10.0, 0.01), point(10.0, 0.5), point(2.0, 1.0)];
        let fit = classify_keyword(&mut pairs).unwrap();
        assert_eq!(fit.n_endo + fit.n_exo, 3);
        assert_eq!(fit.n_points, 3);
        assert_eq!(fit.excluded, 0);
        assert!(fit.beta.is_some());
    }

    #[test]
    fn anomaly_flag() {
        let mut fit = SeparatorFit {
            beta: Some(0.5),
            alpha_free: Some(1.0),
            alpha_sep: 1.0,
            n_points: 2,
            excluded: 0,
            n_endo: 1,
            n_exo: 1,
        };
        assert!(!fit.beta_anomalous());
        fit.beta = Some(1.0);
        assert!(!fit.beta_anomalous());
        fit.beta = Some(1.2);
        assert!(fit.beta_anomalous());
        fit.beta = Some(-0.1);
        assert!(fit.beta_anomalous());
    }

    #[test]
    fn rank_table() {
        let kws = vec![
            KeywordBeta {
                keyword: "earthquake".into(),
                total_frequency: 10.0,
                beta: Some(0.12),
            },
            KeywordBeta {
                keyword: "practice".into(),
                total_frequency: 30.0,
                beta: Some(0.85),
            },
            KeywordBeta {
                keyword: "school".into(),
                total_frequency: 20.0,
                beta: Some(0.56),
            },
        ];
        let table = beta_rank_table(&kws);
        let got: Vec<_> = table.iter().map(|r| (r.keyword.as_str(), r.rank, r.beta)).collect();
        assert_eq!(
            got,
            vec![("practice", 1, 0.85), ("school", 2, 0.56), ("earthquake", 3, 0.12)]
        );
        assert_eq!(beta_rank_table(&kws[..1]).len(), 1);
    }
}
