//! Per-episode statistics: baseline fluctuation and mean, burst size and peak.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detect::{Segment, SegmentKind};
use crate::ingest::FrequencySeries;
use crate::stats;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Endogenous,
    Exogenous,
    Unlabeled,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Endogenous => "endogenous",
            Origin::Exogenous => "exogenous",
            Origin::Unlabeled => "unlabeled",
        })
    }
}

impl std::str::FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "endogenous" => Ok(Origin::Endogenous),
            "exogenous" => Ok(Origin::Exogenous),
            "unlabeled" => Ok(Origin::Unlabeled),
            other => Err(Error::arg(format!("unknown label {other:?}"))),
        }
    }
}

/// One baseline period and the burst that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePair {
    pub index: usize,
    pub baseline: Segment,
    pub burst: Segment,
    pub sigma: f64,
    pub e_mean: f64,
    pub size: f64,
    pub peak: f64,
    pub peak_ratio: f64,
    pub scaled_size: f64,
    pub fluct: f64,
    pub response: f64,
    pub label: Origin,
}

/// Population standard deviation and mean of the baseline values.
pub fn baseline_stats(series: &FrequencySeries, segment: &Segment) -> Result<(f64, f64)> {
    check_segment(series, segment, SegmentKind::Baseline)?;
    let values = &series.values[segment.range()];
    Ok((stats::population_sd(values), stats::mean(values)))
}

/// Sum and maximum of the burst values.
pub fn burst_stats(series: &FrequencySeries, segment: &Segment) -> Result<(f64, f64)> {
    check_segment(series, segment, SegmentKind::Burst)?;
    let values = &series.values[segment.range()];
    let size = values.iter().sum();
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((size, peak))
}

fn check_segment(series: &FrequencySeries, segment: &Segment, kind: SegmentKind) -> Result<()> {
    if segment.kind != kind {
        return Err(Error::arg(format!("expected a {kind} segment, got {}", segment.kind)));
    }
    if segment.is_empty() || segment.end > series.len() {
        return Err(Error::arg(format!(
            "segment [{}, {}) is empty or exceeds series of {} bins",
            segment.start,
            segment.end,
            series.len()
        )));
    }
    Ok(())
}

/// Episode pairs together with the number dropped for a zero baseline mean
/// or zero burst size.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<EpisodePair>,
    pub excluded: usize,
}

/// Computes features for each `(baseline, burst)` pair. `index` is the
/// ordinal of the pair in `episodes`, so excluded pairs leave gaps.
pub fn build_pairs(series: &FrequencySeries, episodes: &[(Segment, Segment)]) -> Result<PairSet> {
    let mut out = PairSet::default();
    for (index, (baseline, burst)) in episodes.iter().enumerate() {
        let (sigma, e_mean) = baseline_stats(series, baseline)?;
        let (size, peak) = burst_stats(series, burst)?;
        if !(e_mean > 0.0) || !(size > 0.0) {
            out.excluded += 1;
            continue;
        }
        out.pairs.push(EpisodePair {
            index,
            baseline: *baseline,
            burst: *burst,
            sigma,
            e_mean,
            size,
            peak,
            peak_ratio: peak / size,
            scaled_size: size / e_mean,
            fluct: sigma / e_mean,
            response: peak / e_mean,
            label: Origin::Unlabeled,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> FrequencySeries {
        FrequencySeries::new("k", 0, 600, values, false).unwrap()
    }

    fn base(start: usize, end: usize) -> Segment {
        Segment {
            kind: SegmentKind::Baseline,
            start,
            end,
        }
    }

    fn burst(start: usize, end: usize) -> Segment {
        Segment {
            kind: SegmentKind::Burst,
            start,
            end,
        }
    }

    #[test]
    fn baseline_examples() {
        let s = series(vec![2.0, 2.0, 2.0]);
        assert_eq!(baseline_stats(&s, &base(0, 3)).unwrap(), (0.0, 2.0));

        let s = series(vec![1.0, 2.0, 3.0]);
        let (sd, m) = baseline_stats(&s, &base(0, 3)).unwrap();
        assert_eq!(m, 2.0);
        assert!((sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let s = series(vec![0.0, 4.0]);
        assert_eq!(baseline_stats(&s, &base(0, 2)).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn burst_examples() {
        let s = series(vec![7.0]);
        assert_eq!(burst_stats(&s, &burst(0, 1)).unwrap(), (7.0, 7.0));
        let s = series(vec![1.0, 3.0, 1.0]);
        assert_eq!(burst_stats(&s, &burst(0, 3)).unwrap(), (5.0, 3.0));
        let s = series(vec![2.0; 4]);
        let (size, peak) = burst_stats(&s, &burst(0, 4)).unwrap();
        assert_eq!((size, peak, peak / size), (8.0, 2.0, 0.25));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let s = series(vec![1.0, 2.0]);
        assert!(baseline_stats(&s, &burst(0, 2)).is_err());
        assert!(burst_stats(&s, &base(0, 2)).is_err());
        assert!(burst_stats(&s, &burst(1, 3)).is_err());
    }

    #[test]
    fn pair_ratios() {
        let s = series(vec![2.0, 2.0, 8.0]);
        let set = build_pairs(&s, &[(base(0, 2), burst(2, 3))]).unwrap();
        assert_eq!(set.excluded, 0);
        let p = &set.pairs[0];
        assert_eq!(p.fluct, 0.0);
        assert_eq!(p.scaled_size, 4.0);
        assert_eq!(p.peak_ratio, 1.0);
        assert_eq!(p.response, 4.0);
        assert_eq!(p.label, Origin::Unlabeled);
    }

    #[test]
    fn empty_and_degenerate_pairs() {
        let s = series(vec![0.0, 0.0, 5.0]);
        assert_eq!(build_pairs(&s, &[]).unwrap(), PairSet::default());
        let set = build_pairs(&s, &[(base(0, 2), burst(2, 3))]).unwrap();
        assert!(set.pairs.is_empty());
        assert_eq!(set.excluded, 1);
    }

    #[test]
    fn origin_round_trips_through_text() {
        for o in [Origin::Endogenous, Origin::Exogenous, Origin::Unlabeled] {
            assert_eq!(o.to_string().parse::<Origin>().unwrap(), o);
        }
    }
}
