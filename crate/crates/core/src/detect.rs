//! Kleinberg-style burst levels over binned counts.
//!
//! State `i` emits Poisson counts at rate `λ̄·sⁱ`, where `λ̄` is the series
//! mean. A bin with count `n` costs `λᵢ − n·ln λᵢ` in state `i` (the
//! state-independent `ln Γ(n+1)` term is dropped, which also makes the model
//! usable on smoothed, non-integer counts). Moving up from `i` to `j > i`
//! costs `γ·(j−i)·ln T` for a series of `T` bins; moving down is free. The
//! level path is the minimum-cost state sequence, found by dynamic
//! programming.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::FrequencySeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Rate ratio between consecutive levels.
    pub s: f64,
    /// Weight of the level-raising cost.
    pub gamma: f64,
    /// Optional cap on the highest level.
    #[serde(default)]
    pub max_level: Option<usize>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            s: 2.0,
            gamma: 1.0,
            max_level: None,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 1.0) || !self.s.is_finite() {
            return Err(Error::arg(format!("s must be > 1, got {}", self.s)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::arg(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Baseline,
    Burst,
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentKind::Baseline => "baseline",
            SegmentKind::Burst => "burst",
        })
    }
}

impl std::str::FromStr for SegmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(SegmentKind::Baseline),
            "burst" => Ok(SegmentKind::Burst),
            other => Err(Error::arg(format!("unknown segment kind {other:?}"))),
        }
    }
}

/// Half-open run of bins `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstAnnotation {
    pub levels: Vec<usize>,
    /// `λ̄` in counts per bin.
    pub base_rate: f64,
    /// Highest level the automaton was allowed to use.
    pub top_level: usize,
    /// Cost of the returned level path.
    pub cost: f64,
    pub segments: Vec<Segment>,
}

impl BurstAnnotation {
    pub fn bursts(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.kind == SegmentKind::Burst)
    }
}

/// Mean count per bin over the whole series.
pub fn mean_rate(series: &FrequencySeries) -> Result<f64> {
    mean_rate_of(&series.values)
}

pub(crate) fn mean_rate_of(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::arg("series must have at least one bin"));
    }
    let rate = values.iter().sum::<f64>() / values.len() as f64;
    if rate > 0.0 {
        Ok(rate)
    } else {
        Err(Error::DegenerateSeries)
    }
}

/// Emission and transition costs of the automaton for one series.
#[derive(Debug, Clone)]
pub struct CostModel {
    rates: Vec<f64>,
    log_rates: Vec<f64>,
    raise_cost: f64,
}

impl CostModel {
    /// Cost model over levels `0..=top_level` for a series of `n_bins` bins.
    pub fn new(base_rate: f64, params: &DetectorParams, n_bins: usize, top_level: usize) -> Self {
        let rates: Vec<f64> = (0..=top_level).map(|i| base_rate * params.s.powi(i as i32)).collect();
        let log_rates = rates.iter().map(|r| r.ln()).collect();
        CostModel {
            rates,
            log_rates,
            raise_cost: params.gamma * (n_bins as f64).ln(),
        }
    }

    /// Highest level used for `values`: one above the smallest level whose
    /// rate reaches the series maximum, capped by `params.max_level`.
    pub fn top_level_for(values: &[f64], base_rate: f64, params: &DetectorParams) -> usize {
        let peak = values.iter().copied().fold(0.0, f64::max);
        let mut level = 0usize;
        let mut rate = base_rate;
        while rate < peak {
            level += 1;
            rate = base_rate * params.s.powi(level as i32);
        }
        let top = level + 1;
        params.max_level.map_or(top, |cap| top.min(cap))
    }

    pub fn top_level(&self) -> usize {
        self.rates.len() - 1
    }

    pub fn emission(&self, level: usize, count: f64) -> f64 {
        self.rates[level] - count * self.log_rates[level]
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        if to > from {
            self.raise_cost * (to - from) as f64
        } else {
            0.0
        }
    }

    /// Total cost of `path` over `values`, accumulated bin by bin in the
    /// same order the dynamic program uses.
    pub fn path_cost(&self, values: &[f64], path: &[usize]) -> f64 {
        assert_eq!(values.len(), path.len());
        let mut cost = 0.0;
        for (t, (&n, &level)) in values.iter().zip(path).enumerate() {
            if t == 0 {
                cost = self.emission(level, n);
            } else {
                cost += self.transition(path[t - 1], level);
                cost += self.emission(level, n);
            }
        }
        cost
    }
}

/// Minimum-cost level path and its cost. Ties prefer the lower level.
pub(crate) fn viterbi(model: &CostModel, values: &[f64]) -> (Vec<usize>, f64) {
    let n_states = model.top_level() + 1;
    let n = values.len();
    let mut back = vec![0usize; n * n_states];
    let mut prev: Vec<f64> = (0..n_states).map(|j| model.emission(j, values[0])).collect();
    let mut cur = vec![0.0; n_states];
    for t in 1..n {
        for j in 0..n_states {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (i, &p) in prev.iter().enumerate() {
                let c = p + model.transition(i, j);
                if c < best {
                    best = c;
                    arg = i;
                }
            }
            cur[j] = best + model.emission(j, values[t]);
            back[t * n_states + j] = arg;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (mut state, mut cost) = (0, f64::INFINITY);
    for (j, &c) in prev.iter().enumerate() {
        if c < cost {
            cost = c;
            state = j;
        }
    }
    let mut path = vec![0; n];
    for t in (0..n).rev() {
        path[t] = state;
        state = back[t * n_states + state];
    }
    (path, cost)
}

/// Run-length encodes levels into alternating baseline (level 0) and burst
/// (level > 0) segments.
pub fn segment_levels(levels: &[usize]) -> Vec<Segment> {
    let kind_of = |l: usize| {
        if l > 0 {
            SegmentKind::Burst
        } else {
            SegmentKind::Baseline
        }
    };
    let mut segments: Vec<Segment> = Vec::new();
    for (t, &l) in levels.iter().enumerate() {
        let kind = kind_of(l);
        match segments.last_mut() {
            Some(seg) if seg.kind == kind => seg.end = t + 1,
            _ => segments.push(Segment {
                kind,
                start: t,
                end: t + 1,
            }),
        }
    }
    segments
}

pub fn detect(series: &FrequencySeries, params: &DetectorParams) -> Result<BurstAnnotation> {
    detect_values(&series.values, params)
}

pub fn detect_values(values: &[f64], params: &DetectorParams) -> Result<BurstAnnotation> {
    params.validate()?;
    let base_rate = mean_rate_of(values)?;
    let top_level = CostModel::top_level_for(values, base_rate, params);
    let model = CostModel::new(base_rate, params, values.len(), top_level);
    let (levels, cost) = viterbi(&model, values);
    let segments = segment_levels(&levels);
    Ok(BurstAnnotation {
        levels,
        base_rate,
        top_level,
        cost,
        segments,
    })
}

/// Each baseline segment followed directly by a burst segment. A leading
/// burst and a trailing baseline are left unpaired.
pub fn pair_episodes(annotation: &BurstAnnotation) -> Vec<(Segment, Segment)> {
    pair_segments(&annotation.segments)
}

pub fn pair_segments(segments: &[Segment]) -> Vec<(Segment, Segment)> {
    segments
        .windows(2)
        .filter(|w| w[0].kind == SegmentKind::Baseline && w[1].kind == SegmentKind::Burst)
        .map(|w| (w[0], w[1]))
        .collect()
}
