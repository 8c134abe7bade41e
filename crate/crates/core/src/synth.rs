//! Seeded synthetic keyword series with labelled ground-truth bursts.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`),
//! one stream per keyword seeded from the keyword spec, so a corpus can be
//! regenerated piecewise and in any order.
//!
//! A baseline bin `t` is a Poisson draw with mean `baseline_mean·g(t)`, where
//! `g(t) = 1 + a·sin(2π(t − start)/period)` inside a noise band and 1
//! elsewhere. Bursts are deterministic shapes added on top:
//!
//! * `PulseExo`: a spike of `height` at `start` decaying as `exp(−k/decay)`
//!   over `width` bins;
//! * `BumpEndo`: a symmetric triangle peaking at `height` across `width`
//!   bins.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::detect::Segment;
use crate::features::{EpisodePair, Origin};
use crate::ingest::FrequencySeries;
use crate::{Error, Result};

pub const SYNTH_BIN_WIDTH: u64 = 3600;
pub const MAX_PULSE_DECAY: f64 = 2.0;
pub const MIN_BUMP_WIDTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BurstKind {
    PulseExo,
    BumpEndo,
}

impl fmt::Display for BurstKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BurstKind::PulseExo => "pulse_exo",
            BurstKind::BumpEndo => "bump_endo",
        })
    }
}

impl std::str::FromStr for BurstKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pulse_exo" => Ok(BurstKind::PulseExo),
            "bump_endo" => Ok(BurstKind::BumpEndo),
            other => Err(Error::arg(format!("unknown burst kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    pub kind: BurstKind,
    pub start: usize,
    pub width: usize,
    /// Peak counts above the baseline.
    pub height: f64,
    /// Decay time constant in bins, pulses only.
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    1.0
}

impl BurstSpec {
    pub fn end(&self) -> usize {
        self.start + self.width
    }

    /// Burst profile over its `width` bins.
    pub fn shape(&self) -> Vec<f64> {
        match self.kind {
            BurstKind::PulseExo => (0..self.width)
                .map(|k| self.height * (-(k as f64) / self.decay).exp())
                .collect(),
            BurstKind::BumpEndo => {
                let center = (self.width as f64 - 1.0) / 2.0;
                let half = (self.width as f64 + 1.0) / 2.0;
                (0..self.width)
                    .map(|k| self.height * (1.0 - (k as f64 - center).abs() / half))
                    .collect()
            }
        }
    }
}

/// Sinusoidal modulation of the baseline rate over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBand {
    pub start: usize,
    pub end: usize,
    /// Relative amplitude in `[0, 1)`.
    pub amplitude: f64,
    /// Period in bins.
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub keyword: String,
    pub n_bins: usize,
    #[serde(default = "default_bin_width")]
    pub bin_width: u64,
    pub baseline_mean: f64,
    #[serde(default)]
    pub baseline_noise_scale: Vec<NoiseBand>,
    #[serde(default)]
    pub bursts: Vec<BurstSpec>,
    pub seed: u64,
}

fn default_bin_width() -> u64 {
    SYNTH_BIN_WIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub keyword: String,
    pub kind: BurstKind,
    pub start: usize,
    pub end: usize,
    pub height: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Spec(format!("{}: {msg}", self.keyword)));
        if self.keyword.is_empty() {
            return Err(Error::Spec("keyword must be non-empty".into()));
        }
        if self.n_bins == 0 {
            return fail("n_bins must be positive".into());
        }
        if self.bin_width == 0 {
            return fail("bin_width must be positive".into());
        }
        if !(self.baseline_mean > 0.0) || !self.baseline_mean.is_finite() {
            return fail(format!("baseline_mean must be positive, got {}", self.baseline_mean));
        }
        for band in &self.baseline_noise_scale {
            if band.start >= band.end || band.end > self.n_bins {
                return fail(format!("noise band [{}, {}) out of range", band.start, band.end));
            }
            if !(0.0..1.0).contains(&band.amplitude) || !(band.period > 0.0) {
                return fail("noise band needs amplitude in [0,1) and positive period".into());
            }
        }
        let mut intervals: Vec<(usize, usize)> = Vec::with_capacity(self.bursts.len());
        for b in &self.bursts {
            if b.width == 0 || !(b.height > 0.0) || !b.height.is_finite() {
                return fail(format!("burst at {} needs positive width and height", b.start));
            }
            if b.end() > self.n_bins {
                return fail(format!("burst [{}, {}) exceeds {} bins", b.start, b.end(), self.n_bins));
            }
            match b.kind {
                BurstKind::PulseExo if !(b.decay > 0.0 && b.decay <= MAX_PULSE_DECAY) => {
                    return fail(format!("pulse decay must be in (0, {MAX_PULSE_DECAY}]"));
                }
                BurstKind::BumpEndo if b.width < MIN_BUMP_WIDTH => {
                    return fail(format!("bump width must be at least {MIN_BUMP_WIDTH}"));
                }
                _ => {}
            }
            intervals.push((b.start, b.end()));
        }
        intervals.sort_unstable();
        if let Some(w) = intervals.windows(2).find(|w| w[1].0 < w[0].1) {
            return fail(format!(
                "bursts [{}, {}) and [{}, {}) overlap",
                w[0].0, w[0].1, w[1].0, w[1].1
            ));
        }
        Ok(())
    }

    fn rate_scale(&self, t: usize) -> f64 {
        self.baseline_noise_scale
            .iter()
            .filter(|b| (b.start..b.end).contains(&t))
            .fold(1.0, |acc, b| {
                acc * (1.0 + b.amplitude * (2.0 * PI * (t - b.start) as f64 / b.period).sin())
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub series: FrequencySeries,
    pub truth: Vec<TruthInterval>,
}

/// Draws one keyword series. Identical specs give bit-identical output.
pub fn generate(spec: &SynthSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(spec.n_bins);
    for t in 0..spec.n_bins {
        let rate = spec.baseline_mean * spec.rate_scale(t);
        let draw = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| Error::Spec(format!("{}: {e}", spec.keyword)))?
                .sample(&mut rng)
        } else {
            0.0
        };
        values.push(draw);
    }
    let mut truth = Vec::with_capacity(spec.bursts.len());
    for b in &spec.bursts {
        for (v, add) in values[b.start..b.end()].iter_mut().zip(b.shape()) {
            *v += add;
        }
        truth.push(TruthInterval {
            keyword: spec.keyword.clone(),
            kind: b.kind,
            start: b.start,
            end: b.end(),
            height: b.height,
        });
    }
    truth.sort_by_key(|t| t.start);
    Ok(Generated {
        series: FrequencySeries::new(spec.keyword.clone(), 0, spec.bin_width, values, true)?,
        truth,
    })
}

impl BurstKind {
    /// The label a correct classifier assigns to this kind of burst.
    pub fn origin(self) -> Origin {
        match self {
            BurstKind::PulseExo => Origin::Exogenous,
            BurstKind::BumpEndo => Origin::Endogenous,
        }
    }
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    a.1.min(b.1).saturating_sub(a.0.max(b.0))
}

/// Ground-truth burst overlapping `burst` the most; ties go to the earlier one.
pub fn match_truth<'a>(burst: &Segment, truth: &'a [TruthInterval]) -> Option<&'a TruthInterval> {
    let mut best: Option<(&TruthInterval, usize)> = None;
    for t in truth {
        let o = overlap((burst.start, burst.end), (t.start, t.end));
        if o > 0 && best.is_none_or(|(_, b)| o > b) {
            best = Some((t, o));
        }
    }
    best.map(|(t, _)| t)
}

/// Label agreement of classified pairs with the truth. Bursts that overlap
/// no injected burst are counted as noise and left out of the accuracy.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct LabelScore {
    pub correct: usize,
    pub matched: usize,
    pub noise: usize,
}

impl LabelScore {
    pub fn accuracy(&self) -> Option<f64> {
        (self.matched > 0).then(|| self.correct as f64 / self.matched as f64)
    }

    pub fn add(&mut self, other: LabelScore) {
        self.correct += other.correct;
        self.matched += other.matched;
        self.noise += other.noise;
    }
}

pub fn score_labels(pairs: &[EpisodePair], truth: &[TruthInterval]) -> LabelScore {
    let mut score = LabelScore::default();
    for p in pairs {
        match match_truth(&p.burst, truth) {
            Some(t) => {
                score.matched += 1;
                score.correct += usize::from(p.label == t.kind.origin());
            }
            None => score.noise += 1,
        }
    }
    score
}

/// Number of `truth` intervals overlapped by at least one detected burst.
pub fn recovered_bursts(bursts: &[Segment], truth: &[TruthInterval]) -> usize {
    truth
        .iter()
        .filter(|t| bursts.iter().any(|b| overlap((b.start, b.end), (t.start, t.end)) > 0))
        .count()
}

/// Layout of the mixed reference corpus built by [`mixed_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPlan {
    pub n_keywords: usize,
    pub bursts_per_keyword: usize,
    /// Baseline mean of the highest-volume keyword; later keywords decay
    /// geometrically towards `min_baseline_mean`.
    pub max_baseline_mean: f64,
    pub min_baseline_mean: f64,
    /// Fraction of endogenous bumps for the highest-volume keyword; falls
    /// linearly to `min_endo_fraction` for the last.
    pub max_endo_fraction: f64,
    pub min_endo_fraction: f64,
    pub gap: (usize, usize),
    /// Bump width range in bins.
    pub bump_width: (usize, usize),
    /// Tail index of the truncated Pareto law bump widths are drawn from.
    pub bump_width_tail: f64,
    /// Bump height as a multiple of the baseline mean.
    pub bump_height: (f64, f64),
    /// Pulse height as a multiple of the baseline mean, log-uniform.
    pub pulse_height: (f64, f64),
    pub pulse_decay: (f64, f64),
    /// Amplitude of the oscillation laid under the gap before each pulse.
    pub exo_noise_amplitude: f64,
    pub noise_period: f64,
    pub seed: u64,
}

impl Default for CorpusPlan {
    fn default() -> Self {
        CorpusPlan {
            n_keywords: 100,
            bursts_per_keyword: 64,
            max_baseline_mean: 40.0,
            min_baseline_mean: 10.0,
            max_endo_fraction: 0.8,
            min_endo_fraction: 0.6,
            gap: (80, 140),
            bump_width: (10, 400),
            bump_width_tail: 0.8,
            bump_height: (1.5, 6.0),
            pulse_height: (25.0, 70.0),
            pulse_decay: (1.0, 2.0),
            exo_noise_amplitude: 0.6,
            noise_period: 24.0,
            seed: 0,
        }
    }
}

/// Child seed for keyword `index` of a corpus; SplitMix64 finaliser.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Inverse-CDF draw from a Pareto law with tail index `a` truncated to `[lo, hi]`.
fn truncated_pareto<R: Rng>(rng: &mut R, lo: f64, hi: f64, a: f64) -> f64 {
    let u: f64 = rng.random();
    lo * (1.0 - u * (1.0 - (lo / hi).powf(a))).powf(-1.0 / a)
}

/// Builds a corpus where each keyword mixes endogenous bumps on quiet
/// baselines with exogenous pulses preceded by oscillating baselines.
/// Keyword `kw000` has the highest volume and the largest endogenous share.
pub fn mixed_corpus(plan: &CorpusPlan) -> Vec<SynthSpec> {
    (0..plan.n_keywords)
        .map(|k| {
            let frac = if plan.n_keywords > 1 {
                k as f64 / (plan.n_keywords - 1) as f64
            } else {
                0.0
            };
            let mean = plan.max_baseline_mean * (plan.min_baseline_mean / plan.max_baseline_mean).powf(frac);
            let endo_fraction = plan.max_endo_fraction + (plan.min_endo_fraction - plan.max_endo_fraction) * frac;
            keyword_spec(
                plan,
                format!("kw{k:03}"),
                mean,
                endo_fraction,
                child_seed(plan.seed, k as u64),
            )
        })
        .collect()
}

/// One keyword with `plan.bursts_per_keyword` bursts of which roughly
/// `endo_fraction` are bumps.
pub fn keyword_spec(plan: &CorpusPlan, keyword: String, mean: f64, endo_fraction: f64, seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C0DE);
    let n_endo = (endo_fraction * plan.bursts_per_keyword as f64).round() as usize;
    let mut kinds: Vec<BurstKind> = (0..plan.bursts_per_keyword)
        .map(|i| {
            if i < n_endo {
                BurstKind::BumpEndo
            } else {
                BurstKind::PulseExo
            }
        })
        .collect();
    // Fisher-Yates on the shared stream
    for i in (1..kinds.len()).rev() {
        let j = rng.random_range(0..=i);
        kinds.swap(i, j);
    }

    let mut bursts = Vec::with_capacity(kinds.len());
    let mut bands = Vec::new();
    let mut t = 0;
    for kind in kinds {
        let gap = rng.random_range(plan.gap.0..=plan.gap.1);
        let burst = match kind {
            BurstKind::BumpEndo => {
                let (lo, hi) = (plan.bump_width.0 as f64, plan.bump_width.1 as f64);
                let width = truncated_pareto(&mut rng, lo, hi, plan.bump_width_tail).round() as usize;
                let height = mean * rng.random_range(plan.bump_height.0..=plan.bump_height.1);
                BurstSpec {
                    kind,
                    start: t + gap,
                    width: width.max(MIN_BUMP_WIDTH),
                    height,
                    decay: default_decay(),
                }
            }
            BurstKind::PulseExo => {
                let decay = rng.random_range(plan.pulse_decay.0..=plan.pulse_decay.1);
                let height = mean * log_uniform(&mut rng, plan.pulse_height.0, plan.pulse_height.1);
                if plan.exo_noise_amplitude > 0.0 {
                    bands.push(NoiseBand {
                        start: t,
                        end: t + gap,
                        amplitude: plan.exo_noise_amplitude,
                        period: plan.noise_period,
                    });
                }
                BurstSpec {
                    kind,
                    start: t + gap,
                    width: (decay * 6.0).ceil() as usize,
                    height,
                    decay,
                }
            }
        };
        t = burst.end();
        bursts.push(burst);
    }
    let tail = rng.random_range(plan.gap.0..=plan.gap.1);
    SynthSpec {
        keyword,
        n_bins: t + tail,
        bin_width: SYNTH_BIN_WIDTH,
        baseline_mean: mean,
        baseline_noise_scale: bands,
        bursts,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n_bins: usize, mean: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            keyword: "k".into(),
            n_bins,
            bin_width: SYNTH_BIN_WIDTH,
            baseline_mean: mean,
            baseline_noise_scale: vec![],
            bursts: vec![],
            seed,
        }
    }

    #[test]
    fn poisson_baseline_moments() {
        let g = generate(&flat(10_000, 5.0, 7)).unwrap();
        let v = &g.series.values;
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        assert!((m - 5.0).abs() < 0.2, "mean {m}");
        assert!((var - 5.0).abs() < 0.5, "variance {var}");
        assert!(g.truth.is_empty());
    }

    #[test]
    fn same_seed_same_series() {
        let mut spec = flat(500, 3.0, 42);
        spec.bursts.push(BurstSpec {
            kind: BurstKind::BumpEndo,
            start: 100,
            width: 20,
            height: 9.0,
            decay: 1.0,
        });
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        let bits = |g: &Generated| g.series.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        spec.seed = 43;
        assert_ne!(bits(&a), bits(&generate(&spec).unwrap()));
    }

    #[test]
    fn shapes() {
        let bump = BurstSpec {
            kind: BurstKind::BumpEndo,
            start: 0,
            width: 11,
            height: 6.0,
            decay: 1.0,
        };
        let s = bump.shape();
        assert_eq!(s[5], 6.0);
        for d in 1..=5 {
            assert!((s[5 - d] - s[5 + d]).abs() < 1e-12);
            assert!(s[5 + d] < s[5 + d - 1]);
        }
        assert!(s[0] > 0.0);

        let pulse = BurstSpec {
            kind: BurstKind::PulseExo,
            start: 0,
            width: 3,
            height: 100.0,
            decay: 1.0,
        };
        let s = pulse.shape();
        assert_eq!(s[0], 100.0);
        assert!((s[1] - 100.0 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rejects_overlap_and_bad_shapes() {
        let mut spec = flat(200, 3.0, 1);
        let bump = BurstSpec {
            kind: BurstKind::BumpEndo,
            start: 10,
            width: 20,
            height: 5.0,
            decay: 1.0,
        };
        spec.bursts = vec![bump, BurstSpec { start: 25, ..bump }];
        assert!(matches!(generate(&spec), Err(Error::Spec(_))));

        spec.bursts = vec![BurstSpec { width: 5, ..bump }];
        assert!(generate(&spec).is_err());

        spec.bursts = vec![BurstSpec {
            kind: BurstKind::PulseExo,
            decay: 3.0,
            ..bump
        }];
        assert!(generate(&spec).is_err());

        spec.bursts = vec![BurstSpec { start: 190, ..bump }];
        assert!(generate(&spec).is_err());

        let mut spec = flat(0, 3.0, 1);
        assert!(generate(&spec).is_err());
        spec.n_bins = 5;
        spec.baseline_mean = 0.0;
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn corpus_is_valid_and_ordered() {
        let plan = CorpusPlan {
            n_keywords: 5,
            ..CorpusPlan::default()
        };
        let corpus = mixed_corpus(&plan);
        assert_eq!(corpus.len(), 5);
        for spec in &corpus {
            spec.validate().unwrap();
            assert_eq!(spec.bursts.len(), plan.bursts_per_keyword);
        }
        assert!(corpus[0].baseline_mean > corpus[4].baseline_mean);
        assert_eq!(mixed_corpus(&plan), corpus);
    }

    #[test]
    fn child_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| child_seed(9, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
