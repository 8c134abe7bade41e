//! Event parsing, unique-user binning and Gaussian smoothing.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::Deserialize;

use crate::{Error, Result};

pub const DEFAULT_BIN_WIDTH: u64 = 600;
pub const DEFAULT_SMOOTH_SIGMA: f64 = 1800.0;

/// One `(user, keyword)` occurrence at a whole-second timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub timestamp: u64,
    pub user_id: String,
    pub keyword: String,
}

impl EventRecord {
    pub fn new(timestamp: u64, user_id: impl Into<String>, keyword: impl Into<String>) -> Result<Self> {
        let user_id = user_id.into();
        let keyword = keyword.into();
        if user_id.is_empty() || keyword.is_empty() {
            return Err(Error::arg("user and keyword must be non-empty"));
        }
        Ok(EventRecord {
            timestamp,
            user_id,
            keyword,
        })
    }
}

/// A fixed-width binned count sequence for one keyword.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySeries {
    pub keyword: String,
    pub start_time: u64,
    pub bin_width: u64,
    pub values: Vec<f64>,
    /// `true` before smoothing.
    pub raw: bool,
}

impl FrequencySeries {
    pub fn new(
        keyword: impl Into<String>,
        start_time: u64,
        bin_width: u64,
        values: Vec<f64>,
        raw: bool,
    ) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::arg("bin width must be positive"));
        }
        if values.is_empty() {
            return Err(Error::arg("series must have at least one bin"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg("series values must be finite and non-negative"));
        }
        Ok(FrequencySeries {
            keyword: keyword.into(),
            start_time,
            bin_width,
            values,
            raw,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Start time of bin `index` in seconds.
    pub fn bin_time(&self, index: usize) -> u64 {
        self.start_time + index as u64 * self.bin_width
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Output of [`parse_events`]: the well-formed records plus a count of
/// skipped lines.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ParsedEvents {
    pub records: Vec<EventRecord>,
    pub malformed: usize,
}

#[derive(Deserialize)]
struct RawEvent {
    ts: serde_json::Number,
    user: String,
    kw: String,
}

fn decode_line(line: &str) -> Option<EventRecord> {
    let raw: RawEvent = serde_json::from_str(line).ok()?;
    let timestamp = match raw.ts.as_u64() {
        Some(ts) => ts,
        None => {
            // fractional seconds are truncated
            let ts = raw.ts.as_f64()?;
            if !(ts >= 0.0) || !ts.is_finite() {
                return None;
            }
            ts.floor() as u64
        }
    };
    EventRecord::new(timestamp, raw.user, raw.kw).ok()
}

/// Parses line-delimited `{"ts":..,"user":..,"kw":..}` records. Blank lines
/// are ignored; any other undecodable line is skipped and counted.
pub fn parse_events<R: BufRead>(reader: R) -> Result<ParsedEvents> {
    let mut out = ParsedEvents::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match decode_line(trimmed) {
            Some(rec) => out.records.push(rec),
            None => {
                log::warn!("skipping malformed event on line {}", lineno + 1);
                out.malformed += 1;
            }
        }
    }
    Ok(out)
}

/// Half-open window of `n_bins` bins starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: u64,
    pub n_bins: usize,
}

impl Span {
    /// Smallest bin-aligned span covering every event timestamp. Bins are
    /// aligned to multiples of `bin_width` since the epoch.
    pub fn covering(events: &[EventRecord], bin_width: u64) -> Option<Span> {
        let min = events.iter().map(|e| e.timestamp).min()?;
        let max = events.iter().map(|e| e.timestamp).max()?;
        let start = min - min % bin_width;
        let n_bins = ((max - start) / bin_width + 1) as usize;
        Some(Span { start, n_bins })
    }
}

/// Binned series plus the number of events that fell outside the span.
#[derive(Debug, Clone, PartialEq)]
pub struct Binned {
    pub series: FrequencySeries,
    pub out_of_span: usize,
}

/// Counts distinct users per bin for one keyword.
pub fn bin_unique_users(events: &[EventRecord], keyword: &str, bin_width: u64, span: Span) -> Result<Binned> {
    if bin_width == 0 {
        return Err(Error::arg("bin width must be positive"));
    }
    if span.n_bins == 0 {
        return Err(Error::arg("span must contain at least one bin"));
    }
    let mut seen: HashSet<(usize, &str)> = HashSet::new();
    let mut values = vec![0.0; span.n_bins];
    let mut out_of_span = 0;
    for ev in events.iter().filter(|e| e.keyword == keyword) {
        let bin = ev
            .timestamp
            .checked_sub(span.start)
            .map(|off| off / bin_width)
            .filter(|b| *b < span.n_bins as u64);
        let Some(bin) = bin else {
            out_of_span += 1;
            continue;
        };
        let bin = bin as usize;
        if seen.insert((bin, ev.user_id.as_str())) {
            values[bin] += 1.0;
        }
    }
    if out_of_span > 0 {
        log::warn!("{keyword}: {out_of_span} events outside the binning span");
    }
    Ok(Binned {
        series: FrequencySeries::new(keyword, span.start, bin_width, values, true)?,
        out_of_span,
    })
}

/// Keywords ordered by descending total event count, ties by keyword.
pub fn keywords_by_volume(events: &[EventRecord]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for ev in events {
        *counts.entry(ev.keyword.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(k, c)| (k.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Gaussian kernel weights for offsets `-radius..=radius`, unnormalised.
pub fn gaussian_kernel(sigma_bins: f64) -> Vec<f64> {
    let radius = (4.0 * sigma_bins).ceil() as usize;
    let denom = 2.0 * sigma_bins * sigma_bins;
    (0..=2 * radius)
        .map(|i| {
            let k = i as f64 - radius as f64;
            (-(k * k) / denom).exp()
        })
        .collect()
}

/// Convolves the series with a Gaussian of standard deviation `sigma`
/// seconds, truncated at ±4σ. The kernel is renormalised over the bins that
/// exist, so edges are not padded.
pub fn gaussian_smooth(series: &FrequencySeries, sigma: f64) -> Result<FrequencySeries> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!("smoothing sigma must be positive, got {sigma}")));
    }
    let sigma_bins = sigma / series.bin_width as f64;
    let kernel = gaussian_kernel(sigma_bins);
    let radius = (kernel.len() / 2) as isize;
    let n = series.values.len() as isize;
    let values = (0..n)
        .map(|t| {
            let lo = (t - radius).max(0);
            let hi = (t + radius).min(n - 1);
            let (mut acc, mut norm) = (0.0, 0.0);
            for j in lo..=hi {
                let w = kernel[(j - t + radius) as usize];
                acc += w * series.values[j as usize];
                norm += w;
            }
            acc / norm
        })
        .collect();
    Ok(FrequencySeries {
        keyword: series.keyword.clone(),
        start_time: series.start_time,
        bin_width: series.bin_width,
        values,
        raw: false,
    })
}
