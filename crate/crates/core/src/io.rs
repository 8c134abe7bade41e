//! Flat-file formats shared by the pipeline stages.
//!
//! Floats are written with nine significant digits in `%g` style so that
//! reruns are byte-identical. Every file is written to a temporary sibling
//! and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::detect::{Segment, SegmentKind};
use crate::features::{EpisodePair, Origin};
use crate::ingest::FrequencySeries;
use crate::{Error, Result};

/// `%.9g`-style formatting; `inf`, `-inf` and `nan` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    } else {
        format!("{}e{}", trim_fraction(mantissa), exp)
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn parse_f64(field: &str) -> Result<f64> {
    match field {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => field
            .parse()
            .map_err(|_| Error::arg(format!("not a number: {field:?}"))),
    }
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::file(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::file(path, e))?;
    tmp.persist(path).map_err(|e| Error::file(path, e.error))?;
    Ok(())
}

/// In-memory CSV table flushed atomically.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Table { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        write_atomic(path, &self.into_bytes()?)
    }
}

/// Reads a headed CSV, checking the header matches `expected`.
pub fn read_table(path: &Path, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("expected header {}", expected.join(",")),
        });
    }
    reader.records().map(|r| r.map_err(Error::from)).collect()
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn field<'a>(path: &Path, rec: &'a csv::StringRecord, i: usize) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| malformed(path, format!("missing column {i}")))
}

fn num(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<f64> {
    parse_f64(field(path, rec, i)?).map_err(|e| malformed(path, e.to_string()))
}

fn int(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<u64> {
    field(path, rec, i)?
        .parse()
        .map_err(|_| malformed(path, format!("column {i} is not an integer")))
}

/// Filesystem-safe encoding of a keyword: bytes outside `[A-Za-z0-9_.-]`
/// and non-ASCII letters become `%XX`.
pub fn encode_keyword(keyword: &str) -> String {
    let mut out = String::with_capacity(keyword.len());
    for ch in keyword.chars() {
        if ch.is_alphanumeric() || matches!(ch, '_' | '-') || (ch == '.' && !out.is_empty()) {
            out.push(ch);
        } else {
            let mut buf = [0u8; 4];
            for b in ch.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        }
    }
    out
}

pub fn decode_keyword(encoded: &str) -> String {
    let bytes = encoded.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
            if let Some(b) = hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

pub const SERIES_HEADER: [&str; 3] = ["bin_index", "time", "value"];

pub fn write_series(path: &Path, series: &FrequencySeries) -> Result<()> {
    let mut t = Table::new(&SERIES_HEADER)?;
    for (i, v) in series.values.iter().enumerate() {
        t.row([i.to_string(), series.bin_time(i).to_string(), fmt_f64(*v)])?;
    }
    t.write_to(path)
}

/// Reads a series CSV. The bin width is the spacing of the first two rows,
/// or `default_bin_width` for a one-bin series.
pub fn read_series(path: &Path, keyword: &str, default_bin_width: u64, raw: bool) -> Result<FrequencySeries> {
    let rows = read_table(path, &SERIES_HEADER)?;
    if rows.is_empty() {
        return Err(malformed(path, "series has no rows"));
    }
    let mut values = Vec::with_capacity(rows.len());
    let mut times = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        if int(path, rec, 0)? != i as u64 {
            return Err(malformed(path, format!("row {i} has bin_index out of sequence")));
        }
        times.push(int(path, rec, 1)?);
        values.push(num(path, rec, 2)?);
    }
    let bin_width = match times.get(1) {
        Some(t1) if *t1 > times[0] => t1 - times[0],
        Some(_) => return Err(malformed(path, "times must increase")),
        None => default_bin_width,
    };
    if times
        .iter()
        .enumerate()
        .any(|(i, t)| *t != times[0] + i as u64 * bin_width)
    {
        return Err(malformed(path, "times are not evenly spaced"));
    }
    FrequencySeries::new(keyword, times[0], bin_width, values, raw).map_err(|e| malformed(path, e.to_string()))
}

pub const LEVELS_HEADER: [&str; 3] = ["bin_index", "value", "level"];
pub const SEGMENTS_HEADER: [&str; 3] = ["kind", "start", "end"];

pub fn write_levels(path: &Path, values: &[f64], levels: &[usize]) -> Result<()> {
    let mut t = Table::new(&LEVELS_HEADER)?;
    for (i, (v, l)) in values.iter().zip(levels).enumerate() {
        t.row([i.to_string(), fmt_f64(*v), l.to_string()])?;
    }
    t.write_to(path)
}

pub fn write_segments(path: &Path, segments: &[Segment]) -> Result<()> {
    let mut t = Table::new(&SEGMENTS_HEADER)?;
    for s in segments {
        t.row([s.kind.to_string(), s.start.to_string(), s.end.to_string()])?;
    }
    t.write_to(path)
}

pub fn read_segments(path: &Path) -> Result<Vec<Segment>> {
    read_table(path, &SEGMENTS_HEADER)?
        .iter()
        .map(|rec| {
            let kind: SegmentKind = field(path, rec, 0)?
                .parse()
                .map_err(|e: Error| malformed(path, e.to_string()))?;
            let start = int(path, rec, 1)? as usize;
            let end = int(path, rec, 2)? as usize;
            if start >= end {
                return Err(malformed(path, format!("empty segment [{start}, {end})")));
            }
            Ok(Segment { kind, start, end })
        })
        .collect()
}

pub const FEATURES_HEADER: [&str; 9] = [
    "i",
    "sigma",
    "e_mean",
    "size",
    "peak",
    "peak_ratio",
    "scaled_size",
    "fluct",
    "response",
];

pub fn write_features(path: &Path, pairs: &[EpisodePair]) -> Result<()> {
    let mut t = Table::new(&FEATURES_HEADER)?;
    for p in pairs {
        t.row([
            p.index.to_string(),
            fmt_f64(p.sigma),
            fmt_f64(p.e_mean),
            fmt_f64(p.size),
            fmt_f64(p.peak),
            fmt_f64(p.peak_ratio),
            fmt_f64(p.scaled_size),
            fmt_f64(p.fluct),
            fmt_f64(p.response),
        ])?;
    }
    t.write_to(path)
}

/// Reads a features CSV. Segment bounds are not part of the format and
/// come back as empty placeholders.
pub fn read_features(path: &Path) -> Result<Vec<EpisodePair>> {
    let placeholder = Segment {
        kind: SegmentKind::Baseline,
        start: 0,
        end: 0,
    };
    read_table(path, &FEATURES_HEADER)?
        .iter()
        .map(|rec| {
            Ok(EpisodePair {
                index: int(path, rec, 0)? as usize,
                baseline: placeholder,
                burst: Segment {
                    kind: SegmentKind::Burst,
                    ..placeholder
                },
                sigma: num(path, rec, 1)?,
                e_mean: num(path, rec, 2)?,
                size: num(path, rec, 3)?,
                peak: num(path, rec, 4)?,
                peak_ratio: num(path, rec, 5)?,
                scaled_size: num(path, rec, 6)?,
                fluct: num(path, rec, 7)?,
                response: num(path, rec, 8)?,
                label: Origin::Unlabeled,
            })
        })
        .collect()
}

pub const LABELS_HEADER: [&str; 4] = ["i", "scaled_size", "peak_ratio", "label"];

pub fn write_labels(path: &Path, pairs: &[EpisodePair]) -> Result<()> {
    let mut t = Table::new(&LABELS_HEADER)?;
    for p in pairs {
        t.row([
            p.index.to_string(),
            fmt_f64(p.scaled_size),
            fmt_f64(p.peak_ratio),
            p.label.to_string(),
        ])?;
    }
    t.write_to(path)
}

/// `(index, label)` rows of a labels CSV.
pub fn read_labels(path: &Path) -> Result<Vec<(usize, Origin)>> {
    read_table(path, &LABELS_HEADER)?
        .iter()
        .map(|rec| {
            let label: Origin = field(path, rec, 3)?
                .parse()
                .map_err(|e: Error| malformed(path, e.to_string()))?;
            Ok((int(path, rec, 0)? as usize, label))
        })
        .collect()
}

/// Copies labels onto features by pair index.
pub fn apply_labels(path: &Path, pairs: &mut [EpisodePair], labels: &[(usize, Origin)]) -> Result<()> {
    if labels.len() != pairs.len() {
        return Err(malformed(path, "labels and features disagree on pair count"));
    }
    for (p, (index, label)) in pairs.iter_mut().zip(labels) {
        if p.index != *index {
            return Err(malformed(
                path,
                format!("label for pair {index} does not match pair {}", p.index),
            ));
        }
        p.label = *label;
    }
    Ok(())
}

/// Series CSVs (`*.csv`) in a directory, sorted by keyword.
pub fn list_series_dir(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::file(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((decode_keyword(stem), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(2.5), "2.5");
        assert_eq!(fmt_f64(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_f64(2.0 / 3.0), "0.666666667");
        assert_eq!(fmt_f64(123456789.0), "123456789");
        assert_eq!(fmt_f64(1234567891.0), "1.23456789e9");
        assert_eq!(fmt_f64(-0.000012345), "-1.2345e-5");
        assert_eq!(fmt_f64(0.00012345), "0.00012345");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(parse_f64("-inf").unwrap(), f64::NEG_INFINITY);
        assert_eq!(parse_f64("1.23456789e9").unwrap(), 1234567890.0);
    }

    #[test]
    fn keyword_encoding() {
        for kw in ["school", "地震", "a/b", "..", "x y,z", "100%"] {
            let enc = encode_keyword(kw);
            assert!(!enc.contains('/') && !enc.starts_with('.'));
            assert_eq!(decode_keyword(&enc), kw);
        }
        assert_eq!(encode_keyword("a/b"), "a%2Fb");
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = FrequencySeries::new("k", 1200, 600, vec![0.5, 1.0, 2.25], false).unwrap();
        write_series(&path, &s).unwrap();
        assert_eq!(read_series(&path, "k", 600, false).unwrap(), s);
    }

    #[test]
    fn missing_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("absent.csv");
        assert!(matches!(read_segments(&path), Err(Error::MissingFile(_))));
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_segments(&path), Err(Error::Malformed { .. })));
    }
}
