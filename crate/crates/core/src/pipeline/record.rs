//! Per-(image, method) result records and their JSON-lines form.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::metrics::SubMetric;

use super::Objective;

/// A metric value that may be infinite (PSNR of identical images).
/// Finite values serialize as JSON numbers, the rest as `"inf"`, `"-inf"`
/// or `"nan"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct Score(pub f64);

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ScoreVisitor;

        impl Visitor<'_> for ScoreVisitor {
            type Value = Score;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Score, E> {
                Ok(Score(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Score, E> {
                Ok(Score(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Score, E> {
                Ok(Score(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Score, E> {
                match v {
                    "inf" => Ok(Score(f64::INFINITY)),
                    "-inf" => Ok(Score(f64::NEG_INFINITY)),
                    "nan" => Ok(Score(f64::NAN)),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }

        d.deserialize_any(ScoreVisitor)
    }
}

impl From<f64> for Score {
    fn from(v: f64) -> Self {
        Score(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for RecordError {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

/// Outcome of evaluating one first-pass method on one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    /// First-pass method F₁.
    pub method: String,
    /// Re-inpainting method F₂.
    pub second: String,
    pub metric: SubMetric,
    pub first_mask_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_mask_ratio: Option<f64>,
    #[serde(default)]
    pub second_mask_ids: Vec<String>,
    #[serde(default)]
    pub second_mask_ratios: Vec<f64>,
    /// `d(X̂₁, X̂₂ᵏ)` for each k.
    #[serde(default)]
    pub distances: Vec<Score>,
    /// Consistency score: the mean of `distances`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Score>,
    #[serde(default)]
    pub objectives: BTreeMap<Objective, Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RecordError>,
}

impl EvalRecord {
    pub fn failed(image_id: &str, method: &str, second: &str, metric: SubMetric, e: &Error) -> Self {
        Self {
            image_id: image_id.to_string(),
            method: method.to_string(),
            second: second.to_string(),
            metric,
            first_mask_id: String::new(),
            first_mask_ratio: None,
            second_mask_ids: Vec::new(),
            second_mask_ratios: Vec::new(),
            distances: Vec::new(),
            d: None,
            objectives: BTreeMap::new(),
            elapsed_ms: None,
            error: Some(e.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.image_id, &self.method)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

/// Stable order used for every records file: by image id, then method.
pub fn sort_records(records: &mut [EvalRecord]) {
    records.sort_by(|a, b| a.key().cmp(&b.key()));
}

/// Reads a JSON-lines records file. Blank lines are ignored; lines that do
/// not parse are skipped with a warning and counted in the second value.
pub fn read_records(path: &Path) -> Result<(Vec<EvalRecord>, usize)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EvalRecord>(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("{}:{}: skipping unreadable record: {e}", path.display(), n + 1);
                skipped += 1;
            }
        }
    }
    Ok((records, skipped))
}

/// Writes records as JSON lines, replacing `path` atomically.
pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut out = std::io::BufWriter::new(fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
        for r in records {
            writeln!(out, "{}", r.to_json_line()).map_err(|e| Error::io(&tmp, e))?;
        }
        out.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_round_trips_non_finite() {
        for v in [0.25, f64::INFINITY, f64::NEG_INFINITY, 12.041199826559248] {
            let s = serde_json::to_string(&Score(v)).unwrap();
            assert_eq!(serde_json::from_str::<Score>(&s).unwrap(), Score(v));
        }
        assert_eq!(serde_json::to_string(&Score(f64::INFINITY)).unwrap(), "\"inf\"");
        let nan: Score = serde_json::from_str("\"nan\"").unwrap();
        assert!(nan.0.is_nan());
        assert!(serde_json::from_str::<Score>("\"big\"").is_err());
        assert_eq!(serde_json::from_str::<Score>("3").unwrap(), Score(3.0));
    }

    #[test]
    fn records_file_round_trip_and_skips_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut ok = EvalRecord::failed("a", "m", "f2", SubMetric::Psnr, &Error::EmptyCorpus);
        ok.error = None;
        ok.d = Some(Score(f64::INFINITY));
        ok.objectives.insert(Objective::FirstSecond, Score(f64::INFINITY));
        let bad = EvalRecord::failed("b", "m", "f2", SubMetric::Psnr, &Error::Timeout("x".into()));
        write_records(&path, &[ok.clone(), bad.clone()]).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n\n");
        fs::write(&path, text).unwrap();
        let (back, skipped) = read_records(&path).unwrap();
        assert_eq!(back, vec![ok, bad]);
        assert_eq!(skipped, 1);
        assert_eq!(back[1].error.as_ref().unwrap().kind, "Timeout");
    }
}
