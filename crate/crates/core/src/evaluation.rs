//! Micro-averaged scoring, seed aggregation and frequency-bucket reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{FrequencyBucket, FrequencyBuckets};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, other: Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn scores(&self) -> Prf {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Pooled counts. With a negative label, correct negatives count for
/// nothing, any non-negative wrong prediction is a false positive and any
/// non-negative gold predicted otherwise is a false negative. Without one,
/// every instance counts and P = R = F1 = accuracy.
pub fn confusion<S: AsRef<str>>(preds: &[S], golds: &[S], negative: Option<&str>) -> Result<Confusion> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    let mut c = Confusion::default();
    for (p, g) in preds.iter().zip(golds) {
        let (p, g) = (p.as_ref(), g.as_ref());
        let p_pos = negative != Some(p);
        let g_pos = negative != Some(g);
        if p == g {
            if g_pos {
                c.tp += 1;
            }
            continue;
        }
        if p_pos {
            c.fp += 1;
        }
        if g_pos {
            c.fn_ += 1;
        }
    }
    Ok(c)
}

pub fn micro_f1<S: AsRef<str>>(preds: &[S], golds: &[S], negative: Option<&str>) -> Result<Prf> {
    Ok(confusion(preds, golds, negative)?.scores())
}

/// Arithmetic mean and population standard deviation.
pub fn aggregate(scores: &[f64]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("aggregate needs at least one score"));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub instances: usize,
    pub confusion: Confusion,
    #[serde(flatten)]
    pub scores: Prf,
}

/// Per-bucket scores; a bucket without instances is `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub high: Option<BucketScore>,
    pub mid: Option<BucketScore>,
    pub low: Option<BucketScore>,
}

impl FrequencyReport {
    pub fn get(&self, bucket: FrequencyBucket) -> Option<&BucketScore> {
        match bucket {
            FrequencyBucket::High => self.high.as_ref(),
            FrequencyBucket::Mid => self.mid.as_ref(),
            FrequencyBucket::Low => self.low.as_ref(),
        }
    }
}

pub fn frequency_report<S: AsRef<str>>(
    preds: &[S],
    golds: &[S],
    buckets: &FrequencyBuckets,
    negative: Option<&str>,
) -> Result<FrequencyReport> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    let score = |idx: &[usize]| -> Result<Option<BucketScore>> {
        if idx.is_empty() {
            return Ok(None);
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= preds.len()) {
            return Err(Error::IdOutOfRange {
                id: bad,
                size: preds.len(),
            });
        }
        let p: Vec<&str> = idx.iter().map(|&i| preds[i].as_ref()).collect();
        let g: Vec<&str> = idx.iter().map(|&i| golds[i].as_ref()).collect();
        let c = confusion(&p, &g, negative)?;
        Ok(Some(BucketScore {
            instances: idx.len(),
            confusion: c,
            scores: c.scores(),
        }))
    };
    Ok(FrequencyReport {
        high: score(&buckets.high)?,
        mid: score(&buckets.mid)?,
        low: score(&buckets.low)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub confusion: Confusion,
    #[serde(flatten)]
    pub scores: Prf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buckets: Option<FrequencyReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub seeds: Vec<SeedResult>,
    pub mean: Prf,
    /// Population standard deviations.
    pub std: Prf,
}

impl EvalReport {
    pub fn from_seeds(name: impl Into<String>, seeds: Vec<SeedResult>) -> Result<Self> {
        let column = |f: fn(&Prf) -> f64| -> Result<(f64, f64)> {
            aggregate(&seeds.iter().map(|s| f(&s.scores)).collect::<Vec<_>>())
        };
        let (mp, sp) = column(|s| s.precision)?;
        let (mr, sr) = column(|s| s.recall)?;
        let (mf, sf) = column(|s| s.f1)?;
        Ok(Self {
            name: name.into(),
            seeds,
            mean: Prf {
                precision: mp,
                recall: mr,
                f1: mf,
            },
            std: Prf {
                precision: sp,
                recall: sr,
                f1: sf,
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path, std::slice::from_ref(self))
    }
}

pub const CSV_HEADER: [&str; 9] = ["run", "seed", "precision", "recall", "f1", "f1_std", "tp", "fp", "fn"];

/// One row per seed plus an aggregate row (`seed = mean`) per report.
pub fn csv_string(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv output: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        for s in &r.seeds {
            w.write_record([
                r.name.clone(),
                s.seed.to_string(),
                s.scores.precision.to_string(),
                s.scores.recall.to_string(),
                s.scores.f1.to_string(),
                String::new(),
                s.confusion.tp.to_string(),
                s.confusion.fp.to_string(),
                s.confusion.fn_.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            r.name.clone(),
            "mean".into(),
            r.mean.precision.to_string(),
            r.mean.recall.to_string(),
            r.mean.f1.to_string(),
            r.std.f1.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, csv_string(reports)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let g = ["a", "b", "neg", "a"];
        assert_eq!(micro_f1(&g, &g, Some("neg")).unwrap().f1, 1.0);
        assert_eq!(micro_f1(&g, &g, None).unwrap().f1, 1.0);
    }

    #[test]
    fn hand_counted_confusion() {
        let golds = ["A", "A", "B", "neg"];
        let preds = ["A", "B", "B", "neg"];
        let c = confusion(&preds, &golds, Some("neg")).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
        let s = c.scores();
        for v in [s.precision, s.recall, s.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn false_positive_on_negative() {
        let c = confusion(&["A"], &["neg"], Some("neg")).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 1, 0));
        assert_eq!(c.scores().f1, 0.0);
    }

    #[test]
    fn no_negative_is_accuracy() {
        let s = micro_f1(&["a", "b", "c", "a"], &["a", "b", "a", "c"], None).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            micro_f1(&["a"], &["a", "b"], None),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn aggregate_cases() {
        assert_eq!(aggregate(&[0.5]).unwrap(), (0.5, 0.0));
        let (m, s) = aggregate(&[0.3, 0.5]).unwrap();
        assert!((m - 0.4).abs() < 1e-15 && (s - 0.1).abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn empty_bucket_is_absent() {
        let buckets = FrequencyBuckets {
            high: vec![0, 1],
            mid: vec![],
            low: vec![2],
        };
        let r = frequency_report(&["a", "b", "c"], &["a", "a", "c"], &buckets, Some("neg")).unwrap();
        assert!(r.mid.is_none());
        assert_eq!(r.high.as_ref().unwrap().scores.f1, 0.5);
        assert_eq!(r.low.as_ref().unwrap().scores.f1, 1.0);
    }

    #[test]
    fn report_outputs() {
        let seed = |seed, f1: f64| SeedResult {
            seed,
            confusion: Confusion::default(),
            scores: Prf {
                precision: f1,
                recall: f1,
                f1,
            },
            buckets: None,
        };
        let r = EvalReport::from_seeds("run", vec![seed(13, 0.3), seed(21, 0.5)]).unwrap();
        assert!((r.mean.f1 - 0.4).abs() < 1e-15);
        let csv = csv_string(std::slice::from_ref(&r)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "run,seed,precision,recall,f1,f1_std,tp,fp,fn");
        assert!(lines[3].starts_with("run,mean,"));
        let back: EvalReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
