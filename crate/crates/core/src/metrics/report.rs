use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{bleu, cider_d, rouge_l, EvalCorpus};

/// Corpus scores. `meteor`, `spice` and `spider` need external resources and
/// are never computed here; they stay `None` unless read from a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider_d: f64,
    pub meteor: Option<f64>,
    pub spice: Option<f64>,
    pub spider: Option<f64>,
}

pub fn evaluate_all(corpus: &EvalCorpus) -> Result<MetricReport> {
    Ok(MetricReport {
        bleu1: bleu(corpus, 1)?,
        bleu2: bleu(corpus, 2)?,
        bleu3: bleu(corpus, 3)?,
        bleu4: bleu(corpus, 4)?,
        rouge_l: rouge_l(corpus),
        cider_d: cider_d(corpus)?,
        meteor: None,
        spice: None,
        spider: None,
    })
}

const NAMES: [&str; 9] = [
    "bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider_d", "meteor", "spice", "spider",
];

impl MetricReport {
    fn values(&self) -> [Option<f64>; 9] {
        [
            Some(self.bleu1),
            Some(self.bleu2),
            Some(self.bleu3),
            Some(self.bleu4),
            Some(self.rouge_l),
            Some(self.cider_d),
            self.meteor,
            self.spice,
            self.spider,
        ]
    }

    /// `metric,value` rows; unavailable metrics have an empty value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, v) in NAMES.iter().zip(self.values()) {
            out.push_str(name);
            out.push(',');
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::Format(format!("metric report: {e}")))?;
        if header != vec!["metric", "value"] {
            return Err(Error::Format("metric report header must be metric,value".into()));
        }
        let mut vals: [Option<Option<f64>>; 9] = [None; 9];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Format(format!("metric report: {e}")))?;
            let name = &rec[0];
            let slot = NAMES
                .iter()
                .position(|&n| n == name)
                .ok_or_else(|| Error::Format(format!("unknown metric {name:?}")))?;
            let v = match rec[1].trim() {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|e| Error::Format(format!("{name}: {e}")))?),
            };
            vals[slot] = Some(v);
        }
        let required = |i: usize| -> Result<f64> {
            vals[i]
                .flatten()
                .ok_or_else(|| Error::Format(format!("metric report lacks {}", NAMES[i])))
        };
        Ok(MetricReport {
            bleu1: required(0)?,
            bleu2: required(1)?,
            bleu3: required(2)?,
            bleu4: required(3)?,
            rouge_l: required(4)?,
            cider_d: required(5)?,
            meteor: vals[6].flatten(),
            spice: vals[7].flatten(),
            spider: vals[8].flatten(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("metric report: {e}")))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        fs::write(&csv_path, self.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&json_path, self.to_json()).map_err(|e| Error::io(&json_path, e))
    }
}

pub fn read_report_csv(path: &Path) -> Result<MetricReport> {
    MetricReport::from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn read_report_json(path: &Path) -> Result<MetricReport> {
    MetricReport::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
