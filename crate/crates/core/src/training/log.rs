use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One optimizer step. Absent terms are written as empty CSV fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub ce: Option<f64>,
    pub cl: Option<f64>,
    pub total: f64,
}

/// Streams step rows under the header `step,epoch,lr,ce,cl,total`.
pub struct LossCsv<W: Write> {
    writer: csv::Writer<W>,
}

impl LossCsv<File> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(LossCsv::new(file))
    }
}

impl<W: Write> LossCsv<W> {
    pub fn new(inner: W) -> Self {
        LossCsv {
            writer: csv::Writer::from_writer(inner),
        }
    }

    pub fn write(&mut self, row: &StepLog) -> Result<()> {
        self.writer.serialize(row).map_err(csv_error)?;
        self.writer.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<StepLog>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    reader
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("loss log: {e}"))
}
