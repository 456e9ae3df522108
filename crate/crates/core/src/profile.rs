//! Exogenous time series (ambient temperature, PV availability, base load).

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Immutable per-step series, cheap to clone and share between instances.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    values: Arc<[f64]>,
}

impl Profile {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("profile entry {k} = {v}")));
        }
        Ok(Self {
            values: values.into(),
        })
    }

    pub fn constant(value: f64, len: usize) -> Self {
        Self::from_values(vec![value; len]).expect("finite constant")
    }

    pub fn from_fn(len: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::from_values((0..len).map(f).collect())
    }

    /// Reads a `step,value` CSV. Steps must be `0, 1, 2, ...` in order.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(format!("{other:?}")),
        })?;
        let headers = reader
            .headers()
            .map_err(|e| parse_err(e.to_string()))?
            .clone();
        if headers.len() != 2 || &headers[0] != "step" || &headers[1] != "value" {
            return Err(parse_err(format!(
                "expected header 'step,value', found '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            let step: usize = record[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("row {}: bad step '{}'", row + 1, &record[0])))?;
            if step != row {
                return Err(parse_err(format!("row {}: expected step {row}, found {step}", row + 1)));
            }
            let value: f64 = record[1]
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("row {}: bad value '{}'", row + 1, &record[1])))?;
            values.push(value);
        }
        Self::from_values(values).map_err(|e| parse_err(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["step", "value"]).map_err(io)?;
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([k.to_string(), v.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at `step`; the last value is held past the end.
    pub fn at(&self, step: usize) -> f64 {
        self.values[step.min(self.values.len() - 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_values(self.values.iter().map(|v| v * factor).collect()).expect("finite")
    }

    pub fn require_len(&self, horizon: usize, what: &str) -> Result<()> {
        if self.len() < horizon {
            return Err(Error::config(format!(
                "{what}: profile has {} steps, horizon needs {horizon}",
                self.len()
            )));
        }
        Ok(())
    }
}
