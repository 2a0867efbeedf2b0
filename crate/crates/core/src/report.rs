//! Experiment reports and their JSON / CSV serializations.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::Result;
use crate::spectral::Interval;

/// One (interval, volume) cell of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub interval: Option<[f64; 2]>,
    pub volume: f64,
    pub trials: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

impl Cell {
    /// Cell with `pass = estimate ≤ bound + 3·stderr` when a bound is known.
    pub fn new(interval: Option<&Interval>, volume: f64, trials: usize, estimate: f64, stderr: f64, bound: Option<f64>) -> Self {
        let pass = bound.map(|b| estimate <= b + 3.0 * stderr);
        Self {
            interval: interval.map(|i| [i.a(), i.b()]),
            volume,
            trials,
            estimate,
            stderr,
            bound,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: String,
    pub params: Map<String, Value>,
    pub per_cell: Vec<Cell>,
}

impl EstimateReport {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            params: Map::new(),
            per_cell: Vec::new(),
        }
    }

    pub fn set<V: Serialize>(&mut self, key: &str, value: V) {
        self.params
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(Value::as_f64)
    }

    /// False iff some cell carries a failed bound comparison.
    pub fn all_pass(&self) -> bool {
        self.per_cell.iter().all(|c| c.pass != Some(false))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Cells as CSV with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["kind", "a", "b", "volume", "trials", "estimate", "stderr", "bound", "pass"])?;
        for c in &self.per_cell {
            let (a, b) = match c.interval {
                Some([a, b]) => (fmt(a), fmt(b)),
                None => (String::new(), String::new()),
            };
            wr.write_record([
                self.kind.clone(),
                a,
                b,
                fmt(c.volume),
                c.trials.to_string(),
                fmt(c.estimate),
                fmt(c.stderr),
                c.bound.map(fmt).unwrap_or_default(),
                c.pass.map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Round-trippable float formatting for tabular output.
pub fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}
