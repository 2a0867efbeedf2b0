//! Report files: `report.json`, CSV tables and `summary.txt`.

use std::path::Path;

use anderson_core::report::EstimateReport;
use anderson_core::selftest::SelftestReport;
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::{Failure, VERSION};

/// Everything one run leaves on disk.
pub struct Artifacts {
    pub result: Value,
    /// `(file name, bytes)`.
    pub tables: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
    pub notices: Vec<String>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self {
            result: Value::Null,
            tables: Vec::new(),
            summary: Vec::new(),
            notices: Vec::new(),
        }
    }

    pub fn table(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> anderson_core::Result<()>) -> Result<(), Failure> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.tables.push((name.to_string(), buf));
        Ok(())
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }

    pub fn notice(&mut self, s: impl Into<String>) {
        let s = s.into();
        self.summary.push(format!("notice: {s}"));
        self.notices.push(s);
    }

    pub fn write(&self, r: &Resolved, status: &str) -> Result<(), Failure> {
        let dir = &r.out;
        std::fs::create_dir_all(dir)?;
        let doc = json!({
            "version": VERSION,
            "config_hash": r.config.hash(),
            "kind": r.config.experiment.name(),
            "status": status,
            "trials": r.trials,
            "seed": r.seed,
            "workers": r.workers,
            "config": r.config.to_toml(),
            "notices": self.notices,
            "tables": self.tables.iter().map(|t| t.0.clone()).collect::<Vec<_>>(),
            "result": self.result,
        });
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
        for (name, bytes) in &self.tables {
            std::fs::write(dir.join(name), bytes)?;
        }
        let mut text = format!(
            "anderson-lab {VERSION}\nkind {}  trials {}  seed {}  config {}\nstatus {status}\n",
            r.config.experiment.name(),
            r.trials,
            r.seed,
            &r.config.hash()[..16]
        );
        for l in &self.summary {
            text.push_str(l);
            text.push('\n');
        }
        write_text(dir, "summary.txt", &text)?;
        print!("{text}");
        Ok(())
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

/// One line per cell of an estimate report.
pub fn cell_lines(r: &EstimateReport) -> Vec<String> {
    r.per_cell
        .iter()
        .map(|c| {
            let iv = c.interval.map_or("-".to_string(), |[a, b]| format!("({a}, {b}]"));
            let bound = c.bound.map_or("none".to_string(), |b| format!("{b:.6}"));
            format!(
                "  I {iv}  |Λ| {}  estimate {:.6} ± {:.6}  bound {bound}  {}",
                c.volume,
                c.estimate,
                c.stderr,
                match c.pass {
                    Some(true) => "ok",
                    Some(false) => "EXCEEDED",
                    None => "no bound",
                }
            )
        })
        .collect()
}

pub fn selftest_summary(r: &SelftestReport) -> String {
    let mut s = String::new();
    for suite in &r.suites {
        s.push_str(&format!(
            "{} {}: {} cases, {} checks, {} violations ({:.2} s)\n",
            if suite.pass() { "ok  " } else { "FAIL" },
            suite.name,
            suite.cases,
            suite.checks,
            suite.violations,
            suite.seconds
        ));
        for v in &suite.examples {
            s.push_str(&format!("       case seed {}: {}\n", v.case_seed, v.detail));
        }
    }
    s.push_str(&format!(
        "{} in {:.1} s",
        if r.pass() { "selftest passed".to_string() } else { format!("selftest FAILED: {}", r.failed().join(", ")) },
        r.seconds
    ));
    s
}
