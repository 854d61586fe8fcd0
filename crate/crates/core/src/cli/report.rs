//! Report assembly: named pass/fail checks, a JSON summary per run and CSV
//! curves written under the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{LabError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub operator: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub summary: Value,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
}

impl ScenarioReport {
    pub fn new(scenario: &str, operator: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            operator: operator.to_string(),
            pass: true,
            checks: Vec::new(),
            summary: Value::Object(Default::default()),
            files: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.pass &= pass;
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| LabError::Parse(e.to_string()))?;
        if let Value::Object(map) = &mut self.summary {
            map.insert(key.to_string(), v);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub scenario: String,
    pub pass: bool,
    pub reports: Vec<ScenarioReport>,
}

/// Output directory rooted at `root`, handing out per-scenario files.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Opens `<root>/<operator>/<scenario>/<name>` and records it in `report`.
    pub fn file(&self, report: &mut ScenarioReport, name: &str) -> Result<BufWriter<File>> {
        let rel = Path::new(&report.operator).join(&report.scenario).join(name);
        let path = self.root.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        report.files.push(rel.to_string_lossy().replace('\\', "/"));
        Ok(BufWriter::new(File::create(path)?))
    }

    /// Writes a header and rows as CSV.
    pub fn csv<R, I>(&self, report: &mut ScenarioReport, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let out = self.file(report, name)?;
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| LabError::Io(std::io::Error::other(e.to_string()));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_run(&self, run: &RunReport) -> Result<PathBuf> {
        let path = self.root.join(REPORT_FILE);
        let mut out = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut out, run).map_err(|e| LabError::Parse(e.to_string()))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(path)
    }
}
