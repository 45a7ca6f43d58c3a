//! Artifact writing and the run report.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One pass/fail outcome. Only asserted checks affect the exit status,
/// unless the run is strict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub asserted: bool,
}

impl Check {
    pub fn asserted(name: &str, passed: bool) -> Self {
        Check {
            name: name.to_string(),
            passed,
            asserted: true,
        }
    }

    pub fn reported(name: &str, passed: bool) -> Self {
        Check {
            name: name.to_string(),
            passed,
            asserted: false,
        }
    }
}

/// Exit status for a finished command: 1 if a check that counts failed.
pub fn exit_code(checks: &[Check], strict: bool) -> i32 {
    if checks.iter().any(|c| !c.passed && (c.asserted || strict)) {
        1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub strict: bool,
    /// The only field that varies between identical runs.
    pub wall_time_s: f64,
    pub artifacts: Vec<String>,
    pub checks: Vec<Check>,
    pub exit_code: i32,
}

/// Writes files into one output directory and remembers their names.
pub struct ArtifactWriter {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.artifacts.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_records(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
