//! Result files, the run manifest and the mapping of failures to exit codes.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;
use smoothhaz::Error;

pub const EXIT_CODES: &str = "\
Exit codes:
  0  all outputs written and every fit converged
  1  an input or output file could not be read or written
  2  invalid command line or configuration
  3  invalid input data (malformed CSV, bad records, records outside the bins)
  4  a fit failed (singular system, collinear covariates, ...)
  5  outputs written, but a fit did not converge
  6  study outputs written, but some replicates failed
  7  study aborted: more than 10% of the replicates failed";

#[derive(Debug)]
pub enum Failure {
    Io(String),
    Usage(String),
    Input(String),
    Fit(String),
    StudyFailed(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Input(_) => 3,
            Failure::Fit(_) => 4,
            Failure::StudyFailed(_) => 7,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Io(m)
            | Failure::Usage(m)
            | Failure::Input(m)
            | Failure::Fit(m)
            | Failure::StudyFailed(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) => Failure::Io(msg),
            Error::InvalidConfig(_) | Error::InvalidRho(_) | Error::InvalidKnotGrid(_) => {
                Failure::Usage(msg)
            }
            Error::Csv { .. }
            | Error::InvalidRecord { .. }
            | Error::InvalidBinGrid(_)
            | Error::UncoveredRecords { .. }
            | Error::CovariateLength { .. }
            | Error::NoEvents
            | Error::TooFewIndividuals { .. } => Failure::Input(msg),
            Error::StudyFailed { .. } => Failure::StudyFailed(msg),
            _ => Failure::Fit(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// What a command achieved once its outputs are on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
    PartialStudy,
}

impl Status {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Status::Ok => 0,
            Status::NotConverged => 5,
            Status::PartialStudy => 6,
        })
    }
}

/// Collects the files a command writes into its output directory.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.dir.join(name);
        let file =
            File::create(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    /// Writes a header row and then `rows`; floats use shortest round-trip
    /// formatting.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let mut w = csv::Writer::from_writer(self.open(name)?);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn records(
        &mut self,
        name: &str,
        records: &[smoothhaz::IndividualRecord],
        covariate_names: &[String],
    ) -> Result<(), Failure> {
        let w = self.open(name)?;
        smoothhaz::lexis::write_records_csv(w, records, covariate_names)?;
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

pub enum Cell {
    F(f64),
    Flag(bool),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => v.to_string(),
            Cell::Flag(b) => u8::from(*b).to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<String>,
    pub settings: serde_json::Value,
    pub threads: usize,
    pub version: &'static str,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}
