//! Exit codes and output records shared by the subcommands.

use std::io::Write;

use gaussdiss::lyapunov::SpectralReport;
use gaussdiss::Error;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 2;
pub const EXIT_TIMEOUT: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::InvalidInput(_)
            | Error::InvalidCovariance(_)
            | Error::InvalidPolicy(_)
            | Error::Io(_)
            | Error::Parse(_)
            | Error::NoInteriorOptimum(_)
            | Error::OutOfModel(_) => EXIT_USAGE,
            Error::StageTimeout { .. } | Error::UnstableIntegration { .. } => EXIT_TIMEOUT,
            _ => EXIT_FAIL,
        };
        Failure { code, message: err.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::usage(err.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Failure::usage(err.to_string())
    }
}

pub type CmdResult = Result<u8, Failure>;

#[derive(Debug, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub hurwitz: bool,
    pub max_real: f64,
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
}

impl From<&SpectralReport> for SpectrumJson {
    fn from(s: &SpectralReport) -> Self {
        let mut eigenvalues: Vec<[f64; 2]> = s.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
        eigenvalues.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
        SpectrumJson { hurwitz: s.hurwitz, max_real: s.max_real, eigenvalues }
    }
}

pub fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(std::io::stdout().lock(), "{text}")?;
    Ok(())
}

pub fn status(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}
