//! Reading scenario files.

use std::fmt;
use std::path::{Path, PathBuf};

use vdg_core::scenario::{Scenario, Violation};

#[derive(Debug)]
pub enum LoadError {
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed JSON, a wrong type or an unknown field.
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    /// Well-formed but inconsistent; every violation found.
    Invalid { path: PathBuf, violations: Vec<Violation> },
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            LoadError::Parse { path, line, column, message } => {
                write!(f, "{}:{line}:{column}: {message}", path.display())
            }
            LoadError::Invalid { path, violations } => {
                for (i, v) in violations.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{}: {v}", path.display())?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for LoadError {}

impl LoadError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            LoadError::Invalid { violations, .. } => violations,
            _ => &[],
        }
    }
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario, LoadError> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| LoadError::Parse {
        path: path.into(),
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    sc.validated().map_err(|violations| LoadError::Invalid { path: path.into(), violations })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    parse_scenario(&text, path)
}
