//! Config files merged with command-line overrides, and the error type that
//! maps failures to exit codes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use scoredim_core::Error;

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "SCOREDIM_OUT";
pub const DEFAULT_OUT_ROOT: &str = "results";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or inputs (exit code 2).
    Usage(String),
    /// The run itself failed (exit code 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Dimension(_) | Error::Parameter(_) | Error::Domain { .. } | Error::Config(_) | Error::Format { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses a TOML config file; syntax errors carry line and column.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Parses a config file straight into `T`, so unknown keys are reported
/// with their position.
pub fn read_typed<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Sets `value` at a dotted `key`, creating intermediate tables.
pub fn set(table: &mut Table, key: &str, value: impl Into<Value>) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("override path crosses a non-table value");
    }
    t.insert(last.to_string(), value.into());
}

pub fn set_opt(table: &mut Table, key: &str, value: Option<impl Into<Value>>) {
    if let Some(v) = value {
        set(table, key, v);
    }
}

/// TOML integers are i64; values above that are rejected.
pub fn int(v: impl TryInto<i64>) -> CliResult<Value> {
    v.try_into().map(Value::Integer).map_err(|_| CliError::Usage("integer value out of range".into()))
}

pub fn typed<T: DeserializeOwned>(table: Table, what: &str) -> CliResult<T> {
    Value::Table(table).try_into().map_err(|e| CliError::Usage(format!("invalid {what} config: {e}")))
}

/// Writes the resolved config as TOML into the output directory.
pub fn echo<T: Serialize>(value: &T, dir: &Path, name: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{name}.resolved.toml"));
    let text = toml::to_string_pretty(value).map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))?;
    fs::write(&path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// `--out` if given, else `$SCOREDIM_OUT/<command>`, else `results/<command>`.
pub fn out_dir(flag: Option<&Path>, command: &str) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(std::env::var_os(OUT_ENV).unwrap_or_else(|| DEFAULT_OUT_ROOT.into())).join(command),
    }
}
