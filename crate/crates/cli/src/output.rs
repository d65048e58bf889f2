use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

/// Overrides the directory that relative `--output` paths are resolved in.
pub const OUTPUT_DIR_VAR: &str = "PCML_OUTPUT_DIR";

/// Significant digits of floats in JSON output.
const JSON_DIGITS: usize = 12;

#[derive(Debug)]
pub enum CliError {
    Core(pcml::Error),
    Input(String),
    Io { path: PathBuf, source: io::Error },
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use pcml::Error as E;
        match self {
            CliError::Input(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Verification(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidParameter(_) | E::InvalidInput(_) | E::Resource { .. } | E::Json(_) => 2,
                E::Accuracy { .. } | E::NoSolution(_) | E::Consistency(_) => 3,
                E::Io(_) => 4,
            },
        }
    }

    fn kind(&self) -> &'static str {
        use pcml::Error as E;
        match self {
            CliError::Input(_) => "invalid_input",
            CliError::Io { .. } => "io",
            CliError::Verification(_) => "verification_failed",
            CliError::Core(e) => match e {
                E::InvalidParameter(_) => "invalid_parameter",
                E::InvalidInput(_) | E::Json(_) => "invalid_input",
                E::Resource { .. } => "resource_limit",
                E::Accuracy { .. } => "accuracy",
                E::NoSolution(_) => "no_solution",
                E::Consistency(_) => "consistency",
                E::Io(_) => "io",
            },
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() } })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(m) | CliError::Verification(m) => f.write_str(m),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl From<pcml::Error> for CliError {
    fn from(e: pcml::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Rounds every float in `v` to [`JSON_DIGITS`] significant digits.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked");
            if x.is_finite() && x != 0.0 {
                let r: f64 = format!("{:.*e}", JSON_DIGITS - 1, x).parse().expect("valid float");
                if let Some(num) = serde_json::Number::from_f64(r) {
                    *n = num;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn to_rounded_value<T: Serialize>(value: &T) -> CliResult<Value> {
    let mut v = serde_json::to_value(value).map_err(pcml::Error::from)?;
    round_floats(&mut v);
    Ok(v)
}

/// Resolves an `--output` argument against [`OUTPUT_DIR_VAR`].
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_VAR) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Destination for command output: a file or stdout.
pub struct Sink {
    path: Option<PathBuf>,
    out: Box<dyn Write>,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self {
                path: None,
                out: Box::new(BufWriter::new(io::stdout().lock())),
            }),
            Some(p) => {
                let p = resolve_output(p);
                if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(io_err(parent))?;
                }
                let f = File::create(&p).map_err(io_err(&p))?;
                Ok(Self {
                    path: Some(p),
                    out: Box::new(BufWriter::new(f)),
                })
            }
        }
    }

    fn err(&self) -> impl FnOnce(io::Error) -> CliError + use<> {
        let path = self.path.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
        move |source| CliError::Io { path, source }
    }

    pub fn writer(&mut self) -> &mut dyn Write {
        &mut self.out
    }

    pub fn json<T: Serialize>(&mut self, value: &T) -> CliResult<()> {
        let v = to_rounded_value(value)?;
        let text = serde_json::to_string_pretty(&v).map_err(pcml::Error::from)?;
        writeln!(self.out, "{text}").map_err(self.err())
    }

    pub fn json_line<T: Serialize>(&mut self, value: &T) -> CliResult<()> {
        let v = to_rounded_value(value)?;
        let text = serde_json::to_string(&v).map_err(pcml::Error::from)?;
        writeln!(self.out, "{text}").map_err(self.err())
    }

    pub fn line(&mut self, text: &str) -> CliResult<()> {
        writeln!(self.out, "{text}").map_err(self.err())
    }

    pub fn finish(mut self) -> CliResult<()> {
        let e = self.err();
        self.out.flush().map_err(e)
    }
}
