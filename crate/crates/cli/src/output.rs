use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Bad invocation detected after argument parsing; exits with 2.
#[derive(Debug)]
pub struct UsageError {
    pub kind: &'static str,
    pub message: String,
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(kind: &'static str, message: impl Into<String>) -> anyhow::Error {
    UsageError {
        kind,
        message: message.into(),
    }
    .into()
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(
            "FileNotFound",
            format!("{what} {} does not exist", path.display()),
        ))
    }
}

pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(
            "FileNotFound",
            format!("{what} {} is not a directory", path.display()),
        ))
    }
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    if let Some(u) = err.downcast_ref::<UsageError>() {
        return (u.kind, 2);
    }
    if let Some(e) = err.downcast_ref::<cband_core::Error>() {
        let code = match e {
            cband_core::Error::ManifestMissing(_) | cband_core::Error::InvalidConfig(_) => 2,
            _ => 1,
        };
        return (e.kind(), code);
    }
    if err.downcast_ref::<serde_json::Error>().is_some() {
        return ("JsonError", 1);
    }
    if err.downcast_ref::<io::Error>().is_some() {
        return ("IoError", 1);
    }
    ("RuntimeError", 1)
}

pub fn report_error(err: &anyhow::Error) -> ExitCode {
    let (kind, code) = classify(err);
    let body = json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "kind": kind, "message": format!("{err:#}") },
    });
    eprintln!("{body}");
    ExitCode::from(code)
}

/// Pretty JSON with a trailing newline, to `path` or stdout.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => {
            create_parent(p)?;
            fs::write(p, text)?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    io::copy(&mut fs::File::open(path)?, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

/// `<path>.json`, the metadata sidecar of a feature cache.
pub fn sidecar_path(cache: &Path) -> PathBuf {
    let mut name = cache.as_os_str().to_os_string();
    name.push(".json");
    PathBuf::from(name)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Wall-clock seconds since construction.
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch(Instant::now())
    }

    pub fn secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
