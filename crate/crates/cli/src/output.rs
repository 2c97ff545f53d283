//! Output files. Every CSV starts with a `#` line carrying the config hash
//! and seed; JSON documents carry them as fields.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub struct Stamp {
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Failed(format!("cannot create {}: {e}", dir.display())))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Failed(format!("cannot write {}: {e}", path.display()))
}

/// CSV writer with the provenance line already written.
pub struct CsvOut {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(dir: &Path, name: &str, stamp: &Stamp, header: &[&str]) -> Result<Self, CliError> {
        ensure_dir(dir)?;
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(
            buf,
            "# kyleback {} config_hash={} seed={}",
            stamp.command, stamp.config_hash, stamp.seed
        )
        .map_err(|e| io_err(&path, e))?;
        let mut inner = csv::Writer::from_writer(buf);
        inner.write_record(header).map_err(|e| io_err(&path, e))?;
        Ok(Self { path, inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner
            .write_record(fields)
            .map_err(|e| io_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.inner.flush().map_err(|e| io_err(&self.path, e))?;
        Ok(self.path)
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    stamp: &Stamp,
    body: &T,
) -> Result<PathBuf, CliError> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let doc = Document {
        command: stamp.command,
        config_hash: &stamp.config_hash,
        seed: stamp.seed,
        body,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| io_err(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn write_text(dir: &Path, name: &str, stamp: &Stamp, text: &str) -> Result<PathBuf, CliError> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let body = format!(
        "# kyleback {} config_hash={} seed={}\n{text}",
        stamp.command, stamp.config_hash, stamp.seed
    );
    fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}
