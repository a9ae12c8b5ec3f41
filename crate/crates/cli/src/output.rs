//! Output directory writer. Text files (CSV, tree lines, DOT) start with a
//! comment line carrying the config hash and seed; JSON files get a
//! `<name>.provenance.json` sidecar with the same fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, STORED_CONFIG};
use crate::CliResult;

pub struct Output {
    pub dir: PathBuf,
    experiment: String,
    hash: String,
    seed: u64,
}

#[derive(Serialize)]
struct Provenance<'a> {
    experiment: &'a str,
    config_sha256: &'a str,
    seed: u64,
    version: &'a str,
}

impl Output {
    /// Creates the directory and stores the resolved config in it.
    pub fn create<P: Serialize>(cfg: &ExperimentConfig<P>) -> CliResult<Self> {
        fs::create_dir_all(&cfg.out)?;
        let out = Self { dir: cfg.out.clone(), experiment: cfg.experiment.clone(), hash: cfg.hash()?, seed: cfg.seed };
        fs::write(out.path(STORED_CONFIG), cfg.to_toml()?)?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn header(&self, prefix: &str) -> String {
        format!("{prefix} mlscape {} config_sha256={} seed={}\n", self.experiment, self.hash, self.seed)
    }

    /// CSV or line-format file with a `#` provenance line.
    pub fn text(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        self.write_with(name, "#", body)
    }

    /// DOT file with a `//` provenance line.
    pub fn dot(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        self.write_with(name, "//", body)
    }

    fn write_with(&self, name: &str, prefix: &str, body: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        fs::write(&p, self.header(prefix) + body)?;
        Ok(p)
    }

    /// Pretty JSON plus provenance sidecar.
    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let p = self.path(name);
        write_json(&p, value)?;
        let prov = Provenance {
            experiment: &self.experiment,
            config_sha256: &self.hash,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
        };
        write_json(&self.path(&format!("{name}.provenance.json")), &prov)?;
        Ok(p)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// CSV from a header and rows of floats, floats in shortest round-trip form.
pub fn csv_rows(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}
