//! Experiment configs: a TOML file with top-level `experiment`, `seed` and
//! `out` keys and one `[params]` table typed per subcommand. Unknown keys are
//! rejected at every level.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult, Command, CommonArgs};

/// Environment variable naming the directory that relative input paths are
/// resolved against.
pub const DATA_DIR_ENV: &str = "MLSCAPE_DATA_DIR";

/// File name under which the resolved config is stored in the output directory.
pub const STORED_CONFIG: &str = "config.toml";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    params: Option<toml::Table>,
}

/// Fully resolved experiment: defaults, then file values, then flags.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig<P> {
    pub experiment: String,
    pub seed: u64,
    pub out: PathBuf,
    pub params: P,
}

impl<P: Serialize> ExperimentConfig<P> {
    /// SHA-256 over the experiment name, seed and params (not the output
    /// directory, which does not affect results).
    pub fn hash(&self) -> CliResult<String> {
        let body = serde_json::to_vec(&(&self.experiment, self.seed, &self.params))?;
        Ok(hex::encode(Sha256::digest(&body)))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::new("config", e.to_string()))
    }
}

pub fn load<P: DeserializeOwned + Default>(cmd: Command, args: &CommonArgs) -> CliResult<ExperimentConfig<P>> {
    let raw = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new("config", format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<RawConfig>(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?
        }
        None => RawConfig { experiment: None, seed: None, out: None, params: None },
    };
    if let Some(name) = &raw.experiment {
        if name != cmd.name() {
            return Err(CliError::new(
                "config",
                format!("config is for experiment `{name}` but the command is `{}`", cmd.name()),
            ));
        }
    }
    let params = match raw.params {
        Some(table) => P::deserialize(toml::Value::Table(table))
            .map_err(|e| CliError::new("config", format!("[params]: {e}")))?,
        None => P::default(),
    };
    Ok(ExperimentConfig {
        experiment: cmd.name().to_string(),
        seed: args.seed.or(raw.seed).unwrap_or(0),
        out: args.out.clone().or(raw.out).unwrap_or_else(|| PathBuf::from("mlscape-out").join(cmd.name())),
        params,
    })
}

/// Relative input paths are taken from the data directory when
/// `MLSCAPE_DATA_DIR` is set, otherwise from the working directory.
pub fn resolve_input(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Input path that must be given in the config.
pub fn required_input(path: &Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
    path.as_deref()
        .map(resolve_input)
        .ok_or_else(|| CliError::new("config", format!("params.{key} is required")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields, default)]
    struct P {
        n: usize,
    }

    fn args(config: Option<PathBuf>, seed: Option<u64>) -> CommonArgs {
        CommonArgs { config, seed, out: None, threads: None, resume: false, stop_after: None }
    }

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("c.toml");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "seed = 4\n[params]\nn = 7\n");
        let c: ExperimentConfig<P> = load(Command::Cv, &args(Some(p.clone()), None)).unwrap();
        assert_eq!((c.seed, c.params.n), (4, 7));
        let c: ExperimentConfig<P> = load(Command::Cv, &args(Some(p), Some(9))).unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for text in ["sede = 1\n", "[params]\nm = 1\n"] {
            let p = write(dir.path(), text);
            let err = load::<P>(Command::Cv, &args(Some(p), None)).unwrap_err();
            assert_eq!(err.kind, "config");
        }
        let p = write(dir.path(), "experiment = \"pspin\"\n");
        assert!(load::<P>(Command::Cv, &args(Some(p), None)).is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let mut c = ExperimentConfig { experiment: "cv".into(), seed: 1, out: "a".into(), params: P { n: 2 } };
        let h = c.hash().unwrap();
        c.out = "b".into();
        assert_eq!(c.hash().unwrap(), h);
        c.seed = 2;
        assert_ne!(c.hash().unwrap(), h);
    }
}
