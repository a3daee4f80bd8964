use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// On-disk run configuration. Relative paths resolve against the config
/// file's directory; command-line flags override every field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub scores: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub protocols: Vec<String>,
    #[serde(default)]
    pub tasks: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub helper_sweep: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "{}: schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                path.display(),
                cfg.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scores, &mut cfg.features, &mut cfg.meta, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved settings of one `evaluate` or `explain` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scores: PathBuf,
    pub features: PathBuf,
    pub meta: Option<PathBuf>,
    pub models: Vec<String>,
    pub protocols: Vec<String>,
    pub tasks: Vec<String>,
    pub seed: u64,
    pub out: PathBuf,
    pub helper_sweep: bool,
}

/// Settings that determine results, with input files identified by content
/// rather than location.
#[derive(Serialize)]
struct HashedConfig<'a> {
    schema_version: u32,
    command: &'a str,
    models: &'a [String],
    protocols: &'a [String],
    tasks: &'a [String],
    seed: u64,
    helper_sweep: bool,
    extra: &'a [(String, String)],
    inputs: Vec<String>,
}

impl RunConfig {
    pub fn check_paths(&self) -> Result<(), CliError> {
        for p in [Some(&self.scores), Some(&self.features), self.meta.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::Input(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 over the result-relevant settings and the input file bytes.
    pub fn hash(&self, command: &str, extra: &[(String, String)]) -> Result<String, CliError> {
        let files: Vec<&Path> = [Some(&self.scores), Some(&self.features), self.meta.as_ref()]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .collect();
        let inputs = file_digests(&files)?;
        let canon = HashedConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            command,
            models: &self.models,
            protocols: &self.protocols,
            tasks: &self.tasks,
            seed: self.seed,
            helper_sweep: self.helper_sweep,
            extra,
            inputs,
        };
        Ok(digest_json(&canon))
    }
}

/// Hex SHA-256 of each file's bytes.
pub(crate) fn file_digests(files: &[&Path]) -> Result<Vec<String>, CliError> {
    files
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            Ok(hex::encode(Sha256::digest(&bytes)))
        })
        .collect()
}

pub(crate) fn digest_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("settings serialize");
    hex::encode(Sha256::digest(&json))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_config(dir: &Path) -> RunConfig {
        fs::write(dir.join("s.csv"), "a").unwrap();
        fs::write(dir.join("f.csv"), "b").unwrap();
        RunConfig {
            scores: dir.join("s.csv"),
            features: dir.join("f.csv"),
            meta: None,
            models: vec!["awt".into()],
            protocols: vec!["lolo".into()],
            tasks: vec![],
            seed: 0,
            out: dir.join("out"),
            helper_sweep: false,
        }
    }

    #[test]
    fn hash_tracks_content_not_location() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (ca, cb) = (run_config(a.path()), run_config(b.path()));
        assert_eq!(ca.hash("evaluate", &[]).unwrap(), cb.hash("evaluate", &[]).unwrap());
        fs::write(b.path().join("f.csv"), "c").unwrap();
        assert_ne!(ca.hash("evaluate", &[]).unwrap(), cb.hash("evaluate", &[]).unwrap());
        let mut seeded = ca.clone();
        seeded.seed = 1;
        assert_ne!(ca.hash("evaluate", &[]).unwrap(), seeded.hash("evaluate", &[]).unwrap());
    }

    #[test]
    fn config_file_paths_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "schema_version = 1\nscores = \"s.csv\"\nmodels = [\"awt\", \"lasso:lambda=0.1\"]\nseed = 7\n").unwrap();
        let c = ConfigFile::load(&p).unwrap();
        assert_eq!(c.scores.unwrap(), dir.path().join("s.csv"));
        assert_eq!(c.models.len(), 2);
        assert_eq!(c.seed, Some(7));
        fs::write(&p, "schema_version = 2\n").unwrap();
        assert!(ConfigFile::load(&p).is_err());
        fs::write(&p, "schema_version = 1\nunknown = 3\n").unwrap();
        assert!(ConfigFile::load(&p).is_err());
    }
}
