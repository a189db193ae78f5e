//! Flat key-value run configuration.
//!
//! A config file holds one `key = value` pair per line, `#` starts a comment.
//! Keys use the same spelling as the long command-line flags (dashes, e.g.
//! `hidden-layers = 2`). Precedence: explicit flag > config file > built-in
//! default.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default)]
pub struct RunConfig {
    values: HashMap<String, String>,
    path: Option<PathBuf>,
}

impl RunConfig {
    /// Loads a config file, or returns an empty config when `path` is None.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, got `{raw}`",
                    path.display(),
                    lineno + 1
                );
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                bail!("{}:{}: empty key", path.display(), lineno + 1);
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("{}:{}: duplicate key `{key}`", path.display(), lineno + 1);
            }
        }
        Ok(Self {
            values,
            path: Some(path.to_path_buf()),
        })
    }

    /// Flag value if given, else the config-file value, else the default.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw.parse().map_err(|e| {
                anyhow::anyhow!(
                    "{}: key `{key}`: cannot parse `{raw}`: {e}",
                    self.path.as_deref().unwrap_or(Path::new("<config>")).display()
                )
            }),
            None => Ok(default),
        }
    }

    /// Flag value if given, else the config-file value, else None.
    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(Some(v));
        }
        match self.values.get(key) {
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                anyhow::anyhow!(
                    "{}: key `{key}`: cannot parse `{raw}`: {e}",
                    self.path.as_deref().unwrap_or(Path::new("<config>")).display()
                )
            }),
            None => Ok(None),
        }
    }
}

/// Where output files land when a command's output flag is omitted: the
/// `URPH_OUT_DIR` environment variable if set, else the working directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os("URPH_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Output path resolution: an explicit path wins; otherwise `name` inside
/// the default output directory.
pub fn out_path(explicit: Option<PathBuf>, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| default_out_dir().join(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parses_values_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            "# run settings\nbits = 64\n\nhidden-layers=2  # inline comment\nspread = 0.25\n",
        );
        let cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.resolve::<u32>(None, "bits", 128).unwrap(), 64);
        assert_eq!(cfg.resolve::<u8>(None, "hidden-layers", 1).unwrap(), 2);
        assert_eq!(cfg.resolve::<f64>(None, "spread", 0.1).unwrap(), 0.25);
    }

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "bits = 64\n");
        let cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.resolve(Some(256u32), "bits", 128).unwrap(), 256);
        assert_eq!(cfg.resolve::<u32>(None, "bits", 128).unwrap(), 64);
        assert_eq!(cfg.resolve::<u32>(None, "seed", 7).unwrap(), 7);
    }

    #[test]
    fn rejects_malformed_lines_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write_config(dir.path(), "bits 64\n");
        assert!(RunConfig::load(Some(&bad)).is_err());
        let dup = write_config(dir.path(), "bits = 1\nbits = 2\n");
        assert!(RunConfig::load(Some(&dup)).is_err());
    }

    #[test]
    fn bad_value_names_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "bits = lots\n");
        let cfg = RunConfig::load(Some(&path)).unwrap();
        let err = cfg.resolve::<u32>(None, "bits", 128).unwrap_err();
        assert!(err.to_string().contains("bits"), "{err}");
    }
}
