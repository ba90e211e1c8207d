//! Run manifests: enough to re-run a command and get the same files back.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use svyel::report::KvReport;
use svyel::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub args: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: PathBuf,
    pub config: Vec<(String, String)>,
    pub seeds: Vec<(String, u64)>,
    pub version: String,
    pub started_unix: u64,
    pub elapsed: Duration,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String]) -> Self {
        RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            cwd: std::env::current_dir().unwrap_or_default(),
            config: Vec::new(),
            seeds: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            elapsed: Duration::ZERO,
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    pub fn seed(&mut self, key: &str, value: u64) -> &mut Self {
        self.seeds.push((key.to_string(), value));
        self
    }

    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        kv.push("command", &self.command);
        kv.push("version", &self.version);
        kv.push("cwd", self.cwd.display());
        for (i, a) in self.args.iter().enumerate() {
            kv.push(&format!("arg.{i}"), a);
        }
        for (k, v) in &self.config {
            kv.push(&format!("config.{k}"), v);
        }
        for (k, v) in &self.seeds {
            kv.push(&format!("seed.{k}"), v);
        }
        kv.push("started_unix", self.started_unix);
        kv.push("elapsed_ms", self.elapsed.as_millis());
        kv
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.to_kv().write(dir.join(MANIFEST_NAME))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let kv = KvReport::parse(&text);
        let command = kv.get("command").ok_or_else(|| Error::Validation("manifest has no command".into()))?;
        let mut args = Vec::new();
        while let Some(a) = kv.get(&format!("arg.{}", args.len())) {
            args.push(a.to_string());
        }
        if args.is_empty() {
            return Err(Error::Validation("manifest has no arguments".into()));
        }
        let mut m = RunManifest::new(command, &args);
        m.cwd = kv.get("cwd").map(PathBuf::from).unwrap_or_default();
        m.version = kv.get("version").unwrap_or_default().to_string();
        for (k, v) in kv.entries() {
            if let Some(c) = k.strip_prefix("config.") {
                m.config.push((c.to_string(), v.clone()));
            } else if let Some(s) = k.strip_prefix("seed.") {
                let v = v.parse().map_err(|_| Error::Validation(format!("manifest seed {s}: {v}")))?;
                m.seeds.push((s.to_string(), v));
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("test", &["test".into(), "--data".into(), "a b.csv".into()]);
        m.config("alpha", 0.05).seed("mc", 7);
        m.write(dir.path()).unwrap();
        let r = RunManifest::read(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(r.args, m.args);
        assert_eq!(r.config, m.config);
        assert_eq!(r.seeds, m.seeds);
    }
}
