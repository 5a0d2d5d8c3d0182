use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

/// Output directory; every file is written to a temporary name and renamed into place.
pub struct Output {
    pub dir: PathBuf,
    pub config_hash: String,
    pub model_hash: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    model_hash: &'a str,
    result: &'a T,
}

impl Output {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let target = self.path(name);
        atomic_write(&target, bytes).map_err(|e| Failure::io(format!("writing {}: {e}", target.display())))?;
        Ok(target)
    }

    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> nkg_core::Result<()>,
    ) -> Result<PathBuf, Failure> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| Failure::io(format!("formatting {name}: {e}")))?;
        self.write_bytes(name, &buf)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, command: &str, result: &T) -> Result<PathBuf, Failure> {
        let env = Envelope { command, config_hash: &self.config_hash, model_hash: &self.model_hash, result };
        let mut s = serde_json::to_string_pretty(&env).map_err(|e| Failure::io(e.to_string()))?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }
}

fn atomic_write(target: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = target.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, target)
}

/// σ formatted for file names.
pub fn tag(sigma: f64) -> String {
    format!("{sigma}").replace('-', "m")
}
