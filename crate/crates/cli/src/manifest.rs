use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::{write_json, ConfigError};

pub const FILE_NAME: &str = "manifest.json";

/// What produced an output directory. `argv` is the full invocation with the
/// config path made absolute, so `rerun` can replay it from anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub argv: Vec<String>,
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

impl RunManifest {
    pub fn new(
        command: &str,
        argv: &[String],
        parameters: serde_json::Value,
        config: Option<&Path>,
        out: &Path,
        seed: Option<u64>,
    ) -> Self {
        let mut args = Vec::with_capacity(argv.len());
        let mut it = argv.iter();
        while let Some(a) = it.next() {
            if a == "--config" {
                args.push(a.clone());
                if let Some(v) = it.next() {
                    args.push(absolute(Path::new(v)).display().to_string());
                }
            } else if let Some(v) = a.strip_prefix("--config=") {
                args.push(format!("--config={}", absolute(Path::new(v)).display()));
            } else {
                args.push(a.clone());
            }
        }
        RunManifest {
            command: command.to_string(),
            parameters,
            config_path: config.map(absolute),
            output_dir: absolute(out),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            argv: args,
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_json(&dir.join(FILE_NAME), self)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let path = if path.is_dir() { path.join(FILE_NAME) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
            .map_err(|e| ConfigError(format!("{e:#}")))?)
    }

    /// The recorded invocation writing to `out` instead.
    pub fn replay_argv(&self, out: &Path) -> Vec<String> {
        let mut args = Vec::with_capacity(self.argv.len() + 2);
        let mut it = self.argv.iter();
        while let Some(a) = it.next() {
            if a == "--out" {
                it.next();
            } else if !a.starts_with("--out=") {
                args.push(a.clone());
            }
        }
        args.push("--out".into());
        args.push(out.display().to_string());
        args
    }
}

pub fn rerun(
    manifest: &Path,
    out: Option<&Path>,
    run: fn(Vec<String>) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let m = RunManifest::read(manifest)?;
    if m.command == "rerun" {
        return Err(ConfigError("manifest records a rerun".into()).into());
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| m.output_dir.clone());
    run(m.replay_argv(&out))
}
