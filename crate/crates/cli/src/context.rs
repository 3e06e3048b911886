use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;
use serde_json::Value;

use dualspace_core::config::Config;

use crate::GlobalArgs;

/// Resolved run settings shared by every subcommand.
pub struct Context {
    pub root: PathBuf,
    pub out: PathBuf,
    pub dry_run: bool,
    pub config: Config,
    pub config_file: Option<PathBuf>,
}

/// Result of a subcommand that ran to completion; any `errors` give a
/// nonzero exit.
#[derive(Debug, Default)]
pub struct Outcome {
    pub errors: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    root: String,
    config_file: Option<String>,
    dry_run: bool,
    config: &'a Config,
    parameters: Value,
    outputs: &'a [String],
    summary: Value,
    errors: &'a [String],
}

impl Context {
    pub fn new(args: &GlobalArgs) -> Result<Self> {
        let mut config = match &args.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(w) = args.workers {
            config.run.workers = w;
        }
        if let Some(s) = args.seed {
            config.run.seed = s;
        }
        Ok(Context {
            root: args.root.clone(),
            out: args.out.clone(),
            dry_run: args.dry_run,
            config,
            config_file: args.config.clone(),
        })
    }

    pub fn workers(&self) -> usize {
        match self.config.run.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create {}", self.out.display()))?;
        Ok(&self.out)
    }

    /// Writes `name` under the output directory.
    pub fn write_output(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir()?.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Writes `<out>/<command>.manifest.json` echoing the effective config.
    pub fn write_manifest(
        &self,
        command: &str,
        parameters: Value,
        outputs: &[String],
        summary: Value,
        errors: &[String],
    ) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            root: self.root.display().to_string(),
            config_file: self.config_file.as_ref().map(|p| p.display().to_string()),
            dry_run: self.dry_run,
            config: &self.config,
            parameters,
            outputs,
            summary,
            errors,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        self.write_output(&format!("{command}.manifest.json"), &bytes)
    }
}
