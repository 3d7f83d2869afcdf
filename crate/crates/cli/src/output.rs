//! Artifact writing. Every file a run writes gets a `<name>.manifest.json`
//! next to it describing how it was produced.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use propwatch_core::corpus::{corpus_hash, Corpus};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    pub corpus_hash: Option<String>,
    pub tool_version: String,
    /// The only field that differs between identical runs.
    pub created_at: String,
}

pub struct Run {
    manifest: RunManifest,
    out: PathBuf,
}

impl Run {
    pub fn new(subcommand: &str, config: Option<&Path>, out: &Path, seed: u64) -> CliResult<Self> {
        fs::create_dir_all(out)
            .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(Self {
            manifest: RunManifest {
                subcommand: subcommand.into(),
                config: config.map(Path::to_path_buf),
                inputs: Vec::new(),
                outputs: Vec::new(),
                seed,
                corpus_hash: None,
                tool_version: env!("CARGO_PKG_VERSION").into(),
                created_at: String::new(),
            },
            out: out.to_path_buf(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        if !self.manifest.inputs.iter().any(|p| p == path) {
            self.manifest.inputs.push(path.to_path_buf());
        }
    }

    pub fn corpus(&mut self, corpus: &Corpus) {
        self.manifest.corpus_hash = Some(corpus_hash(corpus));
    }

    /// Registers an output and returns where to write it.
    pub fn output(&mut self, name: &str) -> CliResult<PathBuf> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        }
        if !self.manifest.outputs.contains(&path) {
            self.manifest.outputs.push(path.clone());
        }
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.output(name)?;
        fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes one manifest per output.
    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.manifest.outputs.sort();
        self.manifest.created_at = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        for out in &self.manifest.outputs {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            let path = out.with_file_name(name);
            fs::write(&path, &text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        }
        for out in &self.manifest.outputs {
            log::info!("wrote {}", out.display());
        }
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_output_gets_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::new("synth", None, dir.path(), 7).unwrap();
        run.write_text("a.txt", "x").unwrap();
        run.write_json("sub/b.json", &[1, 2]).unwrap();
        let m = run.finish().unwrap();
        assert_eq!(m.outputs.len(), 2);
        for name in ["a.txt.manifest.json", "sub/b.json.manifest.json"] {
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(name)).unwrap()).unwrap();
            assert_eq!(v["seed"], 7);
            assert_eq!(v["subcommand"], "synth");
        }
    }
}
