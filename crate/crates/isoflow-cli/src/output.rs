//! Run outputs: the manifest tying artifacts to the exact config hash, and
//! the JSON-lines mirror of numeric results on stdout.

use crate::error::CliError;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Collects output files for one run and writes `manifest.json` at the end.
pub struct RunOutput {
    dir: PathBuf,
    command: &'static str,
    config_hash: String,
    seed: u64,
    outputs: Vec<String>,
}

impl RunOutput {
    pub fn new(dir: &Path, command: &'static str, config_bytes: &[u8], seed: u64) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut hasher = Sha256::new();
        hasher.update(config_bytes);
        let config_hash = format!("{:x}", hasher.finalize());
        emit(&json!({ "event": "start", "command": command, "config_hash": config_hash, "seed": seed }));
        Ok(Self { dir: dir.to_path_buf(), command, config_hash, seed, outputs: Vec::new() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    /// Writes a file through a writer closure and records it.
    pub fn write_file<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<(), CliError>,
    {
        let path = self.path(name);
        let file = std::fs::File::create(&path)?;
        let mut w = std::io::BufWriter::new(file);
        write(&mut w)?;
        use std::io::Write;
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        self.write_file(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)
                .map_err(|e| CliError::Other(e.to_string()))?;
            use std::io::Write;
            writeln!(w).map_err(CliError::from)
        })
    }

    /// Writes the manifest listing every produced file and the config hash.
    pub fn finish(mut self, result: &Value) -> Result<(), CliError> {
        emit(&json!({ "event": "result", "command": self.command, "metrics": result }));
        let manifest = json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "outputs": self.outputs,
        });
        let path = self.dir.join("manifest.json");
        self.outputs.push("manifest.json".into());
        std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&manifest).unwrap()))?;
        Ok(())
    }
}

/// One JSON line on stdout.
pub fn emit(value: &Value) {
    println!("{value}");
}

/// Per-iteration mirror, throttled by the caller.
pub fn emit_iteration(step: usize, loss: f64, grad_norm: f64, evals: usize) {
    emit(&json!({ "event": "iter", "step": step, "loss": loss, "grad_norm": grad_norm, "evals": evals }));
}
