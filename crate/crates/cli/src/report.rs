//! Run summaries: `<out>.summary.json` holds everything deterministic
//! (inputs, parameters, residuals, outputs), `<out>.timing.json` the rest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use romkit_core::{io, Result};
use serde_json::{json, Map, Value};

pub struct Report {
    command: &'static str,
    threads: Option<String>,
    inputs: Vec<Value>,
    params: Map<String, Value>,
    residuals: Map<String, Value>,
    outputs: Vec<String>,
    started: Instant,
}

impl Report {
    pub fn new(command: &'static str, threads: Option<String>) -> Self {
        Report {
            command,
            threads,
            inputs: Vec::new(),
            params: Map::new(),
            residuals: Map::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        let bytes = std::fs::metadata(path).map(|m| m.len()).ok();
        self.inputs.push(json!({ "path": path.display().to_string(), "bytes": bytes }));
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.params.insert(key.to_owned(), value.into());
    }

    pub fn residual(&mut self, key: &str, value: impl Into<Value>) {
        self.residuals.insert(key.to_owned(), value.into());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn summary_path(primary: &Path) -> PathBuf {
        suffixed(primary, ".summary.json")
    }

    pub fn timing_path(primary: &Path) -> PathBuf {
        suffixed(primary, ".timing.json")
    }

    /// Writes both files next to `primary`.
    pub fn finish(self, primary: &Path) -> Result<()> {
        let elapsed = self.started.elapsed().as_secs_f64();
        let timing_path = Report::timing_path(primary);
        let summary = json!({
            "command": self.command,
            "inputs": self.inputs,
            "parameters": self.params,
            "residuals": self.residuals,
            "outputs": self.outputs,
            "romkit_threads": self.threads,
            "timing_file": timing_path.display().to_string(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        write_json(&Report::summary_path(primary), &summary)?;
        let timing = json!({
            "command": self.command,
            "elapsed_seconds": elapsed,
            "worker_threads": rayon::current_num_threads(),
        });
        write_json(&timing_path, &timing)
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    io::atomic_write(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
}

/// JSON has no NaN/Inf; such values are written as strings.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

pub fn nums(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(num).collect())
}
