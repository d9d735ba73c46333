//! Run artefacts: CSV tables, flat binary snapshots with JSON sidecars, plot
//! scripts, and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "yukawa-run/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One written file and its content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artefact {
    pub path: String,
    pub sha256: String,
}

/// Per-window Picard log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub start: usize,
    pub len: usize,
    pub iterations: usize,
    pub ratio: f64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub artefacts: Vec<Artefact>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blow_up_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Collects artefacts written into one output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    artefacts: Vec<Artefact>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), artefacts: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artefacts(&self) -> &[Artefact] {
        &self.artefacts
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes)?;
        self.artefacts.push(Artefact { path: name.into(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    /// Writes a CSV table with the given header.
    pub fn write_csv<R: AsRef<[String]>>(&mut self, name: &str, header: &[&str], rows: &[R]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.as_ref())?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.write_bytes(name, &bytes)
    }

    /// Little-endian `f64` array plus `<name>.json` describing its shape.
    pub fn write_binary(&mut self, name: &str, shape: &[usize], fields: &[&str], data: &[f64]) -> Result<PathBuf, CliError> {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = self.write_bytes(name, &bytes)?;
        let sidecar = serde_json::json!({
            "schema": "yukawa-snapshot/1",
            "dtype": "f64-le",
            "shape": shape,
            "fields": fields,
            "sha256": sha256_hex(&bytes),
        });
        self.write_bytes(&format!("{name}.json"), serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
        Ok(path)
    }

    /// A gnuplot script plotting columns of a CSV file written earlier.
    pub fn write_plot(&mut self, name: &str, csv: &str, x: usize, ys: &[(usize, &str)], logscale: &str) -> Result<PathBuf, CliError> {
        let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\n");
        if !logscale.is_empty() {
            s.push_str(&format!("set logscale {logscale}\n"));
        }
        let series: Vec<String> = ys.iter().map(|(c, t)| format!("'{csv}' using {x}:{c} with linespoints title '{t}'")).collect();
        s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
        self.write_bytes(name, s.as_bytes())
    }

    /// Writes `manifest.json` listing every artefact written so far.
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest, CliError> {
        manifest.artefacts = self.artefacts;
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.root.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Manifest {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            seeds: config.seeds.clone(),
            artefacts: Vec::new(),
            windows: Vec::new(),
            blow_up_time: None,
            notes: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(CliError::Config(format!("unsupported manifest schema {}", m.schema)));
        }
        Ok(m)
    }

    /// Hash over all artefact hashes, in order.
    pub fn digest(&self) -> String {
        let joined: String = self.artefacts.iter().map(|a| format!("{}={}\n", a.path, a.sha256)).collect();
        sha256_hex(joined.as_bytes())
    }
}

/// Formats a float so that CSV output is stable across runs.
pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
