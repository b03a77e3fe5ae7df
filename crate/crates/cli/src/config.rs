//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deco_core::network::{gen_trace, TraceGenParams};
use deco_core::trainer::{AlgoVariant, RunConfig, TaskSpec};
use deco_core::{ConvergenceRegime, NetworkTrace};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the bandwidth/latency trace comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetworkConfig {
    Constant {
        bandwidth_bps: f64,
        latency_s: f64,
    },
    /// CSV file, relative paths resolved against the config file.
    File {
        path: PathBuf,
    },
    Generated(TraceGenParams),
}

/// `train` config: one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Default output directory; `--out` overrides it. Not part of the hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub task: TaskSpec,
    pub run: RunConfig,
    pub network: NetworkConfig,
}

/// Run settings shared by every sweep cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBase {
    pub gamma: f64,
    pub iterations: usize,
    pub t_comp: f64,
    pub grad_bits: f64,
    #[serde(default)]
    pub regime: ConvergenceRegime,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub name: String,
    pub variant: AlgoVariant,
    /// Overrides the shared stepsize for this cell.
    #[serde(default)]
    pub gamma: Option<f64>,
}

/// Loss target: absolute gap `f - f*`, or a fraction of the initial gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Target {
    Gap(f64),
    RelativeGap(f64),
}

/// `sweep` config: a list of cells compared on time-to-target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub task: TaskSpec,
    pub network: NetworkConfig,
    pub base: SweepBase,
    pub target: Target,
    /// Name of the cell that `speedup_vs` is measured against.
    pub baseline: String,
    pub cells: Vec<SweepCell>,
}

/// A parsed config with its resolved trace and identity hash.
pub struct Loaded<C> {
    pub config: C,
    pub trace: NetworkTrace,
    pub hash: String,
    /// SHA-256 of the trace file, when one was read.
    pub trace_sha256: Option<String>,
}

fn check_version(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        bail!("unsupported schema_version {found} (expected {SCHEMA_VERSION})");
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn resolve_network(network: &NetworkConfig, base: &Path) -> Result<(NetworkTrace, Option<String>)> {
    Ok(match network {
        NetworkConfig::Constant {
            bandwidth_bps,
            latency_s,
        } => (NetworkTrace::constant(*bandwidth_bps, *latency_s)?, None),
        NetworkConfig::File { path } => {
            let path = base.join(path);
            let bytes = fs::read(&path).with_context(|| format!("reading trace {}", path.display()))?;
            let trace = NetworkTrace::read_csv(bytes.as_slice())
                .with_context(|| format!("parsing trace {}", path.display()))?;
            (trace, Some(sha256_hex(&bytes)))
        }
        NetworkConfig::Generated(p) => (gen_trace(p)?, None),
    })
}

/// Hash of the canonical JSON form, plus the trace file contents if any.
fn config_hash<C: Serialize>(config: &C, trace_sha256: Option<&str>) -> Result<String> {
    let mut canonical = serde_json::to_vec(config)?;
    if let Some(sha) = trace_sha256 {
        canonical.extend_from_slice(sha.as_bytes());
    }
    Ok(sha256_hex(&canonical))
}

fn read_toml<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<C> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn parent(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

pub fn load_experiment(path: &Path) -> Result<Loaded<ExperimentConfig>> {
    let config: ExperimentConfig = read_toml(path)?;
    check_version(config.schema_version)?;
    config.task.validate()?;
    config.run.validate()?;
    let (trace, trace_sha256) = resolve_network(&config.network, parent(path))?;
    let hash = config_hash(&config, trace_sha256.as_deref())?;
    Ok(Loaded {
        config,
        trace,
        hash,
        trace_sha256,
    })
}

pub fn load_sweep(path: &Path) -> Result<Loaded<SweepConfig>> {
    let config: SweepConfig = read_toml(path)?;
    check_version(config.schema_version)?;
    config.task.validate()?;
    if config.cells.is_empty() {
        bail!("sweep has no cells");
    }
    for (i, cell) in config.cells.iter().enumerate() {
        if config.cells[..i].iter().any(|c| c.name == cell.name) {
            bail!("duplicate cell name {:?}", cell.name);
        }
        cell.variant.validate()?;
    }
    if !config.cells.iter().any(|c| c.name == config.baseline) {
        bail!("baseline {:?} is not one of the cells", config.baseline);
    }
    match config.target {
        Target::Gap(g) | Target::RelativeGap(g) if g.is_finite() && g > 0.0 => {}
        _ => bail!("target must be finite and > 0"),
    }
    let (trace, trace_sha256) = resolve_network(&config.network, parent(path))?;
    let hash = config_hash(&config, trace_sha256.as_deref())?;
    Ok(Loaded {
        config,
        trace,
        hash,
        trace_sha256,
    })
}

/// Short form of the hash used in file names.
pub fn short(hash: &str) -> &str {
    &hash[..12]
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
schema_version = 1

[task]
kind = "quadratic"
dim = 10
workers = 2
heterogeneity = 0.5
noise = 0.1
seed = 1

[run]
gamma = 0.01
iterations = 20
t_comp = 0.1
grad_bits = 1e8
seed = 3
variant = { kind = "dd-ef-sgd", tau = 2, delta = 0.25 }

[network]
source = "constant"
bandwidth_bps = 1e8
latency_s = 0.1
"#;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("exp.toml");
        fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn parses_and_hashes_stably() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), EXAMPLE);
        let a = load_experiment(&path).unwrap();
        let b = load_experiment(&path).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.config.run.variant, AlgoVariant::DdEfSgd { tau: 2, delta: 0.25 });

        let changed = write(dir.path(), &EXAMPLE.replace("gamma = 0.01", "gamma = 0.02"));
        assert_ne!(load_experiment(&changed).unwrap().hash, a.hash);
    }

    #[test]
    fn output_dir_does_not_change_hash() {
        let dir = tempfile::tempdir().unwrap();
        let plain = load_experiment(&write(dir.path(), EXAMPLE)).unwrap().hash;
        let with_out = format!("output_dir = \"somewhere\"\n{EXAMPLE}");
        assert_eq!(load_experiment(&write(dir.path(), &with_out)).unwrap().hash, plain);
    }

    #[test]
    fn rejects_schema_violations() {
        let dir = tempfile::tempdir().unwrap();
        for bad in [
            EXAMPLE.replace("schema_version = 1", "schema_version = 2"),
            EXAMPLE.replace("seed = 1", "seed = 1\ncolour = 3"),
            EXAMPLE.replace("gamma = 0.01", "gamma = -1.0"),
            EXAMPLE.replace("delta = 0.25", "delta = 0.0"),
            EXAMPLE.replace("workers = 2", "workers = 0"),
        ] {
            assert!(load_experiment(&write(dir.path(), &bad)).is_err(), "{bad}");
        }
    }

    #[test]
    fn trace_file_contents_enter_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let text = EXAMPLE.replace(
            "source = \"constant\"\nbandwidth_bps = 1e8\nlatency_s = 0.1",
            "source = \"file\"\npath = \"trace.csv\"",
        );
        let path = write(dir.path(), &text);
        fs::write(
            dir.path().join("trace.csv"),
            "time_s,bandwidth_bps,latency_s\n0,1e8,0.1\n",
        )
        .unwrap();
        let first = load_experiment(&path).unwrap();
        assert!(first.trace_sha256.is_some());
        fs::write(
            dir.path().join("trace.csv"),
            "time_s,bandwidth_bps,latency_s\n0,2e8,0.1\n",
        )
        .unwrap();
        assert_ne!(load_experiment(&path).unwrap().hash, first.hash);
    }
}
