//! Run manifests: the resolved configuration of an artifact-producing
//! command plus SHA-256 hashes of what it read and wrote.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sigfuse::data::SyntheticSpec;
use sigfuse::model::Architecture;
use sigfuse::train::TrainConfig;

use crate::error::{io_out, read_input, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub attrs: PathBuf,
    pub banks: Vec<PathBuf>,
    pub partition: Option<PathBuf>,
    pub split_ratios: [f64; 3],
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub regime: String,
    pub profile: String,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub data: DataSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub model: PathBuf,
    pub split: String,
    pub kinds: Option<Vec<String>>,
    pub data: DataSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbpRun {
    pub images: PathBuf,
    pub cell: usize,
    pub kind: String,
    pub id_suffix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub spec: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Train(TrainRun),
    Eval(EvalRun),
    ExtractLbp(LbpRun),
    Synth(SynthRun),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub config: RunConfig,
    /// Path -> SHA-256 of every input read.
    pub inputs: BTreeMap<String, String>,
    /// File name -> SHA-256 of every artifact written.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Records inputs as they are read so the manifest can list them.
#[derive(Debug, Default)]
pub struct Inputs(pub BTreeMap<String, String>);

impl Inputs {
    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = read_input(path)?;
        self.0.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }
}

impl RunManifest {
    pub fn new(config: RunConfig, started: String, inputs: Inputs) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: String::new(),
            config,
            inputs: inputs.0,
            outputs: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_input(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("manifest {}: {e}", path.display())))
    }

    /// Errors if any input recorded here now hashes differently.
    pub fn check_inputs(&self, now: &Inputs) -> CliResult<()> {
        for (path, hash) in &self.inputs {
            match now.0.get(path) {
                Some(h) if h == hash => {}
                Some(_) => return Err(CliError::data(format!("input {path} changed since the manifest was written"))),
                None => return Err(CliError::data(format!("input {path} from the manifest was not read"))),
            }
        }
        Ok(())
    }

    pub fn output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn write(mut self, path: &Path) -> CliResult<()> {
        self.finished = now();
        let mut text = serde_json::to_string_pretty(&self).map_err(|e| CliError::runtime(e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp~");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| io_out(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| io_out(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_out(path, e))
}
