//! Optional TOML defaults. Precedence: flags > env > this file > profile.

use std::path::Path;

use serde::Deserialize;

use crate::error::{read_input, CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<String>,
    pub seed: Option<u64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub parallel: Option<bool>,
    pub branch_hidden: Option<usize>,
    pub signature_dim: Option<usize>,
    pub trunk_hidden: Option<[usize; 2]>,
    pub split_ratios: Option<[f64; 3]>,
    pub split_seed: Option<u64>,
    pub cell: Option<usize>,
    pub regime: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let bytes = read_input(path)?;
        let text = String::from_utf8(bytes).map_err(|_| CliError::usage(format!("{} is not UTF-8", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}
