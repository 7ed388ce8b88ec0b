use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sqvdc_core::arith::Precision;
use sqvdc_core::construct::DEFAULT_TERM_CAP;
use sqvdc_core::expsum::DEFAULT_C1;
use sqvdc_core::modular::EXHAUSTIVE_THRESHOLD;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "SQVDC_CONFIG";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub precision: u32,
    pub grid: u64,
    pub c1: f64,
    pub format: Format,
    pub max_terms: u64,
    pub max_subset_n: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            precision: Precision::DEFAULT.bits(),
            grid: 1 << 13,
            c1: DEFAULT_C1,
            format: Format::Json,
            max_terms: DEFAULT_TERM_CAP,
            max_subset_n: EXHAUSTIVE_THRESHOLD,
            seed: 0x5eed,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.precision < Precision::MIN_BITS {
            bail!("precision must be at least {} bits, got {}", Precision::MIN_BITS, self.precision);
        }
        if self.grid < 2 {
            bail!("grid size must be at least 2, got {}", self.grid);
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            bail!("c1 must be positive, got {}", self.c1);
        }
        Ok(())
    }

    pub fn precision(&self) -> Precision {
        Precision::new(self.precision).expect("validated")
    }
}
