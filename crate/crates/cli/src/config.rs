//! Run settings merged from flags, an optional TOML file and defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ems_core::cts::CtsOptions;
use ems_core::pipeline::PipelineConfig;
use ems_core::sced::{ReserveRule, ScedConfig, Variant};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Case file (.m MATPOWER or .json native)
    #[arg(long)]
    pub case: PathBuf,
    /// TOML file with run settings; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Network formulation: m1 to m5
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Base-case modeling threshold, percent of normal rating
    #[arg(long)]
    pub pct: Option<f64>,
    /// Post-contingency modeling threshold, percent of emergency rating
    #[arg(long)]
    pub pctc: Option<f64>,
    /// Switching rank whose reduction sets the pseudo limits
    #[arg(long)]
    pub cts_rank: Option<usize>,
    /// Switching actions kept per contingency
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Keep only this many switching candidates after a DC estimate
    #[arg(long)]
    pub prescreen: Option<usize>,
    /// Reserve requirement: "largest", MW ("250") or percent of load ("5%")
    #[arg(long)]
    pub reserve: Option<ReserveRule>,
    /// Dispatch interval in minutes
    #[arg(long)]
    pub interval: Option<f64>,
    /// Directory for report, summary and CSV files
    #[arg(long, env = "EMS_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Format written to standard output
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Keys accepted in the TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub variant: Option<Variant>,
    pub pct: Option<f64>,
    pub pctc: Option<f64>,
    pub cts_rank: Option<usize>,
    pub top_k: Option<usize>,
    pub prescreen: Option<usize>,
    pub reserve: Option<String>,
    pub interval: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case_path: PathBuf,
    pub pipeline: PipelineConfig,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, String> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let file_reserve = match &file.reserve {
            Some(r) => Some(r.parse::<ReserveRule>().map_err(|e| format!("reserve: {e}"))?),
            None => None,
        };
        let d = ScedConfig::default();
        let c = CtsOptions::default();
        let sced = ScedConfig {
            variant: self.variant.or(file.variant).unwrap_or(d.variant),
            pct: self.pct.or(file.pct).unwrap_or(d.pct),
            pctc: self.pctc.or(file.pctc).unwrap_or(d.pctc),
            interval_minutes: self.interval.or(file.interval).unwrap_or(d.interval_minutes),
            reserve: self.reserve.clone().or(file_reserve).unwrap_or(d.reserve),
            use_pseudo_limits: d.use_pseudo_limits,
            cts_rank: self.cts_rank.or(file.cts_rank).unwrap_or(d.cts_rank),
        };
        sced.validate().map_err(|e| e.to_string())?;
        let cts = CtsOptions {
            top_k: self.top_k.or(file.top_k).unwrap_or(c.top_k),
            prescreen: self.prescreen.or(file.prescreen).or(c.prescreen),
        };
        if cts.top_k == 0 {
            return Err("top-k must be at least 1".into());
        }
        Ok(RunConfig {
            case_path: self.case.clone(),
            pipeline: PipelineConfig { sced, cts },
            out_dir: self.out_dir.clone().or(file.out_dir),
            format: self.format.or(file.format).unwrap_or(Format::Text),
        })
    }
}
