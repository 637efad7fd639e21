//! Line-oriented `key = value` experiment configuration with
//! `[sampler.NAME]` sections.

use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

pub const TOP_KEYS: &[&str] = &[
    "dataset",
    "n",
    "d",
    "csv_path",
    "has_weights",
    "pca_dim",
    "subsample",
    "rescale",
    "rescale_margin",
    "k",
    "query_batch",
    "repeats",
    "quantile",
    "m_grid",
    "seed",
    "outdir",
    "fixed_query_batch",
];

pub const SAMPLER_KEYS: &[&str] = &["h"];

/// Default bandwidth grid used when a Gaussian fixed-size sampler section
/// gives no `h`. The upper end stays where the likelihood spectrum keeps
/// its first few hundred eigenvalues above the f64 noise floor; larger
/// bandwidths make the fixed-size sampler numerically meaningless at
/// m in the hundreds.
pub const DEFAULT_BANDWIDTH_GRID: [f64; 5] = [0.05, 0.075, 0.1, 0.125, 0.15];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Uniform { n: usize, d: usize },
    Trimodal { n: usize, d: usize },
    Csv { path: PathBuf, has_weights: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Uniform,
    Sensitivity,
    GaussianMdpp,
    Ope,
    Vdm,
    Stratified,
}

impl SamplerKind {
    pub fn parse(name: &str) -> Result<SamplerKind> {
        match name {
            "uniform" => Ok(SamplerKind::Uniform),
            "sensitivity" => Ok(SamplerKind::Sensitivity),
            "G-mDPP" => Ok(SamplerKind::GaussianMdpp),
            "OPE" => Ok(SamplerKind::Ope),
            "Vdm-DPP" => Ok(SamplerKind::Vdm),
            "stratified" => Ok(SamplerKind::Stratified),
            other => Err(Error::Config(format!(
                "unknown sampler {other:?}; valid samplers: uniform, sensitivity, G-mDPP, OPE, Vdm-DPP, stratified"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::Sensitivity => "sensitivity",
            SamplerKind::GaussianMdpp => "G-mDPP",
            SamplerKind::Ope => "OPE",
            SamplerKind::Vdm => "Vdm-DPP",
            SamplerKind::Stratified => "stratified",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    /// Gaussian likelihood bandwidth, fixed-size sampler only.
    pub bandwidth: Option<f64>,
}

impl SamplerSpec {
    pub fn tag(&self) -> String {
        match self.bandwidth {
            Some(h) => format!("{}(h={h})", self.kind.name()),
            None => self.kind.name().to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub pca_dim: Option<usize>,
    pub subsample: Option<usize>,
    pub rescale: bool,
    pub rescale_margin: f64,
    /// k-means query size.
    pub k: usize,
    /// Queries per batch.
    pub query_batch: usize,
    /// Coresets per (sampler, m) cell.
    pub repeats: usize,
    pub quantile: f64,
    pub m_grid: Vec<usize>,
    pub samplers: Vec<SamplerSpec>,
    pub seed: u64,
    pub outdir: Option<PathBuf>,
    /// Share one query batch across all repeats instead of redrawing.
    pub fixed_query_batch: bool,
    /// Print per-cell progress to stderr.
    pub progress: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::Uniform { n: 1024, d: 2 },
            pca_dim: None,
            subsample: None,
            rescale: true,
            rescale_margin: crate::data::DEFAULT_RESCALE_MARGIN,
            k: 3,
            query_batch: 100,
            repeats: 100,
            quantile: 0.9,
            m_grid: vec![16, 32, 64, 128, 256],
            samplers: Vec::new(),
            seed: 0,
            outdir: None,
            fixed_query_batch: false,
            progress: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let mut dataset_name = String::from("uniform");
        let mut n = 1024usize;
        let mut d = 2usize;
        let mut csv_path: Option<PathBuf> = None;
        let mut has_weights = false;
        let mut current_sampler: Option<SamplerSpec> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(section) = line.strip_prefix('[') {
                let section = section.strip_suffix(']').ok_or_else(|| {
                    Error::Config(format!("line {}: unterminated section", lineno + 1))
                })?;
                if let Some(spec) = current_sampler.take() {
                    cfg.samplers.push(spec);
                }
                let name = section.strip_prefix("sampler.").ok_or_else(|| {
                    Error::Config(format!(
                        "line {}: unknown section [{section}]; only [sampler.NAME] sections are valid",
                        lineno + 1
                    ))
                })?;
                current_sampler = Some(SamplerSpec {
                    kind: SamplerKind::parse(name)?,
                    bandwidth: None,
                });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if let Some(spec) = current_sampler.as_mut() {
                match key {
                    "h" => {
                        spec.bandwidth = Some(parse_num(value, key, lineno)?);
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "line {}: unknown sampler key {other:?}; valid keys: {}",
                            lineno + 1,
                            SAMPLER_KEYS.join(", ")
                        )))
                    }
                }
                continue;
            }
            match key {
                "dataset" => dataset_name = value.to_string(),
                "n" => n = parse_num(value, key, lineno)?,
                "d" => d = parse_num(value, key, lineno)?,
                "csv_path" => csv_path = Some(PathBuf::from(value)),
                "has_weights" => has_weights = parse_bool(value, key, lineno)?,
                "pca_dim" => cfg.pca_dim = Some(parse_num(value, key, lineno)?),
                "subsample" => cfg.subsample = Some(parse_num(value, key, lineno)?),
                "rescale" => cfg.rescale = parse_bool(value, key, lineno)?,
                "rescale_margin" => cfg.rescale_margin = parse_num(value, key, lineno)?,
                "k" => cfg.k = parse_num(value, key, lineno)?,
                "query_batch" => cfg.query_batch = parse_num(value, key, lineno)?,
                "repeats" => cfg.repeats = parse_num(value, key, lineno)?,
                "quantile" => cfg.quantile = parse_num(value, key, lineno)?,
                "m_grid" => {
                    cfg.m_grid = value
                        .split(',')
                        .map(|v| parse_num(v.trim(), key, lineno))
                        .collect::<Result<Vec<usize>>>()?;
                }
                "seed" => cfg.seed = parse_num(value, key, lineno)?,
                "outdir" => cfg.outdir = Some(PathBuf::from(value)),
                "fixed_query_batch" => cfg.fixed_query_batch = parse_bool(value, key, lineno)?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}; valid keys: {}",
                        lineno + 1,
                        TOP_KEYS.join(", ")
                    )))
                }
            }
        }
        if let Some(spec) = current_sampler.take() {
            cfg.samplers.push(spec);
        }

        cfg.dataset = match dataset_name.as_str() {
            "uniform" => DatasetSpec::Uniform { n, d },
            "trimodal" => DatasetSpec::Trimodal { n, d },
            "csv" => DatasetSpec::Csv {
                path: csv_path
                    .ok_or_else(|| Error::Config("dataset = csv needs csv_path".into()))?,
                has_weights,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown dataset {other:?}; valid: uniform, trimodal, csv"
                )))
            }
        };

        // A Gaussian fixed-size section without a bandwidth expands to the
        // default sweep grid.
        let mut expanded = Vec::new();
        for spec in cfg.samplers.drain(..) {
            if spec.kind == SamplerKind::GaussianMdpp && spec.bandwidth.is_none() {
                for &h in &DEFAULT_BANDWIDTH_GRID {
                    expanded.push(SamplerSpec {
                        kind: SamplerKind::GaussianMdpp,
                        bandwidth: Some(h),
                    });
                }
            } else {
                expanded.push(spec);
            }
        }
        cfg.samplers = expanded;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.quantile && self.quantile < 1.0) {
            return Err(Error::Config(format!(
                "quantile {} outside (0,1)",
                self.quantile
            )));
        }
        if self.repeats < 2 {
            return Err(Error::Config("repeats must be >= 2".into()));
        }
        if self.m_grid.is_empty() || self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "m_grid must be nonempty and strictly increasing".into(),
            ));
        }
        if self.samplers.is_empty() {
            return Err(Error::Config("at least one [sampler.NAME] section".into()));
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, lineno: usize) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!(
            "line {}: bad value {value:?} for {key}",
            lineno + 1
        ))
    })
}

fn parse_bool(value: &str, key: &str, lineno: usize) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {}: {key} expects true or false, got {value:?}",
            lineno + 1
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# benchmark preset
dataset = uniform
n = 1024
d = 2
k = 3
repeats = 100
quantile = 0.9
m_grid = 16, 32, 64, 128, 256
seed = 7
outdir = out

[sampler.uniform]
[sampler.G-mDPP]
h = 0.2
[sampler.OPE]
";

    #[test]
    fn parse_roundtrip_fields() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.dataset, DatasetSpec::Uniform { n: 1024, d: 2 });
        assert_eq!(cfg.m_grid, vec![16, 32, 64, 128, 256]);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.samplers.len(), 3);
        assert_eq!(cfg.samplers[1].bandwidth, Some(0.2));
        assert_eq!(cfg.samplers[1].tag(), "G-mDPP(h=0.2)");
    }

    #[test]
    fn unknown_keys_list_valid_ones() {
        let err = ExperimentConfig::parse("bogus = 1\n[sampler.uniform]\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"));
        assert!(msg.contains("m_grid"));

        let err =
            ExperimentConfig::parse("[sampler.uniform]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains('h'));
    }

    #[test]
    fn bandwidthless_gaussian_section_expands_to_sweep() {
        let cfg = ExperimentConfig::parse("m_grid = 4, 16\n[sampler.G-mDPP]\n").unwrap();
        assert_eq!(cfg.samplers.len(), DEFAULT_BANDWIDTH_GRID.len());
        assert_eq!(cfg.samplers[0].bandwidth, Some(0.05));
    }

    #[test]
    fn validation_failures() {
        assert!(ExperimentConfig::parse("quantile = 1.5\n[sampler.uniform]\n").is_err());
        assert!(ExperimentConfig::parse("m_grid = 8, 8\n[sampler.uniform]\n").is_err());
        assert!(ExperimentConfig::parse("m_grid = 8, 16\n").is_err());
        assert!(ExperimentConfig::parse("dataset = csv\n[sampler.uniform]\n").is_err());
    }
}
