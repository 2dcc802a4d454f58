//! Flat key-value run configuration.
//!
//! A run is described by `section.key=value` lines grouped into four dotted
//! sections (`system`, `dictionary`, `quadrature`, `analysis`) plus
//! `output.dir` and `threads`. Values come from an optional config file with
//! command-line overrides applied on top; the validated config echoes every
//! effective key back through [`RunConfig::canonical_keys`], so a report
//! records defaults as well as explicit choices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{CliError, Result};

/// Which system produces snapshot data.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemConfig {
    Rotation { gamma: f64 },
    Arnold { gamma: f64, eps: f64 },
    Doubling,
    Duffing { alpha: f64, dt: f64 },
    DiskRotation,
    Iem { ratio: f64, depth: usize },
    SkewLinear,
    Skew { plateau: Option<(f64, f64, f64)>, join_width: f64 },
    Ingest { path: PathBuf, columns: ColumnLayout, mean_subtract: bool },
}

/// Column layout of an ingested series file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnLayout {
    /// One numeric column, read as real values.
    Real,
    /// Two numeric columns, read as real and imaginary parts.
    ReIm,
}

/// Observable dictionary to span the Galerkin subspace.
#[derive(Clone, Debug, PartialEq)]
pub enum DictionaryConfig {
    Fourier { maxfreq: usize },
    FourierTorus { maxfreq: usize },
    FourierDisk { maxfreq: usize },
    Cosine { maxfreq: usize },
    Rbf { centers: usize, shape: f64, seed: u64 },
    IndicatorIem,
}

/// Quadrature rule used to turn snapshots into inner products.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureKind {
    MonteCarlo,
    Trapezoid,
    ExactIem,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureConfig {
    pub kind: QuadratureKind,
    pub m: usize,
    pub seed: u64,
}

/// Square grid of test points in the complex plane.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub spacing: f64,
    pub radius: f64,
    pub region: Option<[f64; 4]>,
}

/// Exactly one analysis per run.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalysisConfig {
    Pseudospectrum { eps: f64, grid: GridConfig },
    SpectrumSigma1 { grid: GridConfig },
    SpectrumSigma2 { grid: GridConfig, eps: f64, m_schedule: Vec<usize> },
    Edmd,
    Rage { n_schedule: Vec<usize>, l_schedule: Vec<usize>, observables: Vec<usize> },
    WeakMixing { n2: usize, l_schedule: Vec<usize> },
    Demo { name: String },
}

/// Validated description of a full run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub dictionary: DictionaryConfig,
    pub quadrature: QuadratureConfig,
    pub analysis: AnalysisConfig,
    pub output_dir: PathBuf,
    /// Worker threads for the run; 0 keeps the process-wide default pool.
    pub threads: usize,
}

/// Parses `key=value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected key=value, got `{line}`", idx + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct KeyReader {
    map: BTreeMap<String, String>,
    seen: Vec<String>,
}

impl KeyReader {
    fn new(map: BTreeMap<String, String>) -> Self {
        KeyReader { map, seen: Vec::new() }
    }

    fn optional(&mut self, key: &str) -> Option<String> {
        let hit = self.map.get(key).cloned();
        if hit.is_some() {
            self.seen.push(key.to_string());
        }
        hit
    }

    fn required(&mut self, key: &str) -> Result<String> {
        self.optional(key)
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    fn f64_req(&mut self, key: &str) -> Result<f64> {
        parse_f64(key, &self.required(key)?)
    }

    fn f64_opt(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.optional(key) {
            Some(v) => parse_f64(key, &v),
            None => Ok(default),
        }
    }

    fn usize_req(&mut self, key: &str) -> Result<usize> {
        parse_usize(key, &self.required(key)?)
    }

    fn usize_opt(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.optional(key) {
            Some(v) => parse_usize(key, &v),
            None => Ok(default),
        }
    }

    fn u64_opt(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.optional(key) {
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("key `{key}`: `{v}` is not an integer"))),
            None => Ok(default),
        }
    }

    fn bool_opt(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.optional(key) {
            Some(v) => match v.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(CliError::Config(format!(
                    "key `{key}`: `{other}` is not a boolean"
                ))),
            },
            None => Ok(default),
        }
    }

    fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self
            .map
            .keys()
            .filter(|k| !self.seen.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            let names: Vec<String> = unknown.iter().map(|k| format!("`{k}`")).collect();
            Err(CliError::Config(format!(
                "unknown or unused keys: {}",
                names.join(", ")
            )))
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let x: f64 = value
        .parse()
        .map_err(|_| CliError::Config(format!("key `{key}`: `{value}` is not a number")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Config(format!("key `{key}`: value must be finite")))
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| CliError::Config(format!("key `{key}`: `{value}` is not a nonnegative integer")))
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let items: Vec<usize> = value
        .split(',')
        .map(|s| parse_usize(key, s.trim()))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(CliError::Config(format!("key `{key}`: empty list")));
    }
    Ok(items)
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_f64(key, s.trim()))
        .collect()
}

fn parse_grid(key: &str, value: &str) -> Result<GridConfig> {
    let nums = parse_f64_list(key, value)?;
    match nums.len() {
        2 => Ok(GridConfig { spacing: nums[0], radius: nums[1], region: None }),
        6 => Ok(GridConfig {
            spacing: nums[0],
            radius: nums[1],
            region: Some([nums[2], nums[3], nums[4], nums[5]]),
        }),
        n => Err(CliError::Config(format!(
            "key `{key}`: expected `spacing,radius` or `spacing,radius,re0,re1,im0,im1`, got {n} numbers"
        ))),
    }
}

fn check_positive(key: &str, x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(CliError::Config(format!("key `{key}`: value must be positive")))
    }
}

impl RunConfig {
    /// Builds a config from an optional file plus `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut map = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read config `{}`: {e}", path.display()))
                })?;
                parse_kv_text(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        RunConfig::from_keys(map)
    }

    /// Validates a flat key map into a typed config.
    pub fn from_keys(map: BTreeMap<String, String>) -> Result<RunConfig> {
        let mut r = KeyReader::new(map);

        let system = read_system(&mut r)?;
        let dictionary = read_dictionary(&mut r)?;
        let quadrature = read_quadrature(&mut r)?;
        let analysis = read_analysis(&mut r)?;
        let output_dir = PathBuf::from(
            r.optional("output.dir").unwrap_or_else(|| "out".to_string()),
        );
        let threads = r.usize_opt("threads", 0)?;
        r.finish()?;

        let config = RunConfig { system, dictionary, quadrature, analysis, output_dir, threads };
        config.check_compatibility()?;
        Ok(config)
    }

    /// Structural checks that span sections.
    fn check_compatibility(&self) -> Result<()> {
        let iem_system = matches!(self.system, SystemConfig::Iem { .. });
        if matches!(self.dictionary, DictionaryConfig::IndicatorIem) && !iem_system {
            return Err(CliError::Config(
                "dictionary.kind=indicator-iem requires system.kind=iem".to_string(),
            ));
        }
        if self.quadrature.kind == QuadratureKind::ExactIem && !iem_system {
            return Err(CliError::Config(
                "quadrature.rule=exact-iem requires system.kind=iem".to_string(),
            ));
        }
        let dict_ok = match (&self.system, &self.dictionary) {
            (SystemConfig::Rotation { .. }, DictionaryConfig::Fourier { .. })
            | (SystemConfig::Arnold { .. }, DictionaryConfig::Fourier { .. })
            | (SystemConfig::Doubling, DictionaryConfig::Fourier { .. })
            | (SystemConfig::DiskRotation, DictionaryConfig::FourierDisk { .. })
            | (SystemConfig::Duffing { .. }, DictionaryConfig::Rbf { .. })
            | (SystemConfig::Iem { .. }, DictionaryConfig::Cosine { .. })
            | (SystemConfig::Iem { .. }, DictionaryConfig::IndicatorIem)
            | (SystemConfig::SkewLinear, DictionaryConfig::FourierTorus { .. })
            | (SystemConfig::Skew { .. }, DictionaryConfig::FourierTorus { .. }) => true,
            (SystemConfig::Ingest { .. }, _) => true,
            _ => false,
        };
        if !dict_ok && !matches!(self.analysis, AnalysisConfig::Demo { .. }) {
            return Err(CliError::Config(format!(
                "dictionary `{}` does not span the state space of system `{}`",
                self.dictionary_kind_name(),
                self.system_kind_name()
            )));
        }
        if matches!(self.analysis, AnalysisConfig::SpectrumSigma2 { .. })
            && self.quadrature.kind == QuadratureKind::ExactIem
        {
            return Err(CliError::Config(
                "spectrum-sigma2 varies the snapshot count; exact-iem quadrature fixes it"
                    .to_string(),
            ));
        }
        if let SystemConfig::Ingest { .. } = self.system {
            match self.analysis {
                AnalysisConfig::Rage { .. } | AnalysisConfig::WeakMixing { .. } => {}
                _ => {
                    return Err(CliError::Config(
                        "ingested series support only analysis.kind=rage or weak-mixing"
                            .to_string(),
                    ))
                }
            }
        }
        if let AnalysisConfig::Demo { name } = &self.analysis {
            if name != "doubling" && name != "iem" {
                return Err(CliError::Config(format!(
                    "unknown demo `{name}` (available: doubling, iem)"
                )));
            }
        }
        Ok(())
    }

    fn system_kind_name(&self) -> &'static str {
        match self.system {
            SystemConfig::Rotation { .. } => "rotation",
            SystemConfig::Arnold { .. } => "arnold",
            SystemConfig::Doubling => "doubling",
            SystemConfig::Duffing { .. } => "duffing",
            SystemConfig::DiskRotation => "disk-rotation",
            SystemConfig::Iem { .. } => "iem",
            SystemConfig::SkewLinear => "skew-linear",
            SystemConfig::Skew { .. } => "skew",
            SystemConfig::Ingest { .. } => "ingest",
        }
    }

    fn dictionary_kind_name(&self) -> &'static str {
        match self.dictionary {
            DictionaryConfig::Fourier { .. } => "fourier",
            DictionaryConfig::FourierTorus { .. } => "fourier-torus",
            DictionaryConfig::FourierDisk { .. } => "fourier-disk",
            DictionaryConfig::Cosine { .. } => "cosine",
            DictionaryConfig::Rbf { .. } => "rbf",
            DictionaryConfig::IndicatorIem => "indicator-iem",
        }
    }

    fn quadrature_kind_name(&self) -> &'static str {
        match self.quadrature.kind {
            QuadratureKind::MonteCarlo => "monte-carlo",
            QuadratureKind::Trapezoid => "trapezoid",
            QuadratureKind::ExactIem => "exact-iem",
        }
    }

    /// Every effective key-value pair, sorted, defaults included. `threads`
    /// is deliberately absent: outputs must not depend on the worker count,
    /// so it is an execution knob rather than provenance.
    pub fn canonical_keys(&self) -> Vec<(String, String)> {
        let mut keys: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| keys.push((k.to_string(), v));

        push("system.kind", self.system_kind_name().to_string());
        match &self.system {
            SystemConfig::Rotation { gamma } => push("system.gamma", fmt_f64(*gamma)),
            SystemConfig::Arnold { gamma, eps } => {
                push("system.gamma", fmt_f64(*gamma));
                push("system.eps", fmt_f64(*eps));
            }
            SystemConfig::Doubling | SystemConfig::DiskRotation | SystemConfig::SkewLinear => {}
            SystemConfig::Duffing { alpha, dt } => {
                push("system.alpha", fmt_f64(*alpha));
                push("system.dt", fmt_f64(*dt));
            }
            SystemConfig::Iem { ratio, depth } => {
                push("system.ratio", fmt_f64(*ratio));
                push("system.depth", depth.to_string());
            }
            SystemConfig::Skew { plateau, join_width } => {
                if let Some((a, b, c)) = plateau {
                    push(
                        "system.plateau",
                        format!("{},{},{}", fmt_f64(*a), fmt_f64(*b), fmt_f64(*c)),
                    );
                }
                push("system.join-width", fmt_f64(*join_width));
            }
            SystemConfig::Ingest { path, columns, mean_subtract } => {
                push("system.ingest-path", path.display().to_string());
                push(
                    "system.ingest-columns",
                    match columns {
                        ColumnLayout::Real => "re".to_string(),
                        ColumnLayout::ReIm => "re-im".to_string(),
                    },
                );
                push("system.ingest-mean-subtract", mean_subtract.to_string());
            }
        }

        push("dictionary.kind", self.dictionary_kind_name().to_string());
        match &self.dictionary {
            DictionaryConfig::Fourier { maxfreq }
            | DictionaryConfig::FourierTorus { maxfreq }
            | DictionaryConfig::FourierDisk { maxfreq }
            | DictionaryConfig::Cosine { maxfreq } => {
                push("dictionary.maxfreq", maxfreq.to_string())
            }
            DictionaryConfig::Rbf { centers, shape, seed } => {
                push("dictionary.rbf-centers", centers.to_string());
                push("dictionary.rbf-shape", fmt_f64(*shape));
                push("dictionary.rbf-seed", seed.to_string());
            }
            DictionaryConfig::IndicatorIem => {}
        }

        push("quadrature.rule", self.quadrature_kind_name().to_string());
        push("quadrature.m", self.quadrature.m.to_string());
        push("quadrature.seed", self.quadrature.seed.to_string());

        match &self.analysis {
            AnalysisConfig::Pseudospectrum { eps, grid } => {
                push("analysis.kind", "pseudospectrum".to_string());
                push("analysis.epsilon", fmt_f64(*eps));
                push("analysis.grid", fmt_grid(grid));
            }
            AnalysisConfig::SpectrumSigma1 { grid } => {
                push("analysis.kind", "spectrum-sigma1".to_string());
                push("analysis.grid", fmt_grid(grid));
            }
            AnalysisConfig::SpectrumSigma2 { grid, eps, m_schedule } => {
                push("analysis.kind", "spectrum-sigma2".to_string());
                push("analysis.epsilon", fmt_f64(*eps));
                push("analysis.grid", fmt_grid(grid));
                push("analysis.m-schedule", fmt_usize_list(m_schedule));
            }
            AnalysisConfig::Edmd => push("analysis.kind", "edmd".to_string()),
            AnalysisConfig::Rage { n_schedule, l_schedule, observables } => {
                push("analysis.kind", "rage".to_string());
                push("analysis.n-schedule", fmt_usize_list(n_schedule));
                push("analysis.l-schedule", fmt_usize_list(l_schedule));
                push("analysis.observables", fmt_usize_list(observables));
            }
            AnalysisConfig::WeakMixing { n2, l_schedule } => {
                push("analysis.kind", "weak-mixing".to_string());
                push("analysis.n2", n2.to_string());
                push("analysis.l-schedule", fmt_usize_list(l_schedule));
            }
            AnalysisConfig::Demo { name } => {
                push("analysis.kind", "demo".to_string());
                push("analysis.demo-name", name.clone());
            }
        }

        push("output.dir", self.output_dir.display().to_string());

        keys.sort();
        keys
    }

    /// Canonical keys filtered to the sections that determine an artifact.
    pub fn keys_for_sections(&self, sections: &[&str]) -> Vec<(String, String)> {
        self.canonical_keys()
            .into_iter()
            .filter(|(k, _)| sections.iter().any(|s| k.starts_with(s)))
            .collect()
    }
}

fn read_system(r: &mut KeyReader) -> Result<SystemConfig> {
    let kind = r.required("system.kind")?;
    match kind.as_str() {
        "rotation" => Ok(SystemConfig::Rotation { gamma: r.f64_req("system.gamma")? }),
        "arnold" => Ok(SystemConfig::Arnold {
            gamma: r.f64_req("system.gamma")?,
            eps: r.f64_req("system.eps")?,
        }),
        "doubling" => Ok(SystemConfig::Doubling),
        "duffing" => Ok(SystemConfig::Duffing {
            alpha: r.f64_opt("system.alpha", 0.3)?,
            dt: check_positive("system.dt", r.f64_opt("system.dt", 0.3)?)?,
        }),
        "disk-rotation" => Ok(SystemConfig::DiskRotation),
        "iem" => {
            let ratio = r.f64_req("system.ratio")?;
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(CliError::Config(
                    "key `system.ratio`: value must lie in (0, 1)".to_string(),
                ));
            }
            Ok(SystemConfig::Iem { ratio, depth: r.usize_opt("system.depth", 40)? })
        }
        "skew-linear" => Ok(SystemConfig::SkewLinear),
        "skew" => {
            let plateau = match r.optional("system.plateau") {
                Some(v) => {
                    let nums = parse_f64_list("system.plateau", &v)?;
                    if nums.len() != 3 {
                        return Err(CliError::Config(
                            "key `system.plateau`: expected `a,b,c`".to_string(),
                        ));
                    }
                    Some((nums[0], nums[1], nums[2]))
                }
                None => None,
            };
            Ok(SystemConfig::Skew {
                plateau,
                join_width: check_positive(
                    "system.join-width",
                    r.f64_opt("system.join-width", 0.1)?,
                )?,
            })
        }
        "ingest" => {
            let path = PathBuf::from(r.required("system.ingest-path")?);
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "key `system.ingest-path`: file `{}` does not exist",
                    path.display()
                )));
            }
            let columns = match r
                .optional("system.ingest-columns")
                .unwrap_or_else(|| "re".to_string())
                .as_str()
            {
                "re" => ColumnLayout::Real,
                "re-im" => ColumnLayout::ReIm,
                other => {
                    return Err(CliError::Config(format!(
                        "key `system.ingest-columns`: `{other}` is not `re` or `re-im`"
                    )))
                }
            };
            Ok(SystemConfig::Ingest {
                path,
                columns,
                mean_subtract: r.bool_opt("system.ingest-mean-subtract", false)?,
            })
        }
        other => Err(CliError::Config(format!("unknown system kind `{other}`"))),
    }
}

fn read_dictionary(r: &mut KeyReader) -> Result<DictionaryConfig> {
    let kind = r
        .optional("dictionary.kind")
        .unwrap_or_else(|| "fourier".to_string());
    match kind.as_str() {
        "fourier" => Ok(DictionaryConfig::Fourier { maxfreq: r.usize_opt("dictionary.maxfreq", 16)? }),
        "fourier-torus" => {
            Ok(DictionaryConfig::FourierTorus { maxfreq: r.usize_opt("dictionary.maxfreq", 8)? })
        }
        "fourier-disk" => {
            Ok(DictionaryConfig::FourierDisk { maxfreq: r.usize_opt("dictionary.maxfreq", 16)? })
        }
        "cosine" => Ok(DictionaryConfig::Cosine { maxfreq: r.usize_opt("dictionary.maxfreq", 16)? }),
        "rbf" => Ok(DictionaryConfig::Rbf {
            centers: r.usize_opt("dictionary.rbf-centers", 100)?,
            shape: check_positive("dictionary.rbf-shape", r.f64_opt("dictionary.rbf-shape", 2.5)?)?,
            seed: r.u64_opt("dictionary.rbf-seed", 0)?,
        }),
        "indicator-iem" => Ok(DictionaryConfig::IndicatorIem),
        other => Err(CliError::Config(format!("unknown dictionary kind `{other}`"))),
    }
}

fn read_quadrature(r: &mut KeyReader) -> Result<QuadratureConfig> {
    let kind = match r
        .optional("quadrature.rule")
        .unwrap_or_else(|| "trapezoid".to_string())
        .as_str()
    {
        "monte-carlo" => QuadratureKind::MonteCarlo,
        "trapezoid" => QuadratureKind::Trapezoid,
        "exact-iem" => QuadratureKind::ExactIem,
        other => return Err(CliError::Config(format!("unknown quadrature rule `{other}`"))),
    };
    let m = r.usize_opt("quadrature.m", 256)?;
    if m == 0 && kind != QuadratureKind::ExactIem {
        return Err(CliError::Config("key `quadrature.m`: value must be positive".to_string()));
    }
    Ok(QuadratureConfig { kind, m, seed: r.u64_opt("quadrature.seed", 0)? })
}

fn read_analysis(r: &mut KeyReader) -> Result<AnalysisConfig> {
    let kind = r.required("analysis.kind")?;
    let grid_of = |r: &mut KeyReader| -> Result<GridConfig> {
        let raw = r
            .optional("analysis.grid")
            .unwrap_or_else(|| "0.05,1.5".to_string());
        let grid = parse_grid("analysis.grid", &raw)?;
        check_positive("analysis.grid", grid.spacing)?;
        check_positive("analysis.grid", grid.radius)?;
        Ok(grid)
    };
    match kind.as_str() {
        "pseudospectrum" => {
            let eps = check_positive("analysis.epsilon", r.f64_req("analysis.epsilon")?)?;
            let grid = grid_of(r)?;
            if eps <= grid.spacing {
                return Err(CliError::Config(
                    "analysis.epsilon must exceed the grid spacing".to_string(),
                ));
            }
            Ok(AnalysisConfig::Pseudospectrum { eps, grid })
        }
        "spectrum-sigma1" => Ok(AnalysisConfig::SpectrumSigma1 { grid: grid_of(r)? }),
        "spectrum-sigma2" => {
            let eps = check_positive("analysis.epsilon", r.f64_opt("analysis.epsilon", 0.2)?)?;
            let grid = grid_of(r)?;
            if eps <= grid.spacing {
                return Err(CliError::Config(
                    "analysis.epsilon must exceed the grid spacing".to_string(),
                ));
            }
            let m_schedule = match r.optional("analysis.m-schedule") {
                Some(v) => parse_usize_list("analysis.m-schedule", &v)?,
                None => vec![100, 1000, 10000],
            };
            if m_schedule.len() < 2 {
                return Err(CliError::Config(
                    "analysis.m-schedule needs at least two sizes".to_string(),
                ));
            }
            if m_schedule.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Config(
                    "analysis.m-schedule must be strictly increasing".to_string(),
                ));
            }
            Ok(AnalysisConfig::SpectrumSigma2 { grid, eps, m_schedule })
        }
        "edmd" => Ok(AnalysisConfig::Edmd),
        "rage" => {
            let n_schedule = parse_usize_list("analysis.n-schedule", &r.required("analysis.n-schedule")?)?;
            let l_schedule = parse_usize_list("analysis.l-schedule", &r.required("analysis.l-schedule")?)?;
            let observables = match r.optional("analysis.observables") {
                Some(v) => parse_usize_list("analysis.observables", &v)?,
                None => vec![1],
            };
            if n_schedule.iter().any(|&n| n == 0) || l_schedule.iter().any(|&l| l == 0) {
                return Err(CliError::Config(
                    "rage schedules must contain positive entries".to_string(),
                ));
            }
            Ok(AnalysisConfig::Rage { n_schedule, l_schedule, observables })
        }
        "weak-mixing" => {
            let n2 = r.usize_req("analysis.n2")?;
            if n2 == 0 {
                return Err(CliError::Config("key `analysis.n2`: value must be positive".to_string()));
            }
            let l_schedule = parse_usize_list("analysis.l-schedule", &r.required("analysis.l-schedule")?)?;
            if l_schedule.iter().any(|&l| l == 0)
                || l_schedule.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(CliError::Config(
                    "weak-mixing schedule must be positive and strictly increasing".to_string(),
                ));
            }
            Ok(AnalysisConfig::WeakMixing { n2, l_schedule })
        }
        "demo" => Ok(AnalysisConfig::Demo { name: r.required("analysis.demo-name")? }),
        other => Err(CliError::Config(format!("unknown analysis kind `{other}`"))),
    }
}

/// Shortest-roundtrip float formatting; stable across platforms.
pub fn fmt_f64(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x}").unwrap();
    s
}

fn fmt_grid(grid: &GridConfig) -> String {
    match grid.region {
        None => format!("{},{}", fmt_f64(grid.spacing), fmt_f64(grid.radius)),
        Some([a, b, c, d]) => format!(
            "{},{},{},{},{},{}",
            fmt_f64(grid.spacing),
            fmt_f64(grid.radius),
            fmt_f64(a),
            fmt_f64(b),
            fmt_f64(c),
            fmt_f64(d)
        ),
    }
}

fn fmt_usize_list(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
