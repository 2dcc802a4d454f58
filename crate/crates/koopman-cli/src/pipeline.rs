//! Run orchestration: simulate, assemble, analyze, report.
//!
//! Every run walks the same stage order. Intermediate artifacts (snapshot
//! sets, Galerkin triples) are cached under `<output>/cache`, keyed by a
//! content hash of the config keys that determine them, and written with a
//! temp-file-then-rename step so a crashed run never leaves a partial cache
//! entry. Result files and `report.txt` are fully deterministic; wall-clock
//! numbers go to `timings.txt`, the one file that differs between reruns.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Complex, DVector};
use sha2::{Digest, Sha256};

use koopman::dictionary::{self, Dictionary, SnapshotSide};
use koopman::dynamics::{self, DynamicalSystem, MapSpec, Sampler, SnapshotSet};
use koopman::galerkin::{self, GalerkinTriple, Rule};
use koopman::rage::{self, AcInput, Projection, RageInput, WeakMixInput};
use koopman::scidemo::{self, IemSpec};
use koopman::spectral::{self, GridSpec, Sigma1Config, SpectralResult};

use crate::config::{
    fmt_f64, AnalysisConfig, DictionaryConfig, GridConfig, QuadratureKind, RunConfig,
    SystemConfig,
};
use crate::{ingest, plot, CliError, Result};

type C64 = Complex<f64>;

const ORTHO_TOL: f64 = 1e-12;
/// Angular bins for the atom-mass scan on ingested series. 240 divides
/// evenly by 2, 3, 4, 5, 6, and 8, so the common rational multiples of pi
/// land exactly on scan angles instead of leaking across two bins.
const ATOM_BINS: usize = 240;

/// How far through the stage sequence to go.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopAfter {
    Simulate,
    Assemble,
    Analyze,
}

/// Wall time of one pipeline stage.
#[derive(Clone, Debug)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

/// Summary of a finished run.
#[derive(Clone, Debug)]
pub struct RunReport {
    /// Every effective config key, sorted.
    pub config_echo: Vec<(String, String)>,
    pub timings: Vec<StageTiming>,
    /// `(file name, sha256)` for every result file, sorted by name.
    pub manifest: Vec<(String, String)>,
    /// `mode=... error_bound=...` when an analysis certifies a bound,
    /// otherwise contains `uncertified`.
    pub certificate: String,
}

impl RunReport {
    /// The reproducible report body: identical configs give identical text.
    pub fn deterministic_text(&self) -> String {
        let mut s = String::from("# koopman run report\n");
        for (k, v) in &self.config_echo {
            s.push_str(&format!("config.{k}={v}\n"));
        }
        s.push_str(&format!("certificate={}\n", self.certificate));
        s.push_str(&format!("manifest.count={}\n", self.manifest.len()));
        for (i, (file, sha)) in self.manifest.iter().enumerate() {
            s.push_str(&format!("manifest.{i}.file={file}\n"));
            s.push_str(&format!("manifest.{i}.sha256={sha}\n"));
        }
        s
    }

    /// Wall-clock per stage; excluded from the determinism contract.
    pub fn timing_text(&self) -> String {
        let mut s = String::new();
        for t in &self.timings {
            s.push_str(&format!("stage.{}.seconds={:.3}\n", t.stage, t.seconds));
        }
        s
    }

    pub fn manifest_sha(&self, file: &str) -> Option<&str> {
        self.manifest
            .iter()
            .find(|(f, _)| f == file)
            .map(|(_, sha)| sha.as_str())
    }
}

/// Reads a report back as a key map; inverse of [`RunReport::deterministic_text`].
pub fn parse_report(text: &str) -> Result<BTreeMap<String, String>> {
    crate::config::parse_kv_text(text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn content_key(pairs: &[(String, String)]) -> String {
    let text: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    sha256_hex(text.as_bytes())[..16].to_string()
}

/// Runs the full pipeline.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    run_until(config, StopAfter::Analyze)
}

/// Runs the pipeline up to the given stage.
pub fn run_until(config: &RunConfig, stop: StopAfter) -> Result<RunReport> {
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        pool.install(|| run_inner(config, stop))
    } else {
        run_inner(config, stop)
    }
}

struct Emitter {
    dir: PathBuf,
    manifest: Vec<(String, String)>,
}

impl Emitter {
    fn emit(&mut self, stage: &'static str, name: &str, bytes: &[u8]) -> Result<()> {
        atomic_write(&self.dir.join(name), bytes, stage)?;
        self.manifest.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn last_sha(&self) -> String {
        self.manifest.last().map(|(_, s)| s.clone()).unwrap_or_default()
    }
}

fn atomic_write(path: &Path, bytes: &[u8], stage: &'static str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::StageIo {
        stage,
        message: format!("write {}: {e}", tmp.display()),
    })?;
    fs::rename(&tmp, path).map_err(|e| CliError::StageIo {
        stage,
        message: format!("rename to {}: {e}", path.display()),
    })?;
    Ok(())
}

fn stage_err(stage: &'static str) -> impl Fn(koopman::Error) -> CliError {
    move |source| CliError::Stage { stage, source }
}

fn csv_bytes<F>(stage: &'static str, f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> koopman::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(stage_err(stage))?;
    Ok(buf)
}

fn run_inner(config: &RunConfig, stop: StopAfter) -> Result<RunReport> {
    let cache_dir = config.output_dir.join("cache");
    fs::create_dir_all(&cache_dir).map_err(|e| CliError::StageIo {
        stage: "simulate",
        message: format!("create {}: {e}", cache_dir.display()),
    })?;

    let mut timings: Vec<StageTiming> = Vec::new();
    let mut emitter = Emitter { dir: config.output_dir.clone(), manifest: Vec::new() };

    if let AnalysisConfig::Demo { name } = &config.analysis {
        let t0 = Instant::now();
        let certificate = run_demo(config, name, &mut emitter)?;
        timings.push(StageTiming { stage: "analyze", seconds: t0.elapsed().as_secs_f64() });
        return finalize(config, timings, emitter, certificate);
    }

    match &config.system {
        SystemConfig::Ingest { path, columns, mean_subtract } => {
            let t0 = Instant::now();
            let values = ingest::ingest_series(path, *columns, *mean_subtract)?;
            emitter.emit("simulate", "ingested.csv", ingest::series_csv(&values).as_bytes())?;
            timings.push(StageTiming { stage: "simulate", seconds: t0.elapsed().as_secs_f64() });
            if stop == StopAfter::Simulate || stop == StopAfter::Assemble {
                return finalize(config, timings, emitter, "uncertified".to_string());
            }

            let t0 = Instant::now();
            let certificate = analyze_series(config, &values, &mut emitter)?;
            timings.push(StageTiming { stage: "analyze", seconds: t0.elapsed().as_secs_f64() });
            finalize(config, timings, emitter, certificate)
        }
        _ => {
            let t0 = Instant::now();
            let (system, iem) = build_system(config)?;
            let snaps = cached_snapshots(config, &system, config.quadrature.m, iem.as_ref(), &cache_dir)?;
            timings.push(StageTiming { stage: "simulate", seconds: t0.elapsed().as_secs_f64() });
            if stop == StopAfter::Simulate {
                let csv = csv_bytes("simulate", |b| dynamics::write_snapshot_csv(&snaps, b))?;
                emitter.emit("simulate", "snapshots.csv", &csv)?;
                return finalize(config, timings, emitter, "uncertified".to_string());
            }

            let t0 = Instant::now();
            let dict = build_dictionary(config, &system, &snaps, iem.as_ref())?;
            let triple = cached_triple(config, &system, &dict, &snaps, iem.as_ref(), &cache_dir)?;
            timings.push(StageTiming { stage: "assemble", seconds: t0.elapsed().as_secs_f64() });
            if stop == StopAfter::Assemble {
                let export = config.output_dir.join("triple.bin");
                galerkin::write_triple_cache(&export, &triple, "assemble result")
                    .map_err(stage_err("assemble"))?;
                let bytes = fs::read(&export).map_err(|e| CliError::StageIo {
                    stage: "assemble",
                    message: format!("read back {}: {e}", export.display()),
                })?;
                emitter.manifest.push(("triple.bin".to_string(), sha256_hex(&bytes)));
                return finalize(config, timings, emitter, "uncertified".to_string());
            }

            let t0 = Instant::now();
            let certificate =
                analyze_builtin(config, &system, &dict, &triple, iem.as_ref(), &cache_dir, &mut emitter)?;
            timings.push(StageTiming { stage: "analyze", seconds: t0.elapsed().as_secs_f64() });
            finalize(config, timings, emitter, certificate)
        }
    }
}

fn finalize(
    config: &RunConfig,
    mut timings: Vec<StageTiming>,
    emitter: Emitter,
    certificate: String,
) -> Result<RunReport> {
    let t0 = Instant::now();
    let mut manifest = emitter.manifest;
    manifest.sort();
    let mut report = RunReport {
        config_echo: config.canonical_keys(),
        timings: Vec::new(),
        manifest,
        certificate,
    };
    atomic_write(
        &config.output_dir.join("report.txt"),
        report.deterministic_text().as_bytes(),
        "report",
    )?;
    timings.push(StageTiming { stage: "report", seconds: t0.elapsed().as_secs_f64() });
    report.timings = timings;
    atomic_write(
        &config.output_dir.join("timings.txt"),
        report.timing_text().as_bytes(),
        "report",
    )?;
    Ok(report)
}

/// Builds the dynamical system; IEM systems carry their partition spec along.
fn build_system(config: &RunConfig) -> Result<(DynamicalSystem, Option<IemSpec>)> {
    let err = stage_err("simulate");
    match &config.system {
        SystemConfig::Rotation { gamma } => {
            Ok((dynamics::make_system(MapSpec::Rotation { gamma: *gamma }).map_err(err)?, None))
        }
        SystemConfig::Arnold { gamma, eps } => Ok((
            dynamics::make_system(MapSpec::Arnold { gamma: *gamma, eps: *eps }).map_err(err)?,
            None,
        )),
        SystemConfig::Doubling => Ok((dynamics::make_system(MapSpec::Doubling).map_err(err)?, None)),
        SystemConfig::Duffing { alpha, dt } => Ok((
            dynamics::make_system(MapSpec::Duffing { alpha: *alpha, dt: *dt }).map_err(err)?,
            None,
        )),
        SystemConfig::DiskRotation => {
            Ok((dynamics::make_system(MapSpec::DiskRotation).map_err(err)?, None))
        }
        SystemConfig::Iem { ratio, depth } => {
            let spec = IemSpec::constant(*ratio, *depth);
            let (system, _, _) = scidemo::build_iem(&spec).map_err(err)?;
            Ok((system, Some(spec)))
        }
        SystemConfig::SkewLinear => {
            Ok((dynamics::make_system(MapSpec::SkewLinear).map_err(err)?, None))
        }
        SystemConfig::Skew { plateau, join_width } => {
            let profile = dynamics::SkewProfile { plateau: *plateau, join_width: *join_width };
            Ok((dynamics::make_system(MapSpec::Skew(profile)).map_err(err)?, None))
        }
        SystemConfig::Ingest { .. } => unreachable!("ingest handled before system construction"),
    }
}

fn cached_snapshots(
    config: &RunConfig,
    system: &DynamicalSystem,
    m: usize,
    iem: Option<&IemSpec>,
    cache_dir: &Path,
) -> Result<SnapshotSet> {
    let mut pairs = config.keys_for_sections(&["system.", "quadrature."]);
    pairs.push(("m-effective".to_string(), m.to_string()));
    let key = content_key(&pairs);
    let path = cache_dir.join(format!("snapshots-{key}.csv"));
    if path.is_file() {
        let file = fs::File::open(&path).map_err(|e| CliError::StageIo {
            stage: "simulate",
            message: format!("open cache {}: {e}", path.display()),
        })?;
        return dynamics::read_snapshot_csv(BufReader::new(file)).map_err(stage_err("simulate"));
    }
    let snaps = simulate_snapshots(config, system, m, iem)?;
    let csv = csv_bytes("simulate", |b| dynamics::write_snapshot_csv(&snaps, b))?;
    atomic_write(&path, &csv, "simulate")?;
    Ok(snaps)
}

fn simulate_snapshots(
    config: &RunConfig,
    system: &DynamicalSystem,
    m: usize,
    iem: Option<&IemSpec>,
) -> Result<SnapshotSet> {
    let err = stage_err("simulate");
    match config.quadrature.kind {
        QuadratureKind::MonteCarlo => dynamics::sample_snapshots(
            system,
            Sampler::UniformRandom { seed: config.quadrature.seed },
            m,
            dynamics::PRECISION_CEILING,
        )
        .map_err(err),
        QuadratureKind::Trapezoid => {
            dynamics::sample_snapshots(system, Sampler::RegularGrid, m, dynamics::PRECISION_CEILING)
                .map_err(err)
        }
        QuadratureKind::ExactIem => {
            let spec = iem.expect("exact-iem validated against an iem system");
            let cuts = scidemo::iem_exact_cuts(spec).map_err(&err)?;
            scidemo::exact_partition_snapshots(system, &cuts).map_err(&err)
        }
    }
}

fn build_dictionary(
    config: &RunConfig,
    system: &DynamicalSystem,
    snaps: &SnapshotSet,
    iem: Option<&IemSpec>,
) -> Result<Dictionary> {
    let err = stage_err("assemble");
    match &config.dictionary {
        DictionaryConfig::Fourier { maxfreq } => Ok(dictionary::fourier_circle(*maxfreq)),
        DictionaryConfig::FourierTorus { maxfreq } => Ok(dictionary::fourier_torus2(*maxfreq)),
        DictionaryConfig::FourierDisk { maxfreq } => Ok(dictionary::fourier_disk_angle(*maxfreq)),
        DictionaryConfig::Cosine { maxfreq } => Ok(dictionary::cosine_interval(*maxfreq)),
        DictionaryConfig::Rbf { centers, shape, seed } => {
            let c = dictionary::kmeans_centers(&snaps.x, *centers, *seed).map_err(&err)?;
            dictionary::rbf_gaussian(system.space.clone(), c, *shape).map_err(&err)
        }
        DictionaryConfig::IndicatorIem => {
            let spec = iem.expect("indicator-iem validated against an iem system");
            let (_, dict, _) = scidemo::build_iem(spec).map_err(&err)?;
            Ok(dict)
        }
    }
}

fn cached_triple(
    config: &RunConfig,
    system: &DynamicalSystem,
    dict: &Dictionary,
    snaps: &SnapshotSet,
    iem: Option<&IemSpec>,
    cache_dir: &Path,
) -> Result<GalerkinTriple> {
    let mut pairs = config.keys_for_sections(&["system.", "quadrature.", "dictionary."]);
    pairs.push(("m-effective".to_string(), snaps.len().to_string()));
    let key = content_key(&pairs);
    let path = cache_dir.join(format!("triple-{key}.bin"));
    if path.is_file() {
        return galerkin::read_triple_cache(&path).map_err(stage_err("assemble"));
    }
    let err = stage_err("assemble");
    let px = dict.evaluate(snaps, SnapshotSide::X).map_err(&err)?;
    let py = dict.evaluate(snaps, SnapshotSide::Y).map_err(&err)?;
    let rule = match config.quadrature.kind {
        QuadratureKind::MonteCarlo => Rule::MonteCarlo,
        QuadratureKind::Trapezoid => Rule::Trapezoid,
        QuadratureKind::ExactIem => Rule::ExactPartition {
            cuts: scidemo::iem_exact_cuts(iem.expect("validated")).map_err(&err)?,
        },
    };
    let w = galerkin::quadrature_weights(&system.space, &snaps.x, rule).map_err(&err)?;
    let triple = galerkin::assemble(&px, &py, &w).map_err(&err)?;
    galerkin::write_triple_cache(&path, &triple, &key).map_err(&err)?;
    Ok(triple)
}

fn ortho(t: &GalerkinTriple) -> Result<GalerkinTriple> {
    if t.basis_is_orthonormal {
        Ok(t.clone())
    } else {
        galerkin::orthonormalize(t, ORTHO_TOL).map_err(stage_err("analyze"))
    }
}

fn grid_spec(g: &GridConfig) -> GridSpec {
    match g.region {
        None => GridSpec::new(g.spacing, g.radius),
        Some(region) => GridSpec::with_region(g.spacing, g.radius, region),
    }
}

fn certificate_of(res: &SpectralResult) -> String {
    let mut s = format!("mode={}", res.mode.as_str());
    match res.error_bound {
        Some(b) => s.push_str(&format!(" error_bound={}", fmt_f64(b))),
        None => s.push_str(" uncertified"),
    }
    if res.insufficient_dictionary {
        s.push_str(" insufficient-dictionary");
    }
    s
}

fn emit_spectral(
    emitter: &mut Emitter,
    name_base: &str,
    res: &SpectralResult,
) -> Result<()> {
    let csv_name = format!("{name_base}.csv");
    let csv = csv_bytes("analyze", |b| spectral::write_spectral_csv(res, b))?;
    emitter.emit("analyze", &csv_name, &csv)?;
    let sha = emitter.last_sha();
    let svg = plot::scatter_svg(&res.points, &csv_name, &sha);
    emitter.emit("analyze", &format!("{name_base}.svg"), svg.as_bytes())?;
    Ok(())
}

fn analyze_builtin(
    config: &RunConfig,
    system: &DynamicalSystem,
    dict: &Dictionary,
    raw: &GalerkinTriple,
    iem: Option<&IemSpec>,
    cache_dir: &Path,
    emitter: &mut Emitter,
) -> Result<String> {
    let err = stage_err("analyze");
    match &config.analysis {
        AnalysisConfig::Pseudospectrum { eps, grid } => {
            let t = ortho(raw)?;
            let gspec = grid_spec(grid);
            let field = spectral::residual_field(&t, &gspec).map_err(&err)?;
            let csv = csv_bytes("analyze", |b| spectral::write_residual_field_csv(&field, b))?;
            emitter.emit("analyze", "residuals.csv", &csv)?;
            let sha = emitter.last_sha();
            let svg =
                plot::heat_map_svg(&field.points, &field.residuals, grid.spacing, "residuals.csv", &sha);
            emitter.emit("analyze", "residuals.svg", svg.as_bytes())?;
            let res = spectral::pseudospectrum_grid(&t, &gspec, *eps).map_err(&err)?;
            let csv = csv_bytes("analyze", |b| spectral::write_spectral_csv(&res, b))?;
            emitter.emit("analyze", "pseudospectrum.csv", &csv)?;
            Ok(certificate_of(&res))
        }
        AnalysisConfig::SpectrumSigma1 { grid } => {
            let t = ortho(raw)?;
            let res = spectral::spectrum_sigma1(
                &t,
                &grid_spec(grid),
                system.measure_preserving,
                &Sigma1Config::default(),
            )
            .map_err(&err)?;
            emit_spectral(emitter, "spectrum", &res)?;
            Ok(certificate_of(&res))
        }
        AnalysisConfig::SpectrumSigma2 { grid, eps, m_schedule } => {
            let mut triples = Vec::with_capacity(m_schedule.len());
            for &m in m_schedule {
                let snaps_m = cached_snapshots(config, system, m, iem, cache_dir)?;
                let raw_m = cached_triple(config, system, dict, &snaps_m, iem, cache_dir)?;
                triples.push(ortho(&raw_m)?);
            }
            let res = spectral::spectrum_sigma2(&triples, &grid_spec(grid), *eps).map_err(&err)?;
            emit_spectral(emitter, "spectrum", &res)?;
            Ok(certificate_of(&res))
        }
        AnalysisConfig::Edmd => {
            let t = ortho(raw)?;
            let res = spectral::edmd_eigenvalues(&t).map_err(&err)?;
            emit_spectral(emitter, "edmd", &res)?;
            Ok(certificate_of(&res))
        }
        AnalysisConfig::Rage { n_schedule, l_schedule, observables } => {
            let t = ortho(raw)?;
            let dim = t.dim();
            for &idx in observables {
                if idx >= dim {
                    return Err(CliError::Stage {
                        stage: "analyze",
                        source: koopman::Error::InvalidParameter {
                            name: "observables",
                            reason: format!("index {idx} outside dictionary of size {dim}"),
                        },
                    });
                }
            }
            for &idx in observables {
                let mut coeffs = DVector::<C64>::zeros(dim);
                coeffs[idx] = C64::new(1.0, 0.0);
                let input = RageInput::Galerkin { triple: &t, coeffs: &coeffs };
                let id = format!("dict[{idx}]");
                let mut rows = Vec::new();
                for &n in n_schedule {
                    for &l in l_schedule {
                        rows.push(
                            rage::rage_pp_mass(&input, &id, n, l, Projection::DictionaryPrefix)
                                .map_err(&err)?,
                        );
                    }
                }
                let csv = csv_bytes("analyze", |b| rage::write_rage_report(&rows, b))?;
                emitter.emit("analyze", &format!("rage-obs{idx}.csv"), &csv)?;
            }
            Ok("uncertified".to_string())
        }
        AnalysisConfig::WeakMixing { n2, l_schedule } => {
            // On the torus the decision runs in the y-frequency-1 sector:
            // skew maps leave each sector invariant, and the x-only modes
            // they would otherwise share with the full dictionary are fixed
            // by the map, which would flag every skew product as having an
            // eigenfunction. Sector modes are automatically mean-zero.
            let (t, first_obs) = match &config.dictionary {
                DictionaryConfig::FourierTorus { maxfreq } => {
                    let idx = skew_sector_indices(*maxfreq);
                    if idx.is_empty() {
                        return Err(CliError::Stage {
                            stage: "analyze",
                            source: koopman::Error::InvalidParameter {
                                name: "maxfreq",
                                reason: "torus sector is empty; need maxfreq >= 1".into(),
                            },
                        });
                    }
                    (ortho(&restrict_triple(raw, &idx))?, 0usize)
                }
                _ => (ortho(raw)?, 1usize),
            };
            let dim = t.dim();
            if *n2 + first_obs > dim {
                return Err(CliError::Stage {
                    stage: "analyze",
                    source: koopman::Error::InvalidParameter {
                        name: "n2",
                        reason: format!(
                            "needs {n2} mean-zero observables but the dictionary holds {}",
                            dim - first_obs.min(dim)
                        ),
                    },
                });
            }
            // A declared plateau contributes the level-set indicator as the
            // leading observable: it is the candidate eigenfunction, and
            // plain low-frequency modes spread too little energy on the
            // plateau to ever cross the decision threshold.
            let mut observables: Vec<DVector<C64>> = Vec::with_capacity(*n2);
            if first_obs == 0 {
                if let SystemConfig::Skew { plateau: Some((a, b, _)), .. } = &config.system {
                    observables.push(plateau_observable(*a, *b, dim));
                }
            }
            let unit_count = *n2 - observables.len().min(*n2);
            observables.extend((first_obs..first_obs + unit_count).map(|i| {
                let mut v = DVector::<C64>::zeros(dim);
                v[i] = C64::new(1.0, 0.0);
                v
            }));
            let decision = rage::weak_mixing_decide(
                &WeakMixInput::Galerkin { triple: &t, observables: &observables },
                *n2,
                l_schedule,
            )
            .map_err(&err)?;
            emitter.emit("analyze", "weakmix.txt", weakmix_text(&decision).as_bytes())?;
            Ok("uncertified".to_string())
        }
        AnalysisConfig::Demo { .. } => unreachable!("demo handled before the simulate stage"),
    }
}

fn analyze_series(config: &RunConfig, values: &[C64], emitter: &mut Emitter) -> Result<String> {
    let err = stage_err("analyze");
    match &config.analysis {
        AnalysisConfig::Rage { n_schedule, l_schedule, observables: _ } => {
            let input = RageInput::Series { values };
            let mut rows = Vec::new();
            for &n in n_schedule {
                for &l in l_schedule {
                    rows.push(
                        rage::rage_pp_mass(&input, "series", n, l, Projection::TimeDelay { depth: n })
                            .map_err(&err)?,
                    );
                }
            }
            let csv = csv_bytes("analyze", |b| rage::write_rage_report(&rows, b))?;
            emitter.emit("analyze", "rage-series.csv", &csv)?;

            let horizon = *l_schedule.iter().max().expect("non-empty by validation");
            let ac = rage::autocorrelation(AcInput::Ingested { series: values }, horizon)
                .map_err(&err)?;
            let thetas: Vec<f64> = (0..ATOM_BINS)
                .map(|k| k as f64 * std::f64::consts::TAU / ATOM_BINS as f64)
                .collect();
            let masses = rage::atom_masses(&ac, &thetas, horizon).map_err(&err)?;
            emitter.emit("analyze", "atoms.csv", atoms_csv(&thetas, &masses).as_bytes())?;
            Ok("uncertified".to_string())
        }
        AnalysisConfig::WeakMixing { n2, l_schedule } => {
            let observables = vec![values.to_vec()];
            let decision = rage::weak_mixing_decide(
                &WeakMixInput::Series { observables: &observables, depth: *n2 },
                *n2,
                l_schedule,
            )
            .map_err(&err)?;
            emitter.emit("analyze", "weakmix.txt", weakmix_text(&decision).as_bytes())?;
            Ok("uncertified".to_string())
        }
        _ => unreachable!("ingest analyses restricted by config validation"),
    }
}

fn run_demo(config: &RunConfig, name: &str, emitter: &mut Emitter) -> Result<String> {
    let err = stage_err("analyze");
    match name {
        "doubling" => {
            let maxfreq = match config.dictionary {
                DictionaryConfig::Fourier { maxfreq } => maxfreq,
                _ => 16,
            };
            let report = scidemo::doubling_edmd_report(maxfreq).map_err(&err)?;
            emitter.emit("analyze", "demo-doubling.txt", report.to_text().as_bytes())?;
            Ok("uncertified".to_string())
        }
        "iem" => {
            let spec = match config.system {
                SystemConfig::Iem { ratio, depth } => IemSpec::constant(ratio, depth),
                _ => IemSpec::constant(0.5, 40),
            };
            let triple = scidemo::iem_triple(&spec).map_err(&err)?;
            let (_, _, (r_inner, r_outer)) = scidemo::build_iem(&spec).map_err(&err)?;
            let mut text = String::from("demo=iem\n");
            text.push_str(&format!("ratio={}\n", fmt_f64(spec.ratio_schedule[0].0)));
            text.push_str(&format!("depth={}\n", spec.truncation_depth));
            text.push_str(&format!("radius-inner={:.16e}\n", r_inner));
            text.push_str(&format!("radius-outer={:.16e}\n", r_outer));
            if let Some(delta) = triple.delta_bound {
                text.push_str(&format!("norm-bound={:.16e}\n", delta));
            }
            for (i, p) in [0.9, 1.3, 0.3].iter().enumerate() {
                let z = C64::new(*p, 0.0);
                let h = spectral::residual(z, &triple).map_err(&err)?;
                text.push_str(&format!("probe.{i}.z={:.16e},{:.16e}\n", z.re, z.im));
                text.push_str(&format!("probe.{i}.residual={:.16e}\n", h));
            }
            emitter.emit("analyze", "demo-iem.txt", text.as_bytes())?;
            Ok("uncertified".to_string())
        }
        other => Err(CliError::Config(format!("unknown demo `{other}`"))),
    }
}

/// Positions of the y-frequency-1 torus modes, ordered by x-frequency
/// k = 0, 1, -1, 2, -2, ... so that coordinate prefixes are the
/// low-frequency sector subspaces.
fn skew_sector_indices(maxfreq: usize) -> Vec<usize> {
    let freqs = dictionary::torus_frequencies(maxfreq);
    let mut sector: Vec<(i64, usize)> = freqs
        .iter()
        .enumerate()
        .filter(|(_, f)| f.1 == 1)
        .map(|(i, f)| (f.0, i))
        .collect();
    sector.sort_by_key(|&(k, _)| (k.unsigned_abs(), k < 0));
    sector.into_iter().map(|(_, i)| i).collect()
}

/// Sector coefficients of the indicator of the level set
/// `(a, b) U (-b, -a)` truncated to the sector span, in the
/// k = 0, 1, -1, ... coordinate order.
fn plateau_observable(a: f64, b: f64, dim: usize) -> DVector<C64> {
    let mut v = DVector::<C64>::zeros(dim);
    let maxfreq = (dim - 1) / 2;
    for k in -(maxfreq as i64)..=(maxfreq as i64) {
        let coeff = if k == 0 {
            2.0 * (b - a)
        } else {
            let kf = k as f64;
            2.0 * ((kf * b).sin() - (kf * a).sin()) / kf
        };
        v[dictionary::circle_position(k)] = C64::new(coeff, 0.0);
    }
    v
}

/// Galerkin compression of the triple onto the span of the listed
/// dictionary elements.
fn restrict_triple(t: &GalerkinTriple, idx: &[usize]) -> GalerkinTriple {
    let n = idx.len();
    let pick = |m: &nalgebra::DMatrix<C64>| {
        nalgebra::DMatrix::from_fn(n, n, |r, c| m[(idx[r], idx[c])])
    };
    GalerkinTriple {
        g: pick(&t.g),
        a: pick(&t.a),
        l: pick(&t.l),
        basis_is_orthonormal: t.basis_is_orthonormal,
        delta_bound: t.delta_bound,
        retained: None,
    }
}

fn weakmix_text(decision: &rage::WeakMixingDecision) -> String {
    let mut s = format!("bit={}\n", decision.bit);
    for (i, h) in decision.history.iter().enumerate() {
        s.push_str(&format!("history.{i}={h:.16e}\n"));
    }
    s
}

fn atoms_csv(thetas: &[f64], masses: &[f64]) -> String {
    let mut s = String::from("theta,mass\n");
    for (t, m) in thetas.iter().zip(masses) {
        s.push_str(&format!("{t:.16e},{m:.16e}\n"));
    }
    s
}

/// Reads `n,L,pp_mass,cont_mass` rows written by the rage stage.
pub fn parse_rage_csv(text: &str) -> Result<Vec<(usize, usize, f64, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("n,L,pp_mass,cont_mass") => {}
        _ => return Err(CliError::Config("missing rage header".to_string())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Config(format!("rage row {}: need 4 fields", idx + 2)));
        }
        let n = fields[0]
            .parse()
            .map_err(|_| CliError::Config(format!("rage row {}: bad n", idx + 2)))?;
        let l = fields[1]
            .parse()
            .map_err(|_| CliError::Config(format!("rage row {}: bad L", idx + 2)))?;
        let pp = fields[2]
            .parse()
            .map_err(|_| CliError::Config(format!("rage row {}: bad pp_mass", idx + 2)))?;
        let cont = fields[3]
            .parse()
            .map_err(|_| CliError::Config(format!("rage row {}: bad cont_mass", idx + 2)))?;
        rows.push((n, l, pp, cont));
    }
    Ok(rows)
}

/// Reads `theta,mass` rows written by the atom scan.
pub fn parse_atoms_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("theta,mass") => {}
        _ => return Err(CliError::Config("missing atoms header".to_string())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| CliError::Config(format!("atoms row {}: need 2 fields", idx + 2)))?;
        let theta = a
            .parse()
            .map_err(|_| CliError::Config(format!("atoms row {}: bad theta", idx + 2)))?;
        let mass = b
            .parse()
            .map_err(|_| CliError::Config(format!("atoms row {}: bad mass", idx + 2)))?;
        rows.push((theta, mass));
    }
    Ok(rows)
}

/// Reads `re(z),im(z),residual,mode` rows written by the spectral stage.
pub fn parse_spectral_csv(text: &str) -> Result<Vec<(C64, f64, String)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("re(z),im(z),residual,mode") => {}
        _ => return Err(CliError::Config("missing spectral header".to_string())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Config(format!("spectral row {}: need 4 fields", idx + 2)));
        }
        let re: f64 = fields[0]
            .parse()
            .map_err(|_| CliError::Config(format!("spectral row {}: bad re", idx + 2)))?;
        let im: f64 = fields[1]
            .parse()
            .map_err(|_| CliError::Config(format!("spectral row {}: bad im", idx + 2)))?;
        let h: f64 = fields[2]
            .parse()
            .map_err(|_| CliError::Config(format!("spectral row {}: bad residual", idx + 2)))?;
        rows.push((C64::new(re, im), h, fields[3].to_string()));
    }
    Ok(rows)
}
