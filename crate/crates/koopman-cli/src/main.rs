//! `koopman`: spectral analysis of Koopman operators from snapshot data.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use koopman_cli::config::{parse_kv_text, RunConfig};
use koopman_cli::pipeline::{run_until, StopAfter};
use koopman_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "koopman",
    version,
    about = "Residual-validated Koopman spectra, pseudospectra, and spectral-mass splits",
    after_help = "Config keys use dotted sections (system.*, dictionary.*, quadrature.*, \
                  analysis.*, output.dir, threads). --config loads a key=value file; \
                  subcommand flags override it and --set entries override both."
)]
struct Cli {
    /// Key-value config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Extra `section.key=value` override; repeatable, wins over flags.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for the run (0 = default pool).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for results, report, and the intermediate cache.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// System, dictionary, and quadrature flags shared by every pipeline
/// subcommand; each maps onto one config key.
#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// System: rotation, arnold, doubling, duffing, disk-rotation, iem,
    /// skew-linear, skew, ingest.
    #[arg(long)]
    system: Option<String>,
    /// Rotation angle as a fraction of the full turn.
    #[arg(long)]
    gamma: Option<f64>,
    /// Arnold map perturbation strength.
    #[arg(long = "map-eps")]
    map_eps: Option<f64>,
    /// Duffing stiffness parameter.
    #[arg(long)]
    alpha: Option<f64>,
    /// Duffing integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// IEM cell-size ratio in (0, 1).
    #[arg(long)]
    ratio: Option<f64>,
    /// IEM partition truncation depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Skew plateau as `a,b,c`.
    #[arg(long)]
    plateau: Option<String>,
    /// Skew plateau join width.
    #[arg(long = "join-width")]
    join_width: Option<f64>,
    /// Series file for system=ingest.
    #[arg(long = "ingest-path", value_name = "FILE")]
    ingest_path: Option<PathBuf>,
    /// Series columns: re or re-im.
    #[arg(long = "ingest-columns")]
    ingest_columns: Option<String>,
    /// Subtract the series mean before analysis.
    #[arg(long = "ingest-mean-subtract")]
    ingest_mean_subtract: bool,
    /// Dictionary: fourier, fourier-torus, fourier-disk, cosine, rbf,
    /// indicator-iem.
    #[arg(long)]
    dictionary: Option<String>,
    /// Maximum dictionary frequency.
    #[arg(long)]
    maxfreq: Option<usize>,
    /// Number of RBF centers (k-means on the snapshot points).
    #[arg(long = "rbf-centers")]
    rbf_centers: Option<usize>,
    /// RBF shape parameter.
    #[arg(long = "rbf-shape")]
    rbf_shape: Option<f64>,
    /// Seed for the k-means center selection.
    #[arg(long = "rbf-seed")]
    rbf_seed: Option<u64>,
    /// Quadrature rule: monte-carlo, trapezoid, exact-iem.
    #[arg(long)]
    rule: Option<String>,
    /// Number of snapshot pairs.
    #[arg(long)]
    m: Option<usize>,
    /// Seed for Monte Carlo sampling.
    #[arg(long)]
    seed: Option<u64>,
}

impl ModelArgs {
    fn apply(&self, map: &mut BTreeMap<String, String>) {
        let entries = [
            ("system.kind", self.system.clone()),
            ("system.gamma", self.gamma.map(|x| x.to_string())),
            ("system.eps", self.map_eps.map(|x| x.to_string())),
            ("system.alpha", self.alpha.map(|x| x.to_string())),
            ("system.dt", self.dt.map(|x| x.to_string())),
            ("system.ratio", self.ratio.map(|x| x.to_string())),
            ("system.depth", self.depth.map(|x| x.to_string())),
            ("system.plateau", self.plateau.clone()),
            ("system.join-width", self.join_width.map(|x| x.to_string())),
            (
                "system.ingest-path",
                self.ingest_path.as_ref().map(|p| p.display().to_string()),
            ),
            ("system.ingest-columns", self.ingest_columns.clone()),
            (
                "system.ingest-mean-subtract",
                self.ingest_mean_subtract.then(|| "true".to_string()),
            ),
            ("dictionary.kind", self.dictionary.clone()),
            ("dictionary.maxfreq", self.maxfreq.map(|x| x.to_string())),
            ("dictionary.rbf-centers", self.rbf_centers.map(|x| x.to_string())),
            ("dictionary.rbf-shape", self.rbf_shape.map(|x| x.to_string())),
            ("dictionary.rbf-seed", self.rbf_seed.map(|x| x.to_string())),
            ("quadrature.rule", self.rule.clone()),
            ("quadrature.m", self.m.map(|x| x.to_string())),
            ("quadrature.seed", self.seed.map(|x| x.to_string())),
        ];
        for (k, v) in entries {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample snapshot pairs and stop after the simulate stage.
    Simulate(ModelArgs),
    /// Assemble the Galerkin matrices and stop.
    Assemble(ModelArgs),
    /// Spectrum: residual-certified (sigma1) or limit-stabilized (sigma2).
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        /// sigma1 or sigma2.
        #[arg(long, default_value = "sigma1")]
        mode: String,
        /// Grid as `spacing,radius` or `spacing,radius,re0,re1,im0,im1`.
        #[arg(long)]
        grid: Option<String>,
        /// Pseudospectrum level for sigma2.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Snapshot counts for the sigma2 tower, comma-separated.
        #[arg(long = "m-schedule")]
        m_schedule: Option<String>,
    },
    /// Epsilon-pseudospectrum over a plane grid.
    Pseudospectrum {
        #[command(flatten)]
        model: ModelArgs,
        /// Pseudospectrum level; must exceed the grid spacing.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Grid as `spacing,radius` or `spacing,radius,re0,re1,im0,im1`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Raw EDMD eigenvalues with attached residuals.
    Edmd(#[command(flatten)] ModelArgs),
    /// Pure-point versus continuous spectral-mass split.
    Rage {
        #[command(flatten)]
        model: ModelArgs,
        /// Projection ranks, comma-separated.
        #[arg(long = "n-schedule")]
        n_schedule: Option<String>,
        /// Time-average horizons, comma-separated.
        #[arg(long = "l-schedule")]
        l_schedule: Option<String>,
        /// Dictionary indices to analyze, comma-separated.
        #[arg(long)]
        observables: Option<String>,
    },
    /// Weak-mixing decision from the two-index tower.
    Weakmix {
        #[command(flatten)]
        model: ModelArgs,
        /// Outer tower index (observable count and projection rank).
        #[arg(long)]
        n2: Option<usize>,
        /// Inner horizons, strictly increasing, comma-separated.
        #[arg(long = "l-schedule")]
        l_schedule: Option<String>,
    },
    /// Built-in demonstration pipelines: doubling, iem.
    Demo {
        #[command(flatten)]
        model: ModelArgs,
        name: String,
    },
    /// Validate an external series file and echo its normalized form.
    Ingest {
        path: PathBuf,
        /// Series columns: re or re-im.
        #[arg(long, default_value = "re")]
        columns: String,
        /// Subtract the series mean.
        #[arg(long = "mean-subtract")]
        mean_subtract: bool,
        /// Write the normalized series here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Command::Ingest { path, columns, mean_subtract, out } = &cli.command {
        return run_ingest(path, columns, *mean_subtract, out.as_deref());
    }

    let mut map = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config `{}`: {e}", path.display()))
            })?;
            parse_kv_text(&text)?
        }
        None => BTreeMap::new(),
    };

    let stop = apply_command(&cli.command, &mut map);
    for entry in &cli.set {
        let (k, v) = entry.split_once('=').ok_or_else(|| {
            CliError::Config(format!("--set needs KEY=VALUE, got `{entry}`"))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(threads) = cli.threads {
        map.insert("threads".to_string(), threads.to_string());
    }
    if let Some(dir) = &cli.output {
        map.insert("output.dir".to_string(), dir.display().to_string());
    }
    if stop != StopAfter::Analyze && !map.contains_key("analysis.kind") {
        map.insert("analysis.kind".to_string(), "edmd".to_string());
    }
    if map.get("analysis.kind").map(String::as_str) == Some("demo")
        && !map.contains_key("system.kind")
    {
        map.insert("system.kind".to_string(), "doubling".to_string());
    }

    let config = RunConfig::from_keys(map)?;
    let report = run_until(&config, stop)?;

    println!("certificate: {}", report.certificate);
    for (file, sha) in &report.manifest {
        println!("{}  {}", &sha[..16.min(sha.len())], file);
    }
    println!("report: {}", config.output_dir.join("report.txt").display());
    Ok(())
}

fn apply_command(command: &Command, map: &mut BTreeMap<String, String>) -> StopAfter {
    let set = |map: &mut BTreeMap<String, String>, k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    match command {
        Command::Simulate(model) => {
            model.apply(map);
            StopAfter::Simulate
        }
        Command::Assemble(model) => {
            model.apply(map);
            StopAfter::Assemble
        }
        Command::Spectrum { model, mode, grid, epsilon, m_schedule } => {
            model.apply(map);
            let kind = if mode == "sigma2" { "spectrum-sigma2" } else { "spectrum-sigma1" };
            map.insert("analysis.kind".to_string(), kind.to_string());
            set(map, "analysis.grid", grid.clone());
            set(map, "analysis.epsilon", epsilon.map(|x| x.to_string()));
            set(map, "analysis.m-schedule", m_schedule.clone());
            StopAfter::Analyze
        }
        Command::Pseudospectrum { model, epsilon, grid } => {
            model.apply(map);
            map.insert("analysis.kind".to_string(), "pseudospectrum".to_string());
            set(map, "analysis.epsilon", epsilon.map(|x| x.to_string()));
            set(map, "analysis.grid", grid.clone());
            StopAfter::Analyze
        }
        Command::Edmd(model) => {
            model.apply(map);
            map.insert("analysis.kind".to_string(), "edmd".to_string());
            StopAfter::Analyze
        }
        Command::Rage { model, n_schedule, l_schedule, observables } => {
            model.apply(map);
            map.insert("analysis.kind".to_string(), "rage".to_string());
            set(map, "analysis.n-schedule", n_schedule.clone());
            set(map, "analysis.l-schedule", l_schedule.clone());
            set(map, "analysis.observables", observables.clone());
            StopAfter::Analyze
        }
        Command::Weakmix { model, n2, l_schedule } => {
            model.apply(map);
            map.insert("analysis.kind".to_string(), "weak-mixing".to_string());
            set(map, "analysis.n2", n2.map(|x| x.to_string()));
            set(map, "analysis.l-schedule", l_schedule.clone());
            StopAfter::Analyze
        }
        Command::Demo { model, name } => {
            model.apply(map);
            map.insert("analysis.kind".to_string(), "demo".to_string());
            map.insert("analysis.demo-name".to_string(), name.clone());
            StopAfter::Analyze
        }
        Command::Ingest { .. } => unreachable!("handled before config assembly"),
    }
}

fn run_ingest(
    path: &std::path::Path,
    columns: &str,
    mean_subtract: bool,
    out: Option<&std::path::Path>,
) -> Result<()> {
    use koopman_cli::config::ColumnLayout;
    let layout = match columns {
        "re" => ColumnLayout::Real,
        "re-im" => ColumnLayout::ReIm,
        other => {
            return Err(CliError::Config(format!(
                "--columns must be `re` or `re-im`, got `{other}`"
            )))
        }
    };
    let values = koopman_cli::ingest::ingest_series(path, layout, mean_subtract)?;
    let mean = values.iter().sum::<nalgebra::Complex<f64>>() / values.len() as f64;
    let power = values.iter().map(|v| v.norm_sqr()).sum::<f64>() / values.len() as f64;
    println!("samples: {}", values.len());
    println!("mean: {:.6e},{:.6e}", mean.re, mean.im);
    println!("power: {power:.6e}");
    if let Some(out) = out {
        std::fs::write(out, koopman_cli::ingest::series_csv(&values)).map_err(|e| {
            CliError::StageIo { stage: "report", message: format!("write {}: {e}", out.display()) }
        })?;
        println!("wrote: {}", out.display());
    }
    Ok(())
}
