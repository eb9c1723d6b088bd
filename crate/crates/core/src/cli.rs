//! Command-line front end. Every subcommand reads one config file, runs the
//! experiment and writes CSV files into the output directory.
//!
//! Exit codes: 0 on success, 2 for an invalid configuration (the message
//! names the key), 1 for any other failure or a failed validation check.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{self, ResolvedConfig};
use crate::error::{Error, Result};
use crate::experiments::{self, ExperimentSpec, OutageCurve, Scheme};
use crate::validation::{self, ValidationSettings};

#[derive(Debug, Parser)]
#[command(name = "comac", version, about = "Over-the-air function computation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo outage curves for the configured scheme.
    Simulate(CommonArgs),
    /// Analytic outage approximations only.
    Analyze(CommonArgs),
    /// Analog scheme against TDMA at every SNR point.
    Compare(CommonArgs),
    /// Run the self-check battery.
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `network.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key.path=value`, may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

impl CommonArgs {
    fn load(&self) -> Result<ResolvedConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("network.seed={seed}"));
        }
        let stem = self
            .config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into());
        config::load_config(&self.config, &overrides)?.resolve(&stem)
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_configuration() { 2 } else { 1 }
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Compare(a) => compare(a),
        Command::Validate(a) => validate(a),
    }
}

fn shape_tag(spec: &ExperimentSpec) -> String {
    format!("K{}_M{}", spec.network.nodes, spec.network.seq_len)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

/// `epsilon,outage,ci_lo,ci_hi,analytic,n_trials,seed`; floats use the
/// shortest representation that parses back to the same value.
pub fn outage_csv(curve: &OutageCurve) -> String {
    let mut s = String::from("epsilon,outage,ci_lo,ci_hi,analytic,n_trials,seed\n");
    for i in 0..curve.epsilon.len() {
        let analytic = curve
            .analytic
            .as_ref()
            .map(|a| a[i].to_string())
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            curve.epsilon[i], curve.outage[i], curve.ci_lo[i], curve.ci_hi[i], analytic, curve.n_trials, curve.seed
        );
    }
    s
}

fn simulate(a: &CommonArgs) -> Result<i32> {
    let cfg = a.load()?;
    for spec in &cfg.specs {
        let curve = experiments::run_outage(spec, a.threads)?;
        let path = write_file(
            &a.out,
            &format!("outage_{}_{}.csv", cfg.name, shape_tag(spec)),
            &outage_csv(&curve),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn analyze(a: &CommonArgs) -> Result<i32> {
    let cfg = a.load()?;
    for spec in &cfg.specs {
        let curve = experiments::with_threads(a.threads, || experiments::analytic_curve(spec))??;
        let mut s = String::from("epsilon,analytic,analytic_ci_half_width,n_samples,seed\n");
        for i in 0..curve.epsilon.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                curve.epsilon[i], curve.value[i], curve.half_width[i], curve.n_samples, curve.seed
            );
        }
        let path = write_file(&a.out, &format!("analytic_{}_{}.csv", cfg.name, shape_tag(spec)), &s)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn compare(a: &CommonArgs) -> Result<i32> {
    let cfg = a.load()?;
    if cfg.snr_db_list.is_empty() {
        return Err(Error::config("experiment.snr_db_list", "compare needs at least one SNR point"));
    }
    let mut summary = String::from("K,M,snr_db,noise_var,comac_scheme,dominance,n_trials,seed\n");
    for spec in &cfg.specs {
        let mut comac = spec.clone();
        if comac.scheme == Scheme::Tdma {
            comac.scheme = Scheme::Comac;
        }
        let mut tdma = spec.clone();
        tdma.scheme = Scheme::Tdma;
        let points = experiments::run_comparison(&comac, &tdma, &cfg.snr_db_list, a.threads)?;
        for p in &points {
            for curve in [&p.comac, &p.tdma] {
                let name = format!(
                    "compare_{}_{}_snr{}dB_{}.csv",
                    cfg.name,
                    shape_tag(spec),
                    p.snr_db,
                    curve.scheme.name()
                );
                let path = write_file(&a.out, &name, &outage_csv(curve))?;
                println!("wrote {}", path.display());
            }
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{},{},{}",
                spec.network.nodes,
                spec.network.seq_len,
                p.snr_db,
                p.noise_var,
                comac.scheme.name(),
                p.dominance,
                spec.n_trials,
                spec.network.seed
            );
            println!("SNR {} dB: dominance = {}", p.snr_db, p.dominance);
        }
    }
    let path = write_file(&a.out, &format!("summary_{}.csv", cfg.name), &summary)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn validate(a: &CommonArgs) -> Result<i32> {
    let cfg = a.load()?;
    let spec = &cfg.specs[0];
    let mut settings = ValidationSettings::new(spec.network.clone());
    if let crate::model::FunctionKind::GeometricMean { base, floor } = spec.function.kind() {
        settings.geo_base = *base;
        settings.geo_floor = *floor;
    }
    if let Some(t) = cfg.tdma {
        settings.tdma_q = t.q;
    }
    let report = experiments::with_threads(a.threads, || validation::run_validation_suite(&settings))?;
    for line in report.lines() {
        println!("{line}");
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::input(e.to_string()))?;
    let path = write_file(&a.out, &format!("validation_{}.json", cfg.name), &json)?;
    println!("wrote {}", path.display());
    Ok(if report.all_passed() { 0 } else { 1 })
}
