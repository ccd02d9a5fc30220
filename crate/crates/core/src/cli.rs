//! Batch front end: config files, CSV curves, run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::AbepCurve;
use crate::error::{Error, Result};
use crate::montecarlo::{
    bound_curve, compare_with_bound, run_point, BerEstimate, Fidelity, SimConfig, ValidationReport,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_HEADER: &str = "snr_db,abep_bound,ber_sim,ci95,errors,bits";

/// Exit status for a run that found the bound violated.
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const REQUIRED_KEYS: [&str; 4] = ["L", "L_s", "M", "snr_db"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Bound,
    Validate,
    Figures,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Bound => "bound",
            Mode::Validate => "validate",
            Mode::Figures => "figures",
        }
    }
}

/// Written next to every run's outputs; feeding it back as `--config`
/// repeats the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SimConfig,
    pub mode: Mode,
    pub output_path: PathBuf,
    pub tool_version: String,
    pub wall_time: f64,
}

/// Parses a flat JSON config, or the `config` object of a run manifest.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut doc: Value = serde_json::from_str(text)?;
    if doc.get("config").is_some() && doc.get("mode").is_some() {
        doc = doc["config"].take();
    }
    let map = doc
        .as_object()
        .ok_or_else(|| Error::Parse("config must be a JSON object".into()))?;
    if let Some(key) = REQUIRED_KEYS.iter().find(|k| !map.contains_key(**k)) {
        return Err(Error::MissingKey(key));
    }
    let cfg: SimConfig = serde_json::from_value(doc)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// One CSV row. Absent values are written as empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub snr_db: f64,
    pub abep_bound: Option<f64>,
    pub ber_sim: Option<f64>,
    pub ci95: Option<f64>,
    pub errors: Option<u64>,
    pub bits: Option<u64>,
}

impl CurveRecord {
    pub fn bound_only(snr_db: f64, abep: f64) -> Self {
        CurveRecord {
            snr_db,
            abep_bound: Some(abep),
            ber_sim: None,
            ci95: None,
            errors: None,
            bits: None,
        }
    }

    pub fn with_estimate(mut self, est: &BerEstimate) -> Self {
        self.ber_sim = Some(est.point);
        self.ci95 = Some(est.ci95_half_width);
        self.errors = Some(est.bit_errors);
        self.bits = Some(est.bits_sent);
        self
    }

    pub fn from_estimate(est: &BerEstimate) -> Self {
        CurveRecord {
            snr_db: est.snr_db,
            abep_bound: None,
            ber_sim: None,
            ci95: None,
            errors: None,
            bits: None,
        }
        .with_estimate(est)
    }
}

pub fn bound_records(curve: &AbepCurve) -> Vec<CurveRecord> {
    curve
        .snr_grid_db
        .iter()
        .zip(&curve.abep)
        .map(|(&s, &p)| CurveRecord::bound_only(s, p))
        .collect()
}

pub fn emit_csv(records: &[CurveRecord], path: &Path) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in records {
        writer.serialize(r)?;
    }
    let body = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is ASCII"));
    fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CurveRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header '{header}'")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Parameter grids of the three reference figures: file stem, `L`, `L_s`, `M`.
pub fn figure_grid() -> Vec<(String, usize, usize, usize)> {
    let mut grid = Vec::new();
    for l in [6, 12, 18] {
        grid.push((format!("fig1_L{l}"), l, 4, 4));
    }
    for l_s in [2, 4, 8] {
        grid.push((format!("fig2_Ls{l_s}"), 12, l_s, 4));
    }
    for m in [2, 4, 8] {
        grid.push((format!("fig3_M{m}"), 12, 4, m));
    }
    grid
}

/// What a mode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub report: Option<ValidationReport>,
    pub summary: String,
}

fn simulate(cfg: &SimConfig) -> Result<Vec<BerEstimate>> {
    cfg.snr_grid_db.iter().map(|&s| run_point(cfg, s)).collect()
}

fn format_report(report: &ValidationReport) -> String {
    let mut s = String::from("snr_db      bound        ber_sim      3sigma       tightness  ok\n");
    for p in &report.points {
        let tight = p.tightness.map_or("-".to_string(), |t| format!("{t:.3}"));
        let _ = writeln!(
            s,
            "{:<11} {:<12.4e} {:<12.4e} {:<12.4e} {:<10} {}",
            p.snr_db,
            p.bound,
            p.simulated,
            3.0 * p.sigma,
            tight,
            if p.dominated { "yes" } else { "NO" }
        );
    }
    let _ = writeln!(
        s,
        "dominance {}",
        if report.passed { "holds" } else { "VIOLATED" }
    );
    s
}

/// Runs `mode` for `cfg`, writing CSV files and the manifest into `out`.
pub fn run_mode(mode: Mode, cfg: &SimConfig, out: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut report = None;
    let mut exit_code = 0;
    let summary = match mode {
        Mode::Simulate => {
            let estimates = simulate(cfg)?;
            let path = out.join("simulate.csv");
            emit_csv(
                &estimates
                    .iter()
                    .map(CurveRecord::from_estimate)
                    .collect::<Vec<_>>(),
                &path,
            )?;
            files.push(path);
            format!("simulated {} SNR points", estimates.len())
        }
        Mode::Bound => {
            let curve = bound_curve(cfg)?;
            let path = out.join("bound.csv");
            emit_csv(&bound_records(&curve), &path)?;
            files.push(path);
            format!("evaluated the bound at {} SNR points", curve.len())
        }
        Mode::Validate => {
            let curve = bound_curve(cfg)?;
            let estimates = simulate(cfg)?;
            let checked = compare_with_bound(&estimates, &curve)?;
            let records: Vec<CurveRecord> = bound_records(&curve)
                .into_iter()
                .zip(&estimates)
                .map(|(r, e)| r.with_estimate(e))
                .collect();
            let path = out.join("validate.csv");
            emit_csv(&records, &path)?;
            files.push(path);
            let path = out.join("report.json");
            fs::write(&path, serde_json::to_string_pretty(&checked)?)?;
            files.push(path);
            if !checked.passed {
                exit_code = EXIT_VIOLATED;
            }
            let text = format_report(&checked);
            report = Some(checked);
            text
        }
        Mode::Figures => {
            for (stem, l, l_s, m) in figure_grid() {
                let mut fig = cfg.clone();
                fig.l_total = l;
                fig.l_selected = l_s;
                fig.mod_order = m;
                let path = out.join(format!("{stem}.csv"));
                emit_csv(&bound_records(&bound_curve(&fig)?), &path)?;
                files.push(path);
            }
            format!("wrote {} figure curves", files.len())
        }
    };
    let manifest = RunManifest {
        config: cfg.clone(),
        mode,
        output_path: out.to_path_buf(),
        tool_version: TOOL_VERSION.to_string(),
        wall_time: started.elapsed().as_secs_f64(),
    };
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    files.push(path);
    Ok(RunOutcome {
        exit_code,
        files,
        report,
        summary,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "ris-ssm",
    version,
    about = "RIS-assisted spatial scattering modulation: BER simulation and ABEP bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Flat JSON config, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if needed).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub fidelity: Option<FidelityArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FidelityArg {
    Beamspace,
    Physical,
}

impl From<FidelityArg> for Fidelity {
    fn from(f: FidelityArg) -> Self {
        match f {
            FidelityArg::Beamspace => Fidelity::Beamspace,
            FidelityArg::Physical => Fidelity::Physical,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo BER over the SNR grid.
    Simulate(RunArgs),
    /// Analytical ABEP union bound over the SNR grid.
    Bound(RunArgs),
    /// Simulate, then check the simulation against the bound.
    Validate(RunArgs),
    /// Bound curves for the reference L, L_s and M sweeps.
    Figures(RunArgs),
}

impl Command {
    fn split(&self) -> (Mode, &RunArgs) {
        match self {
            Command::Simulate(a) => (Mode::Simulate, a),
            Command::Bound(a) => (Mode::Bound, a),
            Command::Validate(a) => (Mode::Validate, a),
            Command::Figures(a) => (Mode::Figures, a),
        }
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let (mode, args) = cli.command.split();
    let result = load_config(&args.config).and_then(|mut cfg| {
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some(f) = args.fidelity {
            cfg.fidelity = f.into();
        }
        run_mode(mode, &cfg, &args.out)
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if !outcome.summary.ends_with('\n') {
                println!();
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("ris-ssm {}: {e}", mode.name());
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
