//! Command-line front end.
//!
//! `cvtele <check|teleport|sweep|sample|oracle> --config <path> [--out <dir>] [--seed <n>]`
//!
//! Exit status is 0 on success, 1 when a run violates one of its internal
//! checks and 2 when the configuration is rejected.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    accepted_stats, accepted_stats_from, density_flatness, probability_flatness, sample_indices,
    sweep_sigma, FlatnessAxis, ProtocolKind, SweepResult, SweepSetup,
};
use crate::epr::{build_epr_energy, build_epr_position, ideal_epr_energy, ideal_epr_position, pump_index, EprSpec};
use crate::error::Error;
use crate::hilbert::{max_abs, Boundary, Grid, PureState, C64};
use crate::measurement::{check_completeness, PovmFamily};
use crate::protocol_energy::{build_energy_povm, EnergyProtocol, SupportWindow, TAU_SUPP};
use crate::protocol_xp::{build_xp_povm, XpProtocol};
use crate::qubit_oracle::{bell_povm, corrected_total, qubit_grid, qubit_state, teleport_qubit};
use crate::random;
use crate::record::{RecordRow, TeleportRecord};
use crate::states::InputState;

pub const RECORDS_JSON: &str = "records.json";
pub const RECORDS_CSV: &str = "records.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const SUMMARY_JSON: &str = "summary.json";
const ARTIFACTS: [&str; 5] = [RECORDS_JSON, RECORDS_CSV, SWEEP_CSV, SAMPLES_CSV, SUMMARY_JSON];

/// Fidelity an ideal-pair run must reach on every accepted outcome.
const EXACT_FIDELITY_TOL: f64 = 1e-9;
const PROBABILITY_TOL: f64 = 1e-9;
const COMPLETENESS_LIMIT: f64 = 1e-12;
const ORACLE_TOL: f64 = 1e-14;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "cvtele", version, about = "Discretized continuous-variable teleportation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Completeness, positivity and orthogonality of the measurement.
    Check(CommonArgs),
    /// Run the protocol and write per-outcome records.
    Teleport(CommonArgs),
    /// Fidelity against EPR width.
    Sweep(CommonArgs),
    /// Draw outcomes from the protocol's outcome distribution.
    Sample(CommonArgs),
    /// Exact qubit teleportation on basis and random states.
    Oracle(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EprConfig {
    #[serde(default = "default_true")]
    pub ideal: bool,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub envelope: Option<f64>,
}

impl Default for EprConfig {
    fn default() -> Self {
        EprConfig {
            ideal: true,
            sigma: None,
            envelope: None,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    GaussianPacket,
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputStateConfig {
    pub kind: StateKind,
    #[serde(default)]
    pub center: Option<f64>,
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub support: Option<[f64; 2]>,
    #[serde(default)]
    pub momentum: f64,
}

impl InputStateConfig {
    fn to_state(&self) -> Result<InputState, CliError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Config(format!("input_state.{name} is required for this kind")))
        };
        Ok(match self.kind {
            StateKind::GaussianPacket => InputState::GaussianPacket {
                center: need(self.center, "center")?,
                width: need(self.width, "width")?,
                momentum: self.momentum,
            },
            StateKind::Bump => {
                let [e_min, e_max] = self
                    .support
                    .ok_or_else(|| CliError::Config("input_state.support is required for a bump".into()))?;
                InputState::Bump {
                    e_min,
                    e_max,
                    momentum: self.momentum,
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub epsilon0: Option<f64>,
    #[serde(default)]
    pub epr: EprConfig,
    #[serde(default)]
    pub input_state: Option<InputStateConfig>,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    #[serde(default)]
    pub seed: u64,
    /// Allow-list of artifact file names; all artifacts when absent.
    #[serde(default)]
    pub outputs: Option<Vec<String>>,
    #[serde(default)]
    pub sweep_sigmas: Option<Vec<f64>>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
}

fn default_oversample() -> usize {
    2
}

fn default_sample_count() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid, CliError> {
        match self.protocol {
            ProtocolKind::Qubit => Ok(qubit_grid()),
            kind => {
                let g = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| CliError::Config(format!("grid is required for the {kind} protocol")))?;
                let boundary = if kind == ProtocolKind::Xp {
                    Boundary::Cyclic
                } else {
                    Boundary::Truncated
                };
                Grid::new(g.n_points, g.spacing, 0.0, boundary)
                    .map_err(|e| CliError::Config(format!("grid: {e}")))
            }
        }
    }

    pub fn input_state(&self) -> Result<PureState, CliError> {
        let grid = self.grid()?;
        match (&self.input_state, self.protocol) {
            (None, ProtocolKind::Qubit) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok(random::pure_state(&mut rng, vec![grid]))
            }
            (Some(_), ProtocolKind::Qubit) => Err(CliError::Config(
                "input_state is not used by the qubit protocol; the state is drawn from seed".into(),
            )),
            (None, _) => Err(CliError::Config("input_state is required".into())),
            (Some(s), _) => s
                .to_state()?
                .build(&grid)
                .map_err(|e| CliError::Config(format!("input_state: {e}"))),
        }
    }

    pub fn epsilon0(&self) -> Result<f64, CliError> {
        self.epsilon0
            .ok_or_else(|| CliError::Config("epsilon0 is required for the energy protocol".into()))
    }

    pub fn epr_state(&self) -> Result<PureState, CliError> {
        let g = self.grid()?;
        let epr = match self.protocol {
            ProtocolKind::Xp if self.epr.ideal => ideal_epr_position(&g, &g),
            ProtocolKind::Xp => build_epr_position(&g, &g, &EprSpec::position(self.sigma()?, self.envelope()?)),
            ProtocolKind::Energy if self.epr.ideal => ideal_epr_energy(&g, &g, self.epsilon0()?),
            ProtocolKind::Energy => build_epr_energy(&g, &g, &EprSpec::energy(self.sigma()?, self.epsilon0()?)),
            ProtocolKind::Qubit => Ok(crate::qubit_oracle::epr_pair()),
        };
        epr.map_err(|e| CliError::Config(format!("epr: {e}")))
    }

    fn sigma(&self) -> Result<f64, CliError> {
        self.epr
            .sigma
            .ok_or_else(|| CliError::Config("epr.sigma is required when epr.ideal is false".into()))
    }

    fn envelope(&self) -> Result<f64, CliError> {
        self.epr
            .envelope
            .ok_or_else(|| CliError::Config("epr.envelope is required for a regularized xp pair".into()))
    }

    pub fn wants(&self, artifact: &str) -> bool {
        self.outputs.as_ref().is_none_or(|o| o.iter().any(|a| a == artifact))
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.oversample == 0 {
            return Err(CliError::Config("oversample must be at least 1".into()));
        }
        if let Some(outs) = &self.outputs {
            if let Some(bad) = outs.iter().find(|o| !ARTIFACTS.contains(&o.as_str())) {
                return Err(CliError::Config(format!(
                    "outputs: unknown artifact {bad:?}, expected one of {ARTIFACTS:?}"
                )));
            }
        }
        if let Some(s) = &self.sweep_sigmas {
            if s.iter().any(|x| !(*x > 0.0)) {
                return Err(CliError::Config("sweep_sigmas must be positive".into()));
            }
        }
        let grid = self.grid()?;
        let psi = self.input_state()?;
        if self.protocol == ProtocolKind::Energy {
            let eps0 = self.epsilon0()?;
            pump_index(&grid, eps0).map_err(|e| CliError::Config(format!("epsilon0: {e}")))?;
            let w = SupportWindow::from_state(&psi, TAU_SUPP)?;
            let e_max = match self.input_state.as_ref().and_then(|s| s.support) {
                Some([_, hi]) => hi.max(w.e_max),
                None => w.e_max,
            };
            if grid.span() < eps0 + e_max {
                return Err(CliError::Config(format!(
                    "grid span {} must be at least epsilon0 + e_max = {}",
                    grid.span(),
                    eps0 + e_max
                )));
            }
        }
        self.epr_state()?;
        Ok(())
    }
}

/// Parses and validates a JSON configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Headline numbers of a run, written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protocol: ProtocolKind,
    pub completeness_deviation: Option<f64>,
    pub min_fidelity_accepted: Option<f64>,
    pub accepted_mass: Option<f64>,
    pub flatness_deviation: Option<f64>,
}

fn flatness_axis(protocol: ProtocolKind) -> FlatnessAxis {
    match protocol {
        ProtocolKind::Energy => FlatnessAxis::TOnly,
        _ => FlatnessAxis::All,
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Summary statistics recomputed from exported rows.
pub fn summary_from_rows(protocol: ProtocolKind, completeness: Option<f64>, rows: &[RecordRow]) -> Summary {
    let stats = accepted_stats_from(rows.iter().map(|r| (r.accepted, r.fidelity, r.probability)));
    let flat = density_flatness(
        rows.iter().map(|r| (r.label.indices.first().copied().unwrap_or(0), r.density)),
        flatness_axis(protocol),
    );
    Summary {
        protocol,
        completeness_deviation: completeness,
        min_fidelity_accepted: finite(stats.min_fidelity),
        accepted_mass: Some(stats.accepted_mass),
        flatness_deviation: (!rows.is_empty()).then_some(flat),
    }
}

pub fn write_records_json(path: &Path, rows: &[RecordRow]) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(rows).map_err(|e| io_err(path, e))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_records_json(path: &Path) -> Result<Vec<RecordRow>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

const RECORD_HEADER: [&str; 10] = [
    "coord0", "coord1", "index0", "index1", "bin_weight", "density", "probability", "accepted",
    "fidelity", "clipped",
];

/// Flat per-outcome rows; the first coordinate is `X` or `2Ω`, the second
/// `P` or `T`.
pub fn write_records_csv(path: &Path, rows: &[RecordRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(RECORD_HEADER).map_err(|e| io_err(path, e))?;
    for r in rows {
        let c = |i: usize| r.label.coords.get(i).map(|&x| fmt_f64(x)).unwrap_or_default();
        let k = |i: usize| r.label.indices.get(i).map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            c(0),
            c(1),
            k(0),
            k(1),
            fmt_f64(r.label.bin_weight),
            fmt_f64(r.density),
            fmt_f64(r.probability),
            r.accepted.to_string(),
            r.fidelity.map(fmt_f64).unwrap_or_default(),
            r.clipped.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<RecordRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let bad = |what: &str| io_err(path, format!("malformed {what}"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad("row"));
        let float = |i: usize| field(i)?.parse::<f64>().map_err(|_| bad(RECORD_HEADER[i]));
        let opt_float = |i: usize| match field(i)? {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(RECORD_HEADER[i])),
        };
        let opt_int = |i: usize| match field(i)? {
            "" => Ok(None),
            s => s.parse::<i64>().map(Some).map_err(|_| bad(RECORD_HEADER[i])),
        };
        let boolean = |i: usize| field(i)?.parse::<bool>().map_err(|_| bad(RECORD_HEADER[i]));
        let coords = [opt_float(0)?, opt_float(1)?].into_iter().flatten().collect();
        let indices = [opt_int(2)?, opt_int(3)?].into_iter().flatten().collect();
        rows.push(RecordRow {
            label: crate::measurement::OutcomeLabel::new(coords, indices, float(4)?),
            density: float(5)?,
            probability: float(6)?,
            accepted: boolean(7)?,
            fidelity: opt_float(8)?,
            clipped: boolean(9)?,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["sigma", "mean_fidelity", "min_fidelity", "accepted_mass"])
        .map_err(|e| io_err(path, e))?;
    for i in 0..sweep.sigmas.len() {
        w.write_record([
            fmt_f64(sweep.sigmas[i]),
            fmt_f64(sweep.mean_fidelity[i]),
            fmt_f64(sweep.min_fidelity[i]),
            fmt_f64(sweep.accepted_mass[i]),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_summary(path: &Path, s: &Summary) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(s).map_err(|e| io_err(path, e))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

struct Context<'a> {
    cfg: ExperimentConfig,
    out: &'a Path,
    stdout: &'a mut dyn Write,
}

impl Context<'_> {
    fn say(&mut self, line: String) -> Result<(), CliError> {
        writeln!(self.stdout, "{line}").map_err(|e| CliError::Io(e.to_string()))
    }

    fn artifact(&self, name: &str) -> Option<PathBuf> {
        self.cfg.wants(name).then(|| self.out.join(name))
    }

    fn povm(&self) -> Result<PovmFamily, CliError> {
        let g = self.cfg.grid()?;
        Ok(match self.cfg.protocol {
            ProtocolKind::Xp => build_xp_povm(&g, &g)?,
            ProtocolKind::Energy => build_energy_povm(&g, &g, self.cfg.oversample)?,
            ProtocolKind::Qubit => bell_povm(),
        })
    }

    fn records(&self) -> Result<Vec<TeleportRecord>, CliError> {
        let psi = self.cfg.input_state()?;
        let epr = self.cfg.epr_state()?;
        let g = self.cfg.grid()?;
        Ok(match self.cfg.protocol {
            ProtocolKind::Xp => XpProtocol::new(&g)?.run(&psi, &epr)?,
            ProtocolKind::Energy => {
                EnergyProtocol::new(&g, self.cfg.oversample)?.run(&psi, &epr, self.cfg.epsilon0()?)?
            }
            ProtocolKind::Qubit => teleport_qubit(&psi)?,
        })
    }
}

fn check(ctx: &mut Context) -> Result<(), CliError> {
    let povm = ctx.povm()?;
    let report = check_completeness(&povm);
    let ortho = povm.orthogonality_deviation();
    ctx.say(format!("protocol = {}", ctx.cfg.protocol))?;
    ctx.say(format!("elements = {}", povm.len()))?;
    ctx.say(format!("completeness deviation = {:.3e}", report.deviation))?;
    ctx.say(format!("min element eigenvalue = {:.3e}", report.min_eigenvalue))?;
    ctx.say(format!("orthogonal = {} (cross-product max {:.3e})", povm.is_orthogonal(), ortho))?;
    if let Some(p) = ctx.artifact(SUMMARY_JSON) {
        write_summary(
            &p,
            &Summary {
                protocol: ctx.cfg.protocol,
                completeness_deviation: Some(report.deviation),
                min_fidelity_accepted: None,
                accepted_mass: None,
                flatness_deviation: None,
            },
        )?;
    }
    if !(report.deviation < COMPLETENESS_LIMIT) {
        return Err(CliError::Assertion(format!(
            "completeness deviation {:.3e} exceeds {COMPLETENESS_LIMIT:e}",
            report.deviation
        )));
    }
    if report.min_eigenvalue < -COMPLETENESS_LIMIT {
        return Err(CliError::Assertion("measurement has a negative element".into()));
    }
    Ok(())
}

fn teleport(ctx: &mut Context) -> Result<(), CliError> {
    let completeness = check_completeness(&ctx.povm()?).deviation;
    let records = ctx.records()?;
    let rows: Vec<RecordRow> = records.iter().map(TeleportRecord::to_row).collect();
    let summary = Summary {
        flatness_deviation: Some(probability_flatness(&records, flatness_axis(ctx.cfg.protocol))?),
        ..summary_from_rows(ctx.cfg.protocol, Some(completeness), &rows)
    };
    if let Some(p) = ctx.artifact(RECORDS_JSON) {
        write_records_json(&p, &rows)?;
    }
    if let Some(p) = ctx.artifact(RECORDS_CSV) {
        write_records_csv(&p, &rows)?;
    }
    if let Some(p) = ctx.artifact(SUMMARY_JSON) {
        write_summary(&p, &summary)?;
    }
    let stats = accepted_stats(&records);
    let accepted = records.iter().filter(|r| r.accepted).count();
    ctx.say(format!(
        "min fidelity = {:.6} over {accepted} outcomes",
        stats.min_fidelity
    ))?;
    ctx.say(format!("mean fidelity = {:.6}", stats.mean_fidelity))?;
    ctx.say(format!("accepted mass = {:.6}", stats.accepted_mass))?;
    let total: f64 = records.iter().map(TeleportRecord::probability).sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(CliError::Assertion(format!("outcome probabilities sum to {total}")));
    }
    if ctx.cfg.epr.ideal && stats.min_fidelity.is_finite() && stats.min_fidelity < 1.0 - EXACT_FIDELITY_TOL {
        return Err(CliError::Assertion(format!(
            "ideal pair but accepted fidelity drops to {}",
            stats.min_fidelity
        )));
    }
    Ok(())
}

fn sweep(ctx: &mut Context) -> Result<(), CliError> {
    let sigmas = ctx
        .cfg
        .sweep_sigmas
        .clone()
        .ok_or_else(|| CliError::Config("sweep_sigmas is required for sweep".into()))?;
    let input = ctx
        .cfg
        .input_state
        .as_ref()
        .ok_or_else(|| CliError::Config("input_state is required for sweep".into()))?
        .to_state()?;
    let grid = ctx.cfg.grid()?;
    let setup = SweepSetup {
        grid,
        input,
        envelope: ctx.cfg.epr.envelope.unwrap_or(2.0 * grid.span()),
        epsilon0: ctx.cfg.epsilon0.unwrap_or(0.0),
        oversample: ctx.cfg.oversample,
    };
    let result = sweep_sigma(ctx.cfg.protocol, &sigmas, &setup).map_err(|e| match e {
        Error::InvalidEpr(m) | Error::InvalidInput(m) => CliError::Config(m),
        other => CliError::Run(other),
    })?;
    if let Some(p) = ctx.artifact(SWEEP_CSV) {
        write_sweep_csv(&p, &result)?;
    }
    ctx.say("sigma mean_fidelity min_fidelity accepted_mass".into())?;
    for i in 0..result.sigmas.len() {
        ctx.say(format!(
            "{:.6e} {:.9} {:.9} {:.9}",
            result.sigmas[i], result.mean_fidelity[i], result.min_fidelity[i], result.accepted_mass[i]
        ))?;
    }
    if let Some(p) = ctx.artifact(SUMMARY_JSON) {
        let last = result.sigmas.len() - 1;
        write_summary(
            &p,
            &Summary {
                protocol: ctx.cfg.protocol,
                completeness_deviation: None,
                min_fidelity_accepted: finite(result.min_fidelity[last]),
                accepted_mass: Some(result.accepted_mass[last]),
                flatness_deviation: None,
            },
        )?;
    }
    let out_of_range = result
        .mean_fidelity
        .iter()
        .chain(&result.min_fidelity)
        .any(|f| f.is_finite() && !(-1e-12..=1.0 + 1e-12).contains(f));
    if out_of_range {
        return Err(CliError::Assertion("fidelity outside [0, 1]".into()));
    }
    Ok(())
}

fn sample(ctx: &mut Context) -> Result<(), CliError> {
    let records = ctx.records()?;
    let draws = sample_indices(&records, ctx.cfg.sample_count, ctx.cfg.seed)?;
    if let Some(p) = ctx.artifact(SAMPLES_CSV) {
        let mut w = csv::Writer::from_path(&p).map_err(|e| io_err(&p, e))?;
        w.write_record(["draw", "record", "coord0", "coord1", "accepted"])
            .map_err(|e| io_err(&p, e))?;
        for (n, &i) in draws.iter().enumerate() {
            let l = &records[i].label;
            let c = |k: usize| l.coords.get(k).map(|&x| fmt_f64(x)).unwrap_or_default();
            w.write_record([n.to_string(), i.to_string(), c(0), c(1), records[i].accepted.to_string()])
                .map_err(|e| io_err(&p, e))?;
        }
        w.flush().map_err(|e| io_err(&p, e))?;
    }
    let accepted = draws.iter().filter(|&&i| records[i].accepted).count();
    ctx.say(format!(
        "{} draws, {accepted} accepted (seed {})",
        draws.len(),
        ctx.cfg.seed
    ))?;
    Ok(())
}

fn oracle(ctx: &mut Context) -> Result<(), CliError> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut states = vec![
        qubit_state(one, zero)?,
        qubit_state(zero, one)?,
        qubit_state(h, h)?,
        qubit_state(h, C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2))?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    states.extend((0..16).map(|_| random::pure_state(&mut rng, vec![qubit_grid()])));
    let completeness = check_completeness(&bell_povm()).deviation;
    let (mut prob_dev, mut fid_dev, mut agg_dev) = (0.0f64, 0.0f64, 0.0f64);
    let mut rows = Vec::new();
    for psi in &states {
        let records = teleport_qubit(psi)?;
        for r in &records {
            prob_dev = prob_dev.max((r.probability() - 0.25).abs());
            fid_dev = fid_dev.max(r.fidelity.map_or(1.0, |f| (f - 1.0).abs()));
        }
        let total = corrected_total(psi)?;
        agg_dev = agg_dev.max(max_abs(&(total.matrix() - psi.to_density().matrix())));
        rows.extend(records.iter().map(TeleportRecord::to_row));
    }
    ctx.say(format!("states = {}", states.len()))?;
    ctx.say(format!("max |p - 1/4| = {prob_dev:.3e}"))?;
    ctx.say(format!("max |F - 1| = {fid_dev:.3e}"))?;
    ctx.say(format!("max aggregate deviation = {agg_dev:.3e}"))?;
    if let Some(p) = ctx.artifact(SUMMARY_JSON) {
        write_summary(&p, &summary_from_rows(ProtocolKind::Qubit, Some(completeness), &rows))?;
    }
    for (what, dev) in [("probability", prob_dev), ("fidelity", fid_dev), ("aggregate", agg_dev)] {
        if !(dev <= ORACLE_TOL) {
            return Err(CliError::Assertion(format!("qubit {what} deviation {dev:.3e}")));
        }
    }
    Ok(())
}

/// Runs one command; `stdout` receives the human-readable report.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (args, f): (CommonArgs, fn(&mut Context) -> Result<(), CliError>) = match cli.command {
        Command::Check(a) => (a, check),
        Command::Teleport(a) => (a, teleport),
        Command::Sweep(a) => (a, sweep),
        Command::Sample(a) => (a, sample),
        Command::Oracle(a) => (a, oracle),
    };
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let mut ctx = Context {
        cfg,
        out: &args.out,
        stdout,
    };
    f(&mut ctx)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match run(cli, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
