use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sfq_core::closed::{self, ErrorBudget};
use sfq_core::encoding::{self, BitLayout, EncodingParams};
use sfq_core::model::{diagonalize_model, Operator};
use sfq_core::optimizer::{self, GateOptimization, GateSpec, RampResult, SnappedChoice, SweepRow, TargetSweepRow};
use sfq_core::{CircuitParams, CoherenceRates, Coupling, QubitModel, Ramp, Schedule};

use crate::config::{Format, RunConfig};
use crate::CliError;

const TAU: f64 = std::f64::consts::TAU;

fn model_for(circuit: &CircuitParams) -> Result<QubitModel, CliError> {
    diagonalize_model(circuit).map_err(|e| CliError::Numerical(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCheck {
    pub expected_spacing_ghz: f64,
    pub max_relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub levels_ghz: Vec<f64>,
    pub omega01_ghz: f64,
    pub omega12_ghz: f64,
    pub period_ns: f64,
    pub phi01: f64,
    pub n01: f64,
    pub n03_over_n01: f64,
    pub fock_shift_rad_per_ns: f64,
    pub fock_converged: bool,
    pub harmonic: Option<HarmonicCheck>,
}

impl fmt::Display for ModelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let levels: Vec<String> = self.levels_ghz.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(f, "levels (GHz)      {}", levels.join(" "))?;
        writeln!(f, "omega01/2pi (GHz) {:.6}", self.omega01_ghz)?;
        writeln!(f, "omega12/2pi (GHz) {:.6}", self.omega12_ghz)?;
        writeln!(f, "period (ns)       {:.6}", self.period_ns)?;
        writeln!(f, "|phi01|           {:.6}", self.phi01)?;
        writeln!(f, "|n01|             {:.6}", self.n01)?;
        writeln!(f, "|n03|/|n01|       {:.6}", self.n03_over_n01)?;
        writeln!(
            f,
            "fock check        shift {:.3e} rad/ns ({})",
            self.fock_shift_rad_per_ns,
            if self.fock_converged { "converged" } else { "NOT converged" }
        )?;
        if let Some(h) = &self.harmonic {
            writeln!(
                f,
                "harmonic check    spacing {:.9} GHz, max relative deviation {:.3e}",
                h.expected_spacing_ghz, h.max_relative_deviation
            )?;
        }
        Ok(())
    }
}

pub fn cmd_model_info(cfg: &RunConfig) -> Result<ModelReport, CliError> {
    cfg.circuit.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let m = model_for(&cfg.circuit)?;
    let ghz: Vec<f64> = m.omegas.iter().map(|w| w / TAU).collect();
    let el = |op, i, j| m.matrix_element(op, i, j).map(|z| z.norm()).unwrap_or(f64::NAN);
    let n01 = el(Operator::Charge, 0, 1);
    let harmonic = (cfg.circuit.e_j == 0.0).then(|| {
        let expected = (8.0 * cfg.circuit.e_c * cfg.circuit.e_l).sqrt();
        let max_relative_deviation = ghz
            .windows(2)
            .map(|w| ((w[1] - w[0]) - expected).abs() / expected)
            .fold(0.0, f64::max);
        HarmonicCheck {
            expected_spacing_ghz: expected,
            max_relative_deviation,
        }
    });
    Ok(ModelReport {
        omega01_ghz: ghz[1],
        omega12_ghz: ghz.get(2).map_or(f64::NAN, |g| g - ghz[1]),
        levels_ghz: ghz,
        period_ns: m.period,
        phi01: el(Operator::Phase, 0, 1),
        n01,
        n03_over_n01: el(Operator::Charge, 0, 3) / n01,
        fock_shift_rad_per_ns: m.fock_shift.unwrap_or(0.0),
        fock_converged: m.is_converged(),
        harmonic,
    })
}

/// Self-contained, re-simulatable schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub circuit: CircuitParams,
    pub coupling: Coupling,
    pub theta_kick: f64,
    pub theta_targ: f64,
    pub r_periods: u32,
    pub n_train: u32,
    pub times_ns: Vec<f64>,
    /// Present for snapped schedules.
    pub clock_multiple: Option<u32>,
    pub ticks: Option<Vec<u64>>,
    pub infidelity: f64,
}

impl ScheduleFile {
    fn continuous(circuit: &CircuitParams, spec: &GateSpec, cell: &RampResult) -> Self {
        Self {
            circuit: *circuit,
            coupling: spec.coupling,
            theta_kick: spec.theta_kick,
            theta_targ: spec.theta_targ,
            r_periods: cell.r_periods,
            n_train: cell.n_train,
            times_ns: cell.times_continuous.clone(),
            clock_multiple: None,
            ticks: None,
            infidelity: cell.infidelity_continuous,
        }
    }

    fn snapped(circuit: &CircuitParams, spec: &GateSpec, choice: &SnappedChoice) -> Self {
        Self {
            circuit: *circuit,
            coupling: spec.coupling,
            theta_kick: spec.theta_kick,
            theta_targ: spec.theta_targ,
            r_periods: choice.r_periods,
            n_train: choice.n_train,
            times_ns: choice.times.clone(),
            clock_multiple: Some(choice.clock_multiple),
            ticks: Some(choice.ticks.clone()),
            infidelity: choice.infidelity,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn schedule(&self) -> Result<Schedule, CliError> {
        Schedule::new(
            Ramp {
                r_periods: self.r_periods,
                times: self.times_ns.clone(),
            },
            self.n_train,
            self.coupling,
            self.theta_kick,
        )
        .map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Closed-system infidelity from a fresh model and full propagation.
    pub fn resimulate(&self) -> Result<f64, CliError> {
        let m = model_for(&self.circuit)?;
        let s = self.schedule()?;
        s.ramp.validate(m.period).map_err(|e| CliError::Parse(e.to_string()))?;
        let u = closed::propagate(&m, &s).map_err(|e| CliError::Numerical(e.to_string()))?;
        let u_q = closed::project_computational(&u);
        Ok(1.0 - closed::process_fidelity(&u_q, &closed::target_unitary(self.coupling, self.theta_targ)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeReport {
    pub hex: String,
    pub layout: BitLayout,
    pub total_bits: u32,
    pub params: EncodingParams,
}

impl fmt::Display for EncodeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "hex          {}", self.hex)?;
        writeln!(
            f,
            "bits         {} = ramp {} + train {} + ramp length {}",
            self.total_bits, self.layout.ramp_bits, self.layout.train_bits, self.layout.ramplen_bits
        )?;
        writeln!(
            f,
            "params       n_max {} r_max {} clock {}x n_train_max {}",
            self.params.n_max, self.params.r_max, self.params.clock_multiple, self.params.n_train_max
        )
    }
}

fn encode_choice(
    coupling: Coupling,
    clock_multiple: u32,
    ticks: &[u64],
    r_periods: u32,
    n_train: u32,
) -> Result<EncodeReport, CliError> {
    let params = EncodingParams {
        clock_multiple,
        ..EncodingParams::for_coupling(coupling)
    };
    let e = encoding::encode(ticks, r_periods, n_train, &params).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(EncodeReport {
        hex: e.to_hex(),
        layout: e.layout,
        total_bits: e.layout.total(),
        params,
    })
}

pub fn cmd_encode(path: &Path) -> Result<EncodeReport, CliError> {
    let file = ScheduleFile::load(path)?;
    let (Some(m), Some(ticks)) = (file.clock_multiple, file.ticks.as_ref()) else {
        return Err(CliError::Usage(format!(
            "{} holds a continuous schedule; encode one of the snapped schedule files written by `optimize`",
            path.display()
        )));
    };
    encode_choice(file.coupling, m, ticks, file.r_periods, file.n_train)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub coupling: Coupling,
    pub theta_targ: f64,
    pub clock_multiple: Option<u32>,
    pub budget: ErrorBudget,
    pub fidelity_open: f64,
}

impl fmt::Display for BudgetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.budget;
        writeln!(f, "infidelity (closed)   {:.6e}", b.infidelity_closed)?;
        writeln!(f, "  leakage             {:.6e}", b.leakage)?;
        writeln!(f, "  phase error         {:.6e}", b.phase_error)?;
        writeln!(f, "  discretization      {:.6e}", b.discretization_error)?;
        writeln!(f, "  unaccounted         {:.6e}", b.unaccounted)?;
        writeln!(f, "fidelity (open)       {:.12}", self.fidelity_open)?;
        writeln!(f, "infidelity (open)     {:.6e}", b.infidelity_open.unwrap_or(f64::NAN))?;
        writeln!(f, "  incoherent          {:.6e}", b.incoherent.unwrap_or(f64::NAN))?;
        writeln!(f, "largest coherent      {}", b.largest_coherent().0)
    }
}

pub fn budget_for(file: &ScheduleFile, rates: &CoherenceRates) -> Result<BudgetReport, CliError> {
    let m = model_for(&file.circuit)?;
    let s = file.schedule()?;
    s.ramp.validate(m.period).map_err(|e| CliError::Parse(e.to_string()))?;
    let budget = optimizer::schedule_budget(&m, &s, file.theta_targ, Some(rates)).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(BudgetReport {
        coupling: file.coupling,
        theta_targ: file.theta_targ,
        clock_multiple: file.clock_multiple,
        fidelity_open: 1.0 - budget.infidelity_open.expect("open budget requested"),
        budget,
    })
}

pub fn cmd_budget(cfg: &RunConfig, path: &Path) -> Result<BudgetReport, CliError> {
    let rates = cfg.coherence.rates().map_err(|e| CliError::Config(e.to_string()))?;
    budget_for(&ScheduleFile::load(path)?, &rates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnappedSummary {
    pub n_pulses: u32,
    pub r_periods: u32,
    pub n_train: u32,
    pub infidelity: f64,
    pub budget: ErrorBudget,
    pub encoding: Option<EncodeReport>,
    pub encoding_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub spec: GateSpec,
    pub seed: u64,
    pub trial_budget: usize,
    pub best_continuous: Option<(u32, u32, u32, f64)>,
    pub continuous_budget: Option<ErrorBudget>,
    pub snapped: BTreeMap<u32, Option<SnappedSummary>>,
    pub failures: Vec<optimizer::CellFailure>,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub optimization: GateOptimization,
    pub summary: OptimizeSummary,
    pub files: Vec<PathBuf>,
}

impl OptimizeOutcome {
    pub fn succeeded(&self) -> bool {
        self.summary.failures.is_empty() && self.summary.best_continuous.is_some()
    }
}

fn write_text(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    files.push(path);
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header of `table.csv`: one row per (n, r) cell.
pub fn table_header(clocks: &[u32]) -> Vec<String> {
    let mut h: Vec<String> = ["n_pulses", "r_periods", "n_train", "infidelity_continuous", "bfgs_runs", "times_ns"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(clocks.iter().map(|m| format!("snapped_{m}x")));
    h
}

fn table_rows(opt: &GateOptimization) -> Vec<Vec<String>> {
    opt.table
        .iter()
        .map(|c| {
            let times: Vec<String> = c.times_continuous.iter().map(|t| t.to_string()).collect();
            let mut row = vec![
                c.n_pulses.to_string(),
                c.r_periods.to_string(),
                c.n_train.to_string(),
                c.infidelity_continuous.to_string(),
                c.bfgs_runs.to_string(),
                times.join(" "),
            ];
            row.extend(
                opt.spec
                    .clock_multiples
                    .iter()
                    .map(|m| opt_cell(c.snapped.get(m).and_then(|s| s.infidelity()))),
            );
            row
        })
        .collect()
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<OptimizeOutcome, CliError> {
    cfg.validate()?;
    let rates = cfg.coherence.rates().map_err(|e| CliError::Config(e.to_string()))?;
    let m = model_for(&cfg.circuit)?;
    let spec = cfg.gate.spec();
    let opt = optimizer::optimize_gate(&spec, &m, &cfg.settings()).map_err(|e| CliError::Numerical(e.to_string()))?;

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();

    match cfg.output.format {
        Format::Csv => write_text(
            dir.join("table.csv"),
            &csv_string(&table_header(&spec.clock_multiples), &table_rows(&opt))?,
            &mut files,
        )?,
        Format::Json => write_text(dir.join("table.json"), &to_json(&opt.table), &mut files)?,
    }

    let numerical = |e: optimizer::OptimizerError| CliError::Numerical(e.to_string());
    let mut continuous_budget = None;
    if let Some(best) = &opt.best_continuous {
        let file = ScheduleFile::continuous(&cfg.circuit, &spec, best);
        continuous_budget =
            Some(optimizer::schedule_budget(&m, &file.schedule()?, spec.theta_targ, Some(&rates)).map_err(numerical)?);
        write_text(dir.join("schedule_continuous.json"), &to_json(&file), &mut files)?;
    }
    let mut snapped = BTreeMap::new();
    for (&mult, choice) in &opt.best_snapped {
        let summary = match choice {
            Some(c) => {
                let (encoding, encoding_error) = match encode_choice(spec.coupling, mult, &c.ticks, c.r_periods, c.n_train) {
                    Ok(e) => (Some(e), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                let file = ScheduleFile::snapped(&cfg.circuit, &spec, c);
                let budget =
                    optimizer::schedule_budget(&m, &file.schedule()?, spec.theta_targ, Some(&rates)).map_err(numerical)?;
                write_text(dir.join(format!("schedule_{mult}x.json")), &to_json(&file), &mut files)?;
                Some(SnappedSummary {
                    n_pulses: c.n_pulses,
                    r_periods: c.r_periods,
                    n_train: c.n_train,
                    infidelity: c.infidelity,
                    budget,
                    encoding,
                    encoding_error,
                })
            }
            None => None,
        };
        snapped.insert(mult, summary);
    }
    let summary = OptimizeSummary {
        spec: spec.clone(),
        seed: cfg.seed,
        trial_budget: cfg.trial_budget,
        best_continuous: opt
            .best_continuous
            .as_ref()
            .map(|b| (b.n_pulses, b.r_periods, b.n_train, b.infidelity_continuous)),
        continuous_budget,
        snapped,
        failures: opt.failures.clone(),
    };
    write_text(dir.join("summary.json"), &to_json(&summary), &mut files)?;
    Ok(OptimizeOutcome {
        optimization: opt,
        summary,
        files,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Kick,
    Target,
}

impl std::str::FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kick" => Ok(SweepKind::Kick),
            "target" => Ok(SweepKind::Target),
            other => Err(format!("unknown sweep `{other}` (expected kick or target)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepRows {
    Kick(Vec<SweepRow>),
    Target(Vec<TargetSweepRow>),
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: SweepRows,
    pub files: Vec<PathBuf>,
}

const BUDGET_FIELDS: [&str; 7] = [
    "infidelity",
    "leakage",
    "phase",
    "discretization",
    "unaccounted",
    "infidelity_open",
    "incoherent",
];

fn budget_cells(b: Option<&ErrorBudget>) -> Vec<String> {
    match b {
        Some(b) => vec![
            b.infidelity_closed.to_string(),
            b.leakage.to_string(),
            b.phase_error.to_string(),
            b.discretization_error.to_string(),
            b.unaccounted.to_string(),
            opt_cell(b.infidelity_open),
            opt_cell(b.incoherent),
        ],
        None => vec![String::new(); BUDGET_FIELDS.len()],
    }
}

/// Header of `sweep_kick.csv` / `sweep_target.csv`.
pub fn sweep_header(kind: SweepKind, clocks: &[u32]) -> Vec<String> {
    let mut h: Vec<String> = [
        "theta_kick",
        "theta_targ",
        "best_continuous",
        "n_pulses",
        "r_periods",
        "n_train",
        "failed_cells",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(clocks.iter().map(|m| format!("snapped_{m}x")));
    if kind == SweepKind::Target {
        h.push("budget_clock".into());
        for group in ["no_ramp", "ramp_short", "ramp_long", "best"] {
            h.extend(BUDGET_FIELDS.iter().map(|f| format!("{group}_{f}")));
        }
    }
    h
}

fn sweep_row_cells(row: &SweepRow, clocks: &[u32]) -> Vec<String> {
    let (n, r, nt) = match row.continuous_cell {
        Some((n, r, nt)) => (n.to_string(), r.to_string(), nt.to_string()),
        None => Default::default(),
    };
    let mut cells = vec![
        row.theta_kick.to_string(),
        row.theta_targ.to_string(),
        opt_cell(row.best_continuous),
        n,
        r,
        nt,
        row.failures.to_string(),
    ];
    cells.extend(clocks.iter().map(|&m| opt_cell(row.snapped_infidelity(m))));
    cells
}

pub fn cmd_sweep(cfg: &RunConfig, kind: SweepKind) -> Result<SweepOutcome, CliError> {
    cfg.validate()?;
    let values = match kind {
        SweepKind::Kick => cfg.sweep.kick_values(cfg.gate.coupling),
        SweepKind::Target => cfg.sweep.target_values(),
    };
    if values.is_empty() {
        return Err(CliError::Usage("the sweep list is empty".into()));
    }
    let rates = cfg.coherence.rates().map_err(|e| CliError::Config(e.to_string()))?;
    let m = model_for(&cfg.circuit)?;
    let spec = cfg.gate.spec();
    let clocks = spec.clock_multiples.clone();
    let numerical = |e: optimizer::OptimizerError| CliError::Numerical(e.to_string());
    let (rows, table, name) = match kind {
        SweepKind::Kick => {
            let rows = optimizer::sweep_kick_angle(&spec, &values, &m, &cfg.settings()).map_err(numerical)?;
            let table: Vec<Vec<String>> = rows.iter().map(|r| sweep_row_cells(r, &clocks)).collect();
            (SweepRows::Kick(rows), table, "sweep_kick")
        }
        SweepKind::Target => {
            let rows =
                optimizer::sweep_target_angle(&spec, &values, &m, &cfg.settings(), Some(&rates)).map_err(numerical)?;
            let table = rows
                .iter()
                .map(|t| {
                    let mut cells = sweep_row_cells(&t.row, &clocks);
                    cells.push(t.budgets.budget_clock.to_string());
                    cells.extend(budget_cells(Some(&t.budgets.no_ramp)));
                    cells.extend(budget_cells(t.budgets.ramp_short.as_ref()));
                    cells.extend(budget_cells(t.budgets.ramp_long.as_ref()));
                    cells.extend(budget_cells(t.budgets.best.as_ref()));
                    cells
                })
                .collect();
            (SweepRows::Target(rows), table, "sweep_target")
        }
    };
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    match cfg.output.format {
        Format::Csv => write_text(
            dir.join(format!("{name}.csv")),
            &csv_string(&sweep_header(kind, &clocks), &table)?,
            &mut files,
        )?,
        Format::Json => write_text(dir.join(format!("{name}.json")), &to_json(&rows), &mut files)?,
    }
    Ok(SweepOutcome { rows, files })
}
