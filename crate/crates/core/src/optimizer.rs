//! Ramp optimization pipeline.
//!
//! For every (pulse count `n`, ramp length `r`) cell the clock constraint is
//! relaxed and ramp times are optimized with multistart BFGS; the train length
//! is chosen by exhaustive search inside the cost. The incumbent is then
//! polished by ±T/6 jumps, snapped onto each requested clock grid, and the
//! best cell is reported per clock.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed::{self, DynamicsError, ErrorBudget, TrainEvaluator};
use crate::model::{CoherenceRates, QubitModel};
use crate::numerics::{self, MinimizerOptions};
use crate::open;
use crate::schedule::{self, ClockGrid, Coupling, Ramp, Schedule, ScheduleError, SnapOutcome, MAX_RAMP_PULSES};

/// Distance kept from the ramp end when clamping proposals, ns.
pub const CLAMP_MARGIN_NS: f64 = 1e-6;
/// Extra train lengths searched beyond `ceil(θ_targ/θ_kick)`.
pub const TRAIN_SEARCH_MARGIN: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("invalid gate spec `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("all {trials} trials failed for n={n}, r={r}")]
    AllTrialsFailed { n: u32, r: u32, trials: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Inclusive integer range, serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange(pub u32, pub u32);

impl IntRange {
    pub fn iter(self) -> impl Iterator<Item = u32> {
        self.0..=self.1
    }

    pub fn contains(self, v: u32) -> bool {
        (self.0..=self.1).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub coupling: Coupling,
    pub theta_kick: f64,
    pub theta_targ: f64,
    pub clock_multiples: Vec<u32>,
    pub n_range: IntRange,
    pub r_range: IntRange,
}

impl GateSpec {
    pub const DEFAULT_INDUCTIVE_KICK: f64 = 0.15;
    pub const DEFAULT_CAPACITIVE_KICK: f64 = 0.03;

    pub fn default_kick(coupling: Coupling) -> f64 {
        match coupling {
            Coupling::Inductive => Self::DEFAULT_INDUCTIVE_KICK,
            Coupling::Capacitive => Self::DEFAULT_CAPACITIVE_KICK,
        }
    }

    /// π rotation with the default kick angle, all clocks, full search ranges.
    pub fn pi_gate(coupling: Coupling) -> Self {
        Self {
            coupling,
            theta_kick: Self::default_kick(coupling),
            theta_targ: PI,
            clock_multiples: schedule::STANDARD_CLOCK_MULTIPLES.to_vec(),
            n_range: IntRange(1, MAX_RAMP_PULSES as u32),
            r_range: IntRange(1, 5),
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |field, reason: &str| {
            Err(OptimizerError::InvalidSpec {
                field,
                reason: reason.into(),
            })
        };
        if !(self.theta_kick > 0.0 && self.theta_kick.is_finite()) {
            return bad("theta_kick", "must be positive");
        }
        if !(self.theta_targ > 0.0 && self.theta_targ <= 2.0 * PI) {
            return bad("theta_targ", "must lie in (0, 2π]");
        }
        if self.n_range.0 < 1 || self.n_range.0 > self.n_range.1 || self.n_range.1 as usize > MAX_RAMP_PULSES {
            return bad("n_range", "must satisfy 1 <= lo <= hi <= 6");
        }
        if self.r_range.0 < 1 || self.r_range.0 > self.r_range.1 {
            return bad("r_range", "must satisfy 1 <= lo <= hi");
        }
        if self.clock_multiples.contains(&0) {
            return bad("clock_multiples", "must be positive");
        }
        Ok(())
    }

    /// Largest train length the exhaustive search visits.
    pub fn max_train(&self) -> u32 {
        (self.theta_targ / self.theta_kick).ceil() as u32 + TRAIN_SEARCH_MARGIN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Minimizer options; variables are ramp times in units of the qubit period.
    pub minimizer: MinimizerOptions,
    /// Maximum BFGS starts per initial-condition ensemble or refinement round.
    pub trial_budget: usize,
    pub seed: u64,
    pub refine_max_rounds: usize,
    pub refine_tolerance: f64,
    /// Number of best cells that get basin hopping once the table is done.
    pub polish_cells: usize,
    /// Basin-hopping rounds per polished cell.
    pub hop_rounds: usize,
    /// Perturbed starts per hopping round.
    pub hop_batch: usize,
    /// Hopping stops after this many rounds without improvement.
    pub hop_patience: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            minimizer: MinimizerOptions::default(),
            trial_budget: 128,
            seed: 0,
            refine_max_rounds: 20,
            refine_tolerance: 1e-12,
            polish_cells: 3,
            hop_rounds: 150,
            hop_batch: 8,
            hop_patience: 40,
        }
    }
}

/// A gate spec bound to a model, ready for cost evaluations.
#[derive(Debug, Clone)]
pub struct GateProblem {
    pub spec: GateSpec,
    evaluator: TrainEvaluator,
    max_train: u32,
}

impl GateProblem {
    pub fn new(spec: &GateSpec, model: &QubitModel) -> Result<Self, OptimizerError> {
        spec.validate()?;
        Ok(Self {
            spec: spec.clone(),
            evaluator: TrainEvaluator::new(model, spec.coupling, spec.theta_kick, spec.theta_targ)?,
            max_train: spec.max_train(),
        })
    }

    pub fn period(&self) -> f64 {
        self.evaluator.period()
    }

    pub fn max_train(&self) -> u32 {
        self.max_train
    }

    /// Exhaustive search over `n_train ∈ [1, max_train]`.
    pub fn best_train_length(&self, ramp: &Ramp) -> (u32, f64) {
        self.evaluator.best_train_length(&ramp.times, ramp.r_periods, self.max_train)
    }

    /// Train-optimized infidelity after clamping `times` into the ramp and
    /// sorting them.
    pub fn cost(&self, times: &[f64], r_periods: u32) -> f64 {
        let clamped = self.clamp_times(times, r_periods);
        self.evaluator.best_train_length(&clamped, r_periods, self.max_train).1
    }

    pub fn clamp_times(&self, times: &[f64], r_periods: u32) -> Vec<f64> {
        let hi = r_periods as f64 * self.period() - CLAMP_MARGIN_NS;
        let mut v: Vec<f64> = times
            .iter()
            .map(|&t| if t.is_nan() { 0.0 } else { t.clamp(0.0, hi) })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Free-function form of [`GateProblem::best_train_length`].
pub fn best_train_length(ramp: &Ramp, spec: &GateSpec, model: &QubitModel) -> Result<(u32, f64), OptimizerError> {
    Ok(GateProblem::new(spec, model)?.best_train_length(ramp))
}

/// Free-function form of [`GateProblem::cost`].
pub fn cost(times: &[f64], r_periods: u32, spec: &GateSpec, model: &QubitModel) -> Result<f64, OptimizerError> {
    Ok(GateProblem::new(spec, model)?.cost(times, r_periods))
}

fn multisets(pool: &[f64], size: usize) -> Vec<Vec<f64>> {
    fn rec(pool: &[f64], start: usize, size: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..pool.len() {
            cur.push(pool[i]);
            rec(pool, i, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(pool, 0, size, &mut Vec::with_capacity(size), &mut out);
    out
}

/// Starting points for a `(n, r)` cell, in ns. The warm start derived from
/// the `(n−1, r−1)` optimum, when given, comes last.
pub fn initial_conditions(coupling: Coupling, n: u32, r: u32, period: f64, prev: Option<&[f64]>) -> Vec<Vec<f64>> {
    let offsets: &[f64] = match coupling {
        Coupling::Capacitive => &[0.25],
        Coupling::Inductive => &[0.05, 0.25, 0.75],
    };
    let mut pool: Vec<f64> = offsets
        .iter()
        .flat_map(|&o| (0..r).map(move |k| (k as f64 + o) * period))
        .collect();
    if pool.len() < n as usize {
        let span = r as f64 * period;
        pool.extend((1..=n).map(|k| k as f64 * span / (n as f64 + 1.0)));
    }
    pool.sort_by(f64::total_cmp);
    pool.dedup();

    let mut out = multisets(&pool, n as usize);
    out.dedup();
    if let Some(prev) = prev {
        let mut warm = prev.to_vec();
        warm.push((r - 1) as f64 * period);
        warm.sort_by(f64::total_cmp);
        if !out.contains(&warm) {
            out.push(warm);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum SnapResult {
    Snapped {
        ticks: Vec<u64>,
        times: Vec<f64>,
        n_train: u32,
        infidelity: f64,
    },
    Discarded {
        reason: String,
    },
}

impl SnapResult {
    pub fn infidelity(&self) -> Option<f64> {
        match self {
            SnapResult::Snapped { infidelity, .. } => Some(*infidelity),
            SnapResult::Discarded { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampResult {
    pub n_pulses: u32,
    pub r_periods: u32,
    pub times_continuous: Vec<f64>,
    pub n_train: u32,
    pub infidelity_continuous: f64,
    pub snapped: BTreeMap<u32, SnapResult>,
    pub bfgs_runs: usize,
    pub refine_rounds: usize,
    pub hop_rounds: usize,
}

impl RampResult {
    pub fn ramp(&self) -> Ramp {
        Ramp {
            r_periods: self.r_periods,
            times: self.times_continuous.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Trial {
    times: Vec<f64>,
    infidelity: f64,
}

/// Picks at most `budget` candidates: the `anchors` always, then the best half
/// by screened cost, then a seeded random draw from the rest.
fn select_candidates(
    problem: &GateProblem,
    r: u32,
    candidates: Vec<Vec<f64>>,
    anchors: usize,
    budget: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let budget = budget.max(anchors).max(1);
    if candidates.len() <= budget {
        return candidates;
    }
    let split = candidates.len() - anchors;
    let (pool, anchor_set) = candidates.split_at(split);
    let mut scored: Vec<(usize, f64)> = pool
        .par_iter()
        .enumerate()
        .map(|(i, c)| (i, problem.cost(c, r)))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let free = budget - anchors;
    let greedy = free.div_ceil(2);
    let mut chosen: Vec<usize> = scored[..greedy].iter().map(|s| s.0).collect();
    let rest: Vec<usize> = scored[greedy..].iter().map(|s| s.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = (free - greedy).min(rest.len());
    let mut drawn: Vec<usize> = sample(&mut rng, rest.len(), random).into_iter().map(|k| rest[k]).collect();
    drawn.sort_unstable();
    chosen.extend(drawn);
    chosen.sort_unstable();
    let mut out: Vec<Vec<f64>> = chosen.into_iter().map(|i| pool[i].clone()).collect();
    out.extend(anchor_set.iter().cloned());
    out
}

fn cell_seed(seed: u64, n: u32, r: u32, round: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (r as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (round as u64).wrapping_mul(0x1656_67B1_9E37_79F9)
}

/// Runs BFGS from each start (times in ns) and returns the trials in input order.
fn run_trials(problem: &GateProblem, r: u32, starts: &[Vec<f64>], opts: &MinimizerOptions) -> Vec<Option<Trial>> {
    let period = problem.period();
    starts
        .par_iter()
        .map(|start| {
            let x0: Vec<f64> = start.iter().map(|t| t / period).collect();
            let objective = |x: &[f64]| {
                let times: Vec<f64> = x.iter().map(|v| v * period).collect();
                problem.cost(&times, r)
            };
            let min = numerics::minimize(objective, &x0, opts).ok()?;
            let times = problem.clamp_times(&min.x.iter().map(|v| v * period).collect::<Vec<_>>(), r);
            let infidelity = problem.cost(&times, r);
            infidelity.is_finite().then_some(Trial { times, infidelity })
        })
        .collect()
}

fn best_trial(trials: Vec<Option<Trial>>) -> Option<Trial> {
    trials
        .into_iter()
        .flatten()
        .fold(None, |best: Option<Trial>, t| match best {
            Some(b) if b.infidelity <= t.infidelity => Some(b),
            _ => Some(t),
        })
}

/// All `3^n` per-pulse offset patterns over {−T/6, 0, +T/6}; the all-zero
/// pattern comes last.
fn neighborhood_offsets(n: usize, period: f64) -> Vec<Vec<f64>> {
    let jump = period / 6.0;
    let total = 3usize.pow(n as u32);
    let zero = (total - 1) / 2;
    let mut out: Vec<Vec<f64>> = (0..total)
        .filter(|&code| code != zero)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let digit = code % 3;
                    code /= 3;
                    (digit as f64 - 1.0) * jump
                })
                .collect()
        })
        .collect();
    out.push(vec![0.0; n]);
    out
}

/// Re-optimizes from every ±T/6 jump pattern around the incumbent and repeats
/// while the best improves by more than the refine tolerance.
pub fn neighborhood_refine(result: RampResult, problem: &GateProblem, settings: &OptimizerSettings) -> RampResult {
    let mut incumbent = result;
    let n = incumbent.times_continuous.len();
    if n == 0 {
        return incumbent;
    }
    let r = incumbent.r_periods;
    let offsets = neighborhood_offsets(n, problem.period());
    for round in 0..settings.refine_max_rounds {
        let starts: Vec<Vec<f64>> = offsets
            .iter()
            .map(|off| incumbent.times_continuous.iter().zip(off).map(|(t, o)| t + o).collect())
            .collect();
        let starts = select_candidates(
            problem,
            r,
            starts,
            1,
            settings.trial_budget,
            cell_seed(settings.seed, n as u32, r, round + 1),
        );
        incumbent.bfgs_runs += starts.len();
        incumbent.refine_rounds = round + 1;
        let best = best_trial(run_trials(problem, r, &starts, &settings.minimizer));
        match best {
            Some(t) if t.infidelity < incumbent.infidelity_continuous - settings.refine_tolerance => {
                let (n_train, infid) = problem.best_train_length(&Ramp {
                    r_periods: r,
                    times: t.times.clone(),
                });
                incumbent.times_continuous = t.times;
                incumbent.n_train = n_train;
                incumbent.infidelity_continuous = infid;
            }
            _ => break,
        }
    }
    incumbent
}

/// Seeded basin hopping: each start moves one random pulse and a random
/// subset of the others by up to half a period, then re-optimizes; the
/// incumbent moves only on improvement.
pub fn basin_hop(result: RampResult, problem: &GateProblem, settings: &OptimizerSettings) -> RampResult {
    let mut incumbent = result;
    let n = incumbent.times_continuous.len();
    if n == 0 || settings.hop_batch == 0 {
        return incumbent;
    }
    let r = incumbent.r_periods;
    let half = 0.5 * problem.period();
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(!settings.seed, n as u32, r, 0));
    let mut idle = 0;
    for round in 0..settings.hop_rounds {
        let starts: Vec<Vec<f64>> = (0..settings.hop_batch)
            .map(|_| {
                let mut x = incumbent.times_continuous.clone();
                let pick = rng.random_range(0..n);
                for (i, t) in x.iter_mut().enumerate() {
                    if i == pick || rng.random_bool(0.5) {
                        *t += rng.random_range(-half..half);
                    }
                }
                problem.clamp_times(&x, r)
            })
            .collect();
        incumbent.bfgs_runs += starts.len();
        incumbent.hop_rounds = round + 1;
        match best_trial(run_trials(problem, r, &starts, &settings.minimizer)) {
            Some(t) if t.infidelity < incumbent.infidelity_continuous - settings.refine_tolerance => {
                let (n_train, infid) = problem.best_train_length(&Ramp {
                    r_periods: r,
                    times: t.times.clone(),
                });
                incumbent.times_continuous = t.times;
                incumbent.n_train = n_train;
                incumbent.infidelity_continuous = infid;
                idle = 0;
            }
            _ => {
                idle += 1;
                if idle >= settings.hop_patience {
                    break;
                }
            }
        }
    }
    incumbent
}

/// Snaps a continuous ramp onto a clock grid and re-optimizes the train
/// length. Every admissible floor/ceiling assignment is scored and the one
/// with the lowest infidelity is kept.
pub fn snap_and_evaluate(problem: &GateProblem, ramp: &Ramp, multiple: u32) -> Result<SnapResult, OptimizerError> {
    let grid = ClockGrid::new(multiple, problem.period())?;
    Ok(match schedule::snap_to_clock_by(ramp, &grid, |r| problem.best_train_length(r).1) {
        SnapOutcome::Snapped { ramp, ticks } => {
            let (n_train, infidelity) = problem.best_train_length(&ramp);
            SnapResult::Snapped {
                ticks,
                times: ramp.times,
                n_train,
                infidelity,
            }
        }
        SnapOutcome::Discarded { reason } => SnapResult::Discarded { reason },
    })
}

/// Full treatment of one `(n, r)` cell.
///
/// `done` holds cells already optimized. The `(n−1, r−1)` optimum with a
/// pulse appended at `(r−1)T` and the `(n, r−1)` optimum delayed by one
/// period both reproduce their source schedule, so each is always tried.
/// The `(n−1, r)` optimum with one pulse inserted on a T/16 grid joins the
/// screened pool.
pub fn optimize_ramp(
    n: u32,
    r: u32,
    problem: &GateProblem,
    settings: &OptimizerSettings,
    done: &[RampResult],
) -> Result<RampResult, OptimizerError> {
    let period = problem.period();
    let find = |dn: u32| done.iter().find(|p| p.n_pulses + dn == n && p.r_periods + 1 == r);
    let warm = find(1);
    let mut starts = initial_conditions(
        problem.spec.coupling,
        n,
        r,
        period,
        warm.map(|p| p.times_continuous.as_slice()),
    );
    let mut anchors = usize::from(warm.is_some());
    // grow the (n−1, r) optimum by one pulse on a T/16 grid
    if let Some(fewer) = done.iter().find(|p| p.n_pulses + 1 == n && p.r_periods == r) {
        let split = starts.len() - anchors;
        let grown: Vec<Vec<f64>> = (0..16 * r)
            .map(|k| {
                let mut v = fewer.times_continuous.clone();
                v.push(k as f64 * period / 16.0);
                v.sort_by(f64::total_cmp);
                v
            })
            .filter(|v| !starts.contains(v))
            .collect();
        starts.splice(split..split, grown);
    }
    if let Some(shorter) = find(0) {
        let delayed: Vec<f64> = shorter.times_continuous.iter().map(|t| t + period).collect();
        match starts.iter().position(|s| *s == delayed) {
            // already in the pool; move it to the anchors at the end
            Some(i) if i + anchors < starts.len() => {
                let v = starts.remove(i);
                starts.push(v);
                anchors += 1;
            }
            Some(_) => {}
            None => {
                starts.push(delayed);
                anchors += 1;
            }
        }
    }
    let starts = select_candidates(
        problem,
        r,
        starts,
        anchors,
        settings.trial_budget,
        cell_seed(settings.seed, n, r, 0),
    );
    let runs = starts.len();
    let best = best_trial(run_trials(problem, r, &starts, &settings.minimizer)).ok_or(OptimizerError::AllTrialsFailed {
        n,
        r,
        trials: runs,
    })?;
    let (n_train, infidelity) = problem.best_train_length(&Ramp {
        r_periods: r,
        times: best.times.clone(),
    });
    let result = RampResult {
        n_pulses: n,
        r_periods: r,
        times_continuous: best.times,
        n_train,
        infidelity_continuous: infidelity,
        snapped: BTreeMap::new(),
        bfgs_runs: runs,
        refine_rounds: 0,
        hop_rounds: 0,
    };
    let mut result = neighborhood_refine(result, problem, settings);
    snap_all(&mut result, problem)?;
    Ok(result)
}

fn snap_all(cell: &mut RampResult, problem: &GateProblem) -> Result<(), OptimizerError> {
    let ramp = cell.ramp();
    cell.snapped.clear();
    for &m in &problem.spec.clock_multiples {
        cell.snapped.insert(m, snap_and_evaluate(problem, &ramp, m)?);
    }
    Ok(())
}

/// Basin hopping on the best `polish_cells` cells of a finished table,
/// followed by a fresh neighborhood search and snapping when a hop improves.
pub fn polish_table(table: &mut [RampResult], problem: &GateProblem, settings: &OptimizerSettings) -> Result<(), OptimizerError> {
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by(|&a, &b| {
        table[a]
            .infidelity_continuous
            .total_cmp(&table[b].infidelity_continuous)
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(settings.polish_cells) {
        let before = table[i].infidelity_continuous;
        let mut cell = basin_hop(table[i].clone(), problem, settings);
        if cell.infidelity_continuous < before {
            cell = neighborhood_refine(cell, problem, settings);
            snap_all(&mut cell, problem)?;
        }
        log::debug!(
            "polished n={} r={}: {before:.3e} -> {:.3e}",
            cell.n_pulses,
            cell.r_periods,
            cell.infidelity_continuous
        );
        table[i] = cell;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub n: u32,
    pub r: u32,
    pub reason: String,
}

/// Best snapped schedule found for one clock multiple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnappedChoice {
    pub clock_multiple: u32,
    pub n_pulses: u32,
    pub r_periods: u32,
    pub ticks: Vec<u64>,
    pub times: Vec<f64>,
    pub n_train: u32,
    pub infidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOptimization {
    pub spec: GateSpec,
    pub table: Vec<RampResult>,
    pub failures: Vec<CellFailure>,
    pub best_continuous: Option<RampResult>,
    pub best_snapped: BTreeMap<u32, Option<SnappedChoice>>,
}

impl GateOptimization {
    pub fn cell(&self, n: u32, r: u32) -> Option<&RampResult> {
        self.table.iter().find(|c| c.n_pulses == n && c.r_periods == r)
    }

    pub fn best_continuous_infidelity(&self) -> Option<f64> {
        self.best_continuous.as_ref().map(|b| b.infidelity_continuous)
    }

    pub fn best_snapped_infidelity(&self, multiple: u32) -> Option<f64> {
        self.best_snapped.get(&multiple)?.as_ref().map(|c| c.infidelity)
    }

    /// Best snapped cell restricted to ramps of `r` periods.
    pub fn best_snapped_with_r(&self, multiple: u32, r: u32) -> Option<SnappedChoice> {
        pick_snapped(self.table.iter().filter(|c| c.r_periods == r), multiple)
    }
}

fn pick_snapped<'a>(cells: impl Iterator<Item = &'a RampResult>, multiple: u32) -> Option<SnappedChoice> {
    let mut best: Option<SnappedChoice> = None;
    for cell in cells {
        if let Some(SnapResult::Snapped {
            ticks,
            times,
            n_train,
            infidelity,
        }) = cell.snapped.get(&multiple)
        {
            if best.as_ref().is_none_or(|b| *infidelity < b.infidelity) {
                best = Some(SnappedChoice {
                    clock_multiple: multiple,
                    n_pulses: cell.n_pulses,
                    r_periods: cell.r_periods,
                    ticks: ticks.clone(),
                    times: times.clone(),
                    n_train: *n_train,
                    infidelity: *infidelity,
                });
            }
        }
    }
    best
}

/// Optimizes every `(n, r)` cell (r ascending, then n ascending) and selects
/// the best continuous cell and the best snapped cell per clock multiple.
pub fn optimize_gate(spec: &GateSpec, model: &QubitModel, settings: &OptimizerSettings) -> Result<GateOptimization, OptimizerError> {
    let problem = GateProblem::new(spec, model)?;
    let mut table: Vec<RampResult> = Vec::new();
    let mut failures = Vec::new();
    for r in spec.r_range.iter() {
        for n in spec.n_range.iter() {
            match optimize_ramp(n, r, &problem, settings, &table) {
                Ok(cell) => {
                    log::debug!(
                        "cell n={n} r={r}: continuous {:.3e} (n_train {})",
                        cell.infidelity_continuous,
                        cell.n_train
                    );
                    table.push(cell);
                }
                Err(err) => {
                    log::warn!("cell n={n} r={r} failed: {err}");
                    failures.push(CellFailure {
                        n,
                        r,
                        reason: err.to_string(),
                    });
                }
            }
        }
    }
    polish_table(&mut table, &problem, settings)?;
    let best_continuous = table
        .iter()
        .fold(None::<&RampResult>, |best, c| match best {
            Some(b) if b.infidelity_continuous <= c.infidelity_continuous => Some(b),
            _ => Some(c),
        })
        .cloned();
    let best_snapped = spec
        .clock_multiples
        .iter()
        .map(|&m| (m, pick_snapped(table.iter(), m)))
        .collect();
    Ok(GateOptimization {
        spec: spec.clone(),
        table,
        failures,
        best_continuous,
        best_snapped,
    })
}

/// Empty-ramp baseline: a bare train of kicks one period apart, length chosen
/// by the same exhaustive search.
pub fn no_ramp_baseline(spec: &GateSpec, model: &QubitModel) -> Result<Schedule, OptimizerError> {
    let problem = GateProblem::new(spec, model)?;
    let ramp = Ramp::empty(1);
    let (n_train, _) = problem.best_train_length(&ramp);
    Ok(Schedule::new(ramp, n_train, spec.coupling, spec.theta_kick)?)
}

/// Closed-system budget, plus the open-system terms when `rates` is given.
pub fn schedule_budget(
    model: &QubitModel,
    s: &Schedule,
    theta_targ: f64,
    rates: Option<&CoherenceRates>,
) -> Result<ErrorBudget, OptimizerError> {
    let u = closed::propagate(model, s)?;
    let u_q = closed::project_computational(&u);
    let budget = closed::error_budget(&u_q, s.coupling, theta_targ)?;
    Ok(match rates {
        Some(rates) => {
            let sup = open::propagate_open(model, s, rates)?;
            let f_open = open::open_fidelity(&sup, &closed::target_unitary(s.coupling, theta_targ));
            budget.with_open(f_open)
        }
        None => budget,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta_kick: f64,
    pub theta_targ: f64,
    pub best_continuous: Option<f64>,
    pub continuous_cell: Option<(u32, u32, u32)>,
    pub snapped: BTreeMap<u32, Option<SnappedChoice>>,
    pub failures: usize,
}

impl SweepRow {
    fn from_optimization(opt: &GateOptimization) -> Self {
        Self {
            theta_kick: opt.spec.theta_kick,
            theta_targ: opt.spec.theta_targ,
            best_continuous: opt.best_continuous_infidelity(),
            continuous_cell: opt
                .best_continuous
                .as_ref()
                .map(|b| (b.n_pulses, b.r_periods, b.n_train)),
            snapped: opt.best_snapped.clone(),
            failures: opt.failures.len(),
        }
    }

    pub fn snapped_infidelity(&self, multiple: u32) -> Option<f64> {
        self.snapped.get(&multiple)?.as_ref().map(|c| c.infidelity)
    }
}

/// One full optimization per kick angle, rows in input order.
pub fn sweep_kick_angle(
    template: &GateSpec,
    kick_angles: &[f64],
    model: &QubitModel,
    settings: &OptimizerSettings,
) -> Result<Vec<SweepRow>, OptimizerError> {
    kick_angles
        .par_iter()
        .map(|&theta_kick| {
            let spec = GateSpec {
                theta_kick,
                ..template.clone()
            };
            Ok(SweepRow::from_optimization(&optimize_gate(&spec, model, settings)?))
        })
        .collect()
}

/// Error budgets attached to a target-angle sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowBudgets {
    pub budget_clock: u32,
    pub no_ramp: ErrorBudget,
    pub no_ramp_n_train: u32,
    pub ramp_short: Option<ErrorBudget>,
    pub ramp_long: Option<ErrorBudget>,
    pub best: Option<ErrorBudget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSweepRow {
    pub row: SweepRow,
    pub budgets: RowBudgets,
}

fn choice_schedule(choice: &SnappedChoice, spec: &GateSpec) -> Result<Schedule, OptimizerError> {
    Ok(Schedule::new(
        Ramp {
            r_periods: choice.r_periods,
            times: choice.times.clone(),
        },
        choice.n_train,
        spec.coupling,
        spec.theta_kick,
    )?)
}

/// One full optimization per target angle, each row carrying the budgets of
/// the bare train and of the best snapped schedules with the shortest and
/// longest ramp lengths, at the finest clock of the spec.
pub fn sweep_target_angle(
    template: &GateSpec,
    target_angles: &[f64],
    model: &QubitModel,
    settings: &OptimizerSettings,
    rates: Option<&CoherenceRates>,
) -> Result<Vec<TargetSweepRow>, OptimizerError> {
    let budget_clock = template.clock_multiples.iter().copied().max().unwrap_or(128);
    target_angles
        .par_iter()
        .map(|&theta_targ| {
            let spec = GateSpec {
                theta_targ,
                ..template.clone()
            };
            let opt = optimize_gate(&spec, model, settings)?;
            let baseline = no_ramp_baseline(&spec, model)?;
            let no_ramp = schedule_budget(model, &baseline, theta_targ, rates)?;
            let budget_for = |choice: Option<SnappedChoice>| -> Result<Option<ErrorBudget>, OptimizerError> {
                choice
                    .map(|c| schedule_budget(model, &choice_schedule(&c, &spec)?, theta_targ, rates))
                    .transpose()
            };
            let budgets = RowBudgets {
                budget_clock,
                no_ramp,
                no_ramp_n_train: baseline.n_train,
                ramp_short: budget_for(opt.best_snapped_with_r(budget_clock, spec.r_range.0))?,
                ramp_long: budget_for(opt.best_snapped_with_r(budget_clock, spec.r_range.1))?,
                best: budget_for(opt.best_snapped.get(&budget_clock).cloned().flatten())?,
            };
            Ok(TargetSweepRow {
                row: SweepRow::from_optimization(&opt),
                budgets,
            })
        })
        .collect()
}
