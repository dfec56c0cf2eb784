//! SFQ pulse schedules: an optimized on-ramp, a train of kicks one qubit
//! period apart, and an off-ramp that is the time mirror of the on-ramp.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of kicks in one ramp.
pub const MAX_RAMP_PULSES: usize = 6;

/// Clock multiples the pipeline knows about.
pub const STANDARD_CLOCK_MULTIPLES: [u32; 3] = [32, 64, 128];

// Tolerance, in tick units, for treating a time as lying on a tick.
const ON_TICK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("ramp length must be at least one period")]
    ZeroRampLength,
    #[error("ramp holds {count} pulses; at most {MAX_RAMP_PULSES} are allowed")]
    TooManyPulses { count: usize },
    #[error("ramp time {time} ns outside [0, {limit}) ns")]
    TimeOutOfRange { time: f64, limit: f64 },
    #[error("ramp times must be sorted ascending")]
    Unsorted,
    #[error("kick angle must be positive and finite, got {0}")]
    InvalidKickAngle(f64),
    #[error("two kicks coincide at t = {time} ns")]
    DuplicateKick { time: f64 },
    #[error("kicks at {first} ns and {second} ns fall within one clock tick")]
    TickCollision { first: f64, second: f64 },
    #[error("clock multiple must be positive")]
    InvalidClock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Inductive,
    Capacitive,
}

impl Coupling {
    pub fn as_str(self) -> &'static str {
        match self {
            Coupling::Inductive => "inductive",
            Coupling::Capacitive => "capacitive",
        }
    }
}

impl std::fmt::Display for Coupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Coupling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "inductive" | "l" => Ok(Coupling::Inductive),
            "capacitive" | "c" => Ok(Coupling::Capacitive),
            other => Err(format!("unknown coupling `{other}` (expected inductive or capacitive)")),
        }
    }
}

/// On-ramp pulse times within `[0, r_periods·T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub r_periods: u32,
    pub times: Vec<f64>,
}

impl Ramp {
    pub fn new(r_periods: u32, times: Vec<f64>, period: f64) -> Result<Self, ScheduleError> {
        let ramp = Self { r_periods, times };
        ramp.validate(period)?;
        Ok(ramp)
    }

    pub fn empty(r_periods: u32) -> Self {
        Self {
            r_periods,
            times: Vec::new(),
        }
    }

    pub fn validate(&self, period: f64) -> Result<(), ScheduleError> {
        if self.r_periods == 0 {
            return Err(ScheduleError::ZeroRampLength);
        }
        if self.times.len() > MAX_RAMP_PULSES {
            return Err(ScheduleError::TooManyPulses {
                count: self.times.len(),
            });
        }
        let limit = self.length(period);
        for &time in &self.times {
            if !(0.0..limit).contains(&time) {
                return Err(ScheduleError::TimeOutOfRange { time, limit });
            }
        }
        if self.times.windows(2).any(|w| w[0] > w[1]) {
            return Err(ScheduleError::Unsorted);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Ramp length in ns.
    pub fn length(&self, period: f64) -> f64 {
        self.r_periods as f64 * period
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub ramp: Ramp,
    pub n_train: u32,
    pub coupling: Coupling,
    pub theta_kick: f64,
}

impl Schedule {
    pub fn new(ramp: Ramp, n_train: u32, coupling: Coupling, theta_kick: f64) -> Result<Self, ScheduleError> {
        if !(theta_kick > 0.0 && theta_kick.is_finite()) {
            return Err(ScheduleError::InvalidKickAngle(theta_kick));
        }
        Ok(Self {
            ramp,
            n_train,
            coupling,
            theta_kick,
        })
    }

    pub fn kick_count(&self) -> usize {
        2 * self.ramp.len() + self.n_train as usize
    }
}

/// Total duration in units of the qubit period.
pub fn duration_periods(r_periods: u32, n_train: u32) -> u64 {
    if n_train == 0 {
        2 * r_periods as u64
    } else {
        2 * r_periods as u64 + n_train as u64 - 1
    }
}

/// Total gate duration `D` in ns; always an integer multiple of `period`.
pub fn total_duration(s: &Schedule, period: f64) -> f64 {
    duration_periods(s.ramp.r_periods, s.n_train) as f64 * period
}

/// Absolute kick times without any validation; coincident kicks are kept.
pub(crate) fn kick_times_unchecked(s: &Schedule, period: f64) -> Vec<f64> {
    let d = total_duration(s, period);
    let ramp_end = s.ramp.length(period);
    let mut kicks = Vec::with_capacity(s.kick_count());
    kicks.extend_from_slice(&s.ramp.times);
    kicks.extend((0..s.n_train).map(|k| ramp_end + k as f64 * period));
    kicks.extend(s.ramp.times.iter().map(|t| d - t));
    kicks.sort_by(f64::total_cmp);
    kicks
}

/// All kick times of the schedule (on-ramp, train, mirrored off-ramp), sorted.
pub fn absolute_kick_times(s: &Schedule, period: f64) -> Result<Vec<f64>, ScheduleError> {
    s.ramp.validate(period)?;
    let kicks = kick_times_unchecked(s, period);
    if let Some(w) = kicks.windows(2).find(|w| w[0] == w[1]) {
        return Err(ScheduleError::DuplicateKick { time: w[0] });
    }
    Ok(kicks)
}

/// Reports the first pair of kicks that falls within one tick of `grid`.
pub fn check_tick_collisions(kicks: &[f64], grid: &ClockGrid) -> Result<(), ScheduleError> {
    for w in kicks.windows(2) {
        if w[1] - w[0] < grid.tick * (1.0 - ON_TICK_TOLERANCE) {
            return Err(ScheduleError::TickCollision {
                first: w[0],
                second: w[1],
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockGrid {
    pub multiple: u32,
    pub tick: f64,
}

impl ClockGrid {
    pub fn new(multiple: u32, period: f64) -> Result<Self, ScheduleError> {
        if multiple == 0 {
            return Err(ScheduleError::InvalidClock);
        }
        Ok(Self {
            multiple,
            tick: period / multiple as f64,
        })
    }

    /// Time of tick `k`; every snapped time goes through this formula.
    pub fn tick_time(&self, k: u64) -> f64 {
        k as f64 * self.tick
    }

    /// Candidate tick positions in a ramp of `r_periods` periods.
    pub fn positions_in_ramp(&self, r_periods: u32) -> u64 {
        self.multiple as u64 * r_periods as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum SnapOutcome {
    Snapped { ramp: Ramp, ticks: Vec<u64> },
    Discarded { reason: String },
}

impl SnapOutcome {
    pub fn snapped(&self) -> Option<(&Ramp, &[u64])> {
        match self {
            SnapOutcome::Snapped { ramp, ticks } => Some((ramp, ticks)),
            SnapOutcome::Discarded { .. } => None,
        }
    }
}

/// Every collision-free floor/ceiling tick assignment of a ramp, paired with
/// its summed displacement in ticks, in enumeration order. Ramps with more
/// than two pulses strictly inside one tick interval are rejected.
pub fn tick_assignments(ramp: &Ramp, grid: &ClockGrid) -> Result<Vec<(f64, Vec<u64>)>, String> {
    let n = ramp.len();
    let last_tick = grid.positions_in_ramp(ramp.r_periods) - 1;
    let positions: Vec<f64> = ramp.times.iter().map(|t| t / grid.tick).collect();

    let mut options: Vec<[u64; 2]> = Vec::with_capacity(n);
    let mut interior: std::collections::BTreeMap<u64, usize> = Default::default();
    for &u in &positions {
        let nearest = u.round();
        if (u - nearest).abs() < ON_TICK_TOLERANCE {
            let k = (nearest.max(0.0) as u64).min(last_tick);
            options.push([k, k]);
            continue;
        }
        let lo = u.floor().max(0.0) as u64;
        *interior.entry(lo).or_default() += 1;
        let lo = lo.min(last_tick);
        let hi = (lo + 1).min(last_tick);
        options.push([lo, hi]);
    }
    if let Some((k, count)) = interior.iter().find(|(_, &c)| c > 2) {
        return Err(format!("{count} pulses between ticks {k} and {}", k + 1));
    }

    let mut out = Vec::new();
    let mut ticks = vec![0u64; n];
    for mask in 0u32..(1 << n) {
        let mut cost = 0.0;
        for i in 0..n {
            ticks[i] = options[i][((mask >> i) & 1) as usize];
            cost += (ticks[i] as f64 - positions[i]).abs();
        }
        if (0..n).any(|i| (i + 1..n).any(|j| ticks[i] == ticks[j])) {
            continue;
        }
        let mut sorted = ticks.clone();
        sorted.sort_unstable();
        out.push((cost, sorted));
    }
    if out.is_empty() {
        return Err("no collision-free tick assignment".into());
    }
    Ok(out)
}

fn snapped_ramp(r_periods: u32, ticks: Vec<u64>, grid: &ClockGrid) -> SnapOutcome {
    let times = ticks.iter().map(|&k| grid.tick_time(k)).collect();
    SnapOutcome::Snapped {
        ramp: Ramp { r_periods, times },
        ticks,
    }
}

/// Moves each ramp pulse onto its floor or ceiling tick, choosing the
/// collision-free assignment closest (in summed displacement) to the
/// continuous solution. Ramps with more than two pulses strictly inside one
/// tick interval are discarded.
pub fn snap_to_clock(ramp: &Ramp, grid: &ClockGrid) -> SnapOutcome {
    match tick_assignments(ramp, grid) {
        Ok(candidates) => {
            let mut best: Option<(f64, Vec<u64>)> = None;
            for (cost, ticks) in candidates {
                // strict improvement keeps the earlier-tick choice on ties
                if best.as_ref().is_none_or(|(c, _)| cost < c - 1e-12) {
                    best = Some((cost, ticks));
                }
            }
            let (_, ticks) = best.expect("at least one assignment");
            snapped_ramp(ramp.r_periods, ticks, grid)
        }
        Err(reason) => SnapOutcome::Discarded { reason },
    }
}

/// Like [`snap_to_clock`], but picks the assignment with the lowest `cost`;
/// the closest assignment wins ties.
pub fn snap_to_clock_by<F: FnMut(&Ramp) -> f64>(ramp: &Ramp, grid: &ClockGrid, mut cost: F) -> SnapOutcome {
    let outcome = snap_to_clock(ramp, grid);
    let SnapOutcome::Snapped { ramp: closest, ticks } = &outcome else {
        return outcome;
    };
    let mut best_cost = cost(closest);
    let mut best = ticks.clone();
    let mut seen = std::collections::BTreeSet::from([best.clone()]);
    for (_, ticks) in tick_assignments(ramp, grid).expect("snap_to_clock accepted the ramp") {
        if !seen.insert(ticks.clone()) {
            continue;
        }
        let candidate = Ramp {
            r_periods: ramp.r_periods,
            times: ticks.iter().map(|&k| grid.tick_time(k)).collect(),
        };
        let c = cost(&candidate);
        if c < best_cost {
            best_cost = c;
            best = ticks;
        }
    }
    snapped_ramp(ramp.r_periods, best, grid)
}

/// Fourier amplitude `Σ_k exp(i ω t_k)` of a Dirac comb.
pub fn comb_spectrum(kicks: &[f64], omega: f64) -> Complex64 {
    kicks.iter().map(|t| Complex64::new(0.0, omega * t).exp()).sum()
}

pub fn schedule_spectrum(s: &Schedule, period: f64, omega: f64) -> Complex64 {
    comb_spectrum(&kick_times_unchecked(s, period), omega)
}
