//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs with `cargo test --test acceptance`.

use std::f64::consts::PI;
use std::fs;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfq_cli::commands;
use sfq_cli::config::RunConfig;
use sfq_core::closed::{self, error_budget, pauli_decompose, process_fidelity, project_computational};
use sfq_core::encoding::{bit_cost, decode, encode, EncodingParams};
use sfq_core::model::{diagonalize_model, Operator};
use sfq_core::numerics::{self, ComplexMatrix};
use sfq_core::open::{free_propagator_open, open_fidelity, propagate_open};
use sfq_core::optimizer::{
    self, no_ramp_baseline, optimize_gate, schedule_budget, GateOptimization, GateSpec, IntRange, OptimizerSettings,
    SnappedChoice,
};
use sfq_core::{CircuitParams, CoherenceRates, Coupling, QubitModel, Ramp, Schedule};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(ok)
    }
}

fn default_model() -> QubitModel {
    diagonalize_model(&CircuitParams::default()).unwrap()
}

fn snapped_schedule(c: &SnappedChoice, spec: &GateSpec) -> Schedule {
    Schedule::new(
        Ramp {
            r_periods: c.r_periods,
            times: c.times.clone(),
        },
        c.n_train,
        spec.coupling,
        spec.theta_kick,
    )
    .unwrap()
}

struct PiGates {
    model: QubitModel,
    inductive: GateOptimization,
    inductive_time: Duration,
    capacitive: GateOptimization,
    capacitive_time: Duration,
}

impl PiGates {
    fn run() -> Self {
        let model = default_model();
        let settings = OptimizerSettings::default();
        let t = Instant::now();
        let inductive = optimize_gate(&GateSpec::pi_gate(Coupling::Inductive), &model, &settings).unwrap();
        let inductive_time = t.elapsed();
        let t = Instant::now();
        let capacitive = optimize_gate(&GateSpec::pi_gate(Coupling::Capacitive), &model, &settings).unwrap();
        let capacitive_time = t.elapsed();
        Self {
            model,
            inductive,
            inductive_time,
            capacitive,
            capacitive_time,
        }
    }

    fn inductive_128(&self) -> Schedule {
        let choice = self.inductive.best_snapped[&128].as_ref().expect("a 128x schedule");
        snapped_schedule(choice, &self.inductive.spec)
    }
}

fn spectrum() -> Outcome {
    let t = Instant::now();
    let m = default_model();
    let f01 = m.omegas[1] / (2.0 * PI);
    let f12 = (m.omegas[2] - m.omegas[1]) / (2.0 * PI);
    let dt = t.elapsed();
    check(
        (f01 - 0.58).abs() <= 0.01 && (f12 - 3.39).abs() <= 0.01 && dt < Duration::from_secs(1),
        format!("ω01/2π = {f01:.4} GHz, ω12/2π = {f12:.4} GHz in {dt:.2?}"),
    )
}

fn matrix_elements() -> Outcome {
    let t = Instant::now();
    let m = default_model();
    let n01 = m.matrix_element(Operator::Charge, 0, 1).unwrap().norm();
    let n03 = m.matrix_element(Operator::Charge, 0, 3).unwrap().norm();
    let dt = t.elapsed();
    let ratio = n03 / n01;
    check(
        (1.5..=2.5).contains(&ratio) && dt < Duration::from_secs(1),
        format!("|n03|/|n01| = {ratio:.4} in {dt:.2?}"),
    )
}

fn harmonic_oracle() -> Outcome {
    let (e_c, e_l) = (1.0, 1.0);
    let m = diagonalize_model(&CircuitParams {
        e_j: 0.0,
        e_c,
        e_l,
        ..Default::default()
    })
    .unwrap();
    let spacing = 2.0 * PI * (8.0f64 * e_c * e_l).sqrt();
    let spectrum_err = m
        .omegas
        .windows(2)
        .map(|w| ((w[1] - w[0]) - spacing).abs() / spacing)
        .fold(0.0, f64::max);
    let scale = (8.0f64 * e_c / e_l).powf(0.25) / 2f64.sqrt();
    let d = m.n_levels();
    let mut ladder_err: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let expected = if i + 1 == j {
                scale * (j as f64).sqrt()
            } else if j + 1 == i {
                scale * (i as f64).sqrt()
            } else {
                0.0
            };
            ladder_err = ladder_err.max((m.phi_op[(i, j)] - Complex64::new(expected, 0.0)).norm());
        }
    }
    check(
        spectrum_err < 1e-8 && ladder_err < 1e-8,
        format!("spacing deviation {spectrum_err:.2e}, φ ladder deviation {ladder_err:.2e}"),
    )
}

fn random_schedule(rng: &mut ChaCha8Rng, period: f64) -> Schedule {
    let r = rng.random_range(1..=5u32);
    let n = rng.random_range(0..=6usize);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..r as f64 * period)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let coupling = if rng.random_bool(0.5) {
        Coupling::Inductive
    } else {
        Coupling::Capacitive
    };
    Schedule::new(
        Ramp { r_periods: r, times },
        rng.random_range(0..40),
        coupling,
        rng.random_range(0.01..0.3),
    )
    .unwrap()
}

fn closed_identities() -> Outcome {
    let t = Instant::now();
    let m = default_model();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut unitarity, mut phase, mut leak, mut closure, mut free): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..300 {
        let s = random_schedule(&mut rng, m.period);
        let u = closed::propagate(&m, &s).unwrap();
        unitarity = unitarity.max(numerics::unitarity_defect(&u));
        let u_q = project_computational(&u);
        let theta = rng.random_range(0.0..2.0 * PI);
        let target = closed::target_unitary(s.coupling, theta);
        let g = Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        phase = phase.max((process_fidelity(&u_q, &target) - process_fidelity(&u_q.map(|z| z * g), &target)).abs());
        let d = pauli_decompose(&u_q).unwrap();
        leak = leak.max((closed::leakage_closed(&u_q) - (2.0 * d.delta - d.delta * d.delta)).abs());
        let b = error_budget(&u_q, s.coupling, theta).unwrap();
        closure = closure.max((b.leakage + b.phase_error + b.discretization_error + b.unaccounted - b.infidelity_closed).abs());
        let k = rng.random_range(1..100u32);
        let f = project_computational(&closed::free_evolution(&m, k as f64 * m.period));
        free = free.max(numerics::max_abs_diff(&f, &numerics::identity(2)));
    }
    let dt = t.elapsed();
    check(
        unitarity < 1e-9
            && phase < 1e-12
            && leak < 1e-12
            && closure <= 4.0 * f64::EPSILON
            && free < 1e-9
            && dt < Duration::from_secs(10),
        format!(
            "300 schedules: unitarity {unitarity:.1e}, phase {phase:.1e}, leakage forms {leak:.1e}, closure {closure:.1e}, free evolution {free:.1e} in {dt:.2?}"
        ),
    )
}

fn continuous_quality(g: &PiGates) -> Outcome {
    let ind = g.inductive.best_continuous_infidelity().unwrap_or(1.0);
    let cap = g.capacitive.best_continuous_infidelity().unwrap_or(1.0);
    check(
        ind <= 1e-6 && cap <= 1e-5,
        format!(
            "inductive {ind:.3e} ({:.0?}), capacitive {cap:.3e} ({:.0?})",
            g.inductive_time, g.capacitive_time
        ),
    )
}

fn snapped_quality(g: &PiGates) -> Outcome {
    let ind = g.inductive.best_snapped_infidelity(128).unwrap_or(1.0);
    let cap = g.capacitive.best_snapped_infidelity(128).unwrap_or(1.0);
    check(ind <= 5e-4 && cap <= 5e-3, format!("128x: inductive {ind:.3e}, capacitive {cap:.3e}"))
}

fn ramp_benefit(g: &PiGates) -> Outcome {
    let spec = &g.inductive.spec;
    let base = no_ramp_baseline(spec, &g.model).unwrap();
    let bare = schedule_budget(&g.model, &base, spec.theta_targ, None).unwrap().infidelity_closed;
    let ramped = g.inductive.best_snapped_infidelity(128).unwrap_or(1.0);
    let ratio = bare / ramped;
    check(
        ratio >= 30.0,
        format!("no ramp {bare:.3e} (n_train {}) / ramped 128x {ramped:.3e} = {ratio:.1}", base.n_train),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn clock_ordering(m: &QubitModel) -> Outcome {
    let t = Instant::now();
    let angles: Vec<f64> = (1..=5).map(|k| k as f64 * PI / 5.0).collect();
    let settings = OptimizerSettings {
        trial_budget: 32,
        ..Default::default()
    };
    let rows = optimizer::sweep_target_angle(&GateSpec::pi_gate(Coupling::Inductive), &angles, m, &settings, None).unwrap();
    let med = |mult: u32| median(rows.iter().map(|r| r.row.snapped_infidelity(mult).unwrap_or(1.0)).collect());
    let (m32, m64, m128) = (med(32), med(64), med(128));
    check(
        m128 <= m64 && m64 <= m32,
        format!(
            "medians over θ_targ = kπ/5: 32x {m32:.3e}, 64x {m64:.3e}, 128x {m128:.3e} ({:.0?})",
            t.elapsed()
        ),
    )
}

fn budget_dominance(g: &PiGates) -> Outcome {
    let b = schedule_budget(&g.model, &g.inductive_128(), PI, None).unwrap();
    let (name, _) = b.largest_coherent();
    check(
        name == "leakage",
        format!(
            "inductive 128x: leakage {:.2e}, phase {:.2e}, discretization {:.2e}",
            b.leakage, b.phase_error, b.discretization_error
        ),
    )
}

fn projector(d: usize, k: usize) -> ComplexMatrix {
    let mut rho = ComplexMatrix::zeros(d, d);
    rho[(k, k)] = Complex64::new(1.0, 0.0);
    rho
}

fn open_system(g: &PiGates) -> Outcome {
    let t = Instant::now();
    let m = &g.model;
    let d = m.n_levels();
    let s = g.inductive_128();
    let target = closed::target_unitary(Coupling::Inductive, PI);

    let zero = propagate_open(m, &s, &CoherenceRates::zero()).unwrap();
    let f_pro = process_fidelity(&project_computational(&closed::propagate(m, &s).unwrap()), &target);
    let zero_gap = (open_fidelity(&zero, &target) - f_pro).abs();

    let rates = CoherenceRates::from_t1_t2(300.0, 250.0).unwrap();
    let mut decay: f64 = 0.0;
    let mut coh = ComplexMatrix::zeros(d, d);
    coh[(0, 1)] = Complex64::new(0.5, 0.0);
    coh[(1, 0)] = Complex64::new(0.5, 0.0);
    for time in [2.0, 37.0, 300.0] {
        let p = free_propagator_open(m, time, &rates).unwrap();
        decay = decay.max((p.apply(&projector(d, 1))[(1, 1)].re - (-time / 300.0f64).exp()).abs());
        let expected = Complex64::new(0.0, m.omega01() * time).exp() * 0.5 * (-time / 250.0f64).exp();
        decay = decay.max((p.apply(&coh)[(0, 1)] - expected).norm());
    }

    let b = schedule_budget(m, &s, PI, Some(&CoherenceRates::default())).unwrap();
    let incoherent = b.incoherent.unwrap();
    let dt = t.elapsed();
    check(
        zero_gap < 1e-10 && decay < 1e-8 && (1e-5..=1e-3).contains(&incoherent) && dt < Duration::from_secs(60),
        format!("zero-rate gap {zero_gap:.1e}, decay laws {decay:.1e}, incoherent {incoherent:.3e} in {dt:.2?}"),
    )
}

fn encoding() -> Outcome {
    let ind = bit_cost(6, 5, 128, 31).unwrap();
    let cap = bit_cost(6, 5, 128, 127).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = 0;
    for _ in 0..10_000 {
        let p = if rng.random_bool(0.5) {
            EncodingParams::INDUCTIVE
        } else {
            EncodingParams::CAPACITIVE
        };
        let r = rng.random_range(1..=p.r_max);
        let n = rng.random_range(0..=p.n_max as usize);
        let mut ticks: Vec<u64> = rand::seq::index::sample(&mut rng, (p.clock_multiple * r) as usize, n)
            .into_iter()
            .map(|k| k as u64)
            .collect();
        ticks.sort_unstable();
        let n_train = rng.random_range(0..=p.n_train_max);
        let ok = encode(&ticks, r, n_train, &p)
            .and_then(|e| decode(&e))
            .map(|d| d.ticks == ticks && d.r_periods == r && d.n_train == n_train)
            .unwrap_or(false);
        failures += usize::from(!ok);
    }
    check(
        ind == (56, 5, 3, 64) && cap == (56, 7, 3, 66) && failures == 0,
        format!(
            "(ramp, train, ramp length, total) bits: inductive {ind:?}, capacitive {cap:?}; round-trip failures {failures}/10000"
        ),
    )
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = |dir: &std::path::Path| {
        let mut cfg = RunConfig::default();
        cfg.gate.n_range = IntRange(1, 3);
        cfg.gate.r_range = IntRange(1, 2);
        cfg.trial_budget = 16;
        cfg.seed = 7;
        cfg.output.dir = dir.to_path_buf();
        cfg
    };
    commands::cmd_optimize(&config(a.path())).unwrap();
    commands::cmd_optimize(&config(b.path())).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<_> = names
        .iter()
        .filter(|n| fs::read(a.path().join(n)).ok() != fs::read(b.path().join(n)).ok())
        .collect();
    check(
        differing.is_empty() && names.len() >= 5,
        format!("{} files compared, differing: {differing:?}", names.len()),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 spectrum", spectrum()),
        ("2 matrix-element structure", matrix_elements()),
        ("3 harmonic oracle", harmonic_oracle()),
        ("4 closed-dynamics identities", closed_identities()),
    ];
    let gates = PiGates::run();
    results.push(("5 continuous-relaxation quality", continuous_quality(&gates)));
    results.push(("6 snapped quality at 128x", snapped_quality(&gates)));
    results.push(("7 ramp benefit", ramp_benefit(&gates)));
    results.push(("8 clock ordering", clock_ordering(&gates.model)));
    results.push(("9 budget dominance", budget_dominance(&gates)));
    results.push(("10 open system", open_system(&gates)));
    results.push(("11 encoding", encoding()));
    results.push(("12 determinism", determinism()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
