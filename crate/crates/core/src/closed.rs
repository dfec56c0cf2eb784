//! Closed-system propagation of SFQ schedules and the coherent error metrics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Operator, QubitModel};
use crate::numerics::{self, ComplexMatrix, NumericsError, SpectralForm};
use crate::schedule::{self, Coupling, Schedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("0-1 matrix element of the {0:?} operator vanishes; kick normalization undefined")]
    VanishingTransition(Operator),
    #[error("kick angle must be non-negative, got {0}")]
    NegativeKickAngle(f64),
    #[error("cannot decompose the zero matrix")]
    ZeroMatrix,
    #[error("expected a 2x2 matrix, got {rows}x{cols}")]
    NotQubitBlock { rows: usize, cols: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn coupling_operator(coupling: Coupling) -> Operator {
    match coupling {
        Coupling::Inductive => Operator::Phase,
        Coupling::Capacitive => Operator::Charge,
    }
}

/// Spectral form of the kick generator `M̂ / (2|M01|)`, reusable for any
/// kick angle.
#[derive(Debug, Clone)]
pub struct KickGenerator {
    spectral: SpectralForm,
}

impl KickGenerator {
    pub fn new(model: &QubitModel, coupling: Coupling) -> Result<Self, DynamicsError> {
        let which = coupling_operator(coupling);
        let op = model.operator(which);
        let m01 = op[(0, 1)].norm();
        if m01 < 1e-12 {
            return Err(DynamicsError::VanishingTransition(which));
        }
        let generator = op.map(|z| z / (2.0 * m01));
        Ok(Self {
            spectral: SpectralForm::new(&generator)?,
        })
    }

    pub fn unitary(&self, theta_kick: f64) -> ComplexMatrix {
        self.spectral.exp(c(0.0, theta_kick))
    }
}

/// `exp(i θ M̂ / (2|M01|))` with `M̂` the phase (inductive) or charge
/// (capacitive) operator.
pub fn kick_unitary(model: &QubitModel, coupling: Coupling, theta_kick: f64) -> Result<ComplexMatrix, DynamicsError> {
    if theta_kick < 0.0 {
        return Err(DynamicsError::NegativeKickAngle(theta_kick));
    }
    Ok(KickGenerator::new(model, coupling)?.unitary(theta_kick))
}

/// Diagonal phases `exp(-i ω_j t)`.
pub fn free_phases(model: &QubitModel, t: f64) -> Vec<Complex64> {
    model.omegas.iter().map(|&w| c(0.0, -w * t).exp()).collect()
}

pub fn free_evolution(model: &QubitModel, t: f64) -> ComplexMatrix {
    let phases = free_phases(model, t);
    let mut m = ComplexMatrix::zeros(phases.len(), phases.len());
    for (j, p) in phases.into_iter().enumerate() {
        m[(j, j)] = p;
    }
    m
}

/// Full-space unitary of a schedule with a precomputed kick.
pub fn propagate_with_kick(model: &QubitModel, s: &Schedule, kick: &ComplexMatrix) -> ComplexMatrix {
    let n = model.n_levels();
    let d = schedule::total_duration(s, model.period);
    let mut u = numerics::identity(n);
    let mut now = 0.0;
    let apply_free = |u: &mut ComplexMatrix, dt: f64| {
        for (j, p) in free_phases(model, dt).into_iter().enumerate() {
            u.row_mut(j).iter_mut().for_each(|z| *z *= p);
        }
    };
    for t in schedule::kick_times_unchecked(s, model.period) {
        apply_free(&mut u, t - now);
        u = kick * &u;
        now = t;
    }
    apply_free(&mut u, d - now);
    u
}

/// Ordered product of free evolutions and kicks over the whole schedule.
pub fn propagate(model: &QubitModel, s: &Schedule) -> Result<ComplexMatrix, DynamicsError> {
    let kick = kick_unitary(model, s.coupling, s.theta_kick)?;
    Ok(propagate_with_kick(model, s, &kick))
}

/// Top-left 2×2 block (levels 0 and 1).
pub fn project_computational(u: &ComplexMatrix) -> ComplexMatrix {
    u.view((0, 0), (2, 2)).into_owned()
}

/// `exp(iθX/2)` (inductive) or `exp(iθY/2)` (capacitive).
pub fn target_unitary(coupling: Coupling, theta_targ: f64) -> ComplexMatrix {
    let (cs, sn) = ((theta_targ / 2.0).cos(), (theta_targ / 2.0).sin());
    match coupling {
        Coupling::Inductive => ComplexMatrix::from_row_slice(2, 2, &[c(cs, 0.), c(0., sn), c(0., sn), c(cs, 0.)]),
        Coupling::Capacitive => ComplexMatrix::from_row_slice(2, 2, &[c(cs, 0.), c(sn, 0.), c(-sn, 0.), c(cs, 0.)]),
    }
}

fn overlap(u_q: &ComplexMatrix, u_targ: &ComplexMatrix) -> Complex64 {
    u_targ.iter().zip(u_q.iter()).map(|(t, q)| t.conj() * q).sum()
}

/// `¼ |Tr(U_targ† U_Q)|²`.
pub fn process_fidelity(u_q: &ComplexMatrix, u_targ: &ComplexMatrix) -> f64 {
    0.25 * overlap(u_q, u_targ).norm_sqr()
}

/// `1 − ½ Tr(U_Q U_Q†)`.
pub fn leakage_closed(u_q: &ComplexMatrix) -> f64 {
    1.0 - 0.5 * u_q.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliDecomposition {
    pub c_i: Complex64,
    pub c_x: Complex64,
    pub c_y: Complex64,
    pub c_z: Complex64,
    pub delta: f64,
}

impl PauliDecomposition {
    /// Alternative leakage parametrization `2δ − δ²`.
    pub fn leakage(&self) -> f64 {
        2.0 * self.delta - self.delta * self.delta
    }

    pub fn coefficients(&self) -> [Complex64; 4] {
        [self.c_i, self.c_x, self.c_y, self.c_z]
    }

    fn rotated(&self, phase: Complex64) -> Self {
        Self {
            c_i: self.c_i * phase,
            c_x: self.c_x * phase,
            c_y: self.c_y * phase,
            c_z: self.c_z * phase,
            delta: self.delta,
        }
    }
}

fn qubit_block_check(u: &ComplexMatrix) -> Result<(), DynamicsError> {
    if u.nrows() != 2 || u.ncols() != 2 {
        return Err(DynamicsError::NotQubitBlock {
            rows: u.nrows(),
            cols: u.ncols(),
        });
    }
    Ok(())
}

fn raw_pauli_coefficients(u: &ComplexMatrix) -> [Complex64; 4] {
    let (a, b, cc, d) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    // ½ Tr(σ u) for σ = I, X, Y, Z
    [
        (a + d) * 0.5,
        (b + cc) * 0.5,
        (b - cc) * c(0.0, 0.5),
        (a - d) * 0.5,
    ]
}

/// Writes `U_Q = (1−δ)(c_I I + c_X X + c_Y Y + c_Z Z)` with unit-norm
/// coefficients and `c_I` real non-negative.
pub fn pauli_decompose(u_q: &ComplexMatrix) -> Result<PauliDecomposition, DynamicsError> {
    qubit_block_check(u_q)?;
    let raw = raw_pauli_coefficients(u_q);
    let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(DynamicsError::ZeroMatrix);
    }
    let coeffs = raw.map(|z| z / norm);
    let anchor = if coeffs[0].norm() >= 1e-14 {
        coeffs[0]
    } else {
        *coeffs
            .iter()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("four coefficients")
    };
    let phase = anchor.conj() / anchor.norm();
    let mut out = PauliDecomposition {
        c_i: coeffs[0],
        c_x: coeffs[1],
        c_y: coeffs[2],
        c_z: coeffs[3],
        delta: 1.0 - norm,
    }
    .rotated(phase);
    if coeffs[0].norm() >= 1e-14 {
        out.c_i = c(out.c_i.re, 0.0);
    }
    Ok(out)
}

/// Coherent (and optionally incoherent) error components of one gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub infidelity_closed: f64,
    pub leakage: f64,
    pub phase_error: f64,
    pub discretization_error: f64,
    pub unaccounted: f64,
    pub infidelity_open: Option<f64>,
    pub incoherent: Option<f64>,
}

impl ErrorBudget {
    pub fn largest_coherent(&self) -> (&'static str, f64) {
        [
            ("leakage", self.leakage),
            ("phase", self.phase_error),
            ("discretization", self.discretization_error),
        ]
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty")
    }

    /// Records the open-system fidelity; the incoherent part is `F_pro − F_open`.
    pub fn with_open(mut self, fidelity_open: f64) -> Self {
        let f_pro = 1.0 - self.infidelity_closed;
        self.infidelity_open = Some(1.0 - fidelity_open);
        self.incoherent = Some(f_pro - fidelity_open);
        self
    }
}

/// Coherent error budget of a projected gate.
///
/// The Pauli coefficients are phase-aligned so that `Tr(U_targ† U_Q)` is real
/// and positive before the discretization error is read off; the phase error
/// `|c_Z|²` does not depend on that choice.
pub fn error_budget(u_q: &ComplexMatrix, coupling: Coupling, theta_targ: f64) -> Result<ErrorBudget, DynamicsError> {
    qubit_block_check(u_q)?;
    let target = target_unitary(coupling, theta_targ);
    let infidelity_closed = 1.0 - process_fidelity(u_q, &target);
    let leakage = leakage_closed(u_q);
    let decomposition = pauli_decompose(u_q)?;
    let ov = overlap(u_q, &target);
    let aligned = if ov.norm() > 0.0 {
        let raw = raw_pauli_coefficients(u_q);
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let phase = ov.conj() / ov.norm();
        PauliDecomposition {
            c_i: raw[0] / norm,
            c_x: raw[1] / norm,
            c_y: raw[2] / norm,
            c_z: raw[3] / norm,
            delta: decomposition.delta,
        }
        .rotated(phase)
    } else {
        decomposition
    };
    let ideal = c(0.0, (theta_targ / 2.0).sin());
    let rotation_component = match coupling {
        Coupling::Inductive => aligned.c_x,
        Coupling::Capacitive => aligned.c_y,
    };
    let phase_error = decomposition.c_z.norm_sqr();
    let discretization_error = (rotation_component - ideal).norm_sqr();
    Ok(ErrorBudget {
        infidelity_closed,
        leakage,
        phase_error,
        discretization_error,
        unaccounted: infidelity_closed - (leakage + phase_error + discretization_error),
        infidelity_open: None,
        incoherent: None,
    })
}

/// Closed-system evaluator for ramps of a fixed gate, sweeping the train length.
///
/// Only the two computational columns of the on-ramp and the two computational
/// rows of the off-ramp are propagated, which is all the projected block needs.
#[derive(Debug, Clone)]
pub struct TrainEvaluator {
    dim: usize,
    omegas: Vec<f64>,
    period: f64,
    /// Row-major kick unitary.
    kick: Vec<Complex64>,
    /// Row-major `K · F(T)`.
    kick_after_period: Vec<Complex64>,
    target: [Complex64; 4],
}

impl TrainEvaluator {
    pub fn new(model: &QubitModel, coupling: Coupling, theta_kick: f64, theta_targ: f64) -> Result<Self, DynamicsError> {
        let kick = kick_unitary(model, coupling, theta_kick)?;
        Ok(Self::with_kick(model, &kick, coupling, theta_targ))
    }

    pub fn with_kick(model: &QubitModel, kick: &ComplexMatrix, coupling: Coupling, theta_targ: f64) -> Self {
        let dim = model.n_levels();
        let row_major = |m: &ComplexMatrix| {
            let mut v = Vec::with_capacity(dim * dim);
            for i in 0..dim {
                for j in 0..dim {
                    v.push(m[(i, j)]);
                }
            }
            v
        };
        let kf = kick * free_evolution(model, model.period);
        let t = target_unitary(coupling, theta_targ);
        Self {
            dim,
            omegas: model.omegas.clone(),
            period: model.period,
            kick: row_major(kick),
            kick_after_period: row_major(&kf),
            target: [t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]],
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    fn phases(&self, dt: f64, out: &mut [Complex64]) {
        for (o, &w) in out.iter_mut().zip(&self.omegas) {
            let (s, c) = (w * dt).sin_cos();
            *o = Complex64::new(c, -s);
        }
    }

    // cols: dim×2 row-major; cols ← m · cols
    fn left_apply(&self, m: &[Complex64], cols: &mut [Complex64], scratch: &mut [Complex64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &m[i * d..(i + 1) * d];
            let mut a0 = Complex64::new(0.0, 0.0);
            let mut a1 = Complex64::new(0.0, 0.0);
            for k in 0..d {
                a0 += row[k] * cols[2 * k];
                a1 += row[k] * cols[2 * k + 1];
            }
            scratch[2 * i] = a0;
            scratch[2 * i + 1] = a1;
        }
        cols.copy_from_slice(&scratch[..2 * d]);
    }

    // rows: 2×dim row-major; rows ← rows · m
    fn right_apply(&self, m: &[Complex64], rows: &mut [Complex64], scratch: &mut [Complex64]) {
        let d = self.dim;
        for r in 0..2 {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += rows[r * d + k] * m[k * d + j];
                }
                scratch[r * d + j] = acc;
            }
        }
        rows.copy_from_slice(&scratch[..2 * d]);
    }

    /// Infidelity for every train length `1..=max_train`, for the mirrored
    /// schedule built from `ramp_times` (sorted, within `[0, r·T)`).
    pub fn infidelities(&self, ramp_times: &[f64], r_periods: u32, max_train: u32) -> Vec<f64> {
        let d = self.dim;
        let ramp_end = r_periods as f64 * self.period;
        let mut cols = vec![Complex64::new(0.0, 0.0); 2 * d];
        cols[0] = Complex64::new(1.0, 0.0);
        cols[3] = Complex64::new(1.0, 0.0);
        let mut rows = vec![Complex64::new(0.0, 0.0); 2 * d];
        rows[0] = Complex64::new(1.0, 0.0);
        rows[d + 1] = Complex64::new(1.0, 0.0);
        let mut phases = vec![Complex64::new(0.0, 0.0); d];
        let mut scratch = vec![Complex64::new(0.0, 0.0); 2 * d];

        let mut apply_phases = |cols: &mut [Complex64], rows: &mut [Complex64], dt: f64| {
            self.phases(dt, &mut phases);
            for k in 0..d {
                cols[2 * k] *= phases[k];
                cols[2 * k + 1] *= phases[k];
                rows[k] *= phases[k];
                rows[d + k] *= phases[k];
            }
        };
        let mut last = 0.0;
        for &t in ramp_times {
            apply_phases(&mut cols, &mut rows, t - last);
            self.left_apply(&self.kick, &mut cols, &mut scratch);
            self.right_apply(&self.kick, &mut rows, &mut scratch);
            last = t;
        }
        apply_phases(&mut cols, &mut rows, ramp_end - last);

        // first train kick directly follows the on-ramp
        self.left_apply(&self.kick, &mut cols, &mut scratch);
        let mut out = Vec::with_capacity(max_train as usize);
        for n in 1..=max_train {
            if n > 1 {
                self.left_apply(&self.kick_after_period, &mut cols, &mut scratch);
            }
            let mut tr = Complex64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    let mut u_ab = Complex64::new(0.0, 0.0);
                    for k in 0..d {
                        u_ab += rows[a * d + k] * cols[2 * k + b];
                    }
                    tr += self.target[2 * a + b].conj() * u_ab;
                }
            }
            out.push(1.0 - 0.25 * tr.norm_sqr());
        }
        out
    }

    /// `(n_train, infidelity)` minimizing over `1..=max_train`; ties go to the
    /// shorter train.
    pub fn best_train_length(&self, ramp_times: &[f64], r_periods: u32, max_train: u32) -> (u32, f64) {
        let infid = self.infidelities(ramp_times, r_periods, max_train);
        let mut best = (1, f64::INFINITY);
        for (i, &v) in infid.iter().enumerate() {
            if v < best.1 {
                best = (i as u32 + 1, v);
            }
        }
        best
    }
}
