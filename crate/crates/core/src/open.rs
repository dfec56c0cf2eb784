//! Open-system propagation with energy relaxation and pure dephasing on the
//! qubit levels.
//!
//! Density matrices are vectorized row by row, `vec(ρ)[i·n + j] = ρ_ij`, so
//! `vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)`.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::closed::{self, DynamicsError};
use crate::model::{CoherenceRates, QubitModel};
use crate::numerics::{self, ComplexMatrix};
use crate::schedule::{self, Schedule};

/// Linear map on row-stacked density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    /// Dimension of the underlying Hilbert space.
    pub levels: usize,
    pub matrix: ComplexMatrix,
}

impl Superoperator {
    pub fn identity(levels: usize) -> Self {
        Self {
            levels,
            matrix: numerics::identity(levels * levels),
        }
    }

    /// `ρ ↦ U ρ U†`.
    pub fn from_unitary(u: &ComplexMatrix) -> Self {
        Self {
            levels: u.nrows(),
            matrix: numerics::kron(u, &u.map(|z| z.conj())),
        }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Superoperator) -> Superoperator {
        Superoperator {
            levels: self.levels,
            matrix: &self.matrix * &first.matrix,
        }
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let n = self.levels;
        let v = nalgebra::DVector::from_iterator(n * n, (0..n).flat_map(|i| (0..n).map(move |j| rho[(i, j)])));
        let out = &self.matrix * v;
        ComplexMatrix::from_fn(n, n, |i, j| out[i * n + j])
    }

    /// Largest deviation of `Tr(S(ρ))` from `Tr(ρ)` over matrix units.
    pub fn trace_defect(&self) -> f64 {
        let n = self.levels;
        (0..n * n)
            .map(|col| {
                let tr: Complex64 = (0..n).map(|i| self.matrix[(i * n + i, col)]).sum();
                let expected = if col % (n + 1) == 0 { 1.0 } else { 0.0 };
                (tr - expected).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Choi matrix `Σ_ij |i⟩⟨j| ⊗ S(|i⟩⟨j|)`.
    pub fn choi(&self) -> ComplexMatrix {
        let n = self.levels;
        ComplexMatrix::from_fn(n * n, n * n, |row, col| {
            let (i, a) = (row / n, row % n);
            let (j, b) = (col / n, col % n);
            self.matrix[(a * n + b, i * n + j)]
        })
    }
}

/// Lindblad generator with collapse operators `√Γ1 |0⟩⟨1|` and `√(2Γφ) |1⟩⟨1|`.
pub fn liouvillian(model: &QubitModel, rates: &CoherenceRates) -> ComplexMatrix {
    let n = model.n_levels();
    let eye = numerics::identity(n);
    let mut h = ComplexMatrix::zeros(n, n);
    for (j, &w) in model.omegas.iter().enumerate() {
        h[(j, j)] = Complex64::new(w, 0.0);
    }
    let minus_i = Complex64::new(0.0, -1.0);
    let mut l = (numerics::kron(&h, &eye) - numerics::kron(&eye, &h.transpose())).map(|z| z * minus_i);

    let mut relax = ComplexMatrix::zeros(n, n);
    relax[(0, 1)] = Complex64::new(rates.gamma_1.sqrt(), 0.0);
    let mut dephase = ComplexMatrix::zeros(n, n);
    dephase[(1, 1)] = Complex64::new((2.0 * rates.gamma_phi).sqrt(), 0.0);
    for op in [relax, dephase] {
        let cdc = op.adjoint() * &op;
        l += numerics::kron(&op, &op.map(|z| z.conj()))
            - (numerics::kron(&cdc, &eye) + numerics::kron(&eye, &cdc.transpose())).map(|z| z * 0.5);
    }
    l
}

/// `exp(L t)`.
pub fn free_propagator_open(model: &QubitModel, t: f64, rates: &CoherenceRates) -> Result<Superoperator, DynamicsError> {
    let l = liouvillian(model, rates);
    free_propagator_from(&l, model.n_levels(), t)
}

fn free_propagator_from(l: &ComplexMatrix, levels: usize, t: f64) -> Result<Superoperator, DynamicsError> {
    Ok(Superoperator {
        levels,
        matrix: numerics::expm_general(&l.map(|z| z * t))?,
    })
}

/// Superoperator of a schedule under dissipative free evolution and
/// instantaneous unitary kicks. Propagators are cached per segment duration.
pub fn propagate_open(model: &QubitModel, s: &Schedule, rates: &CoherenceRates) -> Result<Superoperator, DynamicsError> {
    let n = model.n_levels();
    let l = liouvillian(model, rates);
    let kick = Superoperator::from_unitary(&closed::kick_unitary(model, s.coupling, s.theta_kick)?);
    let mut cache: HashMap<u64, Superoperator> = HashMap::new();
    let mut segment = |dt: f64| -> Result<Superoperator, DynamicsError> {
        if let Some(p) = cache.get(&dt.to_bits()) {
            return Ok(p.clone());
        }
        let p = free_propagator_from(&l, n, dt)?;
        cache.insert(dt.to_bits(), p.clone());
        Ok(p)
    };

    let d = schedule::total_duration(s, model.period);
    let mut total = Superoperator::identity(n);
    let mut now = 0.0;
    for t in schedule::kick_times_unchecked(s, model.period) {
        // train spacing differs from T only by rounding; reuse one propagator
        let dt = t - now;
        let dt = if (dt - model.period).abs() < 1e-12 * model.period { model.period } else { dt };
        total = kick.compose(&segment(dt)?.compose(&total));
        now = t;
    }
    total = segment(d - now)?.compose(&total);
    Ok(total)
}

/// `¼ Tr(S_Q† (P2 ⊗ P2) S_E)` with `S_Q` the target conjugation embedded on
/// levels {0, 1}.
pub fn open_fidelity(s_e: &Superoperator, u_targ: &ComplexMatrix) -> f64 {
    let n = s_e.levels;
    let mut tr = Complex64::new(0.0, 0.0);
    for a in 0..2 {
        for b in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let s_q = u_targ[(a, k)] * u_targ[(b, l)].conj();
                    tr += s_q.conj() * s_e.matrix[(a * n + b, k * n + l)];
                }
            }
        }
    }
    debug_assert!(tr.im.abs() < 1e-8, "imaginary residue {}", tr.im);
    0.25 * tr.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed::{free_evolution, process_fidelity, project_computational, propagate, target_unitary};
    use crate::model::{diagonalize_model, CircuitParams};
    use crate::schedule::{Coupling, Ramp};
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn model() -> &'static QubitModel {
        static M: OnceLock<QubitModel> = OnceLock::new();
        M.get_or_init(|| diagonalize_model(&CircuitParams::default()).unwrap())
    }

    fn basis_projector(n: usize, k: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, n);
        m[(k, k)] = Complex64::new(1.0, 0.0);
        m
    }

    #[test]
    fn zero_rate_generator_is_commutator() {
        let m = model();
        for t in [0.0, 0.37, m.period, 5.1] {
            let p = free_propagator_open(m, t, &CoherenceRates::zero()).unwrap();
            let expected = Superoperator::from_unitary(&free_evolution(m, t));
            assert!(numerics::max_abs_diff(&p.matrix, &expected.matrix) < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn zero_duration_is_identity() {
        let p = free_propagator_open(model(), 0.0, &CoherenceRates::default()).unwrap();
        assert!(numerics::max_abs_diff(&p.matrix, &numerics::identity(36)) < 1e-15);
    }

    #[test]
    fn t1_decay_law() {
        let m = model();
        let rates = CoherenceRates::default();
        let t1 = 1.0 / rates.gamma_1;
        let p = free_propagator_open(m, t1, &rates).unwrap();
        let rho = p.apply(&basis_projector(6, 1));
        assert!((rho[(1, 1)].re - (-1.0f64).exp()).abs() < 1e-8, "{}", rho[(1, 1)]);
        assert!((rho[(0, 0)].re - (1.0 - (-1.0f64).exp())).abs() < 1e-8);

        let fast = CoherenceRates {
            gamma_1: 0.02,
            gamma_phi: 0.0,
        };
        for t in [1.0, 10.0, 50.0] {
            let rho = free_propagator_open(m, t, &fast).unwrap().apply(&basis_projector(6, 1));
            assert!((rho[(1, 1)].re - (-0.02 * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn t2_coherence_decay_law() {
        let m = model();
        let rates = CoherenceRates::from_t1_t2(300.0, 250.0).unwrap();
        let mut rho = ComplexMatrix::zeros(6, 6);
        rho[(0, 1)] = Complex64::new(0.5, 0.0);
        rho[(1, 0)] = Complex64::new(0.5, 0.0);
        for t in [3.0, 40.0, 250.0] {
            let out = free_propagator_open(m, t, &rates).unwrap().apply(&rho);
            let expected = Complex64::new(0.0, m.omega01() * t).exp() * 0.5 * (-t / 250.0f64).exp();
            assert!((out[(0, 1)] - expected).norm() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn composition_consistency() {
        let m = model();
        let rates = CoherenceRates::from_t1_t2(1e3, 8e2).unwrap();
        let a = free_propagator_open(m, 0.7, &rates).unwrap();
        let b = free_propagator_open(m, 2.3, &rates).unwrap();
        let ab = free_propagator_open(m, 3.0, &rates).unwrap();
        assert!(numerics::max_abs_diff(&b.compose(&a).matrix, &ab.matrix) < 1e-9);
    }

    #[test]
    fn zero_rate_schedule_matches_closed() {
        let m = model();
        let s = Schedule::new(Ramp::new(2, vec![0.3, 1.2, 2.9], m.period).unwrap(), 12, Coupling::Inductive, 0.15).unwrap();
        let open = propagate_open(m, &s, &CoherenceRates::zero()).unwrap();
        let u = propagate(m, &s).unwrap();
        let closed = Superoperator::from_unitary(&u);
        assert!(numerics::max_abs_diff(&open.matrix, &closed.matrix) < 1e-10);
        let target = target_unitary(Coupling::Inductive, 12.0 * 0.15 + 0.9);
        let f_pro = process_fidelity(&project_computational(&u), &target);
        assert!((open_fidelity(&open, &target) - f_pro).abs() < 1e-10);
    }

    #[test]
    fn kick_free_schedule_follows_analytic_decay() {
        let m = model();
        let rates = CoherenceRates::from_t1_t2(200.0, 150.0).unwrap();
        let s = Schedule::new(Ramp::empty(3), 0, Coupling::Inductive, 0.15).unwrap();
        let d = schedule::total_duration(&s, m.period);
        let sup = propagate_open(m, &s, &rates).unwrap();
        let n = 6;
        let decay = (-d / 200.0f64).exp();
        assert!((sup.matrix[(n + 1, n + 1)].re - decay).abs() < 1e-10);
        assert!((sup.matrix[(0, n + 1)].re - (1.0 - decay)).abs() < 1e-10);
        // d is a whole number of periods, so the coherence phase is trivial
        assert!((sup.matrix[(1, 1)] - Complex64::new((-d / 150.0f64).exp(), 0.0)).norm() < 1e-9);
    }

    #[test]
    fn physical_rates_preserve_trace_and_positivity() {
        let m = model();
        let s = Schedule::new(Ramp::new(1, vec![0.1, 0.9], m.period).unwrap(), 20, Coupling::Capacitive, 0.03).unwrap();
        let sup = propagate_open(m, &s, &CoherenceRates::from_t1_t2(500.0, 400.0).unwrap()).unwrap();
        assert!(sup.trace_defect() < 1e-9);
        let choi = sup.choi();
        let choi = (&choi + choi.adjoint()).map(|z| z * 0.5);
        let (vals, _) = numerics::eigh(&choi).unwrap();
        assert!(vals[0] > -1e-9, "{}", vals[0]);
    }

    #[test]
    fn open_fidelity_brute_force() {
        // two-level identity map against X: explicit superoperator trace
        let x = ComplexMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(0., 0.), Complex64::new(1., 0.), Complex64::new(1., 0.), Complex64::new(0., 0.)],
        );
        let id = Superoperator::identity(2);
        let s_q = numerics::kron(&x, &x.map(|z| z.conj()));
        let brute = (s_q.adjoint() * &id.matrix).trace() * 0.25;
        assert!((open_fidelity(&id, &x) - brute.re).abs() < 1e-15);
        assert!(open_fidelity(&id, &x).abs() < 1e-15);

        // six levels, a random-ish channel, explicit embedding and projector
        let m = model();
        let s = Schedule::new(Ramp::new(1, vec![0.4], m.period).unwrap(), 9, Coupling::Inductive, 0.15).unwrap();
        let sup = propagate_open(m, &s, &CoherenceRates::from_t1_t2(80.0, 60.0).unwrap()).unwrap();
        let v = target_unitary(Coupling::Inductive, 1.3);
        let mut emb = ComplexMatrix::zeros(6, 6);
        emb.view_mut((0, 0), (2, 2)).copy_from(&v);
        let mut p2 = ComplexMatrix::zeros(6, 6);
        p2[(0, 0)] = Complex64::new(1., 0.);
        p2[(1, 1)] = Complex64::new(1., 0.);
        let s_q = numerics::kron(&emb, &emb.map(|z| z.conj()));
        let proj = numerics::kron(&p2, &p2);
        let brute = (s_q.adjoint() * proj * &sup.matrix).trace() * 0.25;
        assert!(brute.im.abs() < 1e-10);
        assert!((open_fidelity(&sup, &v) - brute.re).abs() < 1e-12);
    }

    #[test]
    fn ideal_target_conjugation_has_unit_fidelity() {
        let v = target_unitary(Coupling::Capacitive, PI / 3.0);
        let mut emb = numerics::identity(6);
        emb.view_mut((0, 0), (2, 2)).copy_from(&v);
        let sup = Superoperator::from_unitary(&emb);
        assert!((open_fidelity(&sup, &v) - 1.0).abs() < 1e-14);
    }
}
