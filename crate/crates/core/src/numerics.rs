//! Dense complex linear algebra and a finite-difference BFGS minimizer.
//!
//! Everything here works on small matrices (at most 36×36 in practice), so the
//! kernels favour accuracy and simplicity over asymptotic speed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type ComplexMatrix = DMatrix<Complex64>;

/// Entrywise tolerance on `|m - m†|` accepted by [`eigh`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: |m[{row},{col}] - conj(m[{col},{row}])| = {deviation:.3e}")]
    NotHermitian { row: usize, col: usize, deviation: f64 },
    #[error("starting point is not finite (objective = {value})")]
    NonFiniteStart { value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation `|m - other|`.
pub fn max_abs_diff(m: &ComplexMatrix, other: &ComplexMatrix) -> f64 {
    m.iter()
        .zip(other.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// `‖m†m − I‖_max`.
pub fn unitarity_defect(m: &ComplexMatrix) -> f64 {
    let prod = m.adjoint() * m;
    max_abs_diff(&prod, &identity(m.nrows()))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

fn check_hermitian(m: &ComplexMatrix) -> Result<(), NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in i..n {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
            if dev > worst.2 {
                worst = (i, j, dev);
            }
        }
    }
    if worst.2 > HERMITIAN_TOLERANCE {
        return Err(NumericsError::NotHermitian {
            row: worst.0,
            col: worst.1,
            deviation: worst.2,
        });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the unitary whose columns are the
/// matching eigenvectors.
pub fn eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), NumericsError> {
    check_hermitian(m)?;
    let n = m.nrows();
    // symmetrize so the iteration starts exactly Hermitian
    let mut a = (m + m.adjoint()).map(|z| z * 0.5);
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }
    let mut v = identity(n);
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 || mag <= 1e-19 * scale {
                    a[(p, q)] = Complex64::new(0.0, 0.0);
                    a[(q, p)] = Complex64::new(0.0, 0.0);
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // W = diag(1, conj(phase)) · [[c, s], [-s, c]]
                let w_pp = Complex64::new(c, 0.0);
                let w_pq = Complex64::new(s, 0.0);
                let w_qp = -phase.conj() * s;
                let w_qq = phase.conj() * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * w_pp + akq * w_qp;
                    a[(k, q)] = akp * w_pq + akq * w_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = w_pp.conj() * apk + w_qp.conj() * aqk;
                    a[(q, k)] = w_pq.conj() * apk + w_qq.conj() * aqk;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * w_pp + vkq * w_qp;
                    v[(k, q)] = vkp * w_pq + vkq * w_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok((values, vectors))
}

/// Applies a scalar function to a Hermitian matrix through its spectrum.
pub fn hermitian_function<F>(h: &ComplexMatrix, f: F) -> Result<ComplexMatrix, NumericsError>
where
    F: Fn(f64) -> Complex64,
{
    let (values, vectors) = eigh(h)?;
    Ok(spectral_rebuild(&values, &vectors, f))
}

fn spectral_rebuild<F>(values: &[f64], vectors: &ComplexMatrix, f: F) -> ComplexMatrix
where
    F: Fn(f64) -> Complex64,
{
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &lambda) in values.iter().enumerate() {
        let fj = f(lambda);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vectors.adjoint()
}

/// `exp(scale · h)` for Hermitian `h`, through its eigendecomposition.
pub fn expm_hermitian(h: &ComplexMatrix, scale: Complex64) -> Result<ComplexMatrix, NumericsError> {
    hermitian_function(h, |lambda| (scale * lambda).exp())
}

/// A Hermitian matrix with its eigendecomposition kept around, so repeated
/// exponentials with different scales cost one matrix product each.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl SpectralForm {
    pub fn new(h: &ComplexMatrix) -> Result<Self, NumericsError> {
        let (values, vectors) = eigh(h)?;
        Ok(Self { values, vectors })
    }

    pub fn exp(&self, scale: Complex64) -> ComplexMatrix {
        spectral_rebuild(&self.values, &self.vectors, |lambda| (scale * lambda).exp())
    }
}

// Padé(13) coefficients and the scaling threshold from Higham (2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &ComplexMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential of an arbitrary square matrix by scaling and squaring
/// with a degree-13 Padé approximant.
pub fn expm_general(m: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let norm = one_norm(m);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m.map(|z| z / 2f64.powi(squarings));
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let eye = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (a6.map(|z| z * b(13)) + a4.map(|z| z * b(11)) + a2.map(|z| z * b(9)));
    let u_poly = u_inner
        + a6.map(|z| z * b(7))
        + a4.map(|z| z * b(5))
        + a2.map(|z| z * b(3))
        + eye.map(|z| z * b(1));
    let u = &a * u_poly;
    let v_inner = &a6 * (a6.map(|z| z * b(12)) + a4.map(|z| z * b(10)) + a2.map(|z| z * b(8)));
    let v = v_inner
        + a6.map(|z| z * b(6))
        + a4.map(|z| z * b(4))
        + a2.map(|z| z * b(2))
        + eye.map(|z| z * b(0));

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MinimizerOptions {
    /// Central-difference step, in the same units as the variables.
    pub gradient_step: f64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            gradient_step: 1e-7,
            gradient_tolerance: 1e-10,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn central_gradient<F>(f: &F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            let g = (up - down) / (2.0 * step);
            if g.is_finite() {
                g
            } else {
                0.0
            }
        })
        .collect()
}

// Largest step (infinity norm) a single line search may take.
const MAX_STEP: f64 = 0.25;

/// BFGS with central finite-difference gradients and a backtracking Armijo
/// line search. The returned point is the best one ever evaluated, so
/// `f ≤ f(x0)` always holds.
pub fn minimize<F>(f: F, x0: &[f64], opts: &MinimizerOptions) -> Result<Minimum, NumericsError>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(NumericsError::NonFiniteStart { value: f0 });
    }
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f0;
    if n == 0 {
        return Ok(Minimum {
            x: vec![],
            f: f0,
            iterations: 0,
            converged: true,
        });
    }
    let grad = |x: &DVector<f64>| DVector::from_vec(central_gradient(&f, x.as_slice(), opts.gradient_step));
    let mut g = grad(&x);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_step = true;

    for iter in 0..opts.max_iterations {
        if g.amax() < opts.gradient_tolerance {
            return Ok(Minimum {
                x: x.as_slice().to_vec(),
                f: fx,
                iterations: iter,
                converged: true,
            });
        }
        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            // lost positive definiteness; restart from steepest descent
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        let dmax = dir.amax();
        if dmax > MAX_STEP {
            dir *= MAX_STEP / dmax;
        }

        let slope = dir.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * alpha;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Ok(Minimum {
                x: x.as_slice().to_vec(),
                f: fx,
                iterations: iter,
                converged: false,
            });
        };
        if f_new >= fx && (&x_new - &x).amax() == 0.0 {
            return Ok(Minimum {
                x: x.as_slice().to_vec(),
                f: fx,
                iterations: iter,
                converged: false,
            });
        }

        let g_new = grad(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if first_step {
                h_inv *= sy / y.dot(&y);
                first_step = false;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - ρ(s hyᵀ + hy sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            h_inv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    Ok(Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        iterations: opts.max_iterations,
        converged: g.amax() < opts.gradient_tolerance,
    })
}
