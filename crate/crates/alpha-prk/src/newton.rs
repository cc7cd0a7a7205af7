//! Dense Newton solver with a forward-difference Jacobian.
//!
//! All nonlinear systems in this crate are small (a few dozen unknowns), so
//! a dense LU factorization per iteration is the right tool. The Jacobian is
//! rebuilt every iteration; with the residual tolerances used here the extra
//! factorizations are cheap compared to chasing stale-Jacobian stagnation.

use crate::{inf_norm, Matrix, Vector};

/// Square root of machine epsilon, the forward-difference scale.
const SQRT_EPS: f64 = 1.4901161193847656e-8;

/// Stopping controls for [`newton_solve`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NewtonOptions {
    /// Accept once the residual infinity norm drops to this value.
    pub tol: f64,
    /// Give up after this many Newton updates.
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-13,
            max_iter: 50,
        }
    }
}

/// How to obtain the Jacobian of the residual.
pub enum JacobianMode<'a> {
    /// Forward differences with per-component step `sqrt(eps) * (1 + |z_i|)`.
    ForwardDifference,
    /// Caller-supplied Jacobian evaluated at the current iterate.
    Provided(&'a dyn Fn(&Vector) -> Matrix),
}

/// A converged Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    /// Solution iterate.
    pub z: Vector,
    /// Number of Newton updates performed.
    pub iterations: usize,
    /// Residual infinity norm at `z`.
    pub residual_norm: f64,
}

/// Why a Newton solve stopped without converging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonFailureKind {
    /// Ran out of iterations (or the residual went non-finite).
    MaxIterations,
    /// LU factorization failed or produced a non-finite update.
    SingularJacobian,
}

/// A failed Newton solve, carrying the best iterate seen for diagnostics.
#[derive(Debug, Clone)]
pub struct NewtonFailure {
    pub kind: NewtonFailureKind,
    /// Iterate with the smallest residual norm encountered.
    pub best: Vector,
    /// Residual infinity norm at `best`.
    pub best_residual_norm: f64,
    /// Newton updates performed before stopping.
    pub iterations: usize,
}

/// Solves `residual(z) = 0` starting from `z0`.
///
/// Returns the first iterate whose residual infinity norm is at or below
/// `opts.tol`. The forward-difference Jacobian uses the actually
/// representable increment per column, so the difference quotient is exact
/// in the perturbation size.
pub fn newton_solve(
    residual: &dyn Fn(&Vector) -> Vector,
    jacobian: JacobianMode<'_>,
    z0: &Vector,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, NewtonFailure> {
    let n = z0.len();
    let mut z = z0.clone();
    let mut f = residual(&z);
    assert_eq!(f.len(), n, "residual dimension must match the unknown");
    let mut fnorm = inf_norm(&f);

    let mut best = z.clone();
    let mut best_norm = fnorm;
    let mut iterations = 0;

    if fnorm <= opts.tol {
        return Ok(NewtonOutcome {
            z,
            iterations,
            residual_norm: fnorm,
        });
    }

    while iterations < opts.max_iter {
        if !fnorm.is_finite() {
            return Err(NewtonFailure {
                kind: NewtonFailureKind::MaxIterations,
                best,
                best_residual_norm: best_norm,
                iterations,
            });
        }

        let jac = match &jacobian {
            JacobianMode::ForwardDifference => forward_difference_jacobian(residual, &z, &f),
            JacobianMode::Provided(j) => j(&z),
        };

        let neg_f = -&f;
        let delta = match jac.lu().solve(&neg_f) {
            Some(d) if d.iter().all(|x| x.is_finite()) => d,
            _ => {
                return Err(NewtonFailure {
                    kind: NewtonFailureKind::SingularJacobian,
                    best,
                    best_residual_norm: best_norm,
                    iterations,
                });
            }
        };

        z += &delta;
        f = residual(&z);
        fnorm = inf_norm(&f);
        iterations += 1;

        if fnorm < best_norm {
            best.copy_from(&z);
            best_norm = fnorm;
        }
        if fnorm <= opts.tol {
            return Ok(NewtonOutcome {
                z,
                iterations,
                residual_norm: fnorm,
            });
        }
    }

    Err(NewtonFailure {
        kind: NewtonFailureKind::MaxIterations,
        best,
        best_residual_norm: best_norm,
        iterations,
    })
}

/// Column-by-column forward-difference Jacobian at `z`, reusing the residual
/// value `f0 = residual(z)`.
fn forward_difference_jacobian(
    residual: &dyn Fn(&Vector) -> Vector,
    z: &Vector,
    f0: &Vector,
) -> Matrix {
    let n = z.len();
    let mut jac = Matrix::zeros(f0.len(), n);
    let mut z_pert = z.clone();
    for j in 0..n {
        let zj = z[j];
        let step = SQRT_EPS * (1.0 + zj.abs());
        z_pert[j] = zj + step;
        let actual = z_pert[j] - zj;
        let fj = residual(&z_pert);
        for i in 0..f0.len() {
            jac[(i, j)] = (fj[i] - f0[i]) / actual;
        }
        z_pert[j] = zj;
    }
    jac
}
