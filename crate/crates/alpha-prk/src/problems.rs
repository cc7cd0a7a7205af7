//! Constrained Hamiltonian problems and the two bundled benchmark systems.
//!
//! A problem supplies the energy `H(p, q)`, its gradients, the holonomic
//! constraints `g(q)` with Jacobian `G(q) = dg/dq`, and optionally a list of
//! quadratic invariants `q^T D p` that the flow conserves. States are
//! consistent when `g(q) = 0` and the hidden constraint `G(q) H_p(p, q) = 0`
//! holds; the steppers require consistent base states and return consistent
//! results.

use crate::newton::{newton_solve, JacobianMode, NewtonOptions};
use crate::{inf_norm, Error, Matrix, SolvePhase, Vector};

/// A point `(p, q)` of phase space at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub t: f64,
    pub p: Vector,
    pub q: Vector,
}

impl PhaseState {
    pub fn new(t: f64, p: Vector, q: Vector) -> Self {
        assert_eq!(p.len(), q.len(), "p and q must have equal dimension");
        PhaseState { t, p, q }
    }
}

/// A conserved bilinear quantity `q^T D p`.
#[derive(Debug, Clone)]
pub struct QuadraticInvariant {
    /// Short name used for log columns (for example `L3`).
    pub label: String,
    /// The defining matrix `D`.
    pub d: Matrix,
}

impl QuadraticInvariant {
    pub fn new(label: impl Into<String>, d: Matrix) -> Self {
        QuadraticInvariant {
            label: label.into(),
            d,
        }
    }

    /// Evaluates `q^T D p`.
    pub fn eval(&self, p: &Vector, q: &Vector) -> f64 {
        (q.transpose() * &self.d * p)[(0, 0)]
    }
}

/// A Hamiltonian system with holonomic constraints.
///
/// Implementations must be pure: repeated calls with the same arguments
/// return the same values, and no call mutates the problem.
pub trait HamiltonianProblem {
    /// Short identifier used in logs and reports.
    fn name(&self) -> &str;

    /// Dimension `d` of `p` and `q`.
    fn dim(&self) -> usize;

    /// Number of constraint equations `m`.
    fn constraint_count(&self) -> usize;

    /// Energy `H(p, q)`.
    fn energy(&self, p: &Vector, q: &Vector) -> f64;

    /// Gradient `H_p(p, q)`.
    fn grad_p(&self, p: &Vector, q: &Vector) -> Vector;

    /// Gradient `H_q(p, q)`.
    fn grad_q(&self, p: &Vector, q: &Vector) -> Vector;

    /// Constraint values `g(q)`, length `m`.
    fn constraints(&self, q: &Vector) -> Vector;

    /// Constraint Jacobian `G(q) = dg/dq`, shape `m x d`.
    fn constraint_jacobian(&self, q: &Vector) -> Matrix;

    /// Quadratic invariants `q^T D p` conserved by the flow.
    fn quad_invariants(&self) -> &[QuadraticInvariant] {
        &[]
    }
}

/// `(|g(q)|_inf, |G(q) H_p(p, q)|_inf)` for a state.
pub fn consistency_residuals(prob: &dyn HamiltonianProblem, state: &PhaseState) -> (f64, f64) {
    let g = prob.constraints(&state.q);
    let hidden = prob.constraint_jacobian(&state.q) * prob.grad_p(&state.p, &state.q);
    (inf_norm(&g), inf_norm(&hidden))
}

/// Projects the momentum of a position-consistent state onto the hidden
/// constraint by solving `G(q) H_p(p - G(q)^T lambda, q) = 0` for `lambda`.
///
/// The position is not modified; `g(q)` must already be within `tol`.
pub fn project_initial(
    prob: &dyn HamiltonianProblem,
    state: &PhaseState,
    tol: f64,
) -> Result<PhaseState, Error> {
    let g = prob.constraints(&state.q);
    let g_inf = inf_norm(&g);
    if g_inf > tol {
        let hidden = prob.constraint_jacobian(&state.q) * prob.grad_p(&state.p, &state.q);
        return Err(Error::InconsistentState {
            g_inf,
            hidden_inf: inf_norm(&hidden),
            tol,
        });
    }

    let m = prob.constraint_count();
    let gq = prob.constraint_jacobian(&state.q);
    let gq_t = gq.transpose();
    let residual = |lambda: &Vector| -> Vector {
        let p = &state.p - &gq_t * lambda;
        &gq * prob.grad_p(&p, &state.q)
    };
    let outcome = newton_solve(
        &residual,
        JacobianMode::ForwardDifference,
        &Vector::zeros(m),
        &NewtonOptions { tol, max_iter: 50 },
    )
    .map_err(|f| Error::NewtonMaxIterations {
        phase: SolvePhase::InitialProjection,
        residual_norm: f.best_residual_norm,
        iterations: f.iterations,
    })?;

    Ok(PhaseState {
        t: state.t,
        p: &state.p - &gq_t * &outcome.z,
        q: state.q.clone(),
    })
}

/// Spherical pendulum: a unit point mass on the unit sphere under gravity.
///
/// `H(p, q) = |p|^2 / 2 + q_3` with the single constraint `|q|^2 - 1 = 0`.
/// The vertical angular momentum `L3 = q_1 p_2 - q_2 p_1` is a quadratic
/// invariant of the constrained flow.
pub struct SphericalPendulum {
    invariants: Vec<QuadraticInvariant>,
}

impl SphericalPendulum {
    pub fn new() -> Self {
        SphericalPendulum {
            invariants: vec![QuadraticInvariant::new("L3", z_rotation_generator(1))],
        }
    }
}

impl Default for SphericalPendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl HamiltonianProblem for SphericalPendulum {
    fn name(&self) -> &str {
        "pendulum"
    }

    fn dim(&self) -> usize {
        3
    }

    fn constraint_count(&self) -> usize {
        1
    }

    fn energy(&self, p: &Vector, q: &Vector) -> f64 {
        0.5 * p.dot(p) + q[2]
    }

    fn grad_p(&self, p: &Vector, _q: &Vector) -> Vector {
        p.clone()
    }

    fn grad_q(&self, _p: &Vector, _q: &Vector) -> Vector {
        Vector::from_vec(vec![0.0, 0.0, 1.0])
    }

    fn constraints(&self, q: &Vector) -> Vector {
        Vector::from_vec(vec![q.dot(q) - 1.0])
    }

    fn constraint_jacobian(&self, q: &Vector) -> Matrix {
        Matrix::from_fn(1, 3, |_, j| 2.0 * q[j])
    }

    fn quad_invariants(&self) -> &[QuadraticInvariant] {
        &self.invariants
    }
}

/// Convenience constructor for [`SphericalPendulum`].
pub fn pendulum() -> SphericalPendulum {
    SphericalPendulum::new()
}

/// Pendulum start near the south pole with a small azimuthal momentum:
/// `q = (0, sin 0.1, -cos 0.1)`, `p = (0.06, 0, 0)`.
pub fn pendulum_initial_state() -> PhaseState {
    let theta = 0.1f64;
    PhaseState::new(
        0.0,
        Vector::from_vec(vec![0.06, 0.0, 0.0]),
        Vector::from_vec(vec![0.0, theta.sin(), -theta.cos()]),
    )
}

/// Three point masses in an attracting central field, pairwise tethered at
/// unit distance.
///
/// `H(p, q) = sum_i (|p_i|^2 / 2 - 1 / |q_i|)` with constraints
/// `|q_1 - q_2|^2 = |q_2 - q_3|^2 = |q_3 - q_1|^2 = 1`. The total vertical
/// angular momentum is conserved and registered as a quadratic invariant.
pub struct TetheredSatellites {
    invariants: Vec<QuadraticInvariant>,
}

impl TetheredSatellites {
    pub fn new() -> Self {
        TetheredSatellites {
            invariants: vec![QuadraticInvariant::new(
                "L3_total",
                z_rotation_generator(3),
            )],
        }
    }
}

impl Default for TetheredSatellites {
    fn default() -> Self {
        Self::new()
    }
}

/// Body `i` of a stacked 9-vector as a slice range.
fn body(i: usize) -> std::ops::Range<usize> {
    3 * i..3 * i + 3
}

impl HamiltonianProblem for TetheredSatellites {
    fn name(&self) -> &str {
        "satellites"
    }

    fn dim(&self) -> usize {
        9
    }

    fn constraint_count(&self) -> usize {
        3
    }

    fn energy(&self, p: &Vector, q: &Vector) -> f64 {
        (0..3)
            .map(|i| {
                let pi = p.rows(3 * i, 3);
                let qi = q.rows(3 * i, 3);
                0.5 * pi.dot(&pi) - 1.0 / qi.norm()
            })
            .sum()
    }

    fn grad_p(&self, p: &Vector, _q: &Vector) -> Vector {
        p.clone()
    }

    fn grad_q(&self, _p: &Vector, q: &Vector) -> Vector {
        let mut out = Vector::zeros(9);
        for i in 0..3 {
            let qi = q.rows(3 * i, 3);
            let scale = qi.norm_squared().powf(-1.5);
            for (k, idx) in body(i).enumerate() {
                out[idx] = scale * qi[k];
            }
        }
        out
    }

    fn constraints(&self, q: &Vector) -> Vector {
        let d = |i: usize, j: usize| -> f64 {
            let qi = q.rows(3 * i, 3);
            let qj = q.rows(3 * j, 3);
            (qi - qj).norm_squared() - 1.0
        };
        Vector::from_vec(vec![d(0, 1), d(1, 2), d(2, 0)])
    }

    fn constraint_jacobian(&self, q: &Vector) -> Matrix {
        let mut jac = Matrix::zeros(3, 9);
        // Row r constrains the pair (r, r+1 mod 3); the derivative of
        // |q_i - q_j|^2 is 2(q_i - q_j) on block i and the negative on j.
        for r in 0..3 {
            let i = r;
            let j = (r + 1) % 3;
            let qi = q.rows(3 * i, 3);
            let qj = q.rows(3 * j, 3);
            let diff = qi - qj;
            for k in 0..3 {
                jac[(r, 3 * i + k)] = 2.0 * diff[k];
                jac[(r, 3 * j + k)] = -2.0 * diff[k];
            }
        }
        jac
    }

    fn quad_invariants(&self) -> &[QuadraticInvariant] {
        &self.invariants
    }
}

/// Convenience constructor for [`TetheredSatellites`].
pub fn satellites() -> TetheredSatellites {
    TetheredSatellites::new()
}

/// Satellite start: an equilateral unit triangle hovering at height ~20,
/// with the third body kicked horizontally so that the total energy is
/// exactly zero.
pub fn satellites_initial_state() -> PhaseState {
    let half_sqrt3 = 3.0f64.sqrt() / 2.0;
    let q = Vector::from_vec(vec![
        0.0,
        0.5,
        20.0,
        0.0,
        -0.5,
        20.0,
        0.0,
        0.0,
        20.0 - half_sqrt3,
    ]);
    // H = v0^2/2 - (1/|q1| + 1/|q2| + 1/|q3|) = 0 fixes the kick speed.
    let r12 = (0.25f64 + 400.0).sqrt();
    let r3 = 20.0 - half_sqrt3;
    let v0 = (2.0 * (2.0 / r12 + 1.0 / r3)).sqrt();
    let mut p = Vector::zeros(9);
    p[6] = v0;
    PhaseState::new(0.0, p, q)
}

/// Generator of simultaneous rotation about the vertical axis for `blocks`
/// stacked 3-vectors: block-diagonal copies of the elementary rotation
/// generator in the (1, 2) plane.
fn z_rotation_generator(blocks: usize) -> Matrix {
    let mut d = Matrix::zeros(3 * blocks, 3 * blocks);
    for b in 0..blocks {
        d[(3 * b, 3 * b + 1)] = 1.0;
        d[(3 * b + 1, 3 * b)] = -1.0;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_vector(rng: &mut StdRng, n: usize, scale: f64) -> Vector {
        Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-scale..scale)))
    }

    /// Central-difference gradient of a scalar function.
    fn fd_gradient(f: &dyn Fn(&Vector) -> f64, x: &Vector, step: f64) -> Vector {
        let mut out = Vector::zeros(x.len());
        let mut xp = x.clone();
        for i in 0..x.len() {
            let xi = x[i];
            xp[i] = xi + step;
            let fp = f(&xp);
            xp[i] = xi - step;
            let fm = f(&xp);
            xp[i] = xi;
            out[i] = (fp - fm) / (2.0 * step);
        }
        out
    }

    fn check_gradients(prob: &dyn HamiltonianProblem, seed: u64, scale: f64) {
        let mut rng = StdRng::seed_from_u64(seed);
        let d = prob.dim();
        for _ in 0..100 {
            let p = random_vector(&mut rng, d, scale);
            let mut q = random_vector(&mut rng, d, scale);
            // Keep satellite bodies away from the 1/|q_i| singularity.
            if prob.name() == "satellites" {
                for b in 0..3 {
                    q[3 * b + 2] += 15.0;
                }
            }
            let hp = prob.grad_p(&p, &q);
            let hq = prob.grad_q(&p, &q);
            let fd_p = fd_gradient(&|pp| prob.energy(pp, &q), &p, 1e-6);
            let fd_q = fd_gradient(&|qq| prob.energy(&p, qq), &q, 1e-6);
            for i in 0..d {
                assert_abs_diff_eq!(hp[i], fd_p[i], epsilon = 1e-6 * (1.0 + hp[i].abs()));
                assert_abs_diff_eq!(hq[i], fd_q[i], epsilon = 1e-6 * (1.0 + hq[i].abs()));
            }
            // The constraint Jacobian must differentiate g the same way.
            let gq = prob.constraint_jacobian(&q);
            for r in 0..prob.constraint_count() {
                let fd_row = fd_gradient(&|qq| prob.constraints(qq)[r], &q, 1e-6);
                for i in 0..d {
                    assert_abs_diff_eq!(
                        gq[(r, i)],
                        fd_row[i],
                        epsilon = 1e-5 * (1.0 + gq[(r, i)].abs())
                    );
                }
            }
        }
    }

    #[test]
    fn test_pendulum_gradients_match_finite_differences() {
        check_gradients(&pendulum(), 71, 2.0);
    }

    #[test]
    fn test_satellites_gradients_match_finite_differences() {
        check_gradients(&satellites(), 72, 1.5);
    }

    #[test]
    fn test_pendulum_initial_state_energy_and_momentum() {
        let prob = pendulum();
        let s0 = pendulum_initial_state();
        let h0 = prob.energy(&s0.p, &s0.q);
        // H = 0.06^2/2 - cos(0.1).
        assert_abs_diff_eq!(h0, -0.9932041652780258, epsilon = 1e-15);
        let l3 = prob.quad_invariants()[0].eval(&s0.p, &s0.q);
        assert_abs_diff_eq!(l3, -5.990004998809689e-3, epsilon = 1e-17);
        let (g, hidden) = consistency_residuals(&prob, &s0);
        assert!(g <= 1e-15, "initial |g| = {g:.3e}");
        assert!(hidden <= 1e-15, "initial hidden residual = {hidden:.3e}");
    }

    #[test]
    fn test_satellites_initial_state_is_consistent_with_zero_energy() {
        let prob = satellites();
        let s0 = satellites_initial_state();
        assert_abs_diff_eq!(prob.energy(&s0.p, &s0.q), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s0.p[6], 0.5517822421601886, epsilon = 1e-14);
        let (g, hidden) = consistency_residuals(&prob, &s0);
        assert!(g <= 1e-14, "initial |g| = {g:.3e}");
        assert!(hidden <= 1e-14, "initial hidden residual = {hidden:.3e}");
    }

    #[test]
    fn test_pendulum_constraint_is_invariant_under_registered_rotation() {
        // exp(s D) for the registered generator is the rotation by angle s
        // in the (1, 2) plane; both g and H must be invariant under it.
        let prob = pendulum();
        let mut rng = StdRng::seed_from_u64(73);
        for _ in 0..20 {
            let mut q = random_vector(&mut rng, 3, 1.0);
            q /= q.norm();
            let mut p = random_vector(&mut rng, 3, 1.0);
            let qp = q.dot(&p);
            p -= q.clone() * qp;
            for s in [-1.0, -0.1, 0.1, 1.0f64] {
                let rot = Matrix::from_row_slice(
                    3,
                    3,
                    &[
                        s.cos(),
                        s.sin(),
                        0.0,
                        -s.sin(),
                        s.cos(),
                        0.0,
                        0.0,
                        0.0,
                        1.0,
                    ],
                );
                let q_rot = &rot * &q;
                let p_rot = &rot * &p;
                let dg = (prob.constraints(&q_rot)[0] - prob.constraints(&q)[0]).abs();
                let dh = (prob.energy(&p_rot, &q_rot) - prob.energy(&p, &q)).abs();
                assert!(dg <= 1e-10, "constraint moved by {dg:.3e} under rotation");
                assert!(dh <= 1e-10, "energy moved by {dh:.3e} under rotation");
            }
        }
    }

    #[test]
    fn test_rotation_matrix_is_generated_by_registered_d() {
        // d/ds exp(s D) at s = 0 equals D; check with a small finite
        // difference of the closed-form rotation.
        let d = z_rotation_generator(1);
        let s = 1e-6;
        let rot = Matrix::from_row_slice(
            3,
            3,
            &[s.cos(), s.sin(), 0.0, -s.sin(), s.cos(), 0.0, 0.0, 0.0, 1.0],
        );
        let approx_d = (rot - Matrix::identity(3, 3)) / s;
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(approx_d[(i, j)], d[(i, j)], epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn test_satellites_quad_invariant_is_total_vertical_angular_momentum() {
        let prob = satellites();
        let mut rng = StdRng::seed_from_u64(74);
        let p = random_vector(&mut rng, 9, 1.0);
        let q = random_vector(&mut rng, 9, 1.0);
        let by_blocks: f64 = (0..3)
            .map(|i| q[3 * i] * p[3 * i + 1] - q[3 * i + 1] * p[3 * i])
            .sum();
        let val = prob.quad_invariants()[0].eval(&p, &q);
        assert_abs_diff_eq!(val, by_blocks, epsilon = 1e-14);
    }

    #[test]
    fn test_project_initial_removes_normal_momentum() {
        let prob = pendulum();
        let state = PhaseState::new(
            0.0,
            Vector::from_vec(vec![0.0, 0.0, 1.0]),
            Vector::from_vec(vec![0.0, 0.0, -1.0]),
        );
        let projected = project_initial(&prob, &state, 1e-12).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(projected.p[i], 0.0, epsilon = 1e-13);
        }
        let (_, hidden) = consistency_residuals(&prob, &projected);
        assert!(hidden <= 1e-12);
    }

    #[test]
    fn test_project_initial_rejects_position_off_the_manifold() {
        let prob = pendulum();
        let state = PhaseState::new(
            0.0,
            Vector::from_vec(vec![0.0, 0.0, 0.0]),
            Vector::from_vec(vec![0.0, 0.0, -1.1]),
        );
        assert!(matches!(
            project_initial(&prob, &state, 1e-12),
            Err(Error::InconsistentState { .. })
        ));
    }
}
