//! One step of a symplectic PRK scheme, constrained or unconstrained.
//!
//! The constrained step works in two phases. The *stage* phase solves the
//! coupled nonlinear system for the internal stages
//!
//! ```text
//!   Q_i = q_0 + h sum_j a_ij  H_p(P_j, Q_j)            i = 2..s
//!   P_i = p_0 + h sum_j â_ij (-H_q(P_j, Q_j) - G(Q_j)^T Λ_j)   i = 1..s
//!   g(Q_i) = 0                                          i = 2..s
//! ```
//!
//! with `Q_1 = q_0` pinned by stiff accuracy (`a_1j = 0`) and the last
//! momentum-tableau column zero (`â_is = 0`), so the stage multipliers stop
//! at `Λ_{s-1}`. Stiff accuracy also gives `q_1 = Q_s` directly. The
//! *projection* phase then solves for `(p_1, Λ_s)` from the momentum update
//! and the hidden constraint `G(q_1) H_p(p_1, q_1) = 0`, which keeps the
//! returned state on the full constraint manifold.
//!
//! The unconstrained step drops the multipliers and the constraint rows and
//! integrates the plain Hamiltonian vector field; it accepts any family and
//! exists mainly to demonstrate what goes wrong without the constraint
//! machinery.

use crate::newton::{newton_solve, JacobianMode, NewtonFailure, NewtonFailureKind, NewtonOptions};
use crate::problems::{consistency_residuals, HamiltonianProblem, PhaseState};
use crate::tableau::TableauPair;
use crate::{Error, Matrix, SolvePhase, Vector};

/// Step-level controls.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepperOptions {
    /// Controls for the stage and projection Newton solves.
    pub newton: NewtonOptions,
    /// Largest admissible step size.
    pub h_cap: f64,
}

impl Default for StepperOptions {
    fn default() -> Self {
        StepperOptions {
            newton: NewtonOptions::default(),
            h_cap: 1.0,
        }
    }
}

/// Converged internal stages of one step.
#[derive(Debug, Clone)]
pub struct StageValues {
    /// `Q_1..Q_s` (with `Q_1 = q_0` for the constrained step).
    pub q: Vec<Vector>,
    /// `P_1..P_s`.
    pub p: Vec<Vector>,
    /// `Λ_1..Λ_{s-1}` (empty for the unconstrained step).
    pub lambda: Vec<Vector>,
}

/// Converged stage vector of a previous step, reusable as a warm start.
///
/// The packed layout is tied to the system that produced it; a guess whose
/// dimension does not match the new system is ignored.
#[derive(Debug, Clone)]
pub struct StageGuess {
    pub(crate) z: Vector,
    pub(crate) base_p: Vector,
    pub(crate) base_q: Vector,
}

/// Result of one accepted step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// The state at `t_0 + h`.
    pub state: PhaseState,
    /// Tableau parameter the step was taken with.
    pub alpha: f64,
    /// Newton updates spent in the stage solve.
    pub newton_iters_stage: usize,
    /// Newton updates spent in the projection solve (zero when
    /// unconstrained).
    pub newton_iters_proj: usize,
    /// Final stage residual infinity norm.
    pub residual_stage: f64,
    /// Final projection residual infinity norm.
    pub residual_proj: f64,
    /// Stage multipliers `Λ_1..Λ_s` (empty when unconstrained).
    pub multipliers: Vec<Vector>,
    /// Converged stages for warm starting the next step.
    pub stage_guess: StageGuess,
}

/// The packed stage system of a constrained step.
///
/// Unknown layout: `z = (Q_2..Q_s, P_1..P_s, Λ_1..Λ_{s-1})` with position
/// blocks of size `d`, momentum blocks of size `d`, and multiplier blocks of
/// size `m`.
pub struct StageSystem<'a> {
    prob: &'a dyn HamiltonianProblem,
    tab: &'a TableauPair,
    base: &'a PhaseState,
    h: f64,
    d: usize,
    m: usize,
    s: usize,
}

impl<'a> StageSystem<'a> {
    pub fn new(
        prob: &'a dyn HamiltonianProblem,
        tab: &'a TableauPair,
        base: &'a PhaseState,
        h: f64,
    ) -> Self {
        StageSystem {
            prob,
            tab,
            base,
            h,
            d: prob.dim(),
            m: prob.constraint_count(),
            s: tab.stages(),
        }
    }

    /// Number of unknowns `(2s-1) d + (s-1) m`.
    pub fn dim(&self) -> usize {
        (2 * self.s - 1) * self.d + (self.s - 1) * self.m
    }

    /// Splits a packed vector into stage values (`Q_1` is the base point).
    pub fn unpack(&self, z: &Vector) -> StageValues {
        let (d, m, s) = (self.d, self.m, self.s);
        let mut q = Vec::with_capacity(s);
        q.push(self.base.q.clone());
        for i in 1..s {
            q.push(z.rows((i - 1) * d, d).into_owned());
        }
        let p = (0..s)
            .map(|i| z.rows((s - 1) * d + i * d, d).into_owned())
            .collect();
        let lambda = (0..s - 1)
            .map(|i| z.rows((2 * s - 1) * d + i * m, m).into_owned())
            .collect();
        StageValues { q, p, lambda }
    }

    /// Packs stage values into the unknown layout (inverse of [`unpack`]).
    ///
    /// [`unpack`]: StageSystem::unpack
    pub fn pack(&self, vals: &StageValues) -> Vector {
        let (d, m, s) = (self.d, self.m, self.s);
        let mut z = Vector::zeros(self.dim());
        for i in 1..s {
            z.rows_mut((i - 1) * d, d).copy_from(&vals.q[i]);
        }
        for i in 0..s {
            z.rows_mut((s - 1) * d + i * d, d).copy_from(&vals.p[i]);
        }
        for i in 0..s - 1 {
            z.rows_mut((2 * s - 1) * d + i * m, m).copy_from(&vals.lambda[i]);
        }
        z
    }

    /// Residual of the stage equations at `z`, in the block order
    /// `(R_Q_2..R_Q_s, R_P_1..R_P_s, g(Q_2)..g(Q_s))`.
    pub fn residual(&self, z: &Vector) -> Vector {
        let (d, m, s, h) = (self.d, self.m, self.s, self.h);
        let st = self.unpack(z);
        let k: Vec<Vector> = (0..s)
            .map(|j| self.prob.grad_p(&st.p[j], &st.q[j]))
            .collect();
        let mut ell: Vec<Vector> = Vec::with_capacity(s - 1);
        for j in 0..s - 1 {
            let mut l = -self.prob.grad_q(&st.p[j], &st.q[j]);
            l -= self.prob.constraint_jacobian(&st.q[j]).transpose() * &st.lambda[j];
            ell.push(l);
        }

        let mut out = Vector::zeros(self.dim());
        for i in 1..s {
            let mut r = &st.q[i] - &self.base.q;
            for (j, kj) in k.iter().enumerate() {
                let aij = self.tab.a[(i, j)];
                if aij != 0.0 {
                    r.axpy(-h * aij, kj, 1.0);
                }
            }
            out.rows_mut((i - 1) * d, d).copy_from(&r);
        }
        for i in 0..s {
            let mut r = &st.p[i] - &self.base.p;
            for (j, lj) in ell.iter().enumerate() {
                let ahij = self.tab.a_hat[(i, j)];
                if ahij != 0.0 {
                    r.axpy(-h * ahij, lj, 1.0);
                }
            }
            out.rows_mut((s - 1) * d + i * d, d).copy_from(&r);
        }
        for i in 1..s {
            let g = self.prob.constraints(&st.q[i]);
            out.rows_mut((2 * s - 1) * d + (i - 1) * m, m).copy_from(&g);
        }
        out
    }

    /// Explicit Euler predictors for a cold start: stages follow the base
    /// vector field, multipliers start at zero.
    pub fn default_guess(&self) -> Vector {
        let k0 = self.prob.grad_p(&self.base.p, &self.base.q);
        let hq0 = self.prob.grad_q(&self.base.p, &self.base.q);
        let c_hat = self.tab.c_hat();
        let mut vals = StageValues {
            q: Vec::with_capacity(self.s),
            p: Vec::with_capacity(self.s),
            lambda: vec![Vector::zeros(self.m); self.s - 1],
        };
        for i in 0..self.s {
            vals.q.push(&self.base.q + &k0 * (self.h * self.tab.c[i]));
            vals.p.push(&self.base.p - &hq0 * (self.h * c_hat[i]));
        }
        self.pack(&vals)
    }

    /// Warm start from a previous step's converged stages, translated by the
    /// change of base point.
    pub fn guess_from(&self, warm: &StageGuess) -> Vector {
        debug_assert_eq!(warm.z.len(), self.dim());
        let (d, s) = (self.d, self.s);
        let dq = &self.base.q - &warm.base_q;
        let dp = &self.base.p - &warm.base_p;
        let mut z = warm.z.clone();
        for i in 0..s - 1 {
            let mut block = z.rows_mut(i * d, d);
            block += &dq;
        }
        for i in 0..s {
            let mut block = z.rows_mut((s - 1) * d + i * d, d);
            block += &dp;
        }
        z
    }
}

/// The end-of-step system of a constrained step: unknowns `(p_1, Λ_s)`.
pub struct ProjectionSystem<'a> {
    prob: &'a dyn HamiltonianProblem,
    /// `p_0 + h sum_{i<s} b̂_i ℓ_i - h b̂_s H_q(P_s, Q_s)`; everything in
    /// the momentum update that does not depend on the unknowns.
    p_pred: Vector,
    /// `G(q_1)`.
    gq1: Matrix,
    /// `G(q_1)^T`, kept separately to avoid re-transposing per evaluation.
    gq1_t: Matrix,
    /// `h b̂_s`.
    h_bs: f64,
    q1: &'a Vector,
    d: usize,
    m: usize,
}

impl<'a> ProjectionSystem<'a> {
    /// Builds the projection system from converged stages.
    pub fn new(
        prob: &'a dyn HamiltonianProblem,
        tab: &TableauPair,
        base: &PhaseState,
        h: f64,
        stages: &'a StageValues,
    ) -> Self {
        let s = tab.stages();
        let q1 = &stages.q[s - 1];
        let mut p_pred = base.p.clone();
        for j in 0..s - 1 {
            let bj = tab.b_hat[j];
            let mut l = -prob.grad_q(&stages.p[j], &stages.q[j]);
            l -= prob.constraint_jacobian(&stages.q[j]).transpose() * &stages.lambda[j];
            p_pred.axpy(h * bj, &l, 1.0);
        }
        let h_bs = h * tab.b_hat[s - 1];
        p_pred.axpy(-h_bs, &prob.grad_q(&stages.p[s - 1], q1), 1.0);
        let gq1 = prob.constraint_jacobian(q1);
        let gq1_t = gq1.transpose();
        ProjectionSystem {
            prob,
            p_pred,
            gq1,
            gq1_t,
            h_bs,
            q1,
            d: prob.dim(),
            m: prob.constraint_count(),
        }
    }

    /// Number of unknowns `d + m`.
    pub fn dim(&self) -> usize {
        self.d + self.m
    }

    /// Residual `(p_1 - p_pred + h b̂_s G^T Λ_s, G(q_1) H_p(p_1, q_1))`.
    pub fn residual(&self, w: &Vector) -> Vector {
        let p1 = w.rows(0, self.d).into_owned();
        let lambda = w.rows(self.d, self.m).into_owned();
        let mut out = Vector::zeros(self.dim());
        let mut r_p = &p1 - &self.p_pred;
        r_p.axpy(self.h_bs, &(&self.gq1_t * &lambda), 1.0);
        out.rows_mut(0, self.d).copy_from(&r_p);
        let r_h = &self.gq1 * self.prob.grad_p(&p1, self.q1);
        out.rows_mut(self.d, self.m).copy_from(&r_h);
        out
    }

    /// Initial guess: momentum prediction with the last stage multiplier.
    pub fn default_guess(&self, stages: &StageValues) -> Vector {
        let lambda = stages
            .lambda
            .last()
            .cloned()
            .unwrap_or_else(|| Vector::zeros(self.m));
        let mut w = Vector::zeros(self.dim());
        let p1 = &self.p_pred - &(&self.gq1_t * &lambda) * self.h_bs;
        w.rows_mut(0, self.d).copy_from(&p1);
        w.rows_mut(self.d, self.m).copy_from(&lambda);
        w
    }
}

fn map_newton_failure(phase: SolvePhase, f: NewtonFailure) -> Error {
    match f.kind {
        NewtonFailureKind::MaxIterations => Error::NewtonMaxIterations {
            phase,
            residual_norm: f.best_residual_norm,
            iterations: f.iterations,
        },
        NewtonFailureKind::SingularJacobian => Error::SingularJacobian {
            phase,
            iteration: f.iterations,
        },
    }
}

fn validate_step_size(h: f64, opts: &StepperOptions) -> Result<(), Error> {
    if !h.is_finite() || h <= 0.0 || h > opts.h_cap {
        return Err(Error::InvalidStep { h, cap: opts.h_cap });
    }
    Ok(())
}

fn validate_dims(prob: &dyn HamiltonianProblem, s0: &PhaseState) -> Result<(), Error> {
    if s0.p.len() != prob.dim() || s0.q.len() != prob.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has p: {}, q: {} but problem '{}' has dimension {}",
            s0.p.len(),
            s0.q.len(),
            prob.name(),
            prob.dim()
        )));
    }
    Ok(())
}

/// Advances a consistent state by one constrained PRK step.
///
/// Requires a constraint-preserving (stiffly accurate) family. The returned
/// state satisfies both constraints to the Newton tolerance, and the record
/// carries the converged stages for warm starting a subsequent step.
pub fn prk_step(
    prob: &dyn HamiltonianProblem,
    tab: &TableauPair,
    s0: &PhaseState,
    h: f64,
    warm: Option<&StageGuess>,
    opts: &StepperOptions,
) -> Result<StepRecord, Error> {
    validate_step_size(h, opts)?;
    validate_dims(prob, s0)?;
    if !tab.family.is_constraint_preserving() {
        return Err(Error::NotConstraintPreserving { family: tab.family });
    }
    let consistency_tol = 10.0 * opts.newton.tol;
    let (g_inf, hidden_inf) = consistency_residuals(prob, s0);
    if g_inf > consistency_tol || hidden_inf > consistency_tol {
        return Err(Error::InconsistentState {
            g_inf,
            hidden_inf,
            tol: consistency_tol,
        });
    }

    let sys = StageSystem::new(prob, tab, s0, h);
    let z0 = match warm {
        Some(w) if w.z.len() == sys.dim() => sys.guess_from(w),
        _ => sys.default_guess(),
    };
    let stage_out = newton_solve(
        &|z| sys.residual(z),
        JacobianMode::ForwardDifference,
        &z0,
        &opts.newton,
    )
    .map_err(|f| map_newton_failure(SolvePhase::Stage, f))?;
    let stages = sys.unpack(&stage_out.z);

    let proj = ProjectionSystem::new(prob, tab, s0, h, &stages);
    let w0 = proj.default_guess(&stages);
    let proj_out = newton_solve(
        &|w| proj.residual(w),
        JacobianMode::ForwardDifference,
        &w0,
        &opts.newton,
    )
    .map_err(|f| map_newton_failure(SolvePhase::Projection, f))?;

    let d = prob.dim();
    let m = prob.constraint_count();
    let p1 = proj_out.z.rows(0, d).into_owned();
    let lambda_s = proj_out.z.rows(d, m).into_owned();
    let q1 = stages.q[tab.stages() - 1].clone();

    let mut multipliers = stages.lambda.clone();
    multipliers.push(lambda_s);

    Ok(StepRecord {
        state: PhaseState {
            t: s0.t + h,
            p: p1,
            q: q1,
        },
        alpha: tab.alpha,
        newton_iters_stage: stage_out.iterations,
        newton_iters_proj: proj_out.iterations,
        residual_stage: stage_out.residual_norm,
        residual_proj: proj_out.residual_norm,
        multipliers,
        stage_guess: StageGuess {
            z: stage_out.z,
            base_p: s0.p.clone(),
            base_q: s0.q.clone(),
        },
    })
}

/// The packed stage system of an unconstrained step: unknowns
/// `(Q_1..Q_s, P_1..P_s)`, no multipliers, all tableau columns active.
pub struct UnconstrainedStageSystem<'a> {
    prob: &'a dyn HamiltonianProblem,
    tab: &'a TableauPair,
    base: &'a PhaseState,
    h: f64,
    d: usize,
    s: usize,
}

impl<'a> UnconstrainedStageSystem<'a> {
    pub fn new(
        prob: &'a dyn HamiltonianProblem,
        tab: &'a TableauPair,
        base: &'a PhaseState,
        h: f64,
    ) -> Self {
        UnconstrainedStageSystem {
            prob,
            tab,
            base,
            h,
            d: prob.dim(),
            s: tab.stages(),
        }
    }

    /// Number of unknowns `2 s d`.
    pub fn dim(&self) -> usize {
        2 * self.s * self.d
    }

    /// Splits a packed vector into stage values (no multipliers).
    pub fn unpack(&self, z: &Vector) -> StageValues {
        let (d, s) = (self.d, self.s);
        StageValues {
            q: (0..s).map(|i| z.rows(i * d, d).into_owned()).collect(),
            p: (0..s)
                .map(|i| z.rows((s + i) * d, d).into_owned())
                .collect(),
            lambda: Vec::new(),
        }
    }

    /// Residual of the plain PRK stage equations at `z`.
    pub fn residual(&self, z: &Vector) -> Vector {
        let (d, s, h) = (self.d, self.s, self.h);
        let st = self.unpack(z);
        let k: Vec<Vector> = (0..s)
            .map(|j| self.prob.grad_p(&st.p[j], &st.q[j]))
            .collect();
        let ell: Vec<Vector> = (0..s)
            .map(|j| -self.prob.grad_q(&st.p[j], &st.q[j]))
            .collect();
        let mut out = Vector::zeros(self.dim());
        for i in 0..s {
            let mut rq = &st.q[i] - &self.base.q;
            let mut rp = &st.p[i] - &self.base.p;
            for j in 0..s {
                let aij = self.tab.a[(i, j)];
                if aij != 0.0 {
                    rq.axpy(-h * aij, &k[j], 1.0);
                }
                let ahij = self.tab.a_hat[(i, j)];
                if ahij != 0.0 {
                    rp.axpy(-h * ahij, &ell[j], 1.0);
                }
            }
            out.rows_mut(i * d, d).copy_from(&rq);
            out.rows_mut((s + i) * d, d).copy_from(&rp);
        }
        out
    }

    /// Explicit Euler predictors for a cold start.
    pub fn default_guess(&self) -> Vector {
        let k0 = self.prob.grad_p(&self.base.p, &self.base.q);
        let hq0 = self.prob.grad_q(&self.base.p, &self.base.q);
        let c_hat = self.tab.c_hat();
        let mut z = Vector::zeros(self.dim());
        for i in 0..self.s {
            let qi = &self.base.q + &k0 * (self.h * self.tab.c[i]);
            let pi = &self.base.p - &hq0 * (self.h * c_hat[i]);
            z.rows_mut(i * self.d, self.d).copy_from(&qi);
            z.rows_mut((self.s + i) * self.d, self.d).copy_from(&pi);
        }
        z
    }

    /// Warm start translated by the change of base point.
    pub fn guess_from(&self, warm: &StageGuess) -> Vector {
        debug_assert_eq!(warm.z.len(), self.dim());
        let (d, s) = (self.d, self.s);
        let dq = &self.base.q - &warm.base_q;
        let dp = &self.base.p - &warm.base_p;
        let mut z = warm.z.clone();
        for i in 0..s {
            let mut qb = z.rows_mut(i * d, d);
            qb += &dq;
        }
        for i in 0..s {
            let mut pb = z.rows_mut((s + i) * d, d);
            pb += &dp;
        }
        z
    }
}

/// Advances a state by one *unconstrained* PRK step (multipliers forced to
/// zero, constraint rows dropped).
///
/// Any family is accepted; the base state need not lie on the constraint
/// manifold and the result generally will not.
pub fn prk_step_unconstrained(
    prob: &dyn HamiltonianProblem,
    tab: &TableauPair,
    s0: &PhaseState,
    h: f64,
    warm: Option<&StageGuess>,
    opts: &StepperOptions,
) -> Result<StepRecord, Error> {
    validate_step_size(h, opts)?;
    validate_dims(prob, s0)?;

    let sys = UnconstrainedStageSystem::new(prob, tab, s0, h);
    let z0 = match warm {
        Some(w) if w.z.len() == sys.dim() => sys.guess_from(w),
        _ => sys.default_guess(),
    };
    let stage_out = newton_solve(
        &|z| sys.residual(z),
        JacobianMode::ForwardDifference,
        &z0,
        &opts.newton,
    )
    .map_err(|f| map_newton_failure(SolvePhase::Stage, f))?;
    let stages = sys.unpack(&stage_out.z);

    let s = tab.stages();
    let mut q1 = s0.q.clone();
    let mut p1 = s0.p.clone();
    for j in 0..s {
        q1.axpy(
            h * tab.b[j],
            &prob.grad_p(&stages.p[j], &stages.q[j]),
            1.0,
        );
        p1.axpy(
            -h * tab.b_hat[j],
            &prob.grad_q(&stages.p[j], &stages.q[j]),
            1.0,
        );
    }

    Ok(StepRecord {
        state: PhaseState {
            t: s0.t + h,
            p: p1,
            q: q1,
        },
        alpha: tab.alpha,
        newton_iters_stage: stage_out.iterations,
        newton_iters_proj: 0,
        residual_stage: stage_out.residual_norm,
        residual_proj: 0.0,
        multipliers: Vec::new(),
        stage_guess: StageGuess {
            z: stage_out.z,
            base_p: s0.p.clone(),
            base_q: s0.q.clone(),
        },
    })
}
