//! Trajectory logs, invariant summaries, reference solutions, and
//! convergence reports.
//!
//! Every run produces a [`TrajectoryLog`]: one entry per accepted step (plus
//! the initial state) with the invariant residuals that matter for a
//! constrained symplectic method: energy deviation from the run's initial
//! value, position constraint, hidden momentum constraint, and the drift of
//! each registered quadratic invariant. Logs serialize to CSV with
//! round-trip-exact floating point formatting.
//!
//! Convergence errors are measured against a self-validating reference: the
//! classical Lobatto pair at a 50-fold finer step, accepted only when two
//! resolutions of it agree to [`REFERENCE_AGREEMENT_TOL`].

use crate::alpha::{integrate, AlphaMode, RunSetup};
use crate::problems::{HamiltonianProblem, PhaseState};
use crate::tableau::FamilyId;
use crate::{inf_norm, Error, Vector};
use serde::Serialize;

/// Agreement required between two reference resolutions before the
/// reference may be used.
pub const REFERENCE_AGREEMENT_TOL: f64 = 1e-12;

/// Identifying data of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub problem: String,
    pub family: FamilyId,
    pub h: f64,
    pub t_end: f64,
    pub mode: AlphaMode,
    /// False for runs through the unconstrained stepper.
    pub constrained: bool,
    /// Labels of the logged quadratic invariants, in column order.
    pub quad_labels: Vec<String>,
}

/// One accepted step (entry 0 is the initial state).
#[derive(Debug, Clone)]
pub struct StepLogEntry {
    pub step: usize,
    pub t: f64,
    pub p: Vector,
    pub q: Vector,
    /// Tableau parameter used for this step.
    pub alpha: f64,
    /// `|H(p, q) - H_0|` against the run's initial energy.
    pub energy_err: f64,
    /// `|g(q)|_inf`.
    pub g_inf: f64,
    /// `|G(q) H_p(p, q)|_inf`.
    pub hidden_inf: f64,
    /// `|q^T D_k p - (q^T D_k p)_0|` per registered invariant.
    pub quad_inv_err: Vec<f64>,
    pub newton_stage: usize,
    pub newton_proj: usize,
    /// True when the energy search accepted a best-effort step.
    pub flagged: bool,
}

/// A completed run.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub meta: RunMeta,
    pub entries: Vec<StepLogEntry>,
}

/// Worst-case drift of one quadratic invariant over a run.
#[derive(Debug, Clone, Serialize)]
pub struct QuadDrift {
    pub label: String,
    pub max_err: f64,
}

/// Run-level maxima of the logged residuals.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantSummary {
    pub problem: String,
    pub family: FamilyId,
    pub mode: AlphaMode,
    pub h: f64,
    pub t_end: f64,
    pub steps: usize,
    pub max_energy_err: f64,
    pub max_g_inf: f64,
    pub max_hidden_inf: f64,
    pub quad_drift: Vec<QuadDrift>,
    pub max_abs_alpha: f64,
    pub flagged_steps: usize,
}

/// Formats with 17 significant digits, enough for exact `f64` round trips.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

impl TrajectoryLog {
    /// The state after the last accepted step.
    pub fn final_state(&self) -> PhaseState {
        let last = self.entries.last().expect("log always has entry 0");
        PhaseState::new(last.t, last.p.clone(), last.q.clone())
    }

    /// Renders the log as CSV.
    ///
    /// Columns: `step,t,alpha,energy_err,g_inf,hidden_inf` followed by one
    /// `quad_inv_err_<label>` column per registered invariant, then
    /// `newton_stage,newton_proj,flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("step,t,alpha,energy_err,g_inf,hidden_inf");
        for label in &self.meta.quad_labels {
            out.push_str(",quad_inv_err_");
            out.push_str(label);
        }
        out.push_str(",newton_stage,newton_proj,flag\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                e.step,
                fmt_full(e.t),
                fmt_full(e.alpha),
                fmt_full(e.energy_err),
                fmt_full(e.g_inf),
                fmt_full(e.hidden_inf)
            ));
            for v in &e.quad_inv_err {
                out.push(',');
                out.push_str(&fmt_full(*v));
            }
            out.push_str(&format!(
                ",{},{},{}\n",
                e.newton_stage,
                e.newton_proj,
                u8::from(e.flagged)
            ));
        }
        out
    }

    /// Run-level maxima over all entries.
    pub fn summary(&self) -> InvariantSummary {
        let mut max_energy_err: f64 = 0.0;
        let mut max_g_inf: f64 = 0.0;
        let mut max_hidden_inf: f64 = 0.0;
        let mut quad_max = vec![0.0f64; self.meta.quad_labels.len()];
        let mut max_abs_alpha: f64 = 0.0;
        let mut flagged_steps = 0;
        for e in &self.entries {
            max_energy_err = max_energy_err.max(e.energy_err);
            max_g_inf = max_g_inf.max(e.g_inf);
            max_hidden_inf = max_hidden_inf.max(e.hidden_inf);
            for (m, v) in quad_max.iter_mut().zip(&e.quad_inv_err) {
                *m = m.max(*v);
            }
            if e.step > 0 {
                max_abs_alpha = max_abs_alpha.max(e.alpha.abs());
            }
            flagged_steps += usize::from(e.flagged);
        }
        InvariantSummary {
            problem: self.meta.problem.clone(),
            family: self.meta.family,
            mode: self.meta.mode,
            h: self.meta.h,
            t_end: self.meta.t_end,
            steps: self.entries.len() - 1,
            max_energy_err,
            max_g_inf,
            max_hidden_inf,
            quad_drift: self
                .meta
                .quad_labels
                .iter()
                .zip(quad_max)
                .map(|(label, max_err)| QuadDrift {
                    label: label.clone(),
                    max_err,
                })
                .collect(),
            max_abs_alpha,
            flagged_steps,
        }
    }
}

/// One resolution level of a convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    /// `|p(T) - p_ref(T)|_inf`.
    pub e_p: f64,
    /// `|q(T) - q_ref(T)|_inf`.
    pub e_q: f64,
    /// `log2(e_p(2h) / e_p(h))`; absent on the coarsest level.
    pub order_p: Option<f64>,
    pub order_q: Option<f64>,
}

/// Errors against the reference at a halving sequence of step sizes.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub family: FamilyId,
    pub mode: AlphaMode,
    pub t_end: f64,
    /// Step size of the validated reference run.
    pub h_ref: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Observed orders `log2(e[i-1] / e[i])` of a halving-sequence error list.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect()
}

/// Number of fixed-size steps covering `duration`, guarding against a
/// near-integer ratio picking up a spurious extra step.
pub(crate) fn step_count(duration: f64, h: f64) -> usize {
    let ratio = duration / h;
    let rounded = ratio.round();
    let n = if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) && rounded >= 1.0 {
        rounded
    } else {
        ratio.ceil()
    };
    n.max(1.0) as usize
}

fn require_divisible(t_end: f64, h: f64, what: &str) -> Result<(), Error> {
    let ratio = t_end / h;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "{what}: t_end = {t_end} is not an integer multiple of h = {h}; states could not be compared at matching times"
        )));
    }
    Ok(())
}

/// Integrates to `t_end` and returns the infinity-norm errors
/// `(e_p, e_q)` of the final state against `reference`.
///
/// `t_end` must be an integer multiple of `h` and `reference` must be a
/// state at `t_end`.
pub fn errors_at_t(
    prob: &dyn HamiltonianProblem,
    setup: &RunSetup,
    s0: &PhaseState,
    h: f64,
    t_end: f64,
    reference: &PhaseState,
) -> Result<(f64, f64), Error> {
    require_divisible(t_end - s0.t, h, "errors_at_t")?;
    if (reference.t - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "reference is at t = {} but errors are requested at t = {}",
            reference.t, t_end
        )));
    }
    let log = integrate(prob, setup, s0, h, t_end)?;
    let fin = log.final_state();
    Ok((
        inf_norm(&(&fin.p - &reference.p)),
        inf_norm(&(&fin.q - &reference.q)),
    ))
}

/// Computes a validated reference state at `t_end` with the classical
/// Lobatto pair at step `h_ref`.
///
/// Two runs at `h_ref` and `h_ref / 2` must agree to
/// [`REFERENCE_AGREEMENT_TOL`] in every component; the finer result is
/// returned.
pub fn make_reference(
    prob: &dyn HamiltonianProblem,
    s0: &PhaseState,
    t_end: f64,
    h_ref: f64,
) -> Result<PhaseState, Error> {
    let duration = t_end - s0.t;
    if duration <= 0.0 || h_ref <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "make_reference needs t_end > t_0 and h_ref > 0 (got duration {duration}, h_ref {h_ref})"
        )));
    }
    let n = step_count(duration, h_ref);
    let setup = RunSetup::fixed(FamilyId::Lobatto3, 0.0);
    let coarse = integrate(prob, &setup, s0, duration / n as f64, t_end)?.final_state();
    let fine = integrate(prob, &setup, s0, duration / (2 * n) as f64, t_end)?.final_state();
    let disagreement = inf_norm(&(&coarse.p - &fine.p)).max(inf_norm(&(&coarse.q - &fine.q)));
    if disagreement > REFERENCE_AGREEMENT_TOL {
        return Err(Error::ReferenceInconsistent {
            disagreement,
            tol: REFERENCE_AGREEMENT_TOL,
        });
    }
    Ok(fine)
}

/// Runs a halving-sequence convergence study at `h0, h0/2, ...,
/// h0 / 2^(levels-1)` and reports errors and observed orders against a
/// validated reference at `h_min / 50`.
pub fn convergence_study(
    prob: &dyn HamiltonianProblem,
    setup: &RunSetup,
    s0: &PhaseState,
    h0: f64,
    levels: usize,
    t_end: f64,
) -> Result<ConvergenceReport, Error> {
    if levels < 2 {
        return Err(Error::InvalidConfig(format!(
            "a convergence study needs at least 2 levels (got {levels})"
        )));
    }
    if h0 <= 0.0 {
        return Err(Error::InvalidConfig(format!("h0 must be positive (got {h0})")));
    }
    require_divisible(t_end - s0.t, h0, "convergence_study")?;

    let h_min = h0 / 2f64.powi(levels as i32 - 1);
    let h_ref = h_min / 50.0;
    let reference = make_reference(prob, s0, t_end, h_ref)?;

    let mut e_p = Vec::with_capacity(levels);
    let mut e_q = Vec::with_capacity(levels);
    let mut hs = Vec::with_capacity(levels);
    for level in 0..levels {
        let h = h0 / 2f64.powi(level as i32);
        let (ep, eq) = errors_at_t(prob, setup, s0, h, t_end, &reference)?;
        hs.push(h);
        e_p.push(ep);
        e_q.push(eq);
    }
    let ord_p = observed_orders(&e_p);
    let ord_q = observed_orders(&e_q);
    let rows = (0..levels)
        .map(|i| ConvergenceRow {
            h: hs[i],
            e_p: e_p[i],
            e_q: e_q[i],
            order_p: (i > 0).then(|| ord_p[i - 1]),
            order_q: (i > 0).then(|| ord_q[i - 1]),
        })
        .collect();
    Ok(ConvergenceReport {
        problem: prob.name().to_string(),
        family: setup.family,
        mode: setup.mode,
        t_end,
        h_ref,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn test_fmt_full_round_trips_f64_exactly() {
        for x in [
            0.0,
            -0.0,
            1.0 / 3.0,
            -2.718281828459045e-13,
            6.02214076e23,
            0.1 + 0.2,
        ] {
            let parsed: f64 = fmt_full(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits(), "lost bits for {x:?}");
        }
    }

    #[test]
    fn test_observed_orders_recover_synthetic_exponent() {
        // e(h) = C h^k on a halving sequence gives order exactly k.
        let k = 3.7;
        let c = 0.42;
        let errors: Vec<f64> = (0..6).map(|i| c * 0.5f64.powi(i).powf(k)).collect();
        for order in observed_orders(&errors) {
            assert_abs_diff_eq!(order, k, epsilon = 1e-12);
        }
    }

    #[test]
    fn test_step_count_guards_against_float_noise() {
        assert_eq!(step_count(10.0, 0.1), 100);
        assert_eq!(step_count(1.0, 0.05), 20);
        assert_eq!(step_count(1.0, 0.00625), 160);
        assert_eq!(step_count(0.5, 0.25), 2);
        // A genuinely fractional ratio still rounds up.
        assert_eq!(step_count(1.0, 0.3), 4);
    }
}
