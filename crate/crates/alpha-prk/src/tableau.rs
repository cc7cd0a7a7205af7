//! Coefficient tableaus for partitioned Runge-Kutta (PRK) pairs.
//!
//! A PRK pair advances positions with `(A, b)` and momenta with
//! `(A_hat, b_hat)`. Every constructor here returns a *symplectic* pair
//! (`b = b_hat` and `b_i a_hat_ij + b_hat_j a_ji = b_i b_hat_j`), and all
//! families except the diagnostic [`FamilyId::Wtransform2`] are also
//! *stiffly accurate* (`a_1j = 0`, `a_sj = b_j`), which is what lets the
//! constrained stepper collocate `Q_1 = q_0` and `Q_s = q_1` on the
//! constraint manifold.
//!
//! The parametrized families keep both properties for every admissible
//! `alpha`; the parameter only moves the internal stages. That freedom is
//! what the per-step energy search in [`crate::alpha`] exploits.

use crate::{Error, Matrix, Vector};
use serde::{Deserialize, Serialize};

/// Largest admissible `|alpha|` for the parametrized families unless a
/// caller widens it explicitly. Keeps the weights well away from degeneracy
/// (`alpha-rattle` has `b_2 = 1/2 - alpha`).
pub const DEFAULT_ALPHA_CAP: f64 = 0.4;

/// Below this magnitude a weight counts as degenerate for divisions.
pub const WEIGHT_DEGENERACY_THRESHOLD: f64 = 1e-6;

/// Residual tolerance for the order-condition scans in [`check_conditions`].
pub const CONDITION_TOL: f64 = 1e-12;

/// Identifier for the built-in tableau families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyId {
    /// Two-stage one-parameter deformation of the Rattle pair (order 2).
    AlphaRattle,
    /// Classical three-stage Lobatto IIIA-IIIB pair, fixed at `alpha = 0`
    /// (order 4); the reference method.
    Lobatto3,
    /// Three-stage one-parameter family deforming the Lobatto IIIA position
    /// tableau (order 4 at `alpha = 0`).
    AlphaPrk3A,
    /// Three-stage one-parameter family deforming the Lobatto IIIB momentum
    /// tableau (order 4 at `alpha = 0`).
    AlphaPrk3B,
    /// Two-stage symplectic family that is *not* stiffly accurate for
    /// `alpha != 0`; kept as a negative control for the constrained stepper.
    Wtransform2,
}

impl FamilyId {
    /// Number of stages of the family.
    pub fn stages(self) -> usize {
        match self {
            FamilyId::AlphaRattle | FamilyId::Wtransform2 => 2,
            _ => 3,
        }
    }

    /// Whether the family may run through the constrained stepper.
    pub fn is_constraint_preserving(self) -> bool {
        !matches!(self, FamilyId::Wtransform2)
    }

    /// Whether the family has a free `alpha` (the classical pair does not).
    pub fn is_parametrized(self) -> bool {
        !matches!(self, FamilyId::Lobatto3)
    }

    /// All built-in families.
    pub fn all() -> [FamilyId; 5] {
        [
            FamilyId::AlphaRattle,
            FamilyId::Lobatto3,
            FamilyId::AlphaPrk3A,
            FamilyId::AlphaPrk3B,
            FamilyId::Wtransform2,
        ]
    }

    /// Canonical lowercase name, also used by the CLI and in JSON.
    pub fn name(self) -> &'static str {
        match self {
            FamilyId::AlphaRattle => "alpha-rattle",
            FamilyId::Lobatto3 => "lobatto3",
            FamilyId::AlphaPrk3A => "alpha-prk3-a",
            FamilyId::AlphaPrk3B => "alpha-prk3-b",
            FamilyId::Wtransform2 => "wtransform2",
        }
    }
}

impl std::fmt::Display for FamilyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FamilyId {
    type Err = Error;

    /// Parses a family name; a few legacy spellings are accepted as aliases.
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "alpha-rattle" | "rattle" | "rattle-alpha" => Ok(FamilyId::AlphaRattle),
            "lobatto3" | "lobatto3-iiia-iiib" => Ok(FamilyId::Lobatto3),
            "alpha-prk3-a" | "alpha-prk3a" | "lobatto3-a" => Ok(FamilyId::AlphaPrk3A),
            "alpha-prk3-b" | "alpha-prk3b" | "lobatto3-b" => Ok(FamilyId::AlphaPrk3B),
            "wtransform2" | "wtransform2-negcontrol" => Ok(FamilyId::Wtransform2),
            other => Err(Error::InvalidConfig(format!(
                "unknown family '{other}' (expected one of alpha-rattle, lobatto3, alpha-prk3-a, alpha-prk3-b, wtransform2)"
            ))),
        }
    }
}

/// Which of the two three-stage deformations to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lobatto3Variant {
    /// Deforms the position (IIIA) tableau; `FamilyId::AlphaPrk3A`.
    IiiaHat,
    /// Deforms the momentum (IIIB) tableau; `FamilyId::AlphaPrk3B`.
    IiibHat,
}

/// A symplectic PRK coefficient pair.
///
/// `a`/`b` integrate positions, `a_hat`/`b_hat` integrate momenta, and `c`
/// holds the row sums of `a` (the stage abscissae).
#[derive(Debug, Clone, PartialEq)]
pub struct TableauPair {
    pub family: FamilyId,
    pub alpha: f64,
    pub a: Matrix,
    pub b: Vector,
    pub a_hat: Matrix,
    pub b_hat: Vector,
    pub c: Vector,
}

impl TableauPair {
    fn assemble(family: FamilyId, alpha: f64, a: Matrix, b: Vector, a_hat: Matrix) -> Self {
        let s = b.len();
        let c = Vector::from_iterator(s, (0..s).map(|i| a.row(i).sum()));
        let b_hat = b.clone();
        TableauPair {
            family,
            alpha,
            a,
            b,
            a_hat,
            b_hat,
            c,
        }
    }

    /// Number of stages `s`.
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Row sums of `a_hat` (abscissae of the momentum tableau).
    pub fn c_hat(&self) -> Vector {
        let s = self.stages();
        Vector::from_iterator(s, (0..s).map(|i| self.a_hat.row(i).sum()))
    }
}

/// Builds the two-stage `alpha-rattle` pair.
///
/// ```text
///   A = | 0        0       |     A_hat = | 1/2+a  0 |     b = (1/2+a, 1/2-a)
///       | 1/2+a    1/2-a   |             | 1/2+a  0 |
/// ```
///
/// At `alpha = 0` this is the classical Rattle / two-stage Lobatto
/// IIIA-IIIB pair.
pub fn build_alpha_rattle(alpha: f64) -> Result<TableauPair, Error> {
    build_family_capped(FamilyId::AlphaRattle, alpha, DEFAULT_ALPHA_CAP)
}

/// Builds one of the three-stage deformed Lobatto pairs.
///
/// Both variants reproduce the classical three-stage Lobatto IIIA-IIIB pair
/// at `alpha = 0` and stay symplectic and stiffly accurate for every
/// admissible `alpha`; the deformation sits in the second stage only.
pub fn build_lobatto3(variant: Lobatto3Variant, alpha: f64) -> Result<TableauPair, Error> {
    let family = match variant {
        Lobatto3Variant::IiiaHat => FamilyId::AlphaPrk3A,
        Lobatto3Variant::IiibHat => FamilyId::AlphaPrk3B,
    };
    build_family_capped(family, alpha, DEFAULT_ALPHA_CAP)
}

/// Builds the classical three-stage Lobatto IIIA-IIIB pair (`alpha = 0`).
pub fn build_classic_lobatto3() -> TableauPair {
    build_family(FamilyId::Lobatto3, 0.0).expect("classical pair is always valid")
}

/// Builds the two-stage `wtransform2` family.
///
/// Symplectic for every real `alpha` but not stiffly accurate for
/// `alpha != 0` (`max_j |a_1j| = |alpha|/6`), so the constrained stepper
/// rejects it; it exists to demonstrate that symplecticity alone does not
/// keep trajectories on the constraint manifold.
pub fn build_wtransform2(alpha: f64) -> TableauPair {
    let a6 = alpha / 6.0;
    let a = Matrix::from_row_slice(2, 2, &[a6, -a6, 0.5 - a6, 0.5 + a6]);
    let a_hat = Matrix::from_row_slice(2, 2, &[0.5 - a6, a6, 0.5 + a6, -a6]);
    let b = Vector::from_vec(vec![0.5, 0.5]);
    TableauPair::assemble(FamilyId::Wtransform2, alpha, a, b, a_hat)
}

/// Builds any family at the given `alpha` under the default cap.
pub fn build_family(family: FamilyId, alpha: f64) -> Result<TableauPair, Error> {
    build_family_capped(family, alpha, DEFAULT_ALPHA_CAP)
}

/// Builds any family at the given `alpha`, with an explicit `|alpha|` cap
/// for the parametrized constraint-preserving families.
pub fn build_family_capped(family: FamilyId, alpha: f64, cap: f64) -> Result<TableauPair, Error> {
    if !alpha.is_finite() {
        return Err(Error::ParameterOutOfDomain(format!(
            "alpha = {alpha} is not finite"
        )));
    }
    match family {
        FamilyId::Wtransform2 => return Ok(build_wtransform2(alpha)),
        FamilyId::Lobatto3 => {
            if alpha != 0.0 {
                return Err(Error::ParameterOutOfDomain(format!(
                    "family lobatto3 is the fixed classical pair; alpha = {alpha} is not available (use alpha-prk3-a or alpha-prk3-b)"
                )));
            }
        }
        _ => {
            if alpha.abs() > cap {
                return Err(Error::ParameterOutOfDomain(format!(
                    "alpha = {alpha} exceeds the cap |alpha| <= {cap} for family {family}"
                )));
            }
        }
    }

    let pair = match family {
        FamilyId::AlphaRattle => {
            let bp = 0.5 + alpha;
            let bm = 0.5 - alpha;
            let a = Matrix::from_row_slice(2, 2, &[0.0, 0.0, bp, bm]);
            let a_hat = Matrix::from_row_slice(2, 2, &[bp, 0.0, bp, 0.0]);
            let b = Vector::from_vec(vec![bp, bm]);
            TableauPair::assemble(FamilyId::AlphaRattle, alpha, a, b, a_hat)
        }
        FamilyId::Lobatto3 | FamilyId::AlphaPrk3A => {
            let a = Matrix::from_row_slice(
                3,
                3,
                &[
                    0.0,
                    0.0,
                    0.0,
                    5.0 / 24.0 - alpha,
                    1.0 / 3.0 - alpha,
                    2.0 * alpha - 1.0 / 24.0,
                    1.0 / 6.0,
                    2.0 / 3.0,
                    1.0 / 6.0,
                ],
            );
            let a_hat = Matrix::from_row_slice(
                3,
                3,
                &[
                    1.0 / 6.0,
                    4.0 * alpha - 1.0 / 6.0,
                    0.0,
                    1.0 / 6.0,
                    1.0 / 3.0 + alpha,
                    0.0,
                    1.0 / 6.0,
                    5.0 / 6.0 - 8.0 * alpha,
                    0.0,
                ],
            );
            let b = Vector::from_vec(vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]);
            TableauPair::assemble(family, alpha, a, b, a_hat)
        }
        FamilyId::AlphaPrk3B => {
            let a = Matrix::from_row_slice(
                3,
                3,
                &[
                    0.0,
                    0.0,
                    0.0,
                    5.0 / 24.0 - 0.5 * alpha,
                    1.0 / 3.0 + alpha,
                    -1.0 / 24.0 - 0.5 * alpha,
                    1.0 / 6.0,
                    2.0 / 3.0,
                    1.0 / 6.0,
                ],
            );
            let a_hat = Matrix::from_row_slice(
                3,
                3,
                &[
                    1.0 / 6.0,
                    2.0 * alpha - 1.0 / 6.0,
                    0.0,
                    1.0 / 6.0,
                    1.0 / 3.0 - alpha,
                    0.0,
                    1.0 / 6.0,
                    5.0 / 6.0 + 2.0 * alpha,
                    0.0,
                ],
            );
            let b = Vector::from_vec(vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]);
            TableauPair::assemble(FamilyId::AlphaPrk3B, alpha, a, b, a_hat)
        }
        FamilyId::Wtransform2 => unreachable!("handled above"),
    };

    for (i, bi) in pair.b.iter().enumerate() {
        if bi.abs() < WEIGHT_DEGENERACY_THRESHOLD {
            return Err(Error::DegenerateWeights {
                index: i,
                value: *bi,
            });
        }
    }
    Ok(pair)
}

/// Momentum tableau conjugate to `(a, b)` under the symplecticity identity:
/// `a_hat_ij = b_j (1 - a_ji / b_i)`.
///
/// Given any position tableau with nonzero weights this returns the unique
/// momentum tableau making the pair (with `b_hat = b`) symplectic.
pub fn conjugate_tableau(a: &Matrix, b: &Vector) -> Result<Matrix, Error> {
    let s = b.len();
    if a.nrows() != s || a.ncols() != s {
        return Err(Error::DimensionMismatch(format!(
            "a is {}x{} but b has {} weights",
            a.nrows(),
            a.ncols(),
            s
        )));
    }
    for (i, bi) in b.iter().enumerate() {
        if bi.abs() < 1e-12 {
            return Err(Error::DegenerateWeights {
                index: i,
                value: *bi,
            });
        }
    }
    let mut a_hat = Matrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            a_hat[(i, j)] = b[j] * (1.0 - a[(j, i)] / b[i]);
        }
    }
    Ok(a_hat)
}

/// Residuals and detected orders of the standard algebraic conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    /// `|sum_i b_i - 1|`.
    pub weight_sum_residual: f64,
    /// `max_i |b_i - b_hat_i|`.
    pub weight_match_residual: f64,
    /// `max_ij |b_i a_hat_ij + b_hat_j a_ji - b_i b_hat_j|`.
    pub symplecticity_residual: f64,
    /// `max_j |a_1j|` (first stage collocates the base point when zero).
    pub first_stage_residual: f64,
    /// `max_j |a_sj - b_j|` (last stage collocates the step end when zero).
    pub last_stage_residual: f64,
    /// Largest `p` with `sum_i b_i c_i^{q-1} = 1/q` for `q = 1..p`.
    pub b_order: usize,
    /// Largest `eta` with `sum_j a_ij c_j^{q-1} = c_i^q / q` for `q = 1..eta`.
    pub c_order: usize,
    /// Largest `zeta` with `sum_i b_i c_i^{q-1} a_ij = b_j (1 - c_j^q) / q`
    /// for `q = 1..zeta`.
    pub d_order: usize,
}

impl ConditionReport {
    /// Combined stiff-accuracy residual (worst of first and last stage).
    pub fn stiff_accuracy_residual(&self) -> f64 {
        self.first_stage_residual.max(self.last_stage_residual)
    }

    /// Whether the pair is symplectic within `tol`.
    pub fn is_symplectic(&self, tol: f64) -> bool {
        self.weight_match_residual <= tol && self.symplecticity_residual <= tol
    }

    /// Whether the pair is stiffly accurate within `tol`.
    pub fn is_stiffly_accurate(&self, tol: f64) -> bool {
        self.stiff_accuracy_residual() <= tol
    }
}

/// Evaluates the symplecticity, stiff-accuracy, and simplifying-condition
/// residuals of a pair.
pub fn check_conditions(t: &TableauPair) -> ConditionReport {
    let s = t.stages();
    let (a, b, a_hat, b_hat, c) = (&t.a, &t.b, &t.a_hat, &t.b_hat, &t.c);

    let weight_sum_residual = (b.sum() - 1.0).abs();
    let weight_match_residual = (0..s).map(|i| (b[i] - b_hat[i]).abs()).fold(0.0, f64::max);

    let mut symplecticity_residual: f64 = 0.0;
    for i in 0..s {
        for j in 0..s {
            let r = b[i] * a_hat[(i, j)] + b_hat[j] * a[(j, i)] - b[i] * b_hat[j];
            symplecticity_residual = symplecticity_residual.max(r.abs());
        }
    }

    let first_stage_residual = (0..s).map(|j| a[(0, j)].abs()).fold(0.0, f64::max);
    let last_stage_residual = (0..s)
        .map(|j| (a[(s - 1, j)] - b[j]).abs())
        .fold(0.0, f64::max);

    // Scan q = 1, 2, ... until a condition first fails; orders beyond 2s
    // carry no information for an s-stage scheme.
    let q_cap = 2 * s;
    let b_cond = |q: usize| -> f64 {
        let qf = q as f64;
        ((0..s).map(|i| b[i] * c[i].powi(q as i32 - 1)).sum::<f64>() - 1.0 / qf).abs()
    };
    let c_cond = |q: usize| -> f64 {
        let qf = q as f64;
        (0..s)
            .map(|i| {
                let lhs: f64 = (0..s).map(|j| a[(i, j)] * c[j].powi(q as i32 - 1)).sum();
                (lhs - c[i].powi(q as i32) / qf).abs()
            })
            .fold(0.0, f64::max)
    };
    let d_cond = |q: usize| -> f64 {
        let qf = q as f64;
        (0..s)
            .map(|j| {
                let lhs: f64 = (0..s)
                    .map(|i| b[i] * c[i].powi(q as i32 - 1) * a[(i, j)])
                    .sum();
                (lhs - b[j] / qf * (1.0 - c[j].powi(q as i32))).abs()
            })
            .fold(0.0, f64::max)
    };
    let scan = |cond: &dyn Fn(usize) -> f64| -> usize {
        let mut order = 0;
        for q in 1..=q_cap {
            if cond(q) > CONDITION_TOL {
                break;
            }
            order = q;
        }
        order
    };

    ConditionReport {
        weight_sum_residual,
        weight_match_residual,
        symplecticity_residual,
        first_stage_residual,
        last_stage_residual,
        b_order: scan(&b_cond),
        c_order: scan(&c_cond),
        d_order: scan(&d_cond),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const EXACT: f64 = 1e-15;

    fn max_entry_diff(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }

    #[test]
    fn test_alpha_rattle_zero_is_classical_rattle_pair() {
        let t = build_alpha_rattle(0.0).unwrap();
        let a = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.5]);
        let a_hat = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.5, 0.0]);
        assert!(max_entry_diff(&t.a, &a) <= EXACT);
        assert!(max_entry_diff(&t.a_hat, &a_hat) <= EXACT);
        assert_abs_diff_eq!(t.b[0], 0.5, epsilon = EXACT);
        assert_abs_diff_eq!(t.b[1], 0.5, epsilon = EXACT);
        assert_eq!(t.c[0], 0.0);
        assert_abs_diff_eq!(t.c[1], 1.0, epsilon = EXACT);
    }

    #[test]
    fn test_alpha_rattle_entries_at_alpha_0_2() {
        let t = build_alpha_rattle(0.2).unwrap();
        assert_abs_diff_eq!(t.a[(1, 0)], 0.7, epsilon = EXACT);
        assert_abs_diff_eq!(t.a[(1, 1)], 0.3, epsilon = EXACT);
        assert_abs_diff_eq!(t.a_hat[(0, 0)], 0.7, epsilon = EXACT);
        assert_abs_diff_eq!(t.a_hat[(1, 0)], 0.7, epsilon = EXACT);
        assert_eq!(t.a_hat[(0, 1)], 0.0);
        assert_eq!(t.a_hat[(1, 1)], 0.0);
    }

    #[test]
    fn test_three_stage_families_at_zero_match_classical_lobatto_pair() {
        let a = Matrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                0.0,
                0.0,
                5.0 / 24.0,
                1.0 / 3.0,
                -1.0 / 24.0,
                1.0 / 6.0,
                2.0 / 3.0,
                1.0 / 6.0,
            ],
        );
        let a_hat = Matrix::from_row_slice(
            3,
            3,
            &[
                1.0 / 6.0,
                -1.0 / 6.0,
                0.0,
                1.0 / 6.0,
                1.0 / 3.0,
                0.0,
                1.0 / 6.0,
                5.0 / 6.0,
                0.0,
            ],
        );
        for t in [
            build_classic_lobatto3(),
            build_lobatto3(Lobatto3Variant::IiiaHat, 0.0).unwrap(),
            build_lobatto3(Lobatto3Variant::IiibHat, 0.0).unwrap(),
        ] {
            assert!(
                max_entry_diff(&t.a, &a) <= EXACT,
                "position tableau of {} deviates at alpha = 0",
                t.family
            );
            assert!(
                max_entry_diff(&t.a_hat, &a_hat) <= EXACT,
                "momentum tableau of {} deviates at alpha = 0",
                t.family
            );
        }
    }

    #[test]
    fn test_lobatto3_abscissae_are_0_half_1() {
        let t = build_lobatto3(Lobatto3Variant::IiiaHat, 0.13).unwrap();
        assert_eq!(t.c[0], 0.0);
        assert_abs_diff_eq!(t.c[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(t.c[2], 1.0, epsilon = 1e-14);
        let t = build_lobatto3(Lobatto3Variant::IiibHat, -0.07).unwrap();
        assert_abs_diff_eq!(t.c[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(t.c[2], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn test_conjugate_tableau_reproduces_momentum_tableaus() {
        let cases = [
            build_alpha_rattle(0.1).unwrap(),
            build_alpha_rattle(-0.31).unwrap(),
            build_classic_lobatto3(),
            build_lobatto3(Lobatto3Variant::IiiaHat, 0.2).unwrap(),
            build_lobatto3(Lobatto3Variant::IiibHat, 0.2).unwrap(),
            build_wtransform2(0.3),
        ];
        for t in &cases {
            let a_hat = conjugate_tableau(&t.a, &t.b).unwrap();
            assert!(
                max_entry_diff(&a_hat, &t.a_hat) <= 1e-14,
                "conjugate mismatch for {} at alpha = {}: {:.3e}",
                t.family,
                t.alpha,
                max_entry_diff(&a_hat, &t.a_hat)
            );
        }
    }

    #[test]
    fn test_conjugate_tableau_rejects_zero_weight() {
        let a = Matrix::zeros(2, 2);
        let b = Vector::from_vec(vec![1.0, 0.0]);
        match conjugate_tableau(&a, &b) {
            Err(Error::DegenerateWeights { index: 1, .. }) => {}
            other => panic!("expected degenerate-weights error, got {other:?}"),
        }
    }

    #[test]
    fn test_alpha_cap_enforced_for_parametrized_families() {
        assert!(matches!(
            build_alpha_rattle(0.5),
            Err(Error::ParameterOutOfDomain(_))
        ));
        assert!(matches!(
            build_lobatto3(Lobatto3Variant::IiibHat, -0.41),
            Err(Error::ParameterOutOfDomain(_))
        ));
        assert!(build_family_capped(FamilyId::AlphaRattle, 0.45, 0.49).is_ok());
    }

    #[test]
    fn test_lobatto3_family_rejects_nonzero_alpha() {
        assert!(matches!(
            build_family(FamilyId::Lobatto3, 0.1),
            Err(Error::ParameterOutOfDomain(_))
        ));
    }

    #[test]
    fn test_wtransform2_takes_any_alpha_but_loses_stiff_accuracy() {
        let t = build_wtransform2(0.3);
        let report = check_conditions(&t);
        assert!(report.is_symplectic(1e-15));
        assert_abs_diff_eq!(report.first_stage_residual, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(report.last_stage_residual, 0.05, epsilon = 1e-15);
        // Very large alpha is still accepted for this diagnostic family.
        assert_eq!(build_wtransform2(12.0).alpha, 12.0);
    }

    #[test]
    fn test_condition_orders_for_classical_lobatto3() {
        let report = check_conditions(&build_classic_lobatto3());
        assert_eq!(report.b_order, 4);
        assert_eq!(report.c_order, 3);
        assert_eq!(report.d_order, 1);
        assert!(report.is_symplectic(1e-15));
        assert!(report.is_stiffly_accurate(1e-15));
    }

    #[test]
    fn test_condition_orders_for_alpha_rattle() {
        let at_zero = check_conditions(&build_alpha_rattle(0.0).unwrap());
        assert_eq!(at_zero.b_order, 2);
        assert_eq!(at_zero.c_order, 2);

        let deformed = check_conditions(&build_alpha_rattle(0.2).unwrap());
        assert_eq!(deformed.b_order, 1);
        assert_eq!(deformed.c_order, 1);
        assert_eq!(deformed.d_order, 0);
    }

    #[test]
    fn test_condition_orders_for_deformed_lobatto3() {
        // The weights and abscissae do not move with alpha, so the
        // quadrature order stays 4; the stage conditions drop to 1.
        for variant in [Lobatto3Variant::IiiaHat, Lobatto3Variant::IiibHat] {
            let report = check_conditions(&build_lobatto3(variant, 0.17).unwrap());
            assert_eq!(report.b_order, 4);
            assert_eq!(report.c_order, 1);
            assert_eq!(report.d_order, 0);
        }
    }

    #[test]
    fn test_family_name_round_trip_and_aliases() {
        for family in FamilyId::all() {
            let parsed: FamilyId = family.name().parse().unwrap();
            assert_eq!(parsed, family);
        }
        assert_eq!("lobatto3-a".parse::<FamilyId>().unwrap(), FamilyId::AlphaPrk3A);
        assert_eq!("alpha-prk3a".parse::<FamilyId>().unwrap(), FamilyId::AlphaPrk3A);
        assert_eq!("rattle".parse::<FamilyId>().unwrap(), FamilyId::AlphaRattle);
        assert!("lobatto5".parse::<FamilyId>().is_err());
    }

    proptest! {
        #[test]
        fn prop_built_pairs_are_symplectic_everywhere(
            alpha in -0.4..0.4f64,
            family_idx in 0usize..5
        ) {
            let family = FamilyId::all()[family_idx];
            let alpha = if family == FamilyId::Lobatto3 { 0.0 } else { alpha };
            let t = build_family(family, alpha).unwrap();
            let report = check_conditions(&t);
            prop_assert!(report.weight_sum_residual <= 1e-13);
            prop_assert!(report.is_symplectic(1e-13));
            if family.is_constraint_preserving() {
                prop_assert!(report.is_stiffly_accurate(1e-13));
            }
        }

        #[test]
        fn prop_conjugation_is_an_involution_on_built_pairs(
            alpha in -0.4..0.4f64,
            family_idx in 0usize..5
        ) {
            let family = FamilyId::all()[family_idx];
            let alpha = if family == FamilyId::Lobatto3 { 0.0 } else { alpha };
            let t = build_family(family, alpha).unwrap();
            // With b_hat = b, conjugating the momentum tableau returns the
            // position tableau.
            let back = conjugate_tableau(&t.a_hat, &t.b_hat).unwrap();
            prop_assert!(max_entry_diff(&back, &t.a) <= 1e-13);
        }
    }
}
