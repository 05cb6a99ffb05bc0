//! `K_n(M | Φ₀(λ'))`, the two explicit upper bounds on `K`, the resulting
//! lower bound on `Φ(λ')`, and truncated `K*` diagnostics.

use serde::{Deserialize, Serialize};

use crate::constants::ConstantSet;
use crate::cylinder::{build_table, CylinderTable, MeasureSource};
use crate::error::{Error, Result};
use crate::model::{ContractionMode, MarkovSystem};
use crate::stats::{compensated_sum, Estimate};

/// `K_n = Σ M log Z` over the rows of a depth-`n` table, `0 log 0 = 0`.
///
/// The standard error is the linearization `dK_n = Σ (log Z + 1) dM`; the
/// constant term drops out because every batch of the sample has mass one.
pub fn kl_n(table: &CylinderTable) -> Estimate {
    let value = compensated_sum(table.rows().iter().map(|r| r.entropy_term()));
    let terms: Vec<_> = table
        .rows()
        .iter()
        .filter(|r| r.m > 0.0 && r.phi0 > 0.0)
        .map(|r| (r, r.log_z))
        .collect();
    Estimate { value, stderr: table.linear_stderr(&terms) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnEntry {
    pub n: usize,
    pub value: f64,
    pub stderr: f64,
}

/// A named comparison `lhs <= rhs` with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Check { name: name.into(), lhs, rhs, pass: lhs <= rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub constants: ConstantSet,
    pub k_n_series: Vec<KnEntry>,
    /// `log|S| + (1/δ)(1/(1-√a) + Σ Δ(a^{i/2} Ĉ))`.
    pub bound_i_value: f64,
    /// As `bound_i_value` with `Ĉ` replaced by `Ĉ + 3σ`.
    pub bound_i_conservative: f64,
    /// `log|S| + (1/δ) Σ Δ(a^i d/(1-a))`; uniform mode only.
    pub bound_ii_value: Option<f64>,
    /// `(1/|S|) exp(-(1/δ) Σ Δ(a^i d/(1-a)))`; uniform mode only.
    pub corollary_factor: Option<f64>,
    pub kstar_estimates: Vec<KStar>,
    pub checks: Vec<Check>,
}

impl BoundReport {
    pub fn bound_ii(&self) -> Result<f64> {
        self.bound_ii_value.ok_or(Error::NotUniformlyContractive)
    }

    pub fn factor(&self) -> Result<f64> {
        self.corollary_factor.ok_or(Error::NotUniformlyContractive)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Fills the bound values from the constants.
pub fn evaluate_bounds(sys: &MarkovSystem, constants: &ConstantSet) -> BoundReport {
    let log_s = (sys.support().len() as f64).ln();
    let inv_delta = 1.0 / constants.delta;
    let geometric = 1.0 / (1.0 - constants.a.sqrt());
    let bound_i = |dini: f64| log_s + inv_delta * (geometric + dini);
    let (bound_ii_value, corollary_factor) = match (constants.mode, constants.dini_sum_full) {
        (ContractionMode::Uniform, Some(full)) => (
            Some(log_s + inv_delta * full.value),
            Some((-inv_delta * full.value).exp() / sys.support().len() as f64),
        ),
        _ => (None, None),
    };
    BoundReport {
        constants: constants.clone(),
        k_n_series: Vec::new(),
        bound_i_value: bound_i(constants.dini_sum_half.value),
        bound_i_conservative: bound_i(constants.dini_sum_half_upper.value),
        bound_ii_value,
        corollary_factor,
        kstar_estimates: Vec::new(),
        checks: Vec::new(),
    }
}

/// `M(Q) · corollary_factor`, a lower bound on `Φ(λ')(Q)`.
pub fn corollary_lower_bound(report: &BoundReport, m_of_q: Estimate) -> Result<Estimate> {
    Ok(m_of_q.scale(report.factor()?))
}

/// `K*_{W,n} = Σ_u M(u) log max_{0<=s<=W} Z(u[W-s .. W-s+n])` over words `u`
/// of length `n + W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KStar {
    pub window: usize,
    pub depth: usize,
    pub value: f64,
    pub stderr: f64,
    /// `K_n` from the same depth-`n` table: the `m = 0` term alone.
    pub k_n: f64,
    pub k_n_stderr: f64,
}

/// `K*` from a depth-`n` table and a depth-`n + W` table over the same `M`.
///
/// When `W = 0` the two tables may be the same, and the result equals
/// [`kl_n`] bit for bit.
pub fn kstar_from_tables(short: &CylinderTable, long: &CylinderTable, window: usize) -> Result<KStar> {
    let n = short.depth();
    if long.depth() != n + window {
        return Err(Error::InvalidCylinderSet(format!(
            "expected a table of depth {}, got {}",
            n + window,
            long.depth()
        )));
    }
    let k_n = kl_n(short);
    let mut terms = Vec::with_capacity(long.rows().len());
    let mut linear = Vec::new();
    for u in long.rows() {
        let mut best = None;
        for s in 0..=window {
            let sub = u.word.slice(window - s, n);
            let row = short
                .row(&sub)
                .ok_or_else(|| Error::InvalidCylinderSet("sub-word missing from table".into()))?;
            if row.phi0 > 0.0 && best.is_none_or(|b: &crate::cylinder::CylinderRow| row.log_z > b.log_z) {
                best = Some(row);
            }
        }
        let Some(best) = best else {
            terms.push(0.0);
            continue;
        };
        if u.m == 0.0 {
            terms.push(0.0);
            continue;
        }
        terms.push(u.m * best.log_z);
        linear.push((u, best.log_z));
        linear.push((best, u.m / best.m));
    }
    let value = compensated_sum(terms);
    Ok(KStar {
        window,
        depth: n,
        value,
        stderr: long.linear_stderr(&linear),
        k_n: k_n.value,
        k_n_stderr: k_n.stderr,
    })
}

/// Builds the tables and evaluates [`kstar_from_tables`].
pub fn kstar_estimate(sys: &MarkovSystem, window: usize, n: usize, source: MeasureSource<'_>) -> Result<KStar> {
    let short = build_table(sys, n, source)?;
    if window == 0 {
        return kstar_from_tables(&short, &short, 0);
    }
    let long = build_table(sys, n + window, source)?;
    kstar_from_tables(&short, &long, window)
}

/// `(K_n, K*_{W,n}, e^{K_n - K*}, Φ⁺(Σ))`. Purely informational: the
/// truncated `K*` underestimates the true one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub window: usize,
    pub depth: usize,
    pub k_n: f64,
    pub kstar: f64,
    pub exp_gap: f64,
    pub phi_upper: f64,
}

pub fn general_method_diagnostic(kstar: &KStar, phi_upper_of_sigma: f64) -> DiagnosticRow {
    DiagnosticRow {
        window: kstar.window,
        depth: kstar.depth,
        k_n: kstar.k_n,
        kstar: kstar.value,
        exp_gap: (kstar.k_n - kstar.value).exp(),
        phi_upper: phi_upper_of_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::constants::{derive_constants, DEFAULT_TAIL_TOL};
    use crate::model::VertexId;
    use crate::sim::{estimate_invariant, EmpiricalMeasure, State};

    fn sys(cfg: crate::model::SystemConfig) -> MarkovSystem {
        MarkovSystem::from_config(&cfg).unwrap()
    }

    fn report(s: &MarkovSystem) -> BoundReport {
        let mu = EmpiricalMeasure::uniform(vec![State::base(s, VertexId(0))]).unwrap();
        evaluate_bounds(s, &derive_constants(s, &mu, DEFAULT_TAIL_TOL).unwrap())
    }

    #[test]
    fn bound_values_of_reference_systems() {
        let a = report(&sys(catalog::sys_a()));
        let expected = 2.0 / (1.0 - 0.5f64.sqrt());
        assert!((a.bound_i_value - expected).abs() < 1e-12);
        assert!((a.bound_i_value - 6.828).abs() < 1e-3);
        assert_eq!(a.bound_ii_value, Some(0.0));
        assert_eq!(a.corollary_factor, Some(1.0));

        let b = report(&sys(catalog::sys_b()));
        assert!((b.bound_ii().unwrap() - 2.0).abs() < 1e-12);
        assert!((b.factor().unwrap() - (-2.0f64).exp()).abs() < 1e-12);

        let c = report(&sys(catalog::sys_c()));
        assert!((c.bound_ii().unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(c.corollary_factor, Some(0.5));
    }

    #[test]
    fn average_mode_has_no_second_bound() {
        let mut cfg = catalog::sys_b();
        cfg.contraction = ContractionMode::Average;
        let r = report(&sys(cfg));
        assert!(matches!(r.bound_ii(), Err(Error::NotUniformlyContractive)));
        assert!(matches!(
            corollary_lower_bound(&r, Estimate::exact(1.0)),
            Err(Error::NotUniformlyContractive)
        ));
        assert!(r.bound_i_value.is_finite());
    }

    #[test]
    fn divergence_vanishes_on_constant_systems() {
        for (cfg, n) in [(catalog::sys_a(), 6), (catalog::sys_c(), 4)] {
            let s = sys(cfg);
            let t = build_table(&s, n, MeasureSource::Exact).unwrap();
            assert!(kl_n(&t).value.abs() < 1e-12);
        }
    }

    #[test]
    fn window_zero_is_k_n() {
        let b = sys(catalog::sys_b());
        let mu = estimate_invariant(&b, 5_000, 100, 4).unwrap();
        let t = build_table(&b, 3, MeasureSource::Empirical(&mu)).unwrap();
        let k = kstar_from_tables(&t, &t, 0).unwrap();
        assert_eq!(k.value, kl_n(&t).value);
        assert_eq!(k.value, k.k_n);
    }

    #[test]
    fn kstar_grows_with_window() {
        let b = sys(catalog::sys_b());
        let mu = estimate_invariant(&b, 20_000, 500, 8).unwrap();
        let src = MeasureSource::Empirical(&mu);
        let k0 = kstar_estimate(&b, 0, 2, src).unwrap();
        let k1 = kstar_estimate(&b, 1, 2, src).unwrap();
        let k2 = kstar_estimate(&b, 2, 2, src).unwrap();
        assert!(k1.value >= k0.value - 3.0 * k1.stderr);
        assert!(k2.value >= k1.value - 3.0 * k2.stderr);
        let row = general_method_diagnostic(&k2, 1.0);
        assert!(row.exp_gap <= 1.0 + 3.0 * k2.stderr);
    }

    #[test]
    fn lower_bound_scales_mass() {
        let c = report(&sys(catalog::sys_c()));
        let lb = corollary_lower_bound(&c, Estimate::exact(0.25)).unwrap();
        assert_eq!(lb.value, 0.125);
        assert_eq!(corollary_lower_bound(&c, Estimate::exact(0.0)).unwrap().value, 0.0);
    }
}
