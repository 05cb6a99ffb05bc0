//! Constants derived from a system and an estimate of its invariant measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContinuityModulus, ContractionMode, MarkovSystem};
use crate::sim::EmpiricalMeasure;
use crate::stats::compensated_sum;

/// Hard limit on the number of terms of a Dini sum.
pub const MAX_DINI_TERMS: usize = 1_000_000;

/// Default tail tolerance for Dini sums.
pub const DEFAULT_TAIL_TOL: f64 = 1e-14;

/// A truncated series `Σ_{i>=0} Δ(scale · ratio^i)` with a certified tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiniSum {
    /// `partial + tail_bound`, an upper bound on the full series.
    pub value: f64,
    pub partial: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

impl DiniSum {
    pub const ZERO: DiniSum = DiniSum { value: 0.0, partial: 0.0, tail_bound: 0.0, terms: 0 };
}

/// Sums `Δ(scale · ratio^i)` until the tail is below `tail_tol`.
///
/// Since `Δ(t) <= slope · t`, the tail after term `i` is at most
/// `slope · scale · ratio^{i+1} / (1 - ratio)`.
pub fn dini_sum(modulus: ContinuityModulus, scale: f64, ratio: f64, tail_tol: f64) -> Result<DiniSum> {
    if modulus.is_zero() || scale == 0.0 {
        return Ok(DiniSum::ZERO);
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::DiniDivergence { tail_tol, terms: 0 });
    }
    let mut terms = Vec::new();
    let mut arg = scale;
    for _ in 0..MAX_DINI_TERMS {
        let term = modulus.eval(arg);
        terms.push(term);
        arg *= ratio;
        let tail = modulus.slope * arg / (1.0 - ratio);
        if term < tail_tol && tail < tail_tol {
            let partial = compensated_sum(terms.iter().copied());
            return Ok(DiniSum { value: partial + tail, partial, tail_bound: tail, terms: terms.len() });
        }
    }
    Err(Error::DiniDivergence { tail_tol, terms: MAX_DINI_TERMS })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub mode: ContractionMode,
    /// Contraction rate: the largest Lipschitz constant in uniform mode,
    /// the average rate in average mode.
    pub a: f64,
    pub max_lipschitz: f64,
    pub delta: f64,
    pub d: f64,
    pub b: f64,
    pub c_hat: f64,
    pub c_hat_stderr: f64,
    pub support_size: usize,
    pub modulus: ContinuityModulus,
    /// `Σ Δ(a^{i/2} Ĉ)`.
    pub dini_sum_half: DiniSum,
    /// `Σ Δ(a^{i/2} (Ĉ + 3σ))`, for conservative comparisons.
    pub dini_sum_half_upper: DiniSum,
    /// `Σ Δ(a^i d/(1 - a))`; uniform mode only.
    pub dini_sum_full: Option<DiniSum>,
}

impl ConstantSet {
    /// `d / (1 - a)`.
    pub fn coding_radius(&self) -> f64 {
        self.d / (1.0 - self.a)
    }

    pub fn c_hat_upper(&self) -> f64 {
        self.c_hat + 3.0 * self.c_hat_stderr
    }
}

/// Smallest value of any probability function over the corners of its
/// source box; affine functions attain their minimum at a corner.
pub fn min_probability(sys: &MarkovSystem) -> f64 {
    sys.edges()
        .iter()
        .flat_map(|e| {
            sys.vertex(e.source)
                .region
                .corners()
                .into_iter()
                .map(move |c| e.prob.eval(&c))
        })
        .fold(f64::INFINITY, f64::min)
}

/// `b = sup_i sup_{x ∈ K_i} Σ_{i(e)=i} p_e(x) d(w_e(x_i), x_{t(e)})` over the
/// validation grid.
pub fn weighted_displacement(sys: &MarkovSystem) -> f64 {
    let mut b = 0.0_f64;
    for (i, _) in sys.vertices().iter().enumerate() {
        let v = crate::model::VertexId(i);
        for x in sys.check_points(v) {
            let s: f64 = sys
                .out_edges(v)
                .iter()
                .map(|&e| {
                    let edge = sys.edge(e);
                    edge.prob.eval(&x) * sys.edge_displacement(edge)
                })
                .sum();
            b = b.max(s);
        }
    }
    b
}

pub fn derive_constants(sys: &MarkovSystem, mu: &EmpiricalMeasure, tail_tol: f64) -> Result<ConstantSet> {
    if mu.is_empty() {
        return Err(Error::InvalidMeasure("no samples".into()));
    }
    let a = sys.contraction_rate();
    if a >= 1.0 {
        return Err(Error::NoContraction { rate: a });
    }
    let modulus = sys.modulus();
    let c = mu.base_distance(sys);
    let d = sys.base_displacement();
    let sqrt_a = a.sqrt();
    let dini_sum_half = dini_sum(modulus, c.value, sqrt_a, tail_tol)?;
    let dini_sum_half_upper = dini_sum(modulus, c.upper(3.0), sqrt_a, tail_tol)?;
    let dini_sum_full = match sys.mode() {
        ContractionMode::Uniform => Some(dini_sum(modulus, d / (1.0 - a), a, tail_tol)?),
        ContractionMode::Average => None,
    };
    Ok(ConstantSet {
        mode: sys.mode(),
        a,
        max_lipschitz: sys.max_lipschitz(),
        delta: min_probability(sys),
        d,
        b: weighted_displacement(sys),
        c_hat: c.value,
        c_hat_stderr: c.stderr,
        support_size: sys.support().len(),
        modulus,
        dini_sum_half,
        dini_sum_half_upper,
        dini_sum_full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::VertexId;
    use crate::sim::{estimate_invariant, State};

    fn point_measure(sys: &MarkovSystem) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(vec![State::base(sys, VertexId(0))]).unwrap()
    }

    #[test]
    fn sys_a_constants() {
        let sys = MarkovSystem::from_config(&catalog::sys_a()).unwrap();
        let k = derive_constants(&sys, &point_measure(&sys), DEFAULT_TAIL_TOL).unwrap();
        assert_eq!(k.a, 0.5);
        assert_eq!(k.delta, 0.5);
        assert_eq!(k.d, 0.5);
        assert!(k.modulus.is_zero());
        assert_eq!(k.dini_sum_half.value, 0.0);
        assert_eq!(k.dini_sum_full.unwrap().value, 0.0);
    }

    #[test]
    fn sys_b_constants() {
        let sys = MarkovSystem::from_config(&catalog::sys_b()).unwrap();
        let k = derive_constants(&sys, &point_measure(&sys), DEFAULT_TAIL_TOL).unwrap();
        assert_eq!(k.a, 0.5);
        assert!((k.delta - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(k.d, 0.5);
        assert_eq!(k.coding_radius(), 1.0);
        assert!((k.modulus.eval(0.6) - 0.2).abs() < 1e-15);
        assert_eq!(k.modulus.eval(10.0), 1.0);
        // oracle: direct summation of (1/2)^i / 3 over 200 terms
        let direct: f64 = (0..200).map(|i| 0.5_f64.powi(i) / 3.0).sum();
        let full = k.dini_sum_full.unwrap();
        assert!((full.value - direct).abs() < 1e-13);
        assert!((full.value - 2.0 / 3.0).abs() < 1e-13);
        assert!(full.partial <= full.value);
    }

    #[test]
    fn sys_c_constants() {
        let sys = MarkovSystem::from_config(&catalog::sys_c()).unwrap();
        let k = derive_constants(&sys, &point_measure(&sys), DEFAULT_TAIL_TOL).unwrap();
        assert!((k.a - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(k.delta, 0.5);
        assert!(k.modulus.is_zero());
        assert!((k.d - 2.0 / 3.0).abs() < 1e-15);
        assert!(k.b <= k.d);
    }

    #[test]
    fn dini_sum_respects_tolerance_and_divergence() {
        let m = ContinuityModulus { slope: 1.0 };
        let s = dini_sum(m, 0.5, 0.5, 1e-10).unwrap();
        assert!((s.value - 1.0).abs() < 1e-10);
        assert!(matches!(dini_sum(m, 1.0, 1.0, 1e-10), Err(Error::DiniDivergence { .. })));
        assert!(matches!(
            dini_sum(m, 1.0, 1.0 - 1e-9, 1e-12),
            Err(Error::DiniDivergence { terms: MAX_DINI_TERMS, .. })
        ));
    }

    #[test]
    fn capped_modulus_terms_saturate() {
        // Δ(t) = min(2t, 1) at t = 4 · 2^-i: terms 1, 1, 1, 1, 1/2, 1/4, ...
        let s = dini_sum(ContinuityModulus { slope: 2.0 }, 4.0, 0.5, 1e-15).unwrap();
        assert!((s.value - 5.0).abs() < 1e-13);
    }

    #[test]
    fn c_hat_below_average_displacement_bound() {
        let sys = MarkovSystem::from_config(&catalog::sys_b()).unwrap();
        let mu = estimate_invariant(&sys, 20_000, 100, 11).unwrap();
        let k = derive_constants(&sys, &mu, DEFAULT_TAIL_TOL).unwrap();
        assert!((k.b - 1.0 / 3.0).abs() < 1e-15);
        assert!(k.c_hat < k.b / (1.0 - k.a) + 3.0 * k.c_hat_stderr);
    }
}
