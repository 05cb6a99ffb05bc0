//! The coding map `F`, evaluated on finite pasts with certified error.
//!
//! For a past `σ_m … σ_0` the backward orbit is
//! `X_j = w_{σ_0} ∘ … ∘ w_{σ_j}(x_{i(σ_j)})` for `m <= j <= 0`, with
//! `X_1 = x_{i(σ_1)}`. Under uniform contraction with rate `a` consecutive
//! points satisfy `d(X_j, X_{j+1}) <= a^{-j} d`, so `F(σ)` lies within
//! `a^{|m|} d / (1 - a)` of `X_m` and within `d / (1 - a)` of `x_{i(σ_1)}`.

use serde::{Deserialize, Serialize};

use crate::constants::{dini_sum, DEFAULT_TAIL_TOL};
use crate::error::{Error, Result};
use crate::model::{dist, AffineMap, ContractionMode, EdgeId, MarkovSystem, VertexId};
use crate::word::{PastWord, Word};

/// Relative slack for comparing floating-point distances against bounds.
const ROUND_SLACK: f64 = 1e-12;

fn within(value: f64, bound: f64) -> bool {
    value <= bound * (1.0 + ROUND_SLACK) + 1e-15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitPoint {
    /// Coordinate `j <= 0` of the deepest edge used.
    pub j: i64,
    pub point: Vec<f64>,
}

/// `X_0, X_{-1}, …, X_m` in that order.
pub fn backward_orbit(sys: &MarkovSystem, past: &PastWord) -> Vec<OrbitPoint> {
    let mut composed = AffineMap::identity(sys.dimension());
    let mut out = Vec::with_capacity(past.depth() + 1);
    for step in 0..=past.depth() {
        let j = -(step as i64);
        let edge = sys.edge(past.at(j));
        composed = composed.compose(&edge.map);
        out.push(OrbitPoint { j, point: composed.apply(sys.base_point(edge.source)) });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingResult {
    pub point: Vec<f64>,
    /// Vertex `t(σ_0)` whose region holds the point.
    pub vertex: VertexId,
    /// `a^{depth} d / (1 - a)`.
    pub error_bound: f64,
    pub depth: usize,
}

/// Deepest orbit point of `past`, after checking the Cauchy estimate at
/// every depth.
pub fn coding_point(sys: &MarkovSystem, past: &PastWord) -> Result<CodingResult> {
    if sys.mode() != ContractionMode::Uniform {
        return Err(Error::NotUniformlyContractive);
    }
    let a = sys.contraction_rate();
    let d = sys.base_displacement();
    let vertex = past.present_vertex(sys);
    let orbit = backward_orbit(sys, past);
    let mut next = sys.base_point(vertex).to_vec();
    for x in &orbit {
        let step = dist(&x.point, &next);
        let bound = a.powi((-x.j) as i32) * d;
        if !within(step, bound) {
            return Err(Error::CauchyViolation { j: x.j, distance: step, bound });
        }
        next = x.point.clone();
    }
    let depth = past.depth();
    Ok(CodingResult {
        point: next,
        vertex,
        error_bound: a.powi(depth as i32) * d / (1.0 - a),
        depth,
    })
}

/// Distance of the coding point to `x_{i(σ_1)}` against `d/(1-a) + error`.
pub fn radius_check(sys: &MarkovSystem, coding: &CodingResult) -> (f64, f64) {
    let a = sys.contraction_rate();
    let r = dist(&coding.point, sys.base_point(coding.vertex));
    (r, sys.base_displacement() / (1.0 - a) + coding.error_bound)
}

/// Residual `|F̂(w·e) - w_e(F̂(w))|` and the bound it must respect,
/// `err(w·e) + Lip(w_e) err(w)`.
pub fn equivariance_residual(sys: &MarkovSystem, past: &PastWord, next: EdgeId) -> Result<(f64, f64)> {
    let extended = past
        .word()
        .extended(sys, next)
        .ok_or_else(|| Error::InadmissibleWord(format!("{} cannot follow the past", sys.edge(next).id)))?;
    let before = coding_point(sys, past)?;
    let after = coding_point(sys, &PastWord::new(extended))?;
    let pushed = sys.edge(next).map.apply(&before.point);
    let bound = after.error_bound + sys.edge_lipschitz(next) * before.error_bound;
    Ok((dist(&after.point, &pushed), bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FSum {
    /// `Σ_{i=1..n} |p_{σ_i}(y_{i-1}) - p_{σ_i}(z_{i-1})|`.
    pub partial: f64,
    /// `Σ_{i>=n} Δ(a^i d/(1-a))`.
    pub tail_bound: f64,
}

impl FSum {
    pub fn total(&self) -> f64 {
        self.partial + self.tail_bound
    }
}

/// Truncated `f(σ)`: the forward word is pushed from the coding point and
/// from `x_{i(σ_1)}` side by side, accumulating probability differences.
pub fn f_sum(sys: &MarkovSystem, coding: &CodingResult, forward: &Word) -> Result<FSum> {
    if sys.mode() != ContractionMode::Uniform {
        return Err(Error::NotUniformlyContractive);
    }
    if forward.first_vertex(sys) != coding.vertex {
        return Err(Error::InadmissibleWord(format!(
            "forward word starts at vertex {}, coding point lies in vertex {}",
            forward.first_vertex(sys).label(),
            coding.vertex.label()
        )));
    }
    let mut y = coding.point.clone();
    let mut z = sys.base_point(coding.vertex).to_vec();
    let mut partial = 0.0;
    for &e in forward.edges() {
        let edge = sys.edge(e);
        partial += (edge.prob.eval(&y) - edge.prob.eval(&z)).abs();
        y = edge.map.apply(&y);
        z = edge.map.apply(&z);
    }
    let a = sys.contraction_rate();
    let scale = a.powi(forward.len() as i32) * sys.base_displacement() / (1.0 - a);
    let tail = dini_sum(sys.modulus(), scale, a, DEFAULT_TAIL_TOL)?;
    Ok(FSum { partial, tail_bound: tail.value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::ContractionMode;

    fn sys(cfg: crate::model::SystemConfig) -> MarkovSystem {
        MarkovSystem::from_config(&cfg).unwrap()
    }

    fn repeat(id: &str, n: usize) -> String {
        vec![id; n].join(".")
    }

    #[test]
    fn orbit_of_repeated_upper_map_approaches_one() {
        let a = sys(catalog::sys_a());
        let past = PastWord::parse(&a, "e2.e2.e2").unwrap();
        let xs: Vec<f64> = backward_orbit(&a, &past).iter().map(|p| p.point[0]).collect();
        assert_eq!(xs, vec![0.5, 0.75, 0.875]);
    }

    #[test]
    fn orbit_of_lower_map_stays_at_zero() {
        let a = sys(catalog::sys_a());
        let past = PastWord::parse(&a, &repeat("e1", 6)).unwrap();
        assert!(backward_orbit(&a, &past).iter().all(|p| p.point == vec![0.0]));
    }

    #[test]
    fn single_edge_past_in_two_vertex_system() {
        let c = sys(catalog::sys_c());
        let past = PastWord::parse(&c, "e12").unwrap();
        let orbit = backward_orbit(&c, &past);
        assert_eq!(orbit.len(), 1);
        assert_eq!(orbit[0].point, vec![2.0]);
    }

    #[test]
    fn coding_point_converges_to_fixed_point() {
        let a = sys(catalog::sys_a());
        let past = PastWord::parse(&a, &repeat("e2", 30)).unwrap();
        let c = coding_point(&a, &past).unwrap();
        assert!((c.point[0] - 1.0).abs() <= 2f64.powi(-30));
        assert!((c.point[0] - 1.0).abs() <= c.error_bound);
    }

    #[test]
    fn coding_ignores_probabilities() {
        let a = sys(catalog::sys_a());
        let b = sys(catalog::sys_b());
        for w in ["e1.e2.e2.e1", "e2.e1.e1.e1.e2"] {
            let ca = coding_point(&a, &PastWord::parse(&a, w).unwrap()).unwrap();
            let cb = coding_point(&b, &PastWord::parse(&b, w).unwrap()).unwrap();
            assert_eq!(ca, cb);
        }
    }

    #[test]
    fn error_bound_at_depth_twenty() {
        let c = sys(catalog::sys_c());
        let mut ids = vec!["e11"; 10];
        ids.extend(["e12"]);
        ids.extend(vec!["e22"; 9]);
        ids.extend(["e21"]);
        let past = PastWord::parse(&c, &ids.join(".")).unwrap();
        assert_eq!(past.depth(), 20);
        let r = coding_point(&c, &past).unwrap();
        let expected = 3f64.powi(-20) * (2.0 / 3.0) / (1.0 - 1.0 / 3.0);
        assert!((r.error_bound - expected).abs() <= 1e-15 * expected);
    }

    #[test]
    fn average_mode_refuses_coding() {
        let mut cfg = catalog::sys_a();
        cfg.contraction = ContractionMode::Average;
        let a = sys(cfg);
        let past = PastWord::parse(&a, "e1").unwrap();
        assert!(matches!(coding_point(&a, &past), Err(Error::NotUniformlyContractive)));
    }

    #[test]
    fn f_sum_vanishes_for_constant_probabilities() {
        let a = sys(catalog::sys_a());
        let c = coding_point(&a, &PastWord::parse(&a, "e2.e1.e2").unwrap()).unwrap();
        let f = f_sum(&a, &c, &Word::parse(&a, "e1.e2.e2.e1").unwrap()).unwrap();
        assert_eq!(f.total(), 0.0);
    }

    #[test]
    fn f_sum_single_term() {
        let b = sys(catalog::sys_b());
        let c = coding_point(&b, &PastWord::parse(&b, &repeat("e2", 40)).unwrap()).unwrap();
        let f = f_sum(&b, &c, &Word::parse(&b, "e1").unwrap()).unwrap();
        let p = &b.edge(b.edge_by_name("e1").unwrap()).prob;
        assert_eq!(f.partial, (p.eval(&c.point) - p.eval(&[0.0])).abs());
        // tail Σ_{i>=1} (1/2)^i / 3 = 1/3
        assert!((f.tail_bound - 1.0 / 3.0).abs() < 1e-13);
        assert!(f.total() <= 2.0 / 3.0 + 1e-13);
    }

    #[test]
    fn f_sum_requires_matching_vertex() {
        let c = sys(catalog::sys_c());
        let r = coding_point(&c, &PastWord::parse(&c, "e11").unwrap()).unwrap();
        let w = Word::parse(&c, "e21").unwrap();
        assert!(matches!(f_sum(&c, &r, &w), Err(Error::InadmissibleWord(_))));
    }

    #[test]
    fn equivariance_on_two_vertex_system() {
        let c = sys(catalog::sys_c());
        let past = PastWord::parse(&c, "e12.e22.e21.e11").unwrap();
        let (res, bound) = equivariance_residual(&c, &past, c.edge_by_name("e12").unwrap()).unwrap();
        assert!(res <= bound + 1e-15);
    }
}
