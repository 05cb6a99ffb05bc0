//! Contractive Markov systems: the configuration schema, validation, and the
//! validated immutable [`MarkovSystem`].
//!
//! State spaces are axis-aligned boxes in `R^k` with the Euclidean metric.
//! Maps are affine and probability functions are constant or affine, so the
//! extremes that validation and the derived constants need are attained at
//! box corners; a 5-point-per-axis grid is checked as well.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Grid resolution used for numeric validation checks.
pub const GRID_POINTS_PER_AXIS: usize = 5;

const SUM_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Configuration schema
// ---------------------------------------------------------------------------

/// On-disk description of a system. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dimension: usize,
    pub vertices: Vec<VertexConfig>,
    pub edges: Vec<EdgeConfig>,
    /// Vertex indices of the set `S`; all vertices when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_set: Option<Vec<usize>>,
    #[serde(default)]
    pub contraction: ContractionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexConfig {
    /// 1-based vertex index.
    pub index: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub base_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub id: String,
    pub source: usize,
    pub target: usize,
    /// Row-major `k x k` matrix.
    pub linear: Vec<f64>,
    pub offset: Vec<f64>,
    pub prob: ProbConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbConfig {
    pub family: ProbabilityFamily,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbabilityFamily {
    Constant,
    Affine,
}

/// Whether every map is a contraction (`Uniform`) or the system only
/// contracts on average (`Average`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractionMode {
    #[default]
    Uniform,
    Average,
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// A closed axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.lower.iter().zip(&self.upper).zip(x).all(|((lo, hi), v)| {
            *v >= lo - SUM_TOL * (1.0 + lo.abs()) && *v <= hi + SUM_TOL * (1.0 + hi.abs())
        })
    }

    pub fn intersects(&self, other: &Region) -> bool {
        (0..self.dimension())
            .all(|i| self.lower[i].max(other.lower[i]) <= self.upper[i].min(other.upper[i]))
    }

    /// All `2^k` corners.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let k = self.dimension();
        (0..1usize << k)
            .map(|mask| {
                (0..k)
                    .map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] })
                    .collect()
            })
            .collect()
    }

    /// Tensor grid with `per_axis` equally spaced points on each axis
    /// (end points included, so the corners are part of the grid).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let k = self.dimension();
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(k as u32);
        (0..total)
            .map(|mut idx| {
                (0..k)
                    .map(|i| {
                        let step = idx % per_axis;
                        idx /= per_axis;
                        let t = step as f64 / (per_axis - 1) as f64;
                        self.lower[i] + t * (self.upper[i] - self.lower[i])
                    })
                    .collect()
            })
            .collect()
    }

    /// Grid points followed by corners.
    fn check_points(&self) -> Vec<Vec<f64>> {
        let mut pts = self.grid(GRID_POINTS_PER_AXIS);
        pts.extend(self.corners());
        pts
    }
}

/// Euclidean operator norm of a row-major `k x k` matrix.
///
/// Closed form for `k <= 2`, power iteration on `A^T A` otherwise.
pub fn spectral_norm(linear: &[f64], k: usize) -> f64 {
    match k {
        0 => 0.0,
        1 => linear[0].abs(),
        2 => spectral_norm_2x2(linear),
        _ => spectral_norm_power(linear, k, 1e-12),
    }
}

fn spectral_norm_2x2(m: &[f64]) -> f64 {
    let (p, q, r, s) = (m[0], m[1], m[2], m[3]);
    let frob = p * p + q * q + r * r + s * s;
    let det = p * s - q * r;
    let disc = (frob * frob - 4.0 * det * det).max(0.0);
    ((frob + disc.sqrt()) / 2.0).sqrt()
}

/// Power iteration on `A^T A`, stopping when the Rayleigh estimate changes
/// by less than `rel_tol` relative to itself.
pub fn spectral_norm_power(linear: &[f64], k: usize, rel_tol: f64) -> f64 {
    let mut v: Vec<f64> = (0..k).map(|i| 1.0 + 0.37 * (i as f64 + 1.0).sin()).collect();
    let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0_f64;
    for _ in 0..200_000 {
        let av: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| linear[i * k + j] * v[j]).sum())
            .collect();
        let w: Vec<f64> = (0..k)
            .map(|j| (0..k).map(|i| linear[i * k + j] * av[i]).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let done = (norm - lambda).abs() <= rel_tol * norm;
        lambda = norm;
        v = w.into_iter().map(|x| x / norm).collect();
        if done {
            break;
        }
    }
    lambda.sqrt()
}

/// `x -> linear * x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub linear: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn identity(k: usize) -> Self {
        let mut linear = vec![0.0; k * k];
        (0..k).for_each(|i| linear[i * k + i] = 1.0);
        AffineMap { linear, offset: vec![0.0; k] }
    }

    pub fn dimension(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let k = self.dimension();
        (0..k)
            .map(|i| {
                let row = &self.linear[i * k..(i + 1) * k];
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.offset[i]
            })
            .collect()
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        let k = self.dimension();
        let mut linear = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                linear[i * k + j] = (0..k)
                    .map(|l| self.linear[i * k + l] * inner.linear[l * k + j])
                    .sum();
            }
        }
        let offset = self.apply(&inner.offset);
        AffineMap { linear, offset }
    }

    pub fn lipschitz_constant(&self) -> f64 {
        spectral_norm(&self.linear, self.dimension())
    }
}

/// `p(x) = alpha + beta · x`; constant functions have `beta = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityFunction {
    pub family: ProbabilityFamily,
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl ProbabilityFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.alpha + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    /// Euclidean norm of the gradient.
    pub fn slope(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    /// Per-edge modulus `min(|beta| t, 1)`.
    pub fn modulus(&self, t: f64) -> f64 {
        ContinuityModulus { slope: self.slope() }.eval(t)
    }
}

/// Modulus of continuity `Δ(t) = min(slope · t, 1)` for `t >= 0`.
///
/// Over a set of affine probability functions the supremum of the per-edge
/// moduli is again of this form, with the largest gradient norm as slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityModulus {
    pub slope: f64,
}

impl ContinuityModulus {
    pub fn eval(&self, t: f64) -> f64 {
        if self.slope == 0.0 {
            0.0
        } else {
            (self.slope * t.max(0.0)).min(1.0)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slope == 0.0
    }
}

// ---------------------------------------------------------------------------
// Validated system
// ---------------------------------------------------------------------------

/// 0-based vertex handle. Displayed 1-based, as in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub usize);

impl VertexId {
    pub fn label(self) -> usize {
        self.0 + 1
    }
}

/// 0-based edge handle into [`MarkovSystem::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub region: Region,
    pub base_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub source: VertexId,
    pub target: VertexId,
    pub map: AffineMap,
    pub prob: ProbabilityFunction,
}

/// A validated, immutable contractive Markov system.
#[derive(Debug, Clone)]
pub struct MarkovSystem {
    config: SystemConfig,
    dimension: usize,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    support: Vec<VertexId>,
    mode: ContractionMode,
    out_edges: Vec<Vec<EdgeId>>,
    by_name: HashMap<String, EdgeId>,
    lipschitz: Vec<f64>,
}

impl MarkovSystem {
    /// Validates `config`, collecting every violation found.
    pub fn from_config(config: &SystemConfig) -> Result<Self> {
        validate(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_config(&SystemConfig::from_json(text)?)
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn edge_by_name(&self, name: &str) -> Option<EdgeId> {
        self.by_name.get(name).copied()
    }

    /// Out-edges of `v`, ordered by edge id.
    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out_edges[v.0]
    }

    /// The set `S`, sorted.
    pub fn support(&self) -> &[VertexId] {
        &self.support
    }

    pub fn in_support(&self, v: VertexId) -> bool {
        self.support.binary_search(&v).is_ok()
    }

    pub fn mode(&self) -> ContractionMode {
        self.mode
    }

    pub fn base_point(&self, v: VertexId) -> &[f64] {
        &self.vertices[v.0].base_point
    }

    pub fn edge_lipschitz(&self, e: EdgeId) -> f64 {
        self.lipschitz[e.0]
    }

    /// Largest edge Lipschitz constant.
    pub fn max_lipschitz(&self) -> f64 {
        self.lipschitz.iter().copied().fold(0.0, f64::max)
    }

    /// Average contraction rate bound `sup_x sum_e p_e(x) Lip(w_e)`, taken
    /// over the validation grid of every vertex.
    pub fn average_contraction_rate(&self) -> f64 {
        let mut rate = 0.0_f64;
        for (i, vertex) in self.vertices.iter().enumerate() {
            for x in vertex.region.check_points() {
                let r: f64 = self.out_edges[i]
                    .iter()
                    .map(|&e| self.edges[e.0].prob.eval(&x) * self.lipschitz[e.0])
                    .sum();
                rate = rate.max(r);
            }
        }
        rate
    }

    /// The contraction rate `a` used by the bounds: the largest Lipschitz
    /// constant in uniform mode, the average rate in average mode.
    pub fn contraction_rate(&self) -> f64 {
        match self.mode {
            ContractionMode::Uniform => self.max_lipschitz(),
            ContractionMode::Average => self.average_contraction_rate(),
        }
    }

    /// `d = sup_e dist(w_e(x_{i(e)}), x_{t(e)})`.
    pub fn base_displacement(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| self.edge_displacement(e))
            .fold(0.0, f64::max)
    }

    pub(crate) fn edge_displacement(&self, e: &Edge) -> f64 {
        dist(&e.map.apply(self.base_point(e.source)), self.base_point(e.target))
    }

    /// Global modulus of continuity of the probability functions.
    pub fn modulus(&self) -> ContinuityModulus {
        ContinuityModulus {
            slope: self.edges.iter().map(|e| e.prob.slope()).fold(0.0, f64::max),
        }
    }

    pub fn all_constant_probabilities(&self) -> bool {
        self.edges.iter().all(|e| e.prob.slope() == 0.0)
    }

    /// Points at which grid checks are made for vertex `v`.
    pub fn check_points(&self, v: VertexId) -> Vec<Vec<f64>> {
        self.vertices[v.0].region.check_points()
    }
}

fn validate(cfg: &SystemConfig) -> Result<MarkovSystem> {
    let mut bad = Vec::new();
    let k = cfg.dimension;
    if k == 0 {
        bad.push(Violation::Malformed("dimension must be at least 1".into()));
        return Err(Error::Invalid(bad));
    }
    let n = cfg.vertices.len();
    if n == 0 {
        bad.push(Violation::Malformed("system has no vertices".into()));
    }

    let mut vertex_slots: Vec<Option<Vertex>> = vec![None; n];
    for v in &cfg.vertices {
        if v.index == 0 || v.index > n {
            bad.push(Violation::Malformed(format!("vertex index {} outside 1..={n}", v.index)));
            continue;
        }
        if vertex_slots[v.index - 1].is_some() {
            bad.push(Violation::Malformed(format!("duplicate vertex index {}", v.index)));
            continue;
        }
        if v.lower.len() != k || v.upper.len() != k || v.base_point.len() != k {
            bad.push(Violation::Malformed(format!("vertex {} has wrong dimension", v.index)));
            continue;
        }
        let finite = v.lower.iter().chain(&v.upper).chain(&v.base_point).all(|x| x.is_finite());
        if !finite || v.lower.iter().zip(&v.upper).any(|(lo, hi)| lo > hi) {
            bad.push(Violation::Malformed(format!("vertex {} has an invalid box", v.index)));
            continue;
        }
        let region = Region { lower: v.lower.clone(), upper: v.upper.clone() };
        if !region.contains(&v.base_point) {
            bad.push(Violation::Malformed(format!(
                "base point of vertex {} lies outside its region",
                v.index
            )));
        }
        vertex_slots[v.index - 1] = Some(Vertex { region, base_point: v.base_point.clone() });
    }
    let vertex_ok = vertex_slots.iter().all(Option::is_some);

    if vertex_ok {
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (vertex_slots[i].as_ref().unwrap(), vertex_slots[j].as_ref().unwrap());
                if a.region.intersects(&b.region) {
                    bad.push(Violation::Malformed(format!(
                        "regions of vertices {} and {} intersect",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
    }

    let mut edges = Vec::with_capacity(cfg.edges.len());
    let mut by_name = HashMap::new();
    for (idx, e) in cfg.edges.iter().enumerate() {
        if e.id.is_empty() || e.id.contains(['.', '+', ',']) || e.id.contains(char::is_whitespace) {
            bad.push(Violation::Malformed(format!("edge id {:?} is empty or contains a separator", e.id)));
            continue;
        }
        if by_name.insert(e.id.clone(), EdgeId(idx)).is_some() {
            bad.push(Violation::Malformed(format!("duplicate edge id {:?}", e.id)));
            continue;
        }
        if e.source == 0 || e.source > n || e.target == 0 || e.target > n {
            bad.push(Violation::Malformed(format!("edge {} references a missing vertex", e.id)));
            continue;
        }
        if e.linear.len() != k * k || e.offset.len() != k {
            bad.push(Violation::Malformed(format!("edge {} map has wrong dimension", e.id)));
            continue;
        }
        let beta = match (e.prob.family, e.prob.beta.len()) {
            (ProbabilityFamily::Constant, 0) => vec![0.0; k],
            (ProbabilityFamily::Constant, _) if e.prob.beta.iter().all(|b| *b == 0.0) => vec![0.0; k],
            (ProbabilityFamily::Constant, _) => {
                bad.push(Violation::Malformed(format!("constant probability of edge {} has a slope", e.id)));
                continue;
            }
            (ProbabilityFamily::Affine, len) if len == k => e.prob.beta.clone(),
            (ProbabilityFamily::Affine, _) => {
                bad.push(Violation::Malformed(format!("edge {} beta has wrong dimension", e.id)));
                continue;
            }
        };
        let finite = e
            .linear
            .iter()
            .chain(&e.offset)
            .chain(&beta)
            .chain(std::iter::once(&e.prob.alpha))
            .all(|x| x.is_finite());
        if !finite {
            bad.push(Violation::Malformed(format!("edge {} has non-finite coefficients", e.id)));
            continue;
        }
        edges.push(Edge {
            id: e.id.clone(),
            source: VertexId(e.source - 1),
            target: VertexId(e.target - 1),
            map: AffineMap { linear: e.linear.clone(), offset: e.offset.clone() },
            prob: ProbabilityFunction { family: e.prob.family, alpha: e.prob.alpha, beta },
        });
    }
    let edges_ok = edges.len() == cfg.edges.len();

    let support: Vec<VertexId> = match &cfg.support_set {
        None => (0..n).map(VertexId).collect(),
        Some(s) => {
            let mut set = BTreeSet::new();
            for &i in s {
                if i == 0 || i > n {
                    bad.push(Violation::Malformed(format!("support index {i} outside 1..={n}")));
                } else {
                    set.insert(VertexId(i - 1));
                }
            }
            set.into_iter().collect()
        }
    };
    if support.is_empty() {
        bad.push(Violation::EmptySupport);
    }

    if !(vertex_ok && edges_ok) || !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    let vertices: Vec<Vertex> = vertex_slots.into_iter().map(Option::unwrap).collect();

    let mut out_edges: Vec<Vec<EdgeId>> = vec![Vec::new(); n];
    for (idx, e) in edges.iter().enumerate() {
        out_edges[e.source.0].push(EdgeId(idx));
    }
    for (i, out) in out_edges.iter_mut().enumerate() {
        if out.is_empty() {
            bad.push(Violation::Malformed(format!("vertex {} has no out-edge", i + 1)));
        }
        out.sort_by(|a, b| edges[a.0].id.cmp(&edges[b.0].id));
    }

    for (i, vertex) in vertices.iter().enumerate() {
        let out = &out_edges[i];
        if out.is_empty() {
            continue;
        }
        let alpha_sum: f64 = out.iter().map(|e| edges[e.0].prob.alpha).sum();
        if (alpha_sum - 1.0).abs() > SUM_TOL {
            bad.push(Violation::Normalization {
                vertex: i + 1,
                detail: format!("alpha coefficients sum to {alpha_sum}"),
            });
        }
        for axis in 0..k {
            let beta_sum: f64 = out.iter().map(|e| edges[e.0].prob.beta[axis]).sum();
            if beta_sum.abs() > SUM_TOL {
                bad.push(Violation::Normalization {
                    vertex: i + 1,
                    detail: format!("beta coefficients on axis {} sum to {beta_sum}", axis + 1),
                });
            }
        }
        let points = vertex.region.check_points();
        if let Some(x) = points.iter().find(|x| {
            let s: f64 = out.iter().map(|e| edges[e.0].prob.eval(x)).sum();
            (s - 1.0).abs() > SUM_TOL
        }) {
            bad.push(Violation::Normalization {
                vertex: i + 1,
                detail: format!("probabilities do not sum to 1 at {x:?}"),
            });
        }
        for &eid in out {
            let e = &edges[eid.0];
            if let Some(x) = points.iter().find(|x| e.prob.eval(x) <= 0.0) {
                bad.push(Violation::NonPositiveProbability {
                    edge: e.id.clone(),
                    point: x.clone(),
                    value: e.prob.eval(x),
                });
            }
            let target = &vertices[e.target.0].region;
            if let Some(x) = points.iter().find(|x| !target.contains(&e.map.apply(x))) {
                bad.push(Violation::RegionEscape {
                    edge: e.id.clone(),
                    point: x.clone(),
                    image: e.map.apply(x),
                });
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }

    let lipschitz: Vec<f64> = edges.iter().map(|e| e.map.lipschitz_constant()).collect();
    let sys = MarkovSystem {
        config: cfg.clone(),
        dimension: k,
        vertices,
        edges,
        support,
        mode: cfg.contraction,
        out_edges,
        by_name,
        lipschitz,
    };
    if sys.mode == ContractionMode::Uniform && sys.max_lipschitz() >= 1.0 {
        return Err(Error::NoContraction { rate: sys.max_lipschitz() });
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn violations(cfg: &SystemConfig) -> Vec<Violation> {
        match MarkovSystem::from_config(cfg) {
            Err(Error::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn catalog_systems_validate() {
        for cfg in [catalog::sys_a(), catalog::sys_b(), catalog::sys_c()] {
            MarkovSystem::from_config(&cfg).unwrap();
        }
    }

    #[test]
    fn unnormalized_probabilities_are_rejected() {
        let mut cfg = catalog::sys_a();
        cfg.edges[0].prob.alpha = 0.6;
        cfg.edges[1].prob.alpha = 0.6;
        let v = violations(&cfg);
        assert!(matches!(v[0], Violation::Normalization { vertex: 1, .. }), "{v:?}");
    }

    #[test]
    fn affine_slopes_must_cancel() {
        let mut cfg = catalog::sys_b();
        cfg.edges[1].prob.beta = vec![-0.5];
        cfg.edges[1].prob.alpha = 2.0 / 3.0;
        let v = violations(&cfg);
        assert!(v.iter().any(|x| matches!(x, Violation::Normalization { .. })));
    }

    #[test]
    fn escaping_map_is_rejected() {
        let mut cfg = catalog::sys_a();
        cfg.edges[1].offset = vec![0.75];
        let v = violations(&cfg);
        assert!(v.iter().any(|x| matches!(x, Violation::RegionEscape { edge, .. } if edge == "e2")));
    }

    #[test]
    fn empty_support_is_rejected() {
        let mut cfg = catalog::sys_a();
        cfg.support_set = Some(vec![]);
        assert_eq!(violations(&cfg), vec![Violation::EmptySupport]);
    }

    #[test]
    fn zero_probability_is_rejected() {
        let mut cfg = catalog::sys_b();
        // p_e1(x) = x, p_e2(x) = 1 - x vanish at the ends of [0, 1]
        cfg.edges[0].prob = ProbConfig { family: ProbabilityFamily::Affine, alpha: 0.0, beta: vec![1.0] };
        cfg.edges[1].prob = ProbConfig { family: ProbabilityFamily::Affine, alpha: 1.0, beta: vec![-1.0] };
        let v = violations(&cfg);
        assert!(v.iter().any(|x| matches!(x, Violation::NonPositiveProbability { .. })));
    }

    #[test]
    fn overlapping_regions_are_rejected() {
        let mut cfg = catalog::sys_c();
        cfg.vertices[1].lower = vec![0.5];
        cfg.vertices[1].base_point = vec![0.5];
        let v = violations(&cfg);
        assert!(v.iter().any(|x| matches!(x, Violation::Malformed(m) if m.contains("intersect"))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = catalog::sys_a().to_json().replacen("\"dimension\"", "\"colour\": 1, \"dimension\"", 1);
        assert!(SystemConfig::from_json(&text).is_err());
    }

    #[test]
    fn expanding_map_fails_uniform_mode() {
        let mut cfg = catalog::sys_a();
        cfg.edges[0].linear = vec![1.0];
        assert!(matches!(MarkovSystem::from_config(&cfg), Err(Error::NoContraction { .. })));
        cfg.contraction = ContractionMode::Average;
        let sys = MarkovSystem::from_config(&cfg).unwrap();
        assert_eq!(sys.max_lipschitz(), 1.0);
        assert!((sys.contraction_rate() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn spectral_norm_closed_form_matches_power_iteration() {
        let m = [0.3, -0.2, 0.1, 0.4];
        let a = spectral_norm(&m, 2);
        let b = spectral_norm_power(&m, 2, 1e-14);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn spectral_norm_of_diagonal_3x3() {
        let m = [0.2, 0.0, 0.0, 0.0, -0.7, 0.0, 0.0, 0.0, 0.5];
        assert!((spectral_norm(&m, 3) - 0.7).abs() < 1e-10);
    }

    #[test]
    fn composition_applies_inner_first() {
        let f = AffineMap { linear: vec![0.5], offset: vec![0.5] };
        let g = AffineMap { linear: vec![0.5], offset: vec![0.0] };
        let fg = f.compose(&g);
        assert_eq!(fg.apply(&[1.0]), f.apply(&g.apply(&[1.0])));
        assert_eq!(fg.apply(&[1.0]), vec![0.75]);
    }

    #[test]
    fn grid_includes_corners() {
        let r = Region { lower: vec![0.0, 2.0], upper: vec![1.0, 3.0] };
        let g = r.grid(5);
        assert_eq!(g.len(), 25);
        for c in r.corners() {
            assert!(g.contains(&c));
        }
    }
}
