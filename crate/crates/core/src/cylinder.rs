//! Cylinder measures: the chain law `P¹_x`, the reference measure `Φ₀(λ')`,
//! the equilibrium state `M`, and depth-`n` tables of the density `Z = M/Φ₀`.
//!
//! All cylinders here are anchored at coordinate 1: the word `e_1 … e_n`
//! stands for `_1[e_1, …, e_n]`. By shift invariance of `M` this is enough
//! for every integral against `M`.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EdgeId, MarkovSystem, VertexId};
use crate::sim::EmpiricalMeasure;
use crate::stats::{compensated_sum, BatchLayout, BatchedValue, Estimate};
use crate::word::Word;

/// Default cap on the number of words a single enumeration may produce.
pub const DEFAULT_WORD_CAP: usize = 10_000_000;

/// Tolerance for exact-mode identities.
pub const EXACT_TOL: f64 = 1e-12;

/// Number of admissible words of length `n`, optionally from `start`.
pub fn count_words(sys: &MarkovSystem, n: usize, start: Option<VertexId>) -> u128 {
    if n == 0 {
        return 0;
    }
    let nv = sys.vertices().len();
    // ways[v] = number of admissible words of the current length starting at v
    let mut ways = vec![1u128; nv];
    for _ in 0..n {
        ways = (0..nv)
            .map(|v| {
                sys.out_edges(VertexId(v))
                    .iter()
                    .map(|&e| ways[sys.edge(e).target.0])
                    .fold(0u128, u128::saturating_add)
            })
            .collect();
    }
    match start {
        Some(v) => ways[v.0],
        None => ways.iter().copied().fold(0, u128::saturating_add),
    }
}

fn edges_by_id(sys: &MarkovSystem) -> Vec<EdgeId> {
    let mut all: Vec<EdgeId> = (0..sys.edges().len()).map(EdgeId).collect();
    all.sort_by(|a, b| sys.edge(*a).id.cmp(&sys.edge(*b).id));
    all
}

/// All admissible words of length `n`, lexicographic by edge id.
pub fn enumerate_words(sys: &MarkovSystem, n: usize, start: Option<VertexId>, cap: usize) -> Result<Vec<Word>> {
    if n == 0 {
        return Err(Error::InvalidCylinderSet("word length must be at least 1".into()));
    }
    let count = count_words(sys, n, start);
    if count > cap as u128 {
        return Err(Error::DepthOverflow { count, cap });
    }
    let first: Vec<EdgeId> = match start {
        Some(v) => sys.out_edges(v).to_vec(),
        None => edges_by_id(sys),
    };
    let mut out = Vec::with_capacity(count as usize);
    let mut prefix = Vec::with_capacity(n);
    for e in first {
        prefix.push(e);
        extend_words(sys, n, &mut prefix, &mut out);
        prefix.pop();
    }
    Ok(out)
}

fn extend_words(sys: &MarkovSystem, n: usize, prefix: &mut Vec<EdgeId>, out: &mut Vec<Word>) {
    if prefix.len() == n {
        out.push(Word::from_admissible(prefix.clone()));
        return;
    }
    let v = sys.edge(*prefix.last().unwrap()).target;
    for &e in sys.out_edges(v) {
        prefix.push(e);
        extend_words(sys, n, prefix, out);
        prefix.pop();
    }
}

/// A finite union of depth-`n` cylinders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CylinderSet {
    depth: usize,
    words: Vec<Word>,
}

impl CylinderSet {
    pub fn new(words: Vec<Word>) -> Result<Self> {
        let Some(depth) = words.first().map(Word::len) else {
            return Err(Error::InvalidCylinderSet("no words".into()));
        };
        if words.iter().any(|w| w.len() != depth) {
            return Err(Error::InvalidCylinderSet("words of different lengths".into()));
        }
        let mut sorted = words;
        sorted.sort();
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::InvalidCylinderSet("duplicate word".into()));
        }
        Ok(CylinderSet { depth, words: sorted })
    }

    /// The whole space, written as the union of all depth-`n` cylinders.
    pub fn all(sys: &MarkovSystem, n: usize) -> Result<Self> {
        Self::new(enumerate_words(sys, n, None, DEFAULT_WORD_CAP)?)
    }

    /// Parses `all`, `all:n`, or words joined by `+` such as `e1.e2+e2.e1`.
    pub fn parse(sys: &MarkovSystem, text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "all" {
            return Self::all(sys, 1);
        }
        if let Some(n) = text.strip_prefix("all:") {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::InvalidCylinderSet(format!("bad depth in {text:?}")))?;
            return Self::all(sys, n);
        }
        let words = text
            .split('+')
            .map(|w| Word::parse(sys, w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(words)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Words in the set's canonical (sorted) order.
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn descriptor(&self, sys: &MarkovSystem) -> String {
        self.words
            .iter()
            .map(|w| w.to_string_in(sys))
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// `P¹_x(_1[e_1 … e_n]) = Π p_{e_j}(y_{j-1})` with `y_0 = x`,
/// `y_j = w_{e_j}(y_{j-1})`; zero if the word does not start at `vertex`.
pub fn chain_cyl_prob(sys: &MarkovSystem, vertex: VertexId, point: &[f64], word: &Word) -> f64 {
    if word.first_vertex(sys) != vertex {
        return 0.0;
    }
    let mut y = point.to_vec();
    let mut p = 1.0;
    for (j, &e) in word.edges().iter().enumerate() {
        let edge = sys.edge(e);
        p *= edge.prob.eval(&y);
        if j + 1 < word.len() {
            y = edge.map.apply(&y);
        }
    }
    p
}

/// `Φ₀(λ')(_1[w])`.
pub fn phi0_cyl(sys: &MarkovSystem, word: &Word) -> f64 {
    let v = word.first_vertex(sys);
    if !sys.in_support(v) {
        return 0.0;
    }
    chain_cyl_prob(sys, v, sys.base_point(v), word) / sys.support().len() as f64
}

/// Stationary distribution of the vertex chain `P_{ij} = Σ_{i→j} p_e`,
/// for systems with constant probabilities.
pub fn stationary_distribution(sys: &MarkovSystem) -> Result<Vec<f64>> {
    if !sys.all_constant_probabilities() {
        return Err(Error::ExactModeUnavailable);
    }
    let n = sys.vertices().len();
    // Rows of (P^T - I), with the last replaced by the normalization Σπ = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for e in sys.edges() {
        a[(e.target.0, e.source.0)] += e.prob.alpha;
    }
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = a.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::NoUniqueStationary);
    }
    let pi = lu.solve(&rhs).ok_or(Error::NoUniqueStationary)?;
    if pi.iter().any(|&p| p < -EXACT_TOL) {
        return Err(Error::NoUniqueStationary);
    }
    Ok(pi.iter().map(|&p| p.max(0.0)).collect())
}

/// Where `M` comes from.
#[derive(Debug, Clone, Copy)]
pub enum MeasureSource<'a> {
    /// Stationary vertex chain; constant probabilities only.
    Exact,
    /// `M(_1[w]) ≈ ∫ P¹_x(_1[w]) dμ(x)` over the samples of `μ`.
    Empirical(&'a EmpiricalMeasure),
}

/// `MeasureSource` with the stationary distribution resolved once.
enum Evaluator<'a> {
    Exact(Vec<f64>),
    Empirical(&'a EmpiricalMeasure),
}

impl<'a> Evaluator<'a> {
    fn new(sys: &MarkovSystem, source: MeasureSource<'a>) -> Result<Self> {
        match source {
            MeasureSource::Exact => Ok(Evaluator::Exact(stationary_distribution(sys)?)),
            MeasureSource::Empirical(mu) => {
                mu.check_against(sys)?;
                Ok(Evaluator::Empirical(mu))
            }
        }
    }

    fn m(&self, sys: &MarkovSystem, word: &Word) -> (Estimate, Option<BatchedValue>) {
        match self {
            Evaluator::Exact(pi) => {
                let v = word.first_vertex(sys);
                let p = chain_cyl_prob(sys, v, sys.base_point(v), word);
                (Estimate::exact(pi[v.0] * p), None)
            }
            Evaluator::Empirical(mu) => {
                let b = mu.integrate_batched(|s| chain_cyl_prob(sys, s.vertex, &s.point, word));
                let est = Estimate { value: b.value, stderr: mu.layout().stderr(&b.batches) };
                (est, Some(b))
            }
        }
    }

    fn layout(&self) -> Option<BatchLayout> {
        match self {
            Evaluator::Exact(_) => None,
            Evaluator::Empirical(mu) => Some(mu.layout().clone()),
        }
    }
}

/// `M(_1[w])` with its standard error (zero in exact mode).
pub fn m_cyl(sys: &MarkovSystem, word: &Word, source: MeasureSource<'_>) -> Result<Estimate> {
    Ok(Evaluator::new(sys, source)?.m(sys, word).0)
}

/// `M(Q)` for a union of disjoint cylinders.
pub fn m_set(sys: &MarkovSystem, q: &CylinderSet, source: MeasureSource<'_>) -> Result<Estimate> {
    let eval = Evaluator::new(sys, source)?;
    let parts: Vec<_> = q.words().iter().map(|w| eval.m(sys, w)).collect();
    let value = compensated_sum(parts.iter().map(|(e, _)| e.value));
    let stderr = match eval.layout() {
        None => 0.0,
        Some(layout) => {
            let rows: Vec<&BatchedValue> = parts.iter().filter_map(|(_, b)| b.as_ref()).collect();
            BatchedValue::linear_stderr(&layout, &rows, &vec![1.0; rows.len()])
        }
    };
    Ok(Estimate { value, stderr })
}

/// `Φ₀(λ')(Q)`.
pub fn phi0_set(sys: &MarkovSystem, q: &CylinderSet) -> f64 {
    compensated_sum(q.words().iter().map(|w| phi0_cyl(sys, w)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderRow {
    pub word: Word,
    pub m: f64,
    pub phi0: f64,
    /// `M/Φ₀`; set to 0 on rows with `Φ₀ = 0`, which carry no `M` mass.
    pub z: f64,
    /// `log Z`; 0 on rows with `Φ₀ = 0`, `-inf` when `M = 0 < Φ₀`.
    pub log_z: f64,
    /// Standard error of `m`.
    pub stderr: f64,
    batches: Option<BatchedValue>,
}

impl CylinderRow {
    /// `σ_Z = σ_M / Φ₀`.
    pub fn z_stderr(&self) -> f64 {
        if self.phi0 > 0.0 {
            self.stderr / self.phi0
        } else {
            0.0
        }
    }

    /// `M log Z` with `0 log 0 = 0`.
    pub fn entropy_term(&self) -> f64 {
        if self.m == 0.0 || self.phi0 == 0.0 {
            0.0
        } else {
            self.m * self.log_z
        }
    }

    pub fn batches(&self) -> Option<&BatchedValue> {
        self.batches.as_ref()
    }
}

/// Depth-`n` table of `M`, `Φ₀`, `Z` and `log Z` over every admissible word.
#[derive(Debug, Clone)]
pub struct CylinderTable {
    depth: usize,
    mode: TableMode,
    rows: Vec<CylinderRow>,
    index: HashMap<Word, usize>,
    layout: Option<BatchLayout>,
}

pub fn build_table(sys: &MarkovSystem, n: usize, source: MeasureSource<'_>) -> Result<CylinderTable> {
    build_table_capped(sys, n, source, DEFAULT_WORD_CAP)
}

pub fn build_table_capped(
    sys: &MarkovSystem,
    n: usize,
    source: MeasureSource<'_>,
    cap: usize,
) -> Result<CylinderTable> {
    let words = enumerate_words(sys, n, None, cap)?;
    let eval = Evaluator::new(sys, source)?;
    let mode = match eval {
        Evaluator::Exact(_) => TableMode::Exact,
        Evaluator::Empirical(_) => TableMode::MonteCarlo,
    };
    let rows: Vec<CylinderRow> = words
        .into_par_iter()
        .map(|word| {
            let (m, batches) = eval.m(sys, &word);
            let phi0 = phi0_cyl(sys, &word);
            if phi0 == 0.0 && m.value > 3.0 * m.stderr {
                return Err(Error::AbsoluteContinuityViolation { word: word.to_string_in(sys), m: m.value });
            }
            let (z, log_z) = if phi0 > 0.0 {
                let z = m.value / phi0;
                (z, z.ln())
            } else {
                (0.0, 0.0)
            };
            Ok(CylinderRow { word, m: m.value, phi0, z, log_z, stderr: m.stderr, batches })
        })
        .collect::<Result<_>>()?;

    let table = CylinderTable {
        depth: n,
        mode,
        index: rows.iter().enumerate().map(|(i, r)| (r.word.clone(), i)).collect(),
        layout: eval.layout(),
        rows,
    };
    let total_phi0 = table.total_phi0();
    if (total_phi0 - 1.0).abs() > EXACT_TOL {
        return Err(Error::InvalidMeasure(format!("reference masses sum to {total_phi0}")));
    }
    let total_m = table.total_m();
    if (total_m.value - 1.0).abs() > EXACT_TOL + 3.0 * total_m.stderr {
        return Err(Error::InvalidMeasure(format!("cylinder masses sum to {}", total_m.value)));
    }
    Ok(table)
}

impl CylinderTable {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn mode(&self) -> TableMode {
        self.mode
    }

    pub fn rows(&self) -> &[CylinderRow] {
        &self.rows
    }

    pub fn row(&self, word: &Word) -> Option<&CylinderRow> {
        self.index.get(word).map(|&i| &self.rows[i])
    }

    /// Batch layout of the underlying sample, in Monte Carlo mode.
    pub fn layout(&self) -> Option<&BatchLayout> {
        self.layout.as_ref()
    }

    /// Standard error of `Σ_r coeffs[r] · M(row r)` plus any extra terms
    /// from other tables over the same sample.
    pub fn linear_stderr(&self, terms: &[(&CylinderRow, f64)]) -> f64 {
        let Some(layout) = &self.layout else { return 0.0 };
        let rows: Vec<&BatchedValue> = terms.iter().filter_map(|(r, _)| r.batches.as_ref()).collect();
        let coeffs: Vec<f64> = terms.iter().filter(|(r, _)| r.batches.is_some()).map(|(_, c)| *c).collect();
        BatchedValue::linear_stderr(layout, &rows, &coeffs)
    }

    pub fn total_m(&self) -> Estimate {
        let value = compensated_sum(self.rows.iter().map(|r| r.m));
        let terms: Vec<_> = self.rows.iter().map(|r| (r, 1.0)).collect();
        Estimate { value, stderr: self.linear_stderr(&terms) }
    }

    pub fn total_phi0(&self) -> f64 {
        compensated_sum(self.rows.iter().map(|r| r.phi0))
    }

    /// Row with the largest `log Z` among rows with `Φ₀ > 0`.
    pub fn max_log_z(&self) -> Option<&CylinderRow> {
        self.rows
            .iter()
            .filter(|r| r.phi0 > 0.0)
            .max_by(|a, b| a.log_z.total_cmp(&b.log_z))
    }

    /// CSV with columns `word, M, phi0, Z, logZ, stderr`.
    pub fn write_csv<W: Write>(&self, sys: &MarkovSystem, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["word", "M", "phi0", "Z", "logZ", "stderr"])?;
        for r in &self.rows {
            w.write_record([
                r.word.to_string_in(sys),
                r.m.to_string(),
                r.phi0.to_string(),
                r.z.to_string(),
                r.log_z.to_string(),
                r.stderr.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Kolmogorov consistency and martingale identity between a depth-`n` table
/// and its depth-`n+1` refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub depth: usize,
    /// `max_w |M(w) - Σ_e M(w·e)|`.
    pub m_residual: f64,
    /// Largest `|M(w) - Σ_e M(w·e)|` in units of its standard error
    /// (0 in exact mode).
    pub m_sigmas: f64,
    pub phi0_residual: f64,
    /// `max_w |Φ₀(w) Z(w) - Σ_e Φ₀(w·e) Z(w·e)|`.
    pub martingale_residual: f64,
    pub pass: bool,
}

pub fn consistency(parent: &CylinderTable, child: &CylinderTable) -> Result<ConsistencyReport> {
    if child.depth != parent.depth + 1 {
        return Err(Error::InvalidCylinderSet(format!(
            "tables of depth {} and {} are not consecutive",
            parent.depth, child.depth
        )));
    }
    let mut children: Vec<Vec<&CylinderRow>> = vec![Vec::new(); parent.rows.len()];
    for r in &child.rows {
        let prefix = r.word.slice(0, parent.depth);
        let i = parent
            .index
            .get(&prefix)
            .ok_or_else(|| Error::InvalidCylinderSet("refinement has an unknown prefix".into()))?;
        children[*i].push(r);
    }
    let mut rep = ConsistencyReport {
        depth: parent.depth,
        m_residual: 0.0,
        m_sigmas: 0.0,
        phi0_residual: 0.0,
        martingale_residual: 0.0,
        pass: true,
    };
    for (p, kids) in parent.rows.iter().zip(&children) {
        let m_res = (p.m - compensated_sum(kids.iter().map(|k| k.m))).abs();
        let phi_res = (p.phi0 - compensated_sum(kids.iter().map(|k| k.phi0))).abs();
        let mart = (p.phi0 * p.z - compensated_sum(kids.iter().map(|k| k.phi0 * k.z))).abs();
        rep.m_residual = rep.m_residual.max(m_res);
        rep.phi0_residual = rep.phi0_residual.max(phi_res);
        rep.martingale_residual = rep.martingale_residual.max(mart);
        let sigma = if parent.mode == TableMode::MonteCarlo {
            let mut terms = vec![(p, 1.0)];
            terms.extend(kids.iter().map(|k| (*k, -1.0)));
            parent.linear_stderr(&terms)
        } else {
            0.0
        };
        if sigma > 0.0 {
            rep.m_sigmas = rep.m_sigmas.max(m_res / sigma);
        }
        let tol = EXACT_TOL + 3.0 * sigma;
        if m_res > tol || mart > tol || phi_res > EXACT_TOL {
            rep.pass = false;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::sim::estimate_invariant;

    fn sys(cfg: crate::model::SystemConfig) -> MarkovSystem {
        MarkovSystem::from_config(&cfg).unwrap()
    }

    #[test]
    fn word_counts() {
        let a = sys(catalog::sys_a());
        assert_eq!(enumerate_words(&a, 3, None, DEFAULT_WORD_CAP).unwrap().len(), 8);
        let c = sys(catalog::sys_c());
        let w = enumerate_words(&c, 2, Some(VertexId(0)), DEFAULT_WORD_CAP).unwrap();
        let names: Vec<String> = w.iter().map(|w| w.to_string_in(&c)).collect();
        assert_eq!(names, ["e11.e11", "e11.e12", "e12.e21", "e12.e22"]);
        assert!(matches!(
            enumerate_words(&a, 24, None, DEFAULT_WORD_CAP),
            Err(Error::DepthOverflow { count: 16_777_216, .. })
        ));
    }

    #[test]
    fn chain_probabilities() {
        let a = sys(catalog::sys_a());
        let w = Word::parse(&a, "e1.e2.e2.e1").unwrap();
        assert_eq!(chain_cyl_prob(&a, VertexId(0), &[0.0], &w), 1.0 / 16.0);
        let b = sys(catalog::sys_b());
        let w = Word::parse(&b, "e1").unwrap();
        assert_eq!(chain_cyl_prob(&b, VertexId(0), &[0.0], &w), 1.0 / 3.0);
        // p_e2(0) p_e1(1/2) = (2/3)(1/2)
        let w = Word::parse(&b, "e2.e1").unwrap();
        let direct = (2.0 / 3.0) * ((1.0 + 0.5) / 3.0);
        assert!((chain_cyl_prob(&b, VertexId(0), &[0.0], &w) - direct).abs() < 1e-16);
        assert!((direct - 1.0 / 3.0).abs() < 1e-16);
        let c = sys(catalog::sys_c());
        let w = Word::parse(&c, "e21").unwrap();
        assert_eq!(chain_cyl_prob(&c, VertexId(0), &[0.0], &w), 0.0);
    }

    #[test]
    fn reference_measure_on_two_vertices() {
        let c = sys(catalog::sys_c());
        for w in ["e11", "e21.e12", "e12.e22.e21"] {
            let w = Word::parse(&c, w).unwrap();
            assert_eq!(phi0_cyl(&c, &w), 0.5 * 0.5f64.powi(w.len() as i32));
        }
    }

    #[test]
    fn stationary_distribution_matches_eigenvector() {
        let c = sys(catalog::sys_c());
        let pi = stationary_distribution(&c).unwrap();
        // left eigenvector of [[1/2, 1/2], [1/2, 1/2]] for eigenvalue 1
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let b = sys(catalog::sys_b());
        assert!(matches!(stationary_distribution(&b), Err(Error::ExactModeUnavailable)));
    }

    #[test]
    fn mc_mass_of_first_cylinder_tracks_sample_mean() {
        let b = sys(catalog::sys_b());
        let mu = estimate_invariant(&b, 100_000, 1000, 5).unwrap();
        let w = Word::parse(&b, "e1").unwrap();
        let m = m_cyl(&b, &w, MeasureSource::Empirical(&mu)).unwrap();
        let mean = mu.integrate(|s| s.point[0]);
        assert!(((1.0 + mean.value) / 3.0 - m.value).abs() < 1e-12);
        assert!(m.stderr > 0.0);
    }

    #[test]
    fn exact_tables_have_unit_density() {
        let a = sys(catalog::sys_a());
        let t = build_table(&a, 4, MeasureSource::Exact).unwrap();
        assert_eq!(t.rows().len(), 16);
        assert!(t.rows().iter().all(|r| r.z == 1.0));
        let c = sys(catalog::sys_c());
        let t = build_table(&c, 3, MeasureSource::Exact).unwrap();
        assert!(t.rows().iter().all(|r| (r.z - 1.0).abs() < 1e-12));
    }

    #[test]
    fn mc_table_on_place_dependent_system() {
        let b = sys(catalog::sys_b());
        let mu = estimate_invariant(&b, 20_000, 500, 9).unwrap();
        let t = build_table(&b, 2, MeasureSource::Empirical(&mu)).unwrap();
        assert_eq!(t.rows().len(), 4);
        let total = t.total_m();
        assert!((total.value - 1.0).abs() <= 1e-12 + 3.0 * total.stderr);
        let top = t.max_log_z().unwrap();
        assert!(top.log_z <= 2.0 + 3.0 * top.z_stderr() / top.z);
    }

    #[test]
    fn refinements_are_consistent() {
        let c = sys(catalog::sys_c());
        let t2 = build_table(&c, 2, MeasureSource::Exact).unwrap();
        let t3 = build_table(&c, 3, MeasureSource::Exact).unwrap();
        assert!(consistency(&t2, &t3).unwrap().pass);
        let b = sys(catalog::sys_b());
        let mu = estimate_invariant(&b, 5_000, 100, 2).unwrap();
        let t1 = build_table(&b, 1, MeasureSource::Empirical(&mu)).unwrap();
        let t2 = build_table(&b, 2, MeasureSource::Empirical(&mu)).unwrap();
        let rep = consistency(&t1, &t2).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn cylinder_set_parsing() {
        let c = sys(catalog::sys_c());
        let q = CylinderSet::parse(&c, "e12.e21+e11.e11").unwrap();
        assert_eq!(q.descriptor(&c), "e11.e11+e12.e21");
        assert_eq!(CylinderSet::parse(&c, "all").unwrap().len(), 4);
        assert_eq!(CylinderSet::parse(&c, "all:2").unwrap().len(), 8);
        assert!(CylinderSet::parse(&c, "e11+e11").is_err());
        assert!(CylinderSet::parse(&c, "e11+e11.e12").is_err());
    }

    #[test]
    fn missing_support_vertex_is_flagged() {
        let mut cfg = catalog::sys_c();
        cfg.support_set = Some(vec![1]);
        let c = sys(cfg);
        assert!(matches!(
            build_table(&c, 1, MeasureSource::Exact),
            Err(Error::AbsoluteContinuityViolation { .. })
        ));
    }
}
