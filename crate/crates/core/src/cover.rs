//! Upper bounds on `Φ(λ')(Q)` from disjoint covers by shifted cylinders.
//!
//! A piece `(m, w)` with `m <= 0` is the set `A_m = S^{-m}(_1[w])`, the
//! sequences showing `w` on coordinates `1+m ..= |w|+m`; its cost is
//! `φ₀(S^m A_m) = Φ₀(λ')(_1[w])`. Every union of pieces is determined by the
//! coordinates in the window `[1-W, n]`, so coverage and disjointness are
//! decided on the admissible words of that window. Words that are not
//! admissible carry no mass, and restricting pieces to admissible words
//! never increases the cost of a cover.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cylinder::{enumerate_words, phi0_cyl, phi0_set, CylinderSet, DEFAULT_WORD_CAP};
use crate::error::{Error, Result};
use crate::model::{EdgeId, MarkovSystem, SystemConfig};
use crate::stats::{compensated_sum, Estimate};
use crate::word::Word;

/// Default node budget for one search.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Relative slack used for pruning and cost comparisons.
const COST_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoverPiece {
    /// `m <= 0`.
    pub shift: i64,
    pub word: Word,
}

impl CoverPiece {
    /// First and last constrained coordinates.
    pub fn coordinates(&self) -> (i64, i64) {
        (1 + self.shift, self.word.len() as i64 + self.shift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverSearch {
    pub max_shift: usize,
    pub max_depth: usize,
    pub budget: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl CoverSearch {
    pub fn new(max_shift: usize, max_depth: usize) -> Self {
        CoverSearch { max_shift, max_depth, budget: DEFAULT_BUDGET, workers: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverOutcome {
    pub cost: f64,
    /// Sorted by shift, then word.
    pub pieces: Vec<CoverPiece>,
    /// `false` when the budget ran out before the search was exhausted.
    pub complete: bool,
    pub nodes: u64,
    /// Cost of covering `Q` by its own words at shift 0.
    pub trivial_cost: f64,
}

struct Piece {
    piece: CoverPiece,
    cost: f64,
    set: FixedBitSet,
}

/// Pieces and query over the admissible words of the window.
struct Instance {
    pieces: Vec<Piece>,
    query: FixedBitSet,
    /// Pieces containing each window word, cheapest first.
    containing: Vec<Vec<usize>>,
    /// `min_{P ∋ u} c(P) / |P ∩ Q|`.
    share: Vec<f64>,
}

fn build_instance(sys: &MarkovSystem, q: &CylinderSet, w: usize, n: usize) -> Result<Instance> {
    let len = w + n;
    let window = enumerate_words(sys, len, None, DEFAULT_WORD_CAP)?;
    let nw = window.len();

    // Each (start, length) slice of a window word names one piece.
    let mut by_key: HashMap<(usize, Vec<EdgeId>), usize> = HashMap::new();
    let mut raw: Vec<(CoverPiece, FixedBitSet)> = Vec::new();
    for (i, u) in window.iter().enumerate() {
        for s in 0..=w {
            let start = w - s;
            for l in 1..=n {
                let key = (start, u.edges()[start..start + l].to_vec());
                let idx = *by_key.entry(key).or_insert_with(|| {
                    raw.push((
                        CoverPiece { shift: -(s as i64), word: u.slice(start, l) },
                        FixedBitSet::with_capacity(nw),
                    ));
                    raw.len() - 1
                });
                raw[idx].1.insert(i);
            }
        }
    }

    let mut query = FixedBitSet::with_capacity(nw);
    let qwords: BTreeSet<&[EdgeId]> = q.words().iter().map(|w| w.edges()).collect();
    for (i, u) in window.iter().enumerate() {
        if qwords.contains(&u.edges()[w..w + q.depth()]) {
            query.insert(i);
        }
    }

    // Keep useful pieces; among pieces with equal sets keep the cheapest.
    let mut best: HashMap<Vec<usize>, Piece> = HashMap::new();
    for (piece, set) in raw {
        if set.is_disjoint(&query) {
            continue;
        }
        let cost = phi0_cyl(sys, &piece.word);
        let key: Vec<usize> = set.ones().collect();
        let better = best.get(&key).is_none_or(|p| (cost, &piece) < (p.cost, &p.piece));
        if better {
            best.insert(key, Piece { piece, cost, set });
        }
    }
    let mut pieces: Vec<Piece> = best.into_values().collect();
    pieces.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.piece.cmp(&b.piece)));

    let mut containing = vec![Vec::new(); nw];
    let mut share = vec![f64::INFINITY; nw];
    for (k, p) in pieces.iter().enumerate() {
        let hits = p.set.intersection(&query).count() as f64;
        for u in p.set.ones() {
            containing[u].push(k);
            share[u] = share[u].min(p.cost / hits);
        }
    }
    Ok(Instance { pieces, query, containing, share })
}

/// State shared by the branches of one search.
struct Shared<'a> {
    inst: &'a Instance,
    nodes: AtomicU64,
    budget: u64,
    exhausted: AtomicBool,
    cut: AtomicBool,
}

/// Best cover seen by one sequential branch.
struct Branch {
    incumbent: f64,
    best: Option<(f64, Vec<usize>)>,
}

impl Branch {
    fn slack(&self) -> f64 {
        COST_SLACK * self.incumbent.max(1.0)
    }
}

fn canonical(inst: &Instance, chosen: &[usize]) -> (f64, Vec<usize>) {
    let mut sorted = chosen.to_vec();
    sorted.sort_unstable();
    (compensated_sum(sorted.iter().map(|&k| inst.pieces[k].cost)), sorted)
}

impl Shared<'_> {
    fn dfs(&self, br: &mut Branch, covered: &mut FixedBitSet, cost: f64, chosen: &mut Vec<usize>, depth_left: usize) {
        if self.nodes.fetch_add(1, Ordering::Relaxed) >= self.budget {
            self.exhausted.store(true, Ordering::Relaxed);
            return;
        }
        let inst = self.inst;
        let mut first = None;
        let mut lb = cost;
        for u in inst.query.ones() {
            if !covered.contains(u) {
                first.get_or_insert(u);
                lb += inst.share[u];
            }
        }
        let Some(u) = first else {
            let (c, list) = canonical(inst, chosen);
            if c < br.incumbent - br.slack() {
                br.incumbent = c;
                br.best = Some((c, list));
            }
            return;
        };
        if lb >= br.incumbent - br.slack() {
            return;
        }
        if depth_left == 0 {
            self.cut.store(true, Ordering::Relaxed);
            return;
        }
        for &k in &inst.containing[u] {
            let p = &inst.pieces[k];
            if cost + p.cost >= br.incumbent - br.slack() || !p.set.is_disjoint(covered) {
                continue;
            }
            covered.union_with(&p.set);
            chosen.push(k);
            self.dfs(br, covered, cost + p.cost, chosen, depth_left - 1);
            chosen.pop();
            covered.difference_with(&p.set);
            if self.exhausted.load(Ordering::Relaxed) {
                return;
            }
        }
    }

    /// One depth-limited pass. The branches on the first query word run in
    /// parallel, each against the incumbent fixed at the start of the pass,
    /// so the pass result does not depend on scheduling.
    fn pass(&self, depth_limit: usize, incumbent: f64) -> Option<(f64, Vec<usize>)> {
        let inst = self.inst;
        let u = inst.query.ones().next()?;
        inst.containing[u]
            .par_iter()
            .filter_map(|&k| {
                let mut br = Branch { incumbent, best: None };
                let p = &inst.pieces[k];
                if self.exhausted.load(Ordering::Relaxed) || p.cost >= incumbent - br.slack() {
                    return None;
                }
                let mut covered = p.set.clone();
                let mut chosen = vec![k];
                self.dfs(&mut br, &mut covered, p.cost, &mut chosen, depth_limit - 1);
                br.best
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
    }
}

impl CoverSearch {
    /// Cheapest disjoint cover of `q` with shifts `0..=W` and words of
    /// length at most `max(n, depth of q)`, found by depth-first
    /// branch-and-bound under iterative deepening on the piece count.
    ///
    /// Starting from the trivial cover, a cover replaces the incumbent only
    /// if it is cheaper by more than a relative `1e-12`.
    pub fn phi_upper(&self, sys: &MarkovSystem, q: &CylinderSet) -> Result<CoverOutcome> {
        match self.workers {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::InvalidPlan(e.to_string()))?
                .install(|| self.search(sys, q)),
            None => self.search(sys, q),
        }
    }

    fn search(&self, sys: &MarkovSystem, q: &CylinderSet) -> Result<CoverOutcome> {
        let n = self.max_depth.max(q.depth());
        let inst = build_instance(sys, q, self.max_shift, n)?;
        let trivial_cost = phi0_set(sys, q);
        let shared = Shared {
            inst: &inst,
            nodes: AtomicU64::new(0),
            budget: self.budget,
            exhausted: AtomicBool::new(false),
            cut: AtomicBool::new(false),
        };
        let mut incumbent = trivial_cost;
        let mut best: Option<Vec<usize>> = None;
        let mut complete = false;
        for limit in 1..=inst.query.count_ones(..) {
            shared.cut.store(false, Ordering::Relaxed);
            if let Some((c, list)) = shared.pass(limit, incumbent) {
                incumbent = c;
                best = Some(list);
            }
            if shared.exhausted.load(Ordering::Relaxed) {
                break;
            }
            if !shared.cut.load(Ordering::Relaxed) {
                complete = true;
                break;
            }
        }
        if !shared.exhausted.load(Ordering::Relaxed) {
            complete = true;
        }
        let mut pieces: Vec<CoverPiece> = match best {
            Some(list) => list.iter().map(|&k| inst.pieces[k].piece.clone()).collect(),
            None => q
                .words()
                .iter()
                .map(|w| CoverPiece { shift: 0, word: w.clone() })
                .collect(),
        };
        pieces.sort_by(|a, b| b.shift.cmp(&a.shift).then_with(|| a.word.cmp(&b.word)));
        Ok(CoverOutcome {
            cost: incumbent,
            pieces,
            complete,
            nodes: shared.nodes.load(Ordering::Relaxed),
            trivial_cost,
        })
    }
}

/// Checks that `pieces` are pairwise disjoint and cover `q`, by expanding
/// everything to explicit sets of admissible window words. Returns the
/// recomputed cost.
pub fn verify_cover(sys: &MarkovSystem, q: &CylinderSet, pieces: &[CoverPiece]) -> Result<f64> {
    if pieces.is_empty() {
        return Err(Error::CertificateInvalid("coverage: no pieces".into()));
    }
    let mut lo = 1i64;
    let mut hi = q.depth() as i64;
    for p in pieces {
        if p.shift > 0 {
            return Err(Error::CertificateInvalid(format!("piece with positive shift {}", p.shift)));
        }
        let (a, b) = p.coordinates();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let len = (hi - lo + 1) as usize;

    // Admissible window words, grown edge by edge.
    let mut window: BTreeSet<Vec<EdgeId>> = (0..sys.edges().len()).map(|e| vec![EdgeId(e)]).collect();
    for _ in 1..len {
        window = window
            .iter()
            .flat_map(|u| {
                let v = sys.edge(*u.last().unwrap()).target;
                sys.out_edges(v).iter().map(move |&e| {
                    let mut next = u.clone();
                    next.push(e);
                    next
                })
            })
            .collect();
    }
    let matches = |u: &[EdgeId], first: i64, w: &Word| {
        let start = (first - lo) as usize;
        &u[start..start + w.len()] == w.edges()
    };
    let expand = |first: i64, w: &Word| -> BTreeSet<Vec<EdgeId>> {
        window.iter().filter(|u| matches(u, first, w)).cloned().collect()
    };

    let sets: Vec<BTreeSet<Vec<EdgeId>>> = pieces.iter().map(|p| expand(p.coordinates().0, &p.word)).collect();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if !sets[i].is_disjoint(&sets[j]) {
                return Err(Error::CertificateInvalid(format!(
                    "disjointness: pieces {i} and {j} overlap"
                )));
            }
        }
    }
    let union: BTreeSet<&Vec<EdgeId>> = sets.iter().flatten().collect();
    for w in q.words() {
        if let Some(u) = expand(1, w).iter().find(|u| !union.contains(u)) {
            let shown: Vec<&str> = u.iter().map(|e| sys.edge(*e).id.as_str()).collect();
            return Err(Error::CertificateInvalid(format!("coverage: {} is not covered", shown.join("."))));
        }
    }
    let mut costs: Vec<f64> = pieces.iter().map(|p| phi0_cyl(sys, &p.word)).collect();
    costs.sort_by(f64::total_cmp);
    Ok(compensated_sum(costs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificatePiece {
    pub shift: i64,
    pub word: String,
}

/// Self-contained record of a cover: the system, the query, the pieces and
/// the claimed cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverCertificate {
    pub system: SystemConfig,
    pub query: Vec<String>,
    pub max_shift: usize,
    pub max_depth: usize,
    pub complete: bool,
    pub pieces: Vec<CertificatePiece>,
    pub cost: f64,
}

impl CoverCertificate {
    pub fn new(sys: &MarkovSystem, q: &CylinderSet, search: &CoverSearch, outcome: &CoverOutcome) -> Self {
        CoverCertificate {
            system: sys.config().clone(),
            query: q.words().iter().map(|w| w.to_string_in(sys)).collect(),
            max_shift: search.max_shift,
            max_depth: search.max_depth.max(q.depth()),
            complete: outcome.complete,
            pieces: outcome
                .pieces
                .iter()
                .map(|p| CertificatePiece { shift: p.shift, word: p.word.to_string_in(sys) })
                .collect(),
            cost: outcome.cost,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    /// Re-checks the certificate from scratch; returns the recomputed cost.
    pub fn verify(&self) -> Result<f64> {
        let invalid = |msg: String| Error::CertificateInvalid(msg);
        let sys = MarkovSystem::from_config(&self.system).map_err(|e| invalid(format!("system: {e}")))?;
        let words = self
            .query
            .iter()
            .map(|w| Word::parse(&sys, w))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| invalid(format!("query: {e}")))?;
        let q = CylinderSet::new(words).map_err(|e| invalid(format!("query: {e}")))?;
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let word = Word::parse(&sys, &p.word).map_err(|e| invalid(format!("piece: {e}")))?;
            if p.shift > 0 || (-p.shift) as usize > self.max_shift || word.len() > self.max_depth {
                return Err(invalid(format!("piece ({}, {}) outside the search window", p.shift, p.word)));
            }
            pieces.push(CoverPiece { shift: p.shift, word });
        }
        let cost = verify_cover(&sys, &q, &pieces)?;
        if (cost - self.cost).abs() > 1e-12 {
            return Err(invalid(format!("cost mismatch: claimed {}, recomputed {cost}", self.cost)));
        }
        Ok(cost)
    }
}

/// Reads and verifies a certificate file.
pub fn verify_certificate(path: &Path) -> Result<f64> {
    let text = std::fs::read_to_string(path)?;
    let cert: CoverCertificate =
        serde_json::from_str(&text).map_err(|e| Error::CertificateInvalid(format!("parse: {e}")))?;
    cert.verify()
}

/// `lower <= upper + 3σ`, with `margin = upper - lower`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: f64,
    pub lower_stderr: f64,
    pub upper: f64,
    pub margin: f64,
    pub pass: bool,
}

pub fn consistency_check(lower: Estimate, upper: f64) -> Sandwich {
    let slack = COST_SLACK * upper.abs().max(1.0);
    Sandwich {
        lower: lower.value,
        lower_stderr: lower.stderr,
        upper,
        margin: upper - lower.value,
        pass: lower.value <= upper + 3.0 * lower.stderr + slack,
    }
}
