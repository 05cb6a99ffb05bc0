//! Simulation of the Markov process on the state space, the empirical
//! invariant measure, and the average-contraction estimate.
//!
//! One transition from `(i, x)` picks an out-edge `e` of `i` with probability
//! `p_e(x)` and moves to `(t(e), w_e(x))`. Randomness comes from ChaCha8
//! streams: the invariant-measure chain uses stream 0 of the seed, Monte Carlo
//! batch `b` uses stream `b + 1`, so results do not depend on thread count.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dist, EdgeId, MarkovSystem, VertexId};
use crate::stats::{compensated_sum, BatchLayout, BatchedValue, Estimate, DEFAULT_BATCHES};

/// Default number of discarded steps before recording samples.
pub const DEFAULT_BURN_IN: usize = 1000;

/// A point of the state space together with the vertex whose region holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub vertex: VertexId,
    pub point: Vec<f64>,
}

impl State {
    pub fn base(sys: &MarkovSystem, vertex: VertexId) -> Self {
        State { vertex, point: sys.base_point(vertex).to_vec() }
    }
}

/// Seeded generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF edge choice for a uniform variate `u` in `[0, 1)`.
///
/// Out-edges are scanned in id order; rounding slack in the cumulative sum
/// falls to the last edge.
pub fn select_edge(sys: &MarkovSystem, vertex: VertexId, point: &[f64], u: f64) -> EdgeId {
    let out = sys.out_edges(vertex);
    let mut acc = 0.0;
    for &e in out {
        acc += sys.edge(e).prob.eval(point);
        if u < acc {
            return e;
        }
    }
    *out.last().expect("validated systems have out-edges")
}

/// Moves along edge `e` from `state`.
pub fn transition(sys: &MarkovSystem, state: &State, e: EdgeId) -> State {
    let edge = sys.edge(e);
    debug_assert_eq!(edge.source, state.vertex);
    State { vertex: edge.target, point: edge.map.apply(&state.point) }
}

/// One step of the chain.
pub fn step<R: Rng + ?Sized>(sys: &MarkovSystem, state: &State, rng: &mut R) -> (EdgeId, State) {
    let u: f64 = rng.random();
    let e = select_edge(sys, state.vertex, &state.point, u);
    (e, transition(sys, state, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub edge: EdgeId,
    pub point: Vec<f64>,
}

/// A realized path of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub start: State,
    pub steps: Vec<TrajectoryStep>,
}

impl TrajectoryRecord {
    /// Consecutive edges chain up, starting at the start vertex.
    pub fn is_admissible(&self, sys: &MarkovSystem) -> bool {
        let mut vertex = self.start.vertex;
        for s in &self.steps {
            let e = sys.edge(s.edge);
            if e.source != vertex {
                return false;
            }
            vertex = e.target;
        }
        true
    }
}

pub fn simulate_trajectory(sys: &MarkovSystem, start: State, n_steps: usize, seed: u64) -> TrajectoryRecord {
    let mut rng = stream_rng(seed, 0);
    let mut state = start.clone();
    let steps = (0..n_steps)
        .map(|_| {
            let (edge, next) = step(sys, &state, &mut rng);
            state = next;
            TrajectoryStep { edge, point: state.point.clone() }
        })
        .collect();
    TrajectoryRecord { seed, start, steps }
}

// ---------------------------------------------------------------------------
// Empirical measure
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub vertex: VertexId,
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Weighted sample approximation of the invariant measure `μ`.
///
/// Sample order is kept: batch-means errors assume that neighbouring samples
/// may be correlated.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    samples: Vec<Sample>,
    layout: BatchLayout,
}

impl EmpiricalMeasure {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidMeasure("no samples".into()));
        }
        let k = samples[0].point.len();
        if let Some(s) = samples.iter().find(|s| !(s.weight > 0.0 && s.weight.is_finite())) {
            return Err(Error::InvalidMeasure(format!("non-positive weight {}", s.weight)));
        }
        if samples.iter().any(|s| s.point.len() != k) {
            return Err(Error::InvalidMeasure("mixed sample dimensions".into()));
        }
        let total = compensated_sum(samples.iter().map(|s| s.weight));
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
        let layout = BatchLayout::new(&weights, DEFAULT_BATCHES);
        Ok(EmpiricalMeasure { samples, layout })
    }

    /// Equal weights over `states`.
    pub fn uniform(states: Vec<State>) -> Result<Self> {
        let w = 1.0 / states.len().max(1) as f64;
        Self::new(
            states
                .into_iter()
                .map(|s| Sample { vertex: s.vertex, point: s.point, weight: w })
                .collect(),
        )
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn layout(&self) -> &BatchLayout {
        &self.layout
    }

    /// Checks that every sample lies in the region of its vertex.
    pub fn check_against(&self, sys: &MarkovSystem) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.vertex.0 >= sys.vertices().len() || s.point.len() != sys.dimension() {
                return Err(Error::InvalidMeasure(format!("sample {i} does not fit the system")));
            }
            if !sys.vertex(s.vertex).region.contains(&s.point) {
                return Err(Error::InvalidMeasure(format!(
                    "sample {i} lies outside the region of vertex {}",
                    s.vertex.label()
                )));
            }
        }
        Ok(())
    }

    /// `∫ f dμ` with its per-batch means.
    pub fn integrate_batched<F: Fn(&Sample) -> f64>(&self, f: F) -> BatchedValue {
        let values: Vec<f64> = self.samples.iter().map(|s| s.weight * f(s)).collect();
        let batches = self
            .layout
            .bounds
            .windows(2)
            .zip(&self.layout.weights)
            .map(|(w, bw)| compensated_sum(values[w[0]..w[1]].iter().copied()) / bw)
            .collect();
        BatchedValue { value: compensated_sum(values.iter().copied()), batches }
    }

    pub fn integrate<F: Fn(&Sample) -> f64>(&self, f: F) -> Estimate {
        let b = self.integrate_batched(f);
        Estimate { value: b.value, stderr: self.layout.stderr(&b.batches) }
    }

    /// `Ĉ = Σ_j ∫_{K_j} d(x, x_j) dμ(x)`.
    pub fn base_distance(&self, sys: &MarkovSystem) -> Estimate {
        self.integrate(|s| dist(&s.point, sys.base_point(s.vertex)))
    }

    /// CSV with columns `vertex, x_1 … x_k, weight`; vertices are 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k = self.samples[0].point.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["vertex".to_string()];
        header.extend((1..=k).map(|i| format!("x_{i}")));
        header.push("weight".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.vertex.label().to_string()];
            rec.extend(s.point.iter().map(|x| x.to_string()));
            rec.push(s.weight.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let k = header.len().saturating_sub(2);
        let columns_ok = header.len() >= 3
            && &header[0] == "vertex"
            && &header[header.len() - 1] == "weight"
            && (1..=k).all(|i| header[i] == format!("x_{i}"));
        if !columns_ok {
            return Err(Error::InvalidMeasure("expected columns vertex, x_1..x_k, weight".into()));
        }
        let bad = |what: &str| Error::InvalidMeasure(format!("unparsable {what}"));
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vertex: usize = rec[0].trim().parse().map_err(|_| bad("vertex"))?;
            if vertex == 0 {
                return Err(bad("vertex"));
            }
            let point = (1..=k)
                .map(|i| rec[i].trim().parse::<f64>().map_err(|_| bad("coordinate")))
                .collect::<Result<Vec<_>>>()?;
            let weight = rec[k + 1].trim().parse::<f64>().map_err(|_| bad("weight"))?;
            samples.push(Sample { vertex: VertexId(vertex - 1), point, weight });
        }
        Self::new(samples)
    }
}

/// Ergodic-average approximation of `μ` from one chain started at the base
/// point of the first support vertex. After `burn_in` discarded steps, the
/// state after each of the next `n_samples` steps is recorded.
pub fn estimate_invariant(sys: &MarkovSystem, n_samples: usize, burn_in: usize, seed: u64) -> Result<EmpiricalMeasure> {
    if n_samples == 0 {
        return Err(Error::InvalidMeasure("n_samples must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut state = State::base(sys, sys.support()[0]);
    for _ in 0..burn_in {
        state = step(sys, &state, &mut rng).1;
    }
    let states = (0..n_samples)
        .map(|_| {
            state = step(sys, &state, &mut rng).1;
            state.clone()
        })
        .collect();
    EmpiricalMeasure::uniform(states)
}

/// One line of the average-contraction check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub i: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// `a^i · Ĉ`.
    pub bound: f64,
}

impl ContractionRow {
    pub fn holds(&self, sigmas: f64) -> bool {
        self.estimate <= self.bound + sigmas * self.stderr
    }
}

/// Monte Carlo estimate of
/// `∫∫ d(w_{σ_i}∘…∘w_{σ_1} x, w_{σ_i}∘…∘w_{σ_1} x_{i(σ_1)}) dP¹_x dμ(x)`
/// for `i = 1..=i_max`, next to the bound `a^i Ĉ`.
///
/// Each draw picks a sample of `mu` by weight, runs the chain from it, and
/// pushes the base point of the sample's vertex through the same maps.
pub fn check_average_contraction(
    sys: &MarkovSystem,
    mu: &EmpiricalMeasure,
    i_max: usize,
    n_mc: usize,
    seed: u64,
) -> Vec<ContractionRow> {
    let rate = sys.contraction_rate();
    let c_hat = mu.base_distance(sys).value;
    if n_mc == 0 || i_max == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = mu.samples().iter().map(|s| s.weight).collect();
    let picker = WeightedIndex::new(&weights).expect("measure weights are positive");
    let n_batches = n_mc.min(DEFAULT_BATCHES);
    let sums: Vec<(usize, Vec<f64>)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let lo = b * n_mc / n_batches;
            let hi = (b + 1) * n_mc / n_batches;
            let mut rng = stream_rng(seed, b as u64 + 1);
            let mut per_step = vec![Vec::with_capacity(hi - lo); i_max];
            for _ in lo..hi {
                let s = &mu.samples()[picker.sample(&mut rng)];
                let mut x = State { vertex: s.vertex, point: s.point.clone() };
                let mut y = sys.base_point(s.vertex).to_vec();
                for slot in per_step.iter_mut() {
                    let (e, next) = step(sys, &x, &mut rng);
                    y = sys.edge(e).map.apply(&y);
                    x = next;
                    slot.push(dist(&x.point, &y));
                }
            }
            let count = hi - lo;
            (count, per_step.into_iter().map(compensated_sum).collect())
        })
        .collect();

    let layout = BatchLayout {
        bounds: Vec::new(),
        weights: sums.iter().map(|(c, _)| *c as f64 / n_mc as f64).collect(),
    };
    (0..i_max)
        .map(|i| {
            let total = compensated_sum(sums.iter().map(|(_, s)| s[i]));
            let batch_means: Vec<f64> = sums.iter().map(|(c, s)| s[i] / *c as f64).collect();
            ContractionRow {
                i: i + 1,
                estimate: total / n_mc as f64,
                stderr: layout.stderr(&batch_means),
                bound: rate.powi(i as i32 + 1) * c_hat,
            }
        })
        .collect()
}
