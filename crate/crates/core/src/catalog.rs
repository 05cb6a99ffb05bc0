//! Reference systems used throughout the tests, the guide and the CLI.
//!
//! * `sys_a`: one vertex `[0, 1]`, the two halving maps `x/2` and `x/2 + 1/2`
//!   with constant probability `1/2`. Its invariant measure is Lebesgue.
//! * `sys_b`: the maps of `sys_a` with place-dependent probabilities
//!   `p_e1(x) = (1 + x)/3`, `p_e2(x) = (2 - x)/3`.
//! * `sys_c`: two vertices `[0, 1]` and `[2, 3]`, four maps of slope `1/3`
//!   connecting each region to each, constant probability `1/2`.

use crate::model::{
    ContractionMode, EdgeConfig, ProbConfig, ProbabilityFamily, SystemConfig, VertexConfig,
};

fn interval(index: usize, lower: f64, upper: f64, base: f64) -> VertexConfig {
    VertexConfig { index, lower: vec![lower], upper: vec![upper], base_point: vec![base] }
}

fn edge(id: &str, source: usize, target: usize, slope: f64, offset: f64, prob: ProbConfig) -> EdgeConfig {
    EdgeConfig {
        id: id.to_string(),
        source,
        target,
        linear: vec![slope],
        offset: vec![offset],
        prob,
    }
}

fn constant(p: f64) -> ProbConfig {
    ProbConfig { family: ProbabilityFamily::Constant, alpha: p, beta: Vec::new() }
}

fn affine(alpha: f64, beta: f64) -> ProbConfig {
    ProbConfig { family: ProbabilityFamily::Affine, alpha, beta: vec![beta] }
}

pub fn sys_a() -> SystemConfig {
    SystemConfig {
        dimension: 1,
        vertices: vec![interval(1, 0.0, 1.0, 0.0)],
        edges: vec![
            edge("e1", 1, 1, 0.5, 0.0, constant(0.5)),
            edge("e2", 1, 1, 0.5, 0.5, constant(0.5)),
        ],
        support_set: Some(vec![1]),
        contraction: ContractionMode::Uniform,
    }
}

pub fn sys_b() -> SystemConfig {
    SystemConfig {
        dimension: 1,
        vertices: vec![interval(1, 0.0, 1.0, 0.0)],
        edges: vec![
            edge("e1", 1, 1, 0.5, 0.0, affine(1.0 / 3.0, 1.0 / 3.0)),
            edge("e2", 1, 1, 0.5, 0.5, affine(2.0 / 3.0, -1.0 / 3.0)),
        ],
        support_set: Some(vec![1]),
        contraction: ContractionMode::Uniform,
    }
}

pub fn sys_c() -> SystemConfig {
    SystemConfig {
        dimension: 1,
        vertices: vec![interval(1, 0.0, 1.0, 0.0), interval(2, 2.0, 3.0, 2.0)],
        edges: vec![
            edge("e11", 1, 1, 1.0 / 3.0, 2.0 / 3.0, constant(0.5)),
            edge("e12", 1, 2, 1.0 / 3.0, 2.0, constant(0.5)),
            edge("e21", 2, 1, 1.0 / 3.0, -2.0 / 3.0, constant(0.5)),
            edge("e22", 2, 2, 1.0 / 3.0, 5.0 / 3.0, constant(0.5)),
        ],
        support_set: Some(vec![1, 2]),
        contraction: ContractionMode::Uniform,
    }
}

/// Looks a reference system up by name (`sys-a`, `sys-b`, `sys-c`).
pub fn by_name(name: &str) -> Option<SystemConfig> {
    match name.to_ascii_lowercase().replace('_', "-").as_str() {
        "sys-a" | "a" => Some(sys_a()),
        "sys-b" | "b" => Some(sys_b()),
        "sys-c" | "c" => Some(sys_c()),
        _ => None,
    }
}
