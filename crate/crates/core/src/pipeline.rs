//! Experiment plans and the end-to-end `run`.
//!
//! A run walks through the stages validate, simulate, constants, tables,
//! bounds, covers and consistency, writing its artifacts into the output
//! directory as it goes:
//!
//! | File | Contents |
//! |------|----------|
//! | `system.json` | the validated system config |
//! | `plan.json` | the plan as executed (seed after any override) |
//! | `measure.csv` | samples of the empirical invariant measure |
//! | `tables/depth_<n>.csv` | one cylinder table per requested depth |
//! | `bounds.json` | constants, bounds, series, checks, query results |
//! | `covers/<name>.json` | one cover certificate per query |
//! | `report.md` | human-readable summary of `bounds.json` |
//! | `MANIFEST` | status, last stage reached, files written |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{derive_constants, DEFAULT_TAIL_TOL};
use crate::cover::{consistency_check, CoverCertificate, CoverSearch, Sandwich, DEFAULT_BUDGET};
use crate::cylinder::{
    build_table, consistency, count_words, m_set, ConsistencyReport, CylinderSet, CylinderTable,
    MeasureSource, DEFAULT_WORD_CAP,
};
use crate::divergence::{
    corollary_lower_bound, evaluate_bounds, general_method_diagnostic, kl_n, kstar_from_tables, BoundReport,
    Check, DiagnosticRow, KnEntry,
};
use crate::error::{Error, Result};
use crate::model::MarkovSystem;
use crate::sim::{check_average_contraction, estimate_invariant, ContractionRow, DEFAULT_BURN_IN};
use crate::stats::Estimate;

/// Environment variable that overrides the plan seed.
pub const SEED_ENV: &str = "CMSLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// `M` from the stationary vertex chain; constant probabilities only.
    Exact,
    /// `M` from the empirical invariant measure.
    MonteCarlo,
}

fn default_seed() -> u64 {
    42
}
fn default_mc_samples() -> usize {
    100_000
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}
fn default_kstar_max_depth() -> usize {
    3
}
fn default_budget() -> u64 {
    DEFAULT_BUDGET
}
fn default_cover_shift() -> usize {
    1
}
fn default_cover_depth() -> usize {
    3
}
fn default_contraction_steps() -> usize {
    8
}
fn default_contraction_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Path of the system config, or the name of a built-in system.
    pub system: PathBuf,
    pub mode: RunMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub depths: Vec<usize>,
    #[serde(default)]
    pub kstar_windows: Vec<usize>,
    /// `K*` is evaluated for the requested depths up to this one.
    #[serde(default = "default_kstar_max_depth")]
    pub kstar_max_depth: usize,
    #[serde(default = "default_budget")]
    pub cover_budget: u64,
    #[serde(default = "default_cover_shift")]
    pub cover_max_shift: usize,
    #[serde(default = "default_cover_depth")]
    pub cover_max_depth: usize,
    /// Cylinder set descriptors such as `all`, `e1` or `e1.e2+e2.e1`.
    #[serde(default)]
    pub queries: Vec<String>,
    #[serde(default = "default_contraction_steps")]
    pub contraction_steps: usize,
    #[serde(default = "default_contraction_samples")]
    pub contraction_samples: usize,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentPlan {
    /// A plan with default settings.
    pub fn new(system: impl Into<PathBuf>, mode: RunMode, depths: Vec<usize>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            system: system.into(),
            mode,
            seed: default_seed(),
            mc_samples: default_mc_samples(),
            burn_in: default_burn_in(),
            depths,
            kstar_windows: Vec::new(),
            kstar_max_depth: default_kstar_max_depth(),
            cover_budget: default_budget(),
            cover_max_shift: default_cover_shift(),
            cover_max_depth: default_cover_depth(),
            queries: Vec::new(),
            contraction_steps: default_contraction_steps(),
            contraction_samples: default_contraction_samples(),
            output_dir: output_dir.into(),
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidPlan(e.to_string()))
    }

    /// Reads a plan file, resolving `system` against the file's directory
    /// when a file of that name exists there.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut plan = Self::from_json(&fs::read_to_string(path)?)?;
        if plan.system.is_relative() {
            if let Some(candidate) = path.parent().map(|dir| dir.join(&plan.system)) {
                if candidate.exists() {
                    plan.system = candidate;
                }
            }
        }
        Ok(plan)
    }

    /// Applies the `CMSLAB_SEED` override, if set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidPlan(format!("{SEED_ENV}={v:?} is not a 64-bit integer")))?;
        }
        Ok(self)
    }

    /// Checks the plan against the system it will run on.
    pub fn check(&self, sys: &MarkovSystem) -> Result<()> {
        if self.depths.is_empty() {
            return Err(Error::InvalidPlan("no depths".into()));
        }
        if self.depths.contains(&0) {
            return Err(Error::InvalidPlan("depths must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidPlan("mc_samples must be at least 1".into()));
        }
        if self.mode == RunMode::Exact && !sys.all_constant_probabilities() {
            return Err(Error::ExactModeUnavailable);
        }
        let deepest = self.depths.iter().max().unwrap() + self.kstar_windows.iter().max().copied().unwrap_or(0);
        for n in self.depths.iter().copied().chain([deepest]) {
            let count = count_words(sys, n, None);
            if count > DEFAULT_WORD_CAP as u128 {
                return Err(Error::DepthOverflow { count, cap: DEFAULT_WORD_CAP });
            }
        }
        Ok(())
    }
}

/// Sizes the global worker pool. Must be called before any parallel work.
pub fn configure_workers(workers: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::InvalidPlan(format!("worker pool: {e}")))
}

/// Reads a system config from `path`, or takes a built-in reference
/// system (`sys-a`, `sys-b`, `sys-c`) when no such file exists.
pub fn load_system(path: &Path) -> Result<MarkovSystem> {
    if !path.exists() {
        if let Some(cfg) = path.to_str().and_then(crate::catalog::by_name) {
            return MarkovSystem::from_config(&cfg);
        }
    }
    MarkovSystem::from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Simulate,
    Constants,
    Tables,
    Bounds,
    Covers,
    Consistency,
    Done,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Simulate => "simulate",
            Stage::Constants => "constants",
            Stage::Tables => "tables",
            Stage::Bounds => "bounds",
            Stage::Covers => "covers",
            Stage::Consistency => "consistency",
            Stage::Done => "done",
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_RED_FLAG: i32 = 4;

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invalid(_)
        | Error::NoContraction { .. }
        | Error::DiniDivergence { .. }
        | Error::NotUniformlyContractive
        | Error::ExactModeUnavailable
        | Error::NoUniqueStationary
        | Error::InvalidPlan(_)
        | Error::InvalidCylinderSet(_)
        | Error::InadmissibleWord(_)
        | Error::UnknownEdge(_)
        | Error::InvalidMeasure(_)
        | Error::Json(_) => EXIT_VALIDATION,
        Error::DepthOverflow { .. } => EXIT_BUDGET,
        Error::AbsoluteContinuityViolation { .. } | Error::CauchyViolation { .. } | Error::CertificateInvalid(_) => {
            EXIT_RED_FLAG
        }
        Error::Io(_) | Error::Csv(_) => EXIT_FAILURE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub depth: usize,
    pub rows: usize,
    pub total_m: f64,
    pub total_m_stderr: f64,
    pub total_phi0: f64,
    pub k_n: f64,
    pub k_n_stderr: f64,
    pub max_log_z: f64,
    pub max_log_z_stderr: f64,
    pub max_log_z_word: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: String,
    pub descriptor: String,
    pub m: Estimate,
    pub phi0: f64,
    pub lower: Option<Estimate>,
    pub upper: f64,
    pub trivial_cost: f64,
    pub complete: bool,
    pub sandwich: Option<Sandwich>,
    pub certificate: String,
}

/// Contents of `bounds.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsArtifact {
    pub mode: RunMode,
    pub seed: u64,
    pub mc_samples: usize,
    pub burn_in: usize,
    pub report: BoundReport,
    pub tables: Vec<TableSummary>,
    pub consistency: Vec<ConsistencyReport>,
    pub average_contraction: Vec<ContractionRow>,
    pub whole_space_upper: Option<f64>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub queries: Vec<QueryResult>,
    pub all_checks_pass: bool,
    pub covers_complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// Stage reached; the failing stage when `error` is set.
    pub stage: Stage,
    pub error: Option<String>,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
        self.files.push(rel.to_string());
        Ok(())
    }
}

/// Executes `plan`; errors are reported through the outcome and `MANIFEST`.
pub fn run(plan: &ExperimentPlan) -> RunOutcome {
    let mut writer = Writer { dir: plan.output_dir.clone(), files: Vec::new() };
    let mut stage = Stage::Validate;
    let result = fs::create_dir_all(&plan.output_dir)
        .map_err(Error::from)
        .and_then(|_| execute(plan, &mut writer, &mut stage));
    let (exit_code, error) = match result {
        Ok(code) => (code, None),
        Err(e) => (exit_code(&e), Some(e.to_string())),
    };
    let mut manifest = String::new();
    let status = if error.is_some() { "failed" } else if exit_code == EXIT_OK { "ok" } else { "flagged" };
    let _ = writeln!(manifest, "status: {status}");
    let _ = writeln!(manifest, "exit_code: {exit_code}");
    let _ = writeln!(manifest, "stage: {}", stage.name());
    if let Some(e) = &error {
        let _ = writeln!(manifest, "error: {e}");
    }
    let _ = writeln!(manifest, "files:");
    for f in &writer.files {
        let _ = writeln!(manifest, "  {f}");
    }
    let _ = fs::write(plan.output_dir.join("MANIFEST"), manifest);
    RunOutcome { exit_code, stage, error, files: writer.files }
}

fn execute(plan: &ExperimentPlan, out: &mut Writer, stage: &mut Stage) -> Result<i32> {
    let sys = load_system(&plan.system)?;
    let config = sys.config().clone();
    plan.check(&sys)?;
    out.put("system.json", config.to_json().as_bytes())?;
    out.put("plan.json", serde_json::to_string_pretty(plan)?.as_bytes())?;

    *stage = Stage::Simulate;
    let mu = estimate_invariant(&sys, plan.mc_samples, plan.burn_in, plan.seed)?;
    let mut csv = Vec::new();
    mu.write_csv(&mut csv)?;
    out.put("measure.csv", &csv)?;

    *stage = Stage::Constants;
    let constants = derive_constants(&sys, &mu, DEFAULT_TAIL_TOL)?;
    let average_contraction = check_average_contraction(
        &sys,
        &mu,
        plan.contraction_steps,
        plan.contraction_samples,
        plan.seed.wrapping_add(1),
    );

    *stage = Stage::Tables;
    let source = match plan.mode {
        RunMode::Exact => MeasureSource::Exact,
        RunMode::MonteCarlo => MeasureSource::Empirical(&mu),
    };
    let mut depths = plan.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut tables: BTreeMap<usize, CylinderTable> = BTreeMap::new();
    let mut need: Vec<usize> = depths.clone();
    for &n in depths.iter().filter(|&&n| n <= plan.kstar_max_depth) {
        need.extend(plan.kstar_windows.iter().map(|w| n + w));
    }
    need.sort_unstable();
    need.dedup();
    for n in need {
        tables.insert(n, build_table(&sys, n, source)?);
    }
    for &n in &depths {
        let mut bytes = Vec::new();
        tables[&n].write_csv(&sys, &mut bytes)?;
        out.put(&format!("tables/depth_{n}.csv"), &bytes)?;
    }

    *stage = Stage::Bounds;
    let mut report = evaluate_bounds(&sys, &constants);
    let mut summaries = Vec::new();
    let mut checks = Vec::new();
    for &n in &depths {
        let t = &tables[&n];
        let k = kl_n(t);
        report.k_n_series.push(KnEntry { n, value: k.value, stderr: k.stderr });
        let total = t.total_m();
        let top = t.max_log_z().expect("tables have a row with positive reference mass");
        let top_stderr = if top.m > 0.0 { top.stderr / top.m } else { 0.0 };
        summaries.push(TableSummary {
            depth: n,
            rows: t.rows().len(),
            total_m: total.value,
            total_m_stderr: total.stderr,
            total_phi0: t.total_phi0(),
            k_n: k.value,
            k_n_stderr: k.stderr,
            max_log_z: top.log_z,
            max_log_z_stderr: top_stderr,
            max_log_z_word: top.word.to_string_in(&sys),
        });
        checks.push(Check::le(format!("K_{n} >= 0"), -k.value, 3.0 * k.stderr + 1e-12));
        checks.push(Check::le(
            format!("K_{n} <= bound (i)"),
            k.value,
            report.bound_i_conservative + 3.0 * k.stderr,
        ));
        if let Some(b2) = report.bound_ii_value {
            checks.push(Check::le(format!("max log Z at depth {n} <= bound (ii)"), top.log_z, b2 + 3.0 * top_stderr + 1e-12));
        }
    }
    for pair in report.k_n_series.clone().windows(2) {
        let sigma = (pair[0].stderr.powi(2) + pair[1].stderr.powi(2)).sqrt();
        checks.push(Check::le(
            format!("K_{} <= K_{}", pair[0].n, pair[1].n),
            pair[0].value - pair[1].value,
            3.0 * sigma + 1e-12,
        ));
    }
    let mut consistency_reports = Vec::new();
    for (&n, t) in &tables {
        if let Some(next) = tables.get(&(n + 1)) {
            let rep = consistency(t, next)?;
            checks.push(Check::le(
                format!("consistency between depths {n} and {}", n + 1),
                if rep.pass { 0.0 } else { 1.0 },
                0.0,
            ));
            consistency_reports.push(rep);
        }
    }

    let mut windows = plan.kstar_windows.clone();
    windows.sort_unstable();
    windows.dedup();
    for &n in depths.iter().filter(|&&n| n <= plan.kstar_max_depth) {
        let mut prev: Option<crate::divergence::KStar> = None;
        for &w in &windows {
            let ks = kstar_from_tables(&tables[&n], &tables[&(n + w)], w)?;
            if w == 0 {
                checks.push(Check::le(format!("K*_(0,{n}) = K_{n}"), (ks.value - ks.k_n).abs(), 0.0));
            }
            if let Some(p) = prev {
                checks.push(Check::le(
                    format!("K*_({},{n}) <= K*_({w},{n})", p.window),
                    p.value - ks.value,
                    3.0 * (p.stderr.powi(2) + ks.stderr.powi(2)).sqrt() + 1e-12,
                ));
            }
            report.kstar_estimates.push(ks);
            prev = Some(ks);
        }
    }
    for row in &average_contraction {
        checks.push(Check::le(
            format!("average contraction at step {}", row.i),
            row.estimate,
            row.bound + 3.0 * row.stderr,
        ));
    }
    checks.push(Check::le(
        "C_hat < b/(1-a)",
        constants.c_hat,
        constants.b / (1.0 - constants.a) + 3.0 * constants.c_hat_stderr,
    ));

    *stage = Stage::Covers;
    let search = CoverSearch {
        max_shift: plan.cover_max_shift,
        max_depth: plan.cover_max_depth,
        budget: plan.cover_budget,
        workers: plan.workers,
    };
    let mut covers_complete = true;
    let mut queries = Vec::new();
    let mut lowers = Vec::new();
    for (i, text) in plan.queries.iter().enumerate() {
        let q = CylinderSet::parse(&sys, text)?;
        let outcome = search.phi_upper(&sys, &q)?;
        covers_complete &= outcome.complete;
        let cert = CoverCertificate::new(&sys, &q, &search, &outcome);
        let name = format!("covers/query_{}.json", i + 1);
        out.put(&name, cert.to_json().as_bytes())?;
        let m = m_set(&sys, &q, source)?;
        let lower = match report.corollary_factor {
            Some(_) => Some(corollary_lower_bound(&report, m)?),
            None => None,
        };
        lowers.push((lower, outcome.cost));
        queries.push(QueryResult {
            query: text.clone(),
            descriptor: q.descriptor(&sys),
            m,
            phi0: outcome.trivial_cost,
            lower,
            upper: outcome.cost,
            trivial_cost: outcome.trivial_cost,
            complete: outcome.complete,
            sandwich: None,
            certificate: name,
        });
    }
    let mut whole_space_upper = None;
    let mut diagnostics = Vec::new();
    if !report.kstar_estimates.is_empty() {
        let q = CylinderSet::all(&sys, 1)?;
        let outcome = search.phi_upper(&sys, &q)?;
        covers_complete &= outcome.complete;
        let cert = CoverCertificate::new(&sys, &q, &search, &outcome);
        out.put("covers/whole_space.json", cert.to_json().as_bytes())?;
        whole_space_upper = Some(outcome.cost);
        diagnostics = report
            .kstar_estimates
            .iter()
            .map(|k| general_method_diagnostic(k, outcome.cost))
            .collect();
    }

    *stage = Stage::Consistency;
    for (qr, (lower, upper)) in queries.iter_mut().zip(lowers) {
        if let Some(lower) = lower {
            let s = consistency_check(lower, upper);
            checks.push(Check::le(format!("sandwich for {}", qr.query), s.lower, s.upper + 3.0 * s.lower_stderr));
            checks.last_mut().unwrap().pass = s.pass;
            qr.sandwich = Some(s);
        }
    }
    report.checks = checks;
    let all_checks_pass = report.all_pass();
    let artifact = BoundsArtifact {
        mode: plan.mode,
        seed: plan.seed,
        mc_samples: plan.mc_samples,
        burn_in: plan.burn_in,
        report,
        tables: summaries,
        consistency: consistency_reports,
        average_contraction,
        whole_space_upper,
        diagnostics,
        queries,
        all_checks_pass,
        covers_complete,
    };
    out.put("bounds.json", serde_json::to_string_pretty(&artifact)?.as_bytes())?;
    out.put("report.md", render_report(&sys, &artifact).as_bytes())?;
    *stage = Stage::Done;
    Ok(if !all_checks_pass {
        EXIT_RED_FLAG
    } else if !covers_complete {
        EXIT_BUDGET
    } else {
        EXIT_OK
    })
}

/// `x` with 12 significant digits.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

fn flag(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

/// Markdown rendering of `bounds.json`; every number shown appears there.
pub fn render_report(sys: &MarkovSystem, a: &BoundsArtifact) -> String {
    let r = &a.report;
    let k = &r.constants;
    let mut s = String::new();
    let mode = match a.mode {
        RunMode::Exact => "exact",
        RunMode::MonteCarlo => "monte carlo",
    };
    let _ = writeln!(s, "# cmslab run\n");
    let _ = writeln!(
        s,
        "Mode {mode}, seed {}, {} samples after {} burn-in steps. {} vertices, {} edges, |S| = {}.\n",
        a.seed,
        a.mc_samples,
        a.burn_in,
        sys.vertices().len(),
        sys.edges().len(),
        k.support_size
    );
    let _ = writeln!(s, "## Constants\n");
    let _ = writeln!(s, "| a | delta | d | b | C_hat | C_hat stderr |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    let _ = writeln!(
        s,
        "| {} | {} | {} | {} | {} | {} |\n",
        sig12(k.a),
        sig12(k.delta),
        sig12(k.d),
        sig12(k.b),
        sig12(k.c_hat),
        sig12(k.c_hat_stderr)
    );
    let _ = writeln!(s, "## Bounds\n");
    let _ = writeln!(s, "- bound (i): {}", sig12(r.bound_i_value));
    let _ = writeln!(s, "- bound (i) with C_hat + 3 stderr: {}", sig12(r.bound_i_conservative));
    match (r.bound_ii_value, r.corollary_factor) {
        (Some(b), Some(f)) => {
            let _ = writeln!(s, "- bound (ii): {}", sig12(b));
            let _ = writeln!(s, "- lower bound factor: {}\n", sig12(f));
        }
        _ => {
            let _ = writeln!(s, "- bound (ii) and lower bound factor: not available in average-contraction mode\n");
        }
    }
    let _ = writeln!(s, "## Cylinder tables\n");
    let _ = writeln!(s, "| n | rows | sum M | K_n | stderr | max log Z | at |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|");
    for t in &a.tables {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            t.depth,
            t.rows,
            sig12(t.total_m),
            sig12(t.k_n),
            sig12(t.k_n_stderr),
            sig12(t.max_log_z),
            t.max_log_z_word
        );
    }
    let _ = writeln!(s);
    if !r.kstar_estimates.is_empty() {
        let _ = writeln!(s, "## K* (diagnostic)\n");
        let _ = writeln!(s, "| W | n | K* | stderr | K_n | exp(K_n - K*) | upper bound on Phi(whole space) |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for d in &a.diagnostics {
            let ks = r
                .kstar_estimates
                .iter()
                .find(|k| k.window == d.window && k.depth == d.depth)
                .expect("one diagnostic per estimate");
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                d.window,
                d.depth,
                sig12(d.kstar),
                sig12(ks.stderr),
                sig12(d.k_n),
                sig12(d.exp_gap),
                sig12(d.phi_upper)
            );
        }
        let _ = writeln!(s);
    }
    if !a.average_contraction.is_empty() {
        let _ = writeln!(s, "## Average contraction\n");
        let _ = writeln!(s, "| i | estimate | stderr | a^i C_hat |");
        let _ = writeln!(s, "|---|---|---|---|");
        for row in &a.average_contraction {
            let _ = writeln!(s, "| {} | {} | {} | {} |", row.i, sig12(row.estimate), sig12(row.stderr), sig12(row.bound));
        }
        let _ = writeln!(s);
    }
    if !a.queries.is_empty() {
        let _ = writeln!(s, "## Queries\n");
        let _ = writeln!(s, "| Q | M(Q) | stderr | lower | upper | search | sandwich |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for q in &a.queries {
            let lower = q.lower.map(|l| sig12(l.value)).unwrap_or_else(|| "n/a".into());
            let sandwich = q.sandwich.map(|x| flag(x.pass)).unwrap_or("n/a");
            let search = if q.complete { "complete" } else { "budget exceeded" };
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                q.query,
                sig12(q.m.value),
                sig12(q.m.stderr),
                lower,
                sig12(q.upper),
                search,
                sandwich
            );
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "## Checks\n");
    for c in &r.checks {
        let _ = writeln!(s, "- {}: {} ({} vs {})", flag(c.pass), c.name, sig12(c.lhs), sig12(c.rhs));
    }
    let _ = writeln!(s);
    let verdict = if a.all_checks_pass { "all checks pass" } else { "some checks FAILED" };
    let _ = writeln!(s, "Overall: {verdict}.");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::SystemConfig;

    fn plan_for(cfg: SystemConfig, mode: RunMode, depths: Vec<usize>) -> (tempfile::TempDir, ExperimentPlan) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("system.json");
        fs::write(&path, cfg.to_json()).unwrap();
        let mut plan = ExperimentPlan::new(path, mode, depths, dir.path().join("out"));
        plan.mc_samples = 2_000;
        plan.burn_in = 100;
        plan.contraction_samples = 1_000;
        (dir, plan)
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(2.0f64.ln()), "0.69314718056");
        assert_eq!(sig12(-1.0 / 3.0), "-0.333333333333");
        assert_eq!(sig12(6.828427124746), "6.82842712475");
        assert_eq!(sig12(1e-20), "1.00000000000e-20");
    }

    #[test]
    fn exact_run_writes_all_artifacts() {
        let (_dir, mut plan) = plan_for(catalog::sys_a(), RunMode::Exact, vec![1, 2, 3]);
        plan.kstar_windows = vec![0, 1];
        plan.queries = vec!["all".into(), "e1.e2".into()];
        let out = run(&plan);
        assert_eq!(out.exit_code, EXIT_OK, "{out:?}");
        for f in ["system.json", "plan.json", "measure.csv", "tables/depth_3.csv", "bounds.json", "report.md"] {
            assert!(plan.output_dir.join(f).exists(), "{f}");
        }
        assert!(plan.output_dir.join("covers/query_2.json").exists());
        let manifest = fs::read_to_string(plan.output_dir.join("MANIFEST")).unwrap();
        assert!(manifest.starts_with("status: ok"));
    }

    #[test]
    fn malformed_system_leaves_only_manifest() {
        let mut cfg = catalog::sys_a();
        cfg.edges[0].prob.alpha = 0.6;
        cfg.edges[1].prob.alpha = 0.6;
        let (_dir, plan) = plan_for(cfg, RunMode::Exact, vec![1]);
        let out = run(&plan);
        assert_eq!(out.exit_code, EXIT_VALIDATION);
        assert_eq!(out.stage, Stage::Validate);
        assert!(out.files.is_empty());
        let names: Vec<_> = fs::read_dir(&plan.output_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec!["MANIFEST"]);
    }

    #[test]
    fn exact_mode_needs_constant_probabilities() {
        let (_dir, plan) = plan_for(catalog::sys_b(), RunMode::Exact, vec![1]);
        let out = run(&plan);
        assert_eq!(out.exit_code, EXIT_VALIDATION);
        assert!(out.error.unwrap().contains("constant"));
    }

    #[test]
    fn exhausted_budget_exits_with_budget_code() {
        let (_dir, mut plan) = plan_for(catalog::sys_a(), RunMode::Exact, vec![1]);
        plan.queries = vec!["all:2".into()];
        plan.cover_max_shift = 2;
        plan.cover_budget = 3;
        let out = run(&plan);
        assert_eq!(out.exit_code, EXIT_BUDGET, "{out:?}");
    }

    #[test]
    fn plan_json_defaults_and_unknown_fields() {
        let plan = ExperimentPlan::from_json(
            r#"{"system": "sys.json", "mode": "exact", "depths": [1, 2], "output_dir": "out"}"#,
        )
        .unwrap();
        assert_eq!(plan.seed, 42);
        assert_eq!(plan.cover_budget, DEFAULT_BUDGET);
        assert!(ExperimentPlan::from_json(
            r#"{"system": "s", "mode": "exact", "depths": [1], "output_dir": "o", "colour": 1}"#
        )
        .is_err());
    }
}
