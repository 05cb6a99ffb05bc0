use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cmslab::coding::{backward_orbit, coding_point, f_sum, radius_check};
use cmslab::constants::DEFAULT_TAIL_TOL;
use cmslab::cover::{verify_certificate, CoverCertificate, CoverSearch, DEFAULT_BUDGET};
use cmslab::cylinder::build_table;
use cmslab::divergence::{evaluate_bounds, kl_n};
use cmslab::pipeline::{configure_workers, exit_code, load_system, run, ExperimentPlan, RunMode, EXIT_BUDGET};
use cmslab::sim::{estimate_invariant, DEFAULT_BURN_IN};
use cmslab::{derive_constants, CylinderSet, Error, MarkovSystem, MeasureSource, PastWord, Word};

#[derive(Parser)]
#[command(name = "cmslab", version, about = "Contractive Markov system laboratory")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    MonteCarlo,
}

#[derive(clap::Args)]
struct Sampling {
    /// Number of invariant-measure samples.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    /// Seed; falls back to CMSLAB_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
}

impl Sampling {
    fn seed(&self) -> Result<u64, Error> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(cmslab::pipeline::SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidPlan(format!("CMSLAB_SEED={v:?} is not a 64-bit integer"))),
            Err(_) => Ok(42),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a system config and print its constants.
    Validate {
        /// Config file, or sys-a / sys-b / sys-c.
        system: PathBuf,
    },
    /// Estimate the invariant measure and write it as CSV.
    Simulate {
        system: PathBuf,
        #[command(flatten)]
        sampling: Sampling,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Backward orbit, coding point and f-sum of a past word.
    Coding {
        system: PathBuf,
        /// Past word, oldest edge first, e.g. e1.e2.e2.
        #[arg(long)]
        past: String,
        /// Forward word for the f-sum.
        #[arg(long)]
        forward: Option<String>,
    },
    /// Build a depth-n cylinder table and write it as CSV.
    Table {
        system: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long, value_enum, default_value_t = Mode::MonteCarlo)]
        mode: Mode,
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive constants and evaluate the divergence bounds.
    Bounds {
        system: PathBuf,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Search a cheapest shifted-cylinder cover and write its certificate.
    Cover {
        system: PathBuf,
        /// Cylinder set: all, all:n, or words joined by +.
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 1)]
        max_shift: usize,
        #[arg(long, default_value_t = 3)]
        max_depth: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a cover certificate.
    VerifyCert { path: PathBuf },
    /// Execute an experiment plan.
    Run {
        plan: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn measure_for(sys: &MarkovSystem, s: &Sampling) -> Result<cmslab::EmpiricalMeasure, Error> {
    estimate_invariant(sys, s.samples, s.burn_in, s.seed()?)
}

fn execute(cli: Cli) -> Result<u8, Error> {
    if let Some(w) = cli.workers {
        configure_workers(w)?;
    }
    match cli.command {
        Command::Validate { system } => {
            let sys = load_system(&system)?;
            println!(
                "valid: {} vertices, {} edges, dimension {}, |S| = {}",
                sys.vertices().len(),
                sys.edges().len(),
                sys.dimension(),
                sys.support().len()
            );
            println!("contraction rate a = {}", sys.contraction_rate());
            println!("d = {}", sys.base_displacement());
            println!("modulus slope = {}", sys.modulus().slope);
        }
        Command::Simulate { system, sampling, out } => {
            let sys = load_system(&system)?;
            let mu = measure_for(&sys, &sampling)?;
            mu.write_csv(output(&out)?)?;
        }
        Command::Coding { system, past, forward } => {
            let sys = load_system(&system)?;
            let past = PastWord::parse(&sys, &past)?;
            for x in backward_orbit(&sys, &past) {
                println!("X_{} = {:?}", x.j, x.point);
            }
            let c = coding_point(&sys, &past)?;
            let (r, rb) = radius_check(&sys, &c);
            println!("coding point {:?} in vertex {}", c.point, c.vertex.label());
            println!("error bound {}", c.error_bound);
            println!("distance to base point {r} (bound {rb})");
            if let Some(fw) = forward {
                let f = f_sum(&sys, &c, &Word::parse(&sys, &fw)?)?;
                println!("f partial {} tail {} total {}", f.partial, f.tail_bound, f.total());
            }
        }
        Command::Table { system, depth, mode, sampling, out } => {
            let sys = load_system(&system)?;
            let table = match mode {
                Mode::Exact => build_table(&sys, depth, MeasureSource::Exact)?,
                Mode::MonteCarlo => {
                    let mu = measure_for(&sys, &sampling)?;
                    build_table(&sys, depth, MeasureSource::Empirical(&mu))?
                }
            };
            table.write_csv(&sys, output(&out)?)?;
            let k = kl_n(&table);
            eprintln!("K_{depth} = {} (stderr {})", k.value, k.stderr);
        }
        Command::Bounds { system, sampling } => {
            let sys = load_system(&system)?;
            let mu = measure_for(&sys, &sampling)?;
            let report = evaluate_bounds(&sys, &derive_constants(&sys, &mu, DEFAULT_TAIL_TOL)?);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Cover { system, query, max_shift, max_depth, budget, out } => {
            let sys = load_system(&system)?;
            let q = CylinderSet::parse(&sys, &query)?;
            let search = CoverSearch { max_shift, max_depth, budget, workers: None };
            let outcome = search.phi_upper(&sys, &q)?;
            let cert = CoverCertificate::new(&sys, &q, &search, &outcome);
            let mut w = output(&out)?;
            writeln!(w, "{}", cert.to_json())?;
            w.flush()?;
            eprintln!(
                "cost {} (trivial {}), {} pieces, {} nodes{}",
                outcome.cost,
                outcome.trivial_cost,
                outcome.pieces.len(),
                outcome.nodes,
                if outcome.complete { "" } else { ", budget exceeded" }
            );
            if !outcome.complete {
                return Ok(EXIT_BUDGET as u8);
            }
        }
        Command::VerifyCert { path } => {
            let cost = verify_certificate(&path)?;
            println!("pass: cost {cost}");
        }
        Command::Run { plan, seed, output_dir } => {
            let mut plan = ExperimentPlan::from_file(&plan)?.with_env_seed()?;
            if let Some(s) = seed {
                plan.seed = s;
            }
            if let Some(d) = output_dir {
                plan.output_dir = d;
            }
            if cli.workers.is_some() {
                plan.workers = cli.workers;
            }
            let outcome = run(&plan);
            let mode = match plan.mode {
                RunMode::Exact => "exact",
                RunMode::MonteCarlo => "monte carlo",
            };
            match &outcome.error {
                Some(e) => eprintln!("run failed at stage {}: {e}", outcome.stage.name()),
                None => println!(
                    "run finished ({mode}), {} files in {}, exit code {}",
                    outcome.files.len(),
                    plan.output_dir.display(),
                    outcome.exit_code
                ),
            }
            return Ok(outcome.exit_code as u8);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
