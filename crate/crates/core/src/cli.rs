//! Command-line front end: `sparsify`, `schur-sparsify`, `det`,
//! `sample-tree` and `validate`.
//!
//! Artifacts (graphs, trees) go to `--output` when given and to stdout
//! otherwise. The run report goes to stdout when the artifact went to a
//! file, to stderr when it shares stdout with the artifact, and always to
//! stdout for `det` and `validate`. Exit codes: 0 on success, 1 on contract
//! errors (bad flags, failed preconditions, failed validation checks), 2 on
//! I/O errors.

use crate::det::{det_approx, det_approx_median};
use crate::error::{Error, Result};
use crate::graph::{load_graph, GraphBuilder, WeightedMultiGraph};
use crate::harness::{run_suite, CheckOutcome, Suite};
use crate::oracles::{laplacian, SpanningTree};
use crate::rng::seeded;
use crate::schur::{schur_samples, schur_sparse};
use crate::sparsify::{default_eps, default_samples, sparsify, OneShotSampler, SampleConfig, CRUDE_EPS};
use crate::trees::{approx_tree, exact_tree, WilsonSampler};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "detspar", version, about = "Determinant-preserving graph sparsification, determinant estimation and spanning tree sampling")]
pub struct RunConfig {
    /// Worker threads for boosted determinant runs and validation suites
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Report format
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Approx,
    Wilson,
    Oneshot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Moments,
    Tv,
    Conditional,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a determinant-preserving sparsifier of a graph
    Sparsify {
        /// Input edge list ("u v w" per line)
        #[arg(long)]
        input: PathBuf,
        /// Number of sampled edges [default: 8 ceil(n^1.5)]
        #[arg(long)]
        samples: Option<usize>,
        /// Leverage accuracy in (0, 1/2) [default: min(n^-1/4, 0.1)]
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output edge list [default: stdout]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sparsify the Schur complement onto a vertex subset
    SchurSparsify {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated vertices to keep
        #[arg(long, value_delimiter = ',', required = true)]
        v1: Vec<usize>,
        /// Error budget; ceil(|V1|^2 / delta) edges are sampled
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output edge list with an origin column, o or s [default: stdout]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate the determinant of the Laplacian minor (total tree weight)
    Det {
        #[arg(long)]
        input: PathBuf,
        /// Target multiplicative accuracy in (0, 1]
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report the median of this many independent runs
        #[arg(long)]
        boost: Option<usize>,
    },
    /// Sample random spanning trees
    SampleTree {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Error budget for the approx and oneshot modes, in (0, 1]
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of trees
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Output file, one tree per line [default: stdout]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the statistical validation suites
    Validate {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the JSON report here
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match run(&config, out, err) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 2,
        _ => 1,
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.into()))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    ensure(delta > 0.0 && delta <= 1.0, format!("delta must lie in (0, 1], got {delta}"))
}

struct Reporter<'a> {
    format: Format,
    start: Instant,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Reporter<'_> {
    fn finish(&mut self, mut report: Map<String, Value>, to_stdout: bool) -> Result<()> {
        report.insert("version".into(), json!(VERSION));
        report.insert("elapsed_ms".into(), json!(self.start.elapsed().as_millis() as u64));
        let text = render(&Value::Object(report), self.format);
        let sink: &mut dyn Write = if to_stdout { &mut *self.out } else { &mut *self.err };
        writeln!(sink, "{text}")?;
        Ok(())
    }

    fn artifact(&mut self, output: Option<&Path>, body: &str) -> Result<()> {
        match output {
            Some(path) => std::fs::write(path, body)?,
            None => self.out.write_all(body.as_bytes())?,
        }
        Ok(())
    }
}

fn render(report: &Value, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(report).expect("reports serialize"),
        Format::Text => match report {
            Value::Object(map) => map
                .iter()
                .map(|(k, v)| match v {
                    Value::String(s) => format!("{k}: {s}"),
                    other => format!("{k}: {other}"),
                })
                .collect::<Vec<_>>()
                .join("\n"),
            other => other.to_string(),
        },
    }
}

fn load(path: &Path) -> Result<WeightedMultiGraph> {
    load_graph(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

/// Runs a parsed command. `Ok(false)` means a validation check failed.
pub fn run(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    ensure(config.threads >= 1, "threads must be at least 1")?;
    let mut rep = Reporter {
        format: config.format,
        start: Instant::now(),
        out,
        err,
    };
    match &config.command {
        Command::Sparsify {
            input,
            samples,
            eps,
            seed,
            output,
        } => {
            let g = load(input)?;
            let n = g.n();
            let s = samples.unwrap_or_else(|| default_samples(n, 1.0));
            let eps = eps.unwrap_or_else(|| default_eps(n).min(CRUDE_EPS));
            SampleConfig { s, eps, rho: 1.0, seed: *seed }.validate(n)?;
            let (h, stats) = sparsify(&g, s, eps, &mut seeded(*seed))?;
            rep.artifact(output.as_deref(), &h.to_edge_list(false))?;
            let report = json!({
                "command": "sparsify", "seed": seed, "samples": s, "eps": eps,
                "n": n, "m": g.m(), "stats": stats,
            });
            rep.finish(object(report), output.is_some())?;
        }
        Command::SchurSparsify {
            input,
            v1,
            delta,
            seed,
            output,
        } => {
            check_delta(*delta)?;
            let g = load(input)?;
            let (h, stats) = schur_sparse(&g, v1, *delta, &mut seeded(*seed))?;
            let mut b = GraphBuilder::with_capacity(g.n(), h.m());
            for e in h.edges() {
                b.tagged_edge(v1[e.u], v1[e.v], e.weight, e.origin, None)?;
            }
            rep.artifact(output.as_deref(), &b.build().to_edge_list(true))?;
            let report = json!({
                "command": "schur-sparsify", "seed": seed, "delta": delta, "v1": v1,
                "samples": schur_samples(v1.len(), *delta), "stats": stats,
            });
            rep.finish(object(report), output.is_some())?;
        }
        Command::Det { input, delta, seed, boost } => {
            check_delta(*delta)?;
            ensure(boost.map_or(true, |k| k >= 1), "boost must be at least 1")?;
            let l = laplacian(&load(input)?);
            let mut rng = seeded(*seed);
            let est = match boost {
                Some(k) => det_approx_median(&l, *delta, *k, config.threads, &mut rng)?,
                None => det_approx(&l, *delta, l.n(), &mut rng)?,
            };
            let mut report = json!({
                "command": "det", "log_det_plus": est.log_value, "delta": delta, "seed": seed,
                "delta_prime": est.delta_prime, "trace": est.trace,
            });
            if boost.is_some() {
                report["runs"] = json!(est.runs);
            }
            rep.finish(object(report), true)?;
        }
        Command::SampleTree {
            input,
            mode,
            delta,
            seed,
            count,
            output,
        } => {
            check_delta(*delta)?;
            let g = load(input)?;
            if !g.is_connected() {
                return Err(Error::Disconnected);
            }
            let (lines, stats) = sample_trees(&g, *mode, *delta, *seed, *count)?;
            rep.artifact(output.as_deref(), &lines)?;
            let mut report = json!({
                "command": "sample-tree", "mode": format!("{mode:?}").to_lowercase(),
                "seed": seed, "delta": delta, "count": count,
            });
            report["stats"] = stats;
            rep.finish(object(report), output.is_some())?;
        }
        Command::Validate { suite, seed, report } => {
            let suites: Vec<Suite> = match suite {
                SuiteArg::Moments => vec![Suite::Moments],
                SuiteArg::Tv => vec![Suite::Tv],
                SuiteArg::Conditional => vec![Suite::Conditional],
                SuiteArg::All => Suite::ALL.to_vec(),
            };
            let checks = run_suites(&suites, *seed, config.threads)?;
            let pass = checks.iter().all(|c| c.pass);
            let body = json!({
                "command": "validate", "seed": seed, "pass": pass,
                "checks": checks,
            });
            let mut full = object(body);
            full.insert("version".into(), json!(VERSION));
            full.insert("elapsed_ms".into(), json!(rep.start.elapsed().as_millis() as u64));
            if let Some(path) = report {
                std::fs::write(path, serde_json::to_string_pretty(&full).expect("reports serialize"))?;
            }
            let text = match rep.format {
                Format::Json => render(&Value::Object(full), Format::Json),
                Format::Text => checks
                    .iter()
                    .map(|c| format!("{} {}/{}", if c.pass { "PASS" } else { "FAIL" }, c.suite, c.name))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            writeln!(rep.out, "{text}")?;
            return Ok(pass);
        }
    }
    Ok(true)
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("reports are objects"),
    }
}

fn run_suites(suites: &[Suite], seed: u64, threads: usize) -> Result<Vec<CheckOutcome>> {
    let results: Vec<Result<Vec<CheckOutcome>>> = if threads == 1 || suites.len() == 1 {
        suites.iter().map(|&s| run_suite(s, seed)).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = suites.iter().map(|&s| scope.spawn(move || run_suite(s, seed))).collect();
            handles.into_iter().map(|h| h.join().expect("suite panicked")).collect()
        })
    };
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    Ok(all)
}

fn sample_trees(g: &WeightedMultiGraph, mode: Mode, delta: f64, seed: u64, count: usize) -> Result<(String, Value)> {
    let mut rng = seeded(seed);
    let mut lines = String::new();
    let mut push = |t: &SpanningTree| {
        lines.push_str(&t.render(g));
        lines.push('\n');
    };
    let stats = match mode {
        Mode::Exact => {
            for _ in 0..count {
                push(&exact_tree(g, &mut rng)?);
            }
            json!({})
        }
        Mode::Wilson => {
            let w = WilsonSampler::new(g)?;
            for _ in 0..count {
                push(&w.sample(g, &mut rng)?);
            }
            json!({})
        }
        Mode::Approx => {
            let (mut calls, mut retries, mut depth) = (0, 0, 0);
            for _ in 0..count {
                let (t, s) = approx_tree(g, delta, g.n(), &mut rng)?;
                calls += s.schur_calls;
                retries += s.retries;
                depth = depth.max(s.depth);
                push(&t);
            }
            json!({ "schur_calls": calls, "retries": retries, "max_depth": depth })
        }
        Mode::Oneshot => {
            let mut sampler = OneShotSampler::new(g, delta, &mut rng)?;
            for _ in 0..count {
                push(&sampler.draw(g, &mut rng)?);
            }
            json!({ "samples": sampler.samples(), "retries": sampler.retries() })
        }
    };
    Ok((lines, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with_args(std::iter::once("detspar").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let (code, _, err) = run_args(&["det", "--input", "/nonexistent/g.txt"]);
        assert_eq!(code, 2);
        assert!(err.contains("error"), "{err}");
    }

    #[test]
    fn bad_flags_are_contract_errors() {
        assert_eq!(run_args(&["det", "--input", "x", "--delta", "abc"]).0, 1);
        assert_eq!(run_args(&["frobnicate"]).0, 1);
        assert_eq!(run_args(&["--help"]).0, 0);
    }

    #[test]
    fn text_rendering_lists_keys() {
        let v = json!({"a": 1, "b": "x"});
        assert_eq!(render(&v, Format::Text), "a: 1\nb: x");
    }
}
