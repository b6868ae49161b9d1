//! `divnet`: evaluate, build, rewrite, replay and verify divergence networks.
//!
//! Exit status is 0 on success, 1 when a verification fails and 2 on usage,
//! input or domain errors.

mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use divnet_core::builders::{bregman_net, conj_jensen_net, f_net, jensen_net, sym_bregman_net};
use divnet_core::rewrite::list_matches_with_tol;
use divnet_core::{
    apply_with_tol, phi_breakdown, replay, ConvexFunctionSpec, Derivation, Error, Network,
    Registry, RuleId, RuleMatch, Tolerance, WeightedPoints,
};

#[derive(Parser)]
#[command(
    name = "divnet",
    version,
    about = "Divergence networks: evaluation, rewriting and verification"
)]
struct Cli {
    /// Relative tolerance for Φ checks (overrides DIVNET_TOL).
    #[arg(long, global = true, value_parser = positive)]
    tol: Option<f64>,

    /// JSON file of separable generator definitions to register.
    #[arg(long, global = true)]
    generators: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print Φ of a network.
    Eval {
        file: PathBuf,
        /// Generator to evaluate under; must agree with the file's.
        #[arg(long)]
        convex: Option<String>,
        /// Also print every node and edge term.
        #[arg(long)]
        breakdown: bool,
    },
    /// Construct a standard network and write it as JSON.
    Build {
        #[arg(value_enum)]
        kind: BuildKind,
        #[arg(long)]
        convex: String,
        /// First point, or the numerator masses for `f`: `1,2`.
        #[arg(long, value_parser = vector, allow_hyphen_values = true)]
        p: Option<Coords>,
        /// Second point, or the denominator masses for `f`.
        #[arg(long, value_parser = vector, allow_hyphen_values = true)]
        q: Option<Coords>,
        /// Points for Jensen networks: `1,2;3,4`.
        #[arg(long, value_parser = points, allow_hyphen_values = true)]
        points: Option<PointList>,
        #[arg(long, value_parser = vector, allow_hyphen_values = true)]
        weights: Option<Coords>,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List rule matches on a network as JSON.
    Matches {
        file: PathBuf,
        /// Restrict to one rule, e.g. `summation` or `on_off_1`.
        #[arg(long)]
        rule: Option<String>,
    },
    /// Apply one rule match and write the rewritten network.
    Apply {
        file: PathBuf,
        /// The match as JSON, or `@path` to read it from a file.
        #[arg(long = "match")]
        rule_match: String,
        /// Skip the Φ check.
        #[arg(long)]
        no_check: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write one of the built-in derivation scripts.
    Script {
        /// insertion_variant, connection, sym_fan, parallelogram, parallelogram_dual or jensen.
        name: String,
        #[arg(long)]
        convex: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Re-apply a derivation script with every step checked.
    Replay { file: PathBuf },
    /// Run randomized verification suites.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Generators to run, comma separated; defaults to the built-ins.
        #[arg(long, value_delimiter = ',')]
        convex: Vec<String>,
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    /// Write a network as Graphviz DOT or JSON.
    Export {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Dot)]
        format: Format,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Directory for per-session derivation snapshots.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BuildKind {
    Bregman,
    SymBregman,
    Jensen,
    ConjJensen,
    F,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
    Special,
    Rules,
    Chains,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

/// Comma-separated numbers.
#[derive(Clone, Debug)]
struct Coords(Vec<f64>);

/// Semicolon-separated points.
#[derive(Clone, Debug)]
struct PointList(Vec<Vec<f64>>);

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

fn vector(s: &str) -> Result<Coords, String> {
    numbers(s).map(Coords)
}

fn points(s: &str) -> Result<PointList, String> {
    s.split(';')
        .map(numbers)
        .collect::<Result<_, _>>()
        .map(PointList)
}

/// A failure and the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::PhiViolation { .. }) {
            1
        } else {
            2
        };
        let message = match &e {
            Error::Io(io) => format!("i/o error: {io}"),
            _ => e.to_string(),
        };
        Failure { code, message }
    }
}

fn io_context(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

struct Ctx {
    registry: Registry,
    tol: Tolerance,
}

impl Ctx {
    fn spec_for(&self, net: &Network) -> Result<ConvexFunctionSpec, Failure> {
        Ok(self.registry.get(net.generator(), net.dim().unwrap_or(1))?)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(io_context(path))
}

fn read_network(path: &Path) -> Result<Network, Failure> {
    Network::from_json(&read(path)?).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_out(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(io_context(p)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut registry = Registry::new();
    if let Some(path) = &cli.generators {
        registry.load_file(path).map_err(|e| Failure {
            code: 2,
            message: format!("{}: {e}", path.display()),
        })?;
    }
    let ctx = Ctx {
        registry,
        tol: cli
            .tol
            .and_then(Tolerance::new)
            .unwrap_or_else(Tolerance::from_env),
    };
    match cli.command {
        Command::Eval {
            file,
            convex,
            breakdown,
        } => {
            let net = read_network(&file)?;
            if let Some(g) = convex.filter(|g| g != net.generator()) {
                return Err(Error::GeneratorMismatch(net.generator().to_string(), g).into());
            }
            let spec = ctx.spec_for(&net)?;
            let b = phi_breakdown(&net, &spec)?;
            // `+ 0.0` folds −0 into 0
            println!("{:.12}", b.total + 0.0);
            if breakdown {
                for (id, t) in &b.node_terms {
                    println!("node {} {:.12}", id.as_str(), t + 0.0);
                }
                for (id, t) in &b.edge_terms {
                    println!("edge {} {:.12}", id.as_str(), t + 0.0);
                }
            }
            Ok(())
        }
        Command::Build {
            kind,
            convex,
            p,
            q,
            points,
            weights,
            alpha,
            output,
        } => {
            let need = |v: Option<Coords>, name: &str| {
                v.map(|c| c.0).ok_or_else(|| Failure {
                    code: 2,
                    message: format!("--{name} is required for this network"),
                })
            };
            let net = match kind {
                BuildKind::Bregman | BuildKind::SymBregman | BuildKind::F => {
                    let (p, q) = (need(p, "p")?, need(q, "q")?);
                    let dim = if matches!(kind, BuildKind::F) {
                        1
                    } else {
                        p.len()
                    };
                    let spec = ctx.registry.get(&convex, dim)?;
                    match kind {
                        BuildKind::Bregman => bregman_net(&spec, &p, &q, alpha)?,
                        BuildKind::SymBregman => sym_bregman_net(&spec, &p, &q, alpha)?,
                        _ => f_net(&spec, &p, &q)?,
                    }
                }
                BuildKind::Jensen | BuildKind::ConjJensen => {
                    let pts = points.map(|p| p.0).ok_or_else(|| Failure {
                        code: 2,
                        message: "--points is required for Jensen networks".into(),
                    })?;
                    let w = weights.map(|w| w.0).unwrap_or_else(|| vec![1.0; pts.len()]);
                    let spec = ctx.registry.get(&convex, pts.first().map_or(1, Vec::len))?;
                    let wp = WeightedPoints::new(pts, w)?;
                    if matches!(kind, BuildKind::Jensen) {
                        jensen_net(&spec, &wp)?
                    } else {
                        conj_jensen_net(&spec, &wp)?
                    }
                }
            };
            write_out(output.as_deref(), &net.to_json())
        }
        Command::Matches { file, rule } => {
            let net = read_network(&file)?;
            let spec = ctx.spec_for(&net)?;
            let rules = match rule {
                Some(r) => vec![r.parse::<RuleId>()?],
                None => RuleId::ALL.to_vec(),
            };
            let all: Vec<RuleMatch> = rules
                .into_iter()
                .flat_map(|r| list_matches_with_tol(&net, r, &spec, ctx.tol))
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&all).expect("matches serialize")
            );
            Ok(())
        }
        Command::Apply {
            file,
            rule_match,
            no_check,
            output,
        } => {
            let net = read_network(&file)?;
            let spec = ctx.spec_for(&net)?;
            let text = match rule_match.strip_prefix('@') {
                Some(path) => read(Path::new(path))?,
                None => rule_match,
            };
            let m: RuleMatch = serde_json::from_str(&text).map_err(|e| Failure {
                code: 2,
                message: format!("bad match: {e}"),
            })?;
            let (out, step) = apply_with_tol(&net, &m, &spec, !no_check, ctx.tol)?;
            eprintln!(
                "{} {}: phi {:.12} -> {:.12} (residual {:.11e})",
                m.rule,
                serde_json::to_value(m.direction)
                    .unwrap()
                    .as_str()
                    .unwrap_or_default(),
                step.phi_before,
                step.phi_after,
                step.residual
            );
            write_out(output.as_deref(), &out.to_json())
        }
        Command::Script {
            name,
            convex,
            dim,
            output,
        } => {
            let spec = ctx.registry.get(&convex, dim)?;
            let d = divnet_core::scripts::sample_chain(&name, &spec)?;
            write_out(output.as_deref(), &d.to_json())
        }
        Command::Replay { file } => {
            let d = Derivation::from_json(&read(&file)?).map_err(|e| Failure {
                code: 2,
                message: format!("{}: {e}", file.display()),
            })?;
            let spec = ctx.spec_for(&d.initial)?;
            let r = replay(&d, &spec, ctx.tol)?;
            println!("initial phi {:.12}", r.phi_initial);
            for (i, s) in r.steps.iter().enumerate() {
                println!(
                    "step {} {} phi {:.12} residual {:.11e}",
                    i + 1,
                    s.rule_match.rule,
                    s.phi_after,
                    s.residual
                );
            }
            println!(
                "final phi {:.12} max drift {:.11e}",
                r.phi_final, r.max_drift
            );
            match r.final_matches {
                Some(false) => Err(Failure {
                    code: 1,
                    message: "final network differs from the recorded one".into(),
                }),
                Some(true) => {
                    println!("final network matches");
                    Ok(())
                }
                None => Ok(()),
            }
        }
        Command::Verify {
            suite,
            trials,
            seed,
            convex,
            dim,
        } => {
            let ids = if convex.is_empty() {
                vec!["quadratic".into(), "neg_entropy".into(), "neg_log".into()]
            } else {
                convex
            };
            let specs = ids
                .iter()
                .map(|g| ctx.registry.get(g, dim))
                .collect::<Result<Vec<_>, _>>()?;
            if verify::run(suite, &specs, trials, seed, ctx.tol)? {
                Ok(())
            } else {
                Err(Failure {
                    code: 1,
                    message: "verification failed".into(),
                })
            }
        }
        Command::Export {
            file,
            format,
            output,
        } => {
            let net = read_network(&file)?;
            let text = match format {
                Format::Dot => net.to_dot(),
                Format::Json => net.to_json(),
            };
            write_out(output.as_deref(), &text)
        }
        Command::Serve { listen, snapshots } => {
            let mut state = divnet_service::AppState::new(ctx.registry, ctx.tol);
            if let Some(dir) = snapshots {
                state = state.with_snapshots(dir);
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure {
                code: 2,
                message: e.to_string(),
            })?;
            eprintln!("listening on {listen}");
            rt.block_on(divnet_service::serve(&listen, Arc::new(state)))
                .map_err(|e| Failure {
                    code: 2,
                    message: format!("{listen}: {e}"),
                })
        }
    }
}

fn main() -> ExitCode {
    // die quietly when piped into `head`
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("divnet: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
