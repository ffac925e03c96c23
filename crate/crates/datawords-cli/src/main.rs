use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use datawords::atoms::{Atom, Sort, Value};
use datawords::equiv::{bounded_equiv, fuzz, Deatomisation, Runner};
use datawords::machines::{Machine, Outcome, TraceStep};
use datawords::monoid::{support_bound, Profile};
use datawords::primes::{compose_mealy, Pipeline, PrimeFn};
use datawords::reglist::Rlf;
use datawords::sst::{post_compose_prime, Sst, SstOutcome};
use serde_json::{json, Value as Json};

#[derive(Parser)]
#[command(
    name = "datawords",
    version,
    about = "Single-use machines over data words"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Word literal, letters separated by commas.
    #[arg(long, default_value = "")]
    input: String,
    /// Write the JSON result to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a machine on a word.
    Run {
        #[arg(long)]
        machine: PathBuf,
        /// Include every configuration of the run.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        io: Io,
    },
    /// Evaluate a prime pipeline.
    EvalPipeline {
        #[arg(long)]
        pipeline: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Evaluate a regular list function.
    EvalRlf {
        #[arg(long)]
        rlf: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Run a streaming string transducer.
    SstRun {
        #[arg(long)]
        sst: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Post-compose an SST with a prime function.
    SstCompose {
        #[arg(long)]
        sst: PathBuf,
        /// A prime, or a pipeline consisting of one prime.
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compose two Mealy machines, `a` first.
    MealyCompose {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shepherdson profile of an infix, as a table.
    Profile {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        limit: usize,
        #[command(flatten)]
        io: Io,
    },
    /// Least support of the profile of an infix.
    Support {
        #[arg(long)]
        machine: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Run graph of a two-way run.
    Rungraph {
        #[arg(long)]
        machine: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Register forest of an SST run.
    Forest {
        #[arg(long)]
        sst: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Bounded equivalence on all canonical words up to a length.
    Equiv {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Differential testing on seeded random words.
    Fuzz {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Atoms are drawn from #0 .. #pool-1.
        #[arg(long, default_value_t = 6)]
        pool: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode atoms as blocks of diamonds.
    Deatomise {
        /// Letter sort of the input word.
        #[arg(long, default_value = "A")]
        sort: String,
        /// Atom counts such as `1:1,3:3`; by default `#i` gets `i` diamonds.
        #[arg(long)]
        alpha: Option<String>,
        #[command(flatten)]
        io: Io,
    },
    /// Check a machine, SST, pipeline or expression.
    Validate {
        #[arg(long, group = "model")]
        machine: Option<PathBuf>,
        #[arg(long, group = "model")]
        sst: Option<PathBuf>,
        #[arg(long, group = "model")]
        pipeline: Option<PathBuf>,
        #[arg(long, group = "model")]
        rlf: Option<PathBuf>,
    },
}

enum Failure {
    /// Bad flags, files or literals.
    Usage(String),
    /// The model itself is at fault.
    Model(Json),
}

type Res<T> = Result<T, Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn model(e: impl ToString) -> Failure {
    Failure::Model(json!({ "error": e.to_string() }))
}

fn corpus_dir() -> PathBuf {
    match std::env::var_os("DATAWORDS_CORPUS") {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus"),
    }
}

/// Paths that do not exist are looked up in the corpus.
fn resolve(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        path.to_path_buf()
    } else {
        corpus_dir().join(path)
    }
}

fn read_json(path: &Path) -> Res<Json> {
    let full = resolve(path);
    let text =
        std::fs::read_to_string(&full).map_err(|e| usage(format!("{}: {e}", full.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", full.display())))
}

fn load<T>(path: &Path, f: impl FnOnce(Json) -> datawords::Result<T>) -> Res<T> {
    f(read_json(path)?).map_err(|e| match e {
        datawords::Error::Format(_) | datawords::Error::Parse(_) => {
            usage(format!("{}: {e}", path.display()))
        }
        other => model(format!("{}: {other}", path.display())),
    })
}

fn parse_word(s: &Sort, text: &str) -> Res<Vec<Value>> {
    s.parse_word(text).map_err(usage)
}

fn show_regs(regs: &[Option<Atom>]) -> Vec<String> {
    regs.iter()
        .map(|r| r.map_or("bot".to_string(), |a| a.to_string()))
        .collect()
}

fn trace_json(m: &Machine, steps: &[TraceStep]) -> Json {
    let cfg = |c: &datawords::machines::Config| json!({"pos": c.pos, "state": m.states[c.state], "regs": show_regs(&c.regs)});
    steps
        .iter()
        .map(|s| {
            json!({
                "before": cfg(&s.before),
                "answer": s.answer,
                "reads": s.reads.iter().map(|r| &m.registers[*r]).collect::<Vec<_>>(),
                "emitted": s.emitted.as_ref().map(|v| m.output_sort.show(v)),
                "after": cfg(&s.after),
            })
        })
        .collect()
}

fn outcome_json(accepted: Option<&[Value]>, looped: bool, out_sort: &Sort) -> Json {
    match accepted {
        Some(w) => json!({"outcome": "accepted", "output": out_sort.show_word(w)}),
        None if looped => json!({"outcome": "loop", "output": null}),
        None => json!({"outcome": "rejected", "output": null}),
    }
}

fn execute(command: Command) -> Res<(Json, Option<PathBuf>, bool)> {
    let ok = |j: Json, out: Option<PathBuf>| Ok((j, out, true));
    match command {
        Command::Run { machine, trace, io } => {
            let m = load(&machine, Machine::from_json)?;
            let w = parse_word(&m.input_sort, &io.input)?;
            let (outcome, steps) = m.run_traced(&w).map_err(model)?;
            let mut j = if m.kind.is_automaton() {
                json!({"outcome": match outcome {
                    Outcome::Accepted(_) => "accepted",
                    Outcome::Loop => "loop",
                    Outcome::Rejected => "rejected",
                }, "accepted": outcome.is_accepted()})
            } else {
                outcome_json(outcome.output(), outcome == Outcome::Loop, &m.output_sort)
            };
            if trace {
                j["trace"] = trace_json(&m, &steps);
            }
            ok(j, io.out)
        }
        Command::EvalPipeline { pipeline, io } => {
            let p = load(&pipeline, |v| match Pipeline::from_json(v.clone()) {
                Ok(p) => Ok(p),
                Err(_) => PrimeFn::from_json(v).map(Pipeline::prime),
            })?;
            let w = parse_word(&p.domain(), &io.input)?;
            let out = p.eval(&w).map_err(model)?;
            ok(json!({"output": p.codomain().show_word(&out)}), io.out)
        }
        Command::EvalRlf { rlf, io } => {
            let e = load(&rlf, Rlf::from_json)?;
            let r = Runner::Rlf(e);
            let w = parse_word(&r.input_sort().map_err(model)?, &io.input)?;
            let out = r.apply(&w).map_err(model)?;
            ok(
                json!({"output": out.to_json(r.output_sort().map_err(model)?.as_ref())}),
                io.out,
            )
        }
        Command::SstRun { sst, io } => {
            let s = load(&sst, Sst::from_json)?;
            let w = parse_word(&s.input_sort, &io.input)?;
            let out = s.eval(&w).map_err(model)?;
            ok(
                outcome_json(out.output(), out == SstOutcome::Loop, &s.output_sort),
                io.out,
            )
        }
        Command::SstCompose { sst, pipeline, out } => {
            let s = load(&sst, Sst::from_json)?;
            let g = load(&pipeline, |v| match PrimeFn::from_json(v.clone()) {
                Ok(p) => Ok(p),
                Err(e) => match Pipeline::from_json(v)? {
                    Pipeline::Prime(p) => Ok(p),
                    _ => Err(e),
                },
            })?;
            let composed = post_compose_prime(&s, &g).map_err(model)?;
            ok(composed.to_json(), out)
        }
        Command::MealyCompose { a, b, out } => {
            let f = load(&a, Machine::from_json)?;
            let g = load(&b, Machine::from_json)?;
            let m = compose_mealy(&f, &g).map_err(model)?;
            ok(m.to_json(), out)
        }
        Command::Profile { machine, limit, io } => {
            let m = Arc::new(load(&machine, Machine::from_json)?);
            let w = parse_word(&m.letter_sort(), &io.input)?;
            let p = Profile::of(&m, &w).map_err(model)?;
            ok(p.to_table(limit).map_err(model)?, io.out)
        }
        Command::Support { machine, io } => {
            let m = Arc::new(load(&machine, Machine::from_json)?);
            let w = parse_word(&m.letter_sort(), &io.input)?;
            let p = Profile::of(&m, &w).map_err(model)?;
            let support: Vec<String> = p.minimal_support().iter().map(|a| a.to_string()).collect();
            let j = json!({
                "support": support,
                "size": support.len(),
                "bound": support_bound(&m).to_string(),
                "single_use": m.single_use,
            });
            ok(j, io.out)
        }
        Command::Rungraph { machine, io } => {
            let m = load(&machine, Machine::from_json)?;
            let w = parse_word(&m.input_sort, &io.input)?;
            let g = m.run_graph(&w).map_err(model)?;
            let replay = g.replay().map(|out| m.output_sort.show_word(&out));
            ok(
                json!({"width": g.width(), "replay": replay, "graph": g}),
                io.out,
            )
        }
        Command::Forest { sst, io } => {
            let s = load(&sst, Sst::from_json)?;
            let w = parse_word(&s.input_sort, &io.input)?;
            let f = s.register_forest(&w).map_err(model)?;
            let j = json!({
                "dfs": s.output_sort.show_word(&f.dfs()),
                "leaves": f.leaf_count(),
                "sharing": f.has_sharing(),
                "forest": f,
            });
            ok(j, io.out)
        }
        Command::Equiv { a, b, max_len, out } => {
            let r1 = load(&a, Runner::from_json)?;
            let r2 = load(&b, Runner::from_json)?;
            let report = bounded_equiv(&r1, &r2, max_len).map_err(model)?;
            ok(report.to_json(), out)
        }
        Command::Fuzz {
            a,
            b,
            trials,
            max_len,
            seed,
            pool,
            out,
        } => {
            let r1 = load(&a, Runner::from_json)?;
            let r2 = load(&b, Runner::from_json)?;
            let report = fuzz(&r1, &r2, trials, max_len, pool, seed).map_err(model)?;
            ok(report.to_json(), out)
        }
        Command::Deatomise { sort, alpha, io } => {
            let s: Sort = sort.parse().map_err(usage)?;
            let w = parse_word(&s, &io.input)?;
            let alpha = match alpha {
                Some(text) => Deatomisation::parse(&text).map_err(usage)?,
                None => Deatomisation::by_name(&datawords::atoms::word_atoms(&w)),
            };
            let text = alpha.word(&w).map_err(model)?;
            ok(
                json!({"output": text, "injective": alpha.is_injective()}),
                io.out,
            )
        }
        Command::Validate {
            machine,
            sst,
            pipeline,
            rlf,
        } => {
            let violations: Vec<String> = if let Some(p) = machine {
                let m = load(&p, Machine::from_json_unchecked)?;
                m.validate().err().unwrap_or_default()
            } else if let Some(p) = sst {
                let s = load(&p, Sst::from_json_unchecked)?;
                s.validate().err().unwrap_or_default()
            } else if let Some(p) = pipeline {
                match Runner::from_json(read_json(&p)?) {
                    Ok(_) => vec![],
                    Err(e) => vec![e.to_string()],
                }
            } else if let Some(p) = rlf {
                match Rlf::from_json(read_json(&p)?) {
                    Ok(_) => vec![],
                    Err(e) => vec![e.to_string()],
                }
            } else {
                return Err(usage(
                    "validate needs --machine, --sst, --pipeline or --rlf",
                ));
            };
            let valid = violations.is_empty();
            Ok((
                json!({"valid": valid, "violations": violations}),
                None,
                valid,
            ))
        }
    }
}

fn emit(j: &Json, out: Option<&Path>) -> std::io::Result<()> {
    let text = serde_json::to_string(j).expect("json serializes");
    match out {
        Some(path) => {
            std::fs::write(path, format!("{text}\n"))?;
            writeln!(
                std::io::stdout().lock(),
                "{}",
                json!({"written": path.display().to_string()})
            )
        }
        None => writeln!(std::io::stdout().lock(), "{text}"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok((j, out, success)) => {
            if let Err(e) = emit(&j, out.as_deref()) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            ExitCode::from(if success { 0 } else { 1 })
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Model(j)) => {
            eprintln!("error: {}", j["error"].as_str().unwrap_or_default());
            println!("{j}");
            ExitCode::from(1)
        }
    }
}
