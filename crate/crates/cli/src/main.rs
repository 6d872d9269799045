use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use p4f::bench::{self, MatrixReport, Report};
use p4f::concrete::{self, Outcome};
use p4f::oracle::{dsg_extract, oracle_analyze, precision_check};
use p4f::{analyze, parse_program, KontPolicy, PolicyPair, ValuePolicy};

#[derive(Parser)]
#[command(name = "p4f", version, about = "Control-flow analysis for ANF lambda calculus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one program.
    Analyze {
        file: PathBuf,
        #[arg(long, default_value = "mono")]
        value_policy: ValuePolicy,
        #[arg(long, default_value = "p4f")]
        kont_policy: KontPolicy,
        /// Write the JSON report here (`-` for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write the oracle's Dyck state graph as Graphviz DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Stack depth bound for the unbounded-stack oracle.
        #[arg(long, default_value_t = 12)]
        oracle_depth: usize,
        /// Compare the result against the oracle; exit 2 on violations.
        #[arg(long)]
        check_precision: bool,
    },
    /// Run the policy comparison over a corpus.
    Bench {
        /// Directory of `.scm` files; the built-in corpus if omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// All eight policy pairs instead of AAC and P4F only.
        #[arg(long)]
        matrix: bool,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Gnuplot data file with AAC and P4F counts per program.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Run a program on the concrete interpreter.
    Run {
        file: PathBuf,
        /// Write the state trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = concrete::DEFAULT_STEP_LIMIT)]
        step_limit: usize,
    },
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        print!("{text}");
        return Ok(());
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn name_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn analyze_cmd(
    file: &Path,
    policy: PolicyPair,
    json: Option<&Path>,
    dot: Option<&Path>,
    depth: usize,
    check: bool,
) -> Result<ExitCode> {
    let source = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let program = parse_program(&source).with_context(|| file.display().to_string())?;
    let start = Instant::now();
    let result = analyze(&program, policy);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let report = Report::new(&name_of(file), &program, &result, ms);
    // Keep stdout parseable when the JSON goes there.
    let summary = json != Some(Path::new("-"));

    if summary {
        println!("{} under {policy}", report.program);
        println!(
            "configurations {}  states visited {}  transitions {}  {:.1} ms",
            report.configurations, report.states_visited, report.transitions, ms
        );
        for (var, entries) in &report.flows {
            for (addr, values) in entries {
                if addr == var {
                    println!("  {addr} = {{{}}}", values.join(", "));
                } else {
                    println!("  {var} @ {addr} = {{{}}}", values.join(", "));
                }
            }
        }
    }
    for d in &result.diagnostics {
        eprintln!("note: at {}: {}", d.at, d.message);
    }

    let mut value = serde_json::to_value(&report)?;
    let mut code = ExitCode::SUCCESS;
    if check || dot.is_some() {
        let oracle = oracle_analyze(&program, policy.value, depth)?;
        if !oracle.complete {
            bail!("the oracle did not complete within stack depth {depth}");
        }
        if let Some(dot) = dot {
            write_out(dot, &dsg_extract(&program, &oracle)?.to_dot())?;
        }
        if check {
            let precision = precision_check(&result, &oracle, depth)?;
            if summary {
                println!(
                    "precision: {} violations over {} checked pairs",
                    precision.violations.len(),
                    precision.checked_pairs
                );
            }
            if !precision.is_precise() {
                code = ExitCode::from(2);
            }
            value["precision"] = precision.to_json(&program);
        }
    }
    if let Some(json) = json {
        write_out(json, &format!("{}\n", serde_json::to_string_pretty(&value)?))?;
    }
    Ok(code)
}

fn bench_cmd(
    corpus: Option<&Path>,
    matrix: bool,
    out: &Path,
    csv: Option<&Path>,
    plot: Option<&Path>,
) -> Result<ExitCode> {
    let corpus = match corpus {
        Some(dir) => bench::load_corpus_dir(dir)?,
        None => bench::corpus(),
    };
    let policies: Vec<PolicyPair> = if matrix {
        PolicyPair::all().collect()
    } else {
        ValuePolicy::ALL
            .into_iter()
            .flat_map(|v| [KontPolicy::Aac, KontPolicy::P4F].map(|k| PolicyPair::new(v, k)))
            .collect()
    };
    let rows = bench::run_matrix(&corpus, &policies, Default::default());
    for row in &rows {
        for c in &row.cells {
            match (&c.report, &c.error) {
                (Some(r), _) => println!(
                    "{:<10} {:<16} configurations {:>7}  states {:>7}",
                    row.program,
                    c.policy.to_string(),
                    r.configurations,
                    r.states_visited
                ),
                (None, Some(e)) => println!("{:<10} {:<16} error: {e}", row.program, c.policy.to_string()),
                (None, None) => {}
            }
        }
    }
    let report = MatrixReport::new(rows);
    for (v, s) in &report.summary.by_value_policy {
        println!(
            "{v}: AAC/P4F configurations geomean {:.2}x (max {:.2}x), states geomean {:.2}x (max {:.2}x)",
            s.configurations_geomean, s.configurations_max, s.states_geomean, s.states_max
        );
    }
    write_out(out, &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    if let Some(csv) = csv {
        write_out(csv, &bench::to_csv(&report.rows))?;
    }
    if let Some(plot) = plot {
        write_out(plot, &bench::to_gnuplot(&report.rows))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_cmd(file: &Path, trace: Option<&Path>, step_limit: usize) -> Result<ExitCode> {
    let source = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let program = parse_program(&source).with_context(|| file.display().to_string())?;
    let run = concrete::concrete_run(&program, step_limit);
    if let Some(trace) = trace {
        write_out(trace, &concrete::trace_jsonl(&run))?;
    }
    match &run.outcome {
        Outcome::Halted(v) => println!("{v}"),
        Outcome::Stuck(e) => bail!("{e}"),
        Outcome::StepLimit => bail!("no result after {step_limit} steps"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze {
            file,
            value_policy,
            kont_policy,
            json,
            dot,
            oracle_depth,
            check_precision,
        } => analyze_cmd(
            file,
            PolicyPair::new(*value_policy, *kont_policy),
            json.as_deref(),
            dot.as_deref(),
            *oracle_depth,
            *check_precision,
        ),
        Command::Bench {
            corpus,
            matrix,
            out,
            csv,
            plot,
        } => bench_cmd(corpus.as_deref(), *matrix, out, csv.as_deref(), plot.as_deref()),
        Command::Run {
            file,
            trace,
            step_limit,
        } => run_cmd(file, trace.as_deref(), *step_limit),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
