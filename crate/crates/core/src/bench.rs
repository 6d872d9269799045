//! Benchmark corpus, the policy comparison matrix and its reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::alloc::{KontPolicy, PolicyPair, ValuePolicy};
use crate::fixpoint::{analyze_with, AnalysisResult, Options};
use crate::syntax::{parse_program, Program, SyntaxError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusEntry {
    pub name: String,
    pub source: String,
    /// Whether the unbounded-stack oracle reaches a fixed point within
    /// stack depth 12 under both value policies.
    pub expected_oracle_completes: bool,
    pub notes: String,
}

const EMBEDDED: [(&str, &str, bool, &str); 11] = [
    ("id2", include_str!("../corpus/id2.scm"), true, "identity called from two sites"),
    ("mj09", include_str!("../corpus/mj09.scm"), true, ""),
    ("eta", include_str!("../corpus/eta.scm"), true, ""),
    ("kcfa2", include_str!("../corpus/kcfa2.scm"), true, "worst case for k-CFA, k=2"),
    ("kcfa3", include_str!("../corpus/kcfa3.scm"), true, "worst case for k-CFA, k=3"),
    ("blur", include_str!("../corpus/blur.scm"), false, "non-tail recursion"),
    ("loop2", include_str!("../corpus/loop2.scm"), true, "nested tail-recursive loops"),
    ("sat", include_str!("../corpus/sat.scm"), false, "brute-force 4-variable SAT"),
    ("ack", include_str!("../corpus/ack.scm"), false, "non-tail recursion"),
    ("cpstak", include_str!("../corpus/cpstak.scm"), true, "tak in continuation-passing style"),
    ("tak", include_str!("../corpus/tak.scm"), false, "non-tail recursion"),
];

/// The ten named benchmarks, in reporting order.
pub const BENCHMARKS: [&str; 10] = [
    "mj09", "eta", "kcfa2", "kcfa3", "blur", "loop2", "sat", "ack", "cpstak", "tak",
];

/// The built-in corpus.
pub fn corpus() -> Vec<CorpusEntry> {
    EMBEDDED
        .iter()
        .map(|(name, source, completes, notes)| CorpusEntry {
            name: name.to_string(),
            source: source.to_string(),
            expected_oracle_completes: *completes,
            notes: notes.to_string(),
        })
        .collect()
}

pub fn corpus_entry(name: &str) -> Option<CorpusEntry> {
    corpus().into_iter().find(|e| e.name == name)
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{name}: {source}")]
    Syntax { name: String, source: SyntaxError },
}

/// Every `*.scm` file in `dir`, sorted by name. Entries named like a
/// built-in program inherit its metadata.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let io = |e| CorpusError::Io {
        path: dir.display().to_string(),
        source: e,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scm"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let source = std::fs::read_to_string(&path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        parse_program(&source).map_err(|e| CorpusError::Syntax {
            name: name.clone(),
            source: e,
        })?;
        let known = corpus_entry(&name);
        out.push(CorpusEntry {
            expected_oracle_completes: known.as_ref().is_some_and(|k| k.expected_oracle_completes),
            notes: known.map(|k| k.notes).unwrap_or_default(),
            name,
            source,
        });
    }
    Ok(out)
}

type Flows = BTreeMap<String, BTreeMap<String, Vec<String>>>;

/// One analysis run, in the shape written to JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub program: String,
    pub value_policy: ValuePolicy,
    pub kont_policy: KontPolicy,
    pub configurations: usize,
    pub states_visited: usize,
    pub transitions: usize,
    pub flows: Flows,
    pub wall_ms: f64,
}

impl Report {
    pub fn new(name: &str, program: &Program, result: &AnalysisResult, wall_ms: f64) -> Report {
        let flows = result
            .flows()
            .into_iter()
            .map(|(x, entries)| {
                let entries = entries
                    .into_iter()
                    .map(|(a, vs)| (a.to_string(), vs.iter().map(|v| v.render(program)).collect()))
                    .collect();
                (x.to_string(), entries)
            })
            .collect();
        Report {
            program: name.to_string(),
            value_policy: result.policy.value,
            kont_policy: result.policy.kont,
            configurations: result.metrics.configurations,
            states_visited: result.metrics.states_visited,
            transitions: result.metrics.transitions,
            flows,
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    #[serde(flatten)]
    pub policy: PolicyPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Serialize for PolicyPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PolicyPair", 2)?;
        st.serialize_field("value_policy", &self.value)?;
        st.serialize_field("kont_policy", &self.kont)?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub program: String,
    pub cells: Vec<Cell>,
    /// For each value policy with both an AAC and a P4F cell, whether their
    /// flow sets are identical.
    pub precision_equal_aac_p4f: BTreeMap<ValuePolicy, bool>,
}

impl ComparisonRow {
    pub fn cell(&self, policy: PolicyPair) -> Option<&Report> {
        self.cells
            .iter()
            .find(|c| c.policy == policy)
            .and_then(|c| c.report.as_ref())
    }
}

/// Analyzes every program under every policy, in parallel. Failures are
/// recorded per cell.
pub fn run_matrix(corpus: &[CorpusEntry], policies: &[PolicyPair], options: Options) -> Vec<ComparisonRow> {
    let jobs: Vec<(usize, PolicyPair)> = (0..corpus.len())
        .flat_map(|i| policies.iter().map(move |p| (i, *p)))
        .collect();
    let programs: Vec<Result<Program, String>> = corpus
        .iter()
        .map(|e| parse_program(&e.source).map_err(|err| err.to_string()))
        .collect();
    let results: Vec<Result<(AnalysisResult, f64), String>> = jobs
        .par_iter()
        .map(|(i, policy)| {
            let program = programs[*i].as_ref().map_err(Clone::clone)?;
            let start = Instant::now();
            let r = analyze_with(program, *policy, options).map_err(|e| e.to_string())?;
            Ok((r, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect();

    let mut rows: Vec<ComparisonRow> = corpus
        .iter()
        .map(|e| ComparisonRow {
            program: e.name.clone(),
            cells: Vec::new(),
            precision_equal_aac_p4f: BTreeMap::new(),
        })
        .collect();
    let mut by_job: BTreeMap<(usize, PolicyPair), &AnalysisResult> = BTreeMap::new();
    for ((i, policy), result) in jobs.iter().zip(&results) {
        let cell = match (result, &programs[*i]) {
            (Ok((r, ms)), Ok(program)) => {
                by_job.insert((*i, *policy), r);
                Cell {
                    policy: *policy,
                    report: Some(Report::new(&corpus[*i].name, program, r, *ms)),
                    error: None,
                }
            }
            (Err(e), _) | (_, Err(e)) => Cell {
                policy: *policy,
                report: None,
                error: Some(e.clone()),
            },
        };
        rows[*i].cells.push(cell);
    }
    for (i, row) in rows.iter_mut().enumerate() {
        for v in ValuePolicy::ALL {
            let aac = by_job.get(&(i, PolicyPair::new(v, KontPolicy::Aac)));
            let p4f = by_job.get(&(i, PolicyPair::new(v, KontPolicy::P4F)));
            if let (Some(a), Some(b)) = (aac, p4f) {
                row.precision_equal_aac_p4f.insert(v, a.flows() == b.flows());
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSummary {
    pub programs: usize,
    /// Geometric mean over programs of AAC / P4F configurations.
    pub configurations_geomean: f64,
    /// Geometric mean over programs of AAC / P4F states visited.
    pub states_geomean: f64,
    pub configurations_max: f64,
    pub states_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub by_value_policy: BTreeMap<ValuePolicy, RatioSummary>,
}

fn geomean(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

/// AAC-to-P4F cost ratios per value policy, over rows where both ran.
pub fn summarize(rows: &[ComparisonRow]) -> Summary {
    let mut by_value_policy = BTreeMap::new();
    for v in ValuePolicy::ALL {
        let pairs: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|row| {
                let a = row.cell(PolicyPair::new(v, KontPolicy::Aac))?;
                let p = row.cell(PolicyPair::new(v, KontPolicy::P4F))?;
                Some((
                    a.configurations as f64 / p.configurations as f64,
                    a.states_visited as f64 / p.states_visited as f64,
                ))
            })
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let configs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let states: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        by_value_policy.insert(
            v,
            RatioSummary {
                programs: pairs.len(),
                configurations_geomean: geomean(&configs),
                states_geomean: geomean(&states),
                configurations_max: configs.iter().cloned().fold(f64::MIN, f64::max),
                states_max: states.iter().cloned().fold(f64::MIN, f64::max),
            },
        );
    }
    Summary { by_value_policy }
}

/// The full matrix report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixReport {
    pub reports: Vec<Report>,
    pub rows: Vec<ComparisonRow>,
    pub summary: Summary,
}

impl MatrixReport {
    pub fn new(rows: Vec<ComparisonRow>) -> MatrixReport {
        let summary = summarize(&rows);
        let reports = rows
            .iter()
            .flat_map(|r| r.cells.iter().filter_map(|c| c.report.clone()))
            .collect();
        MatrixReport {
            reports,
            rows,
            summary,
        }
    }

    /// The same report with all timings zeroed.
    pub fn without_timings(&self) -> MatrixReport {
        let mut out = self.clone();
        for r in &mut out.reports {
            r.wall_ms = 0.0;
        }
        for row in &mut out.rows {
            for c in &mut row.cells {
                if let Some(r) = &mut c.report {
                    r.wall_ms = 0.0;
                }
            }
        }
        out
    }
}

/// One line per (program, policy).
pub fn to_csv(rows: &[ComparisonRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "program",
        "value_policy",
        "kont_policy",
        "configurations",
        "states_visited",
        "transitions",
        "wall_ms",
        "error",
    ];
    w.write_record(header).expect("in-memory write");
    for row in rows {
        for c in &row.cells {
            let (configs, states, transitions, ms) = match &c.report {
                Some(r) => (
                    r.configurations.to_string(),
                    r.states_visited.to_string(),
                    r.transitions.to_string(),
                    format!("{:.3}", r.wall_ms),
                ),
                None => Default::default(),
            };
            w.write_record([
                row.program.as_str(),
                c.policy.value.name(),
                c.policy.kont.name(),
                &configs,
                &states,
                &transitions,
                &ms,
                c.error.as_deref().unwrap_or(""),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Whitespace-separated columns for a clustered bar chart: AAC and P4F
/// configurations and states per value policy. Missing cells are `?`.
pub fn to_gnuplot(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("# program");
    for v in ValuePolicy::ALL {
        for col in ["aac_configs", "p4f_configs", "aac_states", "p4f_states"] {
            let _ = write!(out, " {v}_{col}");
        }
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.program);
        for v in ValuePolicy::ALL {
            let aac = row.cell(PolicyPair::new(v, KontPolicy::Aac));
            let p4f = row.cell(PolicyPair::new(v, KontPolicy::P4F));
            let show = |r: Option<&Report>, f: fn(&Report) -> usize| {
                r.map(|r| f(r).to_string()).unwrap_or_else(|| "?".into())
            };
            let _ = write!(
                out,
                " {} {} {} {}",
                show(aac, |r| r.configurations),
                show(p4f, |r| r.configurations),
                show(aac, |r| r.states_visited),
                show(p4f, |r| r.states_visited),
            );
        }
        out.push('\n');
    }
    out
}
