//! Command-line pipeline: parse auditd logs, build resource-interaction
//! graphs, run the detectors, and generate synthetic scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rigkit::audit::parse_stream;
use rigkit::cluster::{crossval, CandidateGrid, CrossvalOptions, LogCase};
use rigkit::eval::{metrics, metrics_csv_header, metrics_csv_row, ConfusionMatrix};
use rigkit::gae::{
    classify, split_edges, to_linkpred, train, undirected_labels, save_checkpoint,
    AttributeMode, FeatureOptions, ThresholdRule, TrainConfig,
};
use rigkit::graph::{build_graph, check_invariants, BuildOptions, GraphMode};
use rigkit::label::{label_edges, labels_to_csv, AttackWindow};
use rigkit::growth::{growth, growth_to_csv};
use rigkit::synth::{generate, AttackKind, ScenarioSpec};
use rigkit::syscalls::SyscallTable;

#[derive(Parser)]
#[command(name = "rigkit", version, about = "Audit-log resource-interaction graphs and anomaly detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Tree,
    Pseudo,
}

impl From<ModeArg> for GraphMode {
    fn from(m: ModeArg) -> GraphMode {
        match m {
            ModeArg::Tree => GraphMode::ProcessTree,
            ModeArg::Pseudo => GraphMode::PseudoProcess,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct TableArgs {
    /// Syscall table file ("name number" rows); overrides the builtin.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Builtin table to use when no file is given.
    #[arg(long, default_value = "x86-32")]
    builtin: String,
}

impl TableArgs {
    /// Precedence: --table flag, then RIGKIT_SYSCALL_TABLE, then builtin.
    fn load(&self) -> Result<SyscallTable> {
        if let Some(path) = &self.table {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading syscall table {}", path.display()))?;
            return Ok(SyscallTable::parse(&text)?);
        }
        if let Ok(path) = std::env::var("RIGKIT_SYSCALL_TABLE") {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading syscall table {path}"))?;
            return Ok(SyscallTable::parse(&text)?);
        }
        Ok(SyscallTable::builtin(&self.builtin)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse an auditd log and dump events as newline-delimited JSON.
    Parse {
        input: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        /// Events output path (NDJSON); stdout summary only if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build a resource-interaction graph from an auditd log.
    Build {
        input: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum, default_value = "pseudo")]
        mode: ModeArg,
        /// Also add a FILE node for each event's working directory.
        #[arg(long)]
        cwd_node: bool,
        /// Graph JSON output path.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Graphviz DOT output path.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Edge-list CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Graph size versus event count, with a logarithmic reference column.
    Growth {
        input: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum, default_value = "pseudo")]
        mode: ModeArg,
        #[arg(long, default_value_t = 200)]
        stride: usize,
        #[arg(long, default_value_t = 200)]
        skip_head: usize,
        #[arg(long, default_value_t = 200)]
        skip_tail: usize,
        /// Base of the logarithmic reference curve.
        #[arg(long, default_value_t = 1.02)]
        base: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Label graph edges from a ground-truth attack window sidecar.
    Label {
        input: PathBuf,
        /// Window sidecar ("start_seconds duration_seconds").
        #[arg(long)]
        window: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum, default_value = "pseudo")]
        mode: ModeArg,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Link-prediction detector: train on normal edges, score the rest.
    Gae {
        input: PathBuf,
        #[arg(long)]
        window: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum, default_value = "pseudo")]
        mode: ModeArg,
        #[arg(long, default_value_t = 400)]
        epochs: usize,
        /// Fixed decision threshold; mutually exclusive with --sweep.
        #[arg(long, conflicts_with = "sweep")]
        threshold: Option<f64>,
        /// Pick the F1-maximizing threshold on a 0.01 grid.
        #[arg(long)]
        sweep: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Layer widths as "hidden,embedding".
        #[arg(long, default_value = "32,16")]
        hidden: String,
        /// Drop edge-vector attributes, keeping one-hot node types only.
        #[arg(long)]
        node_attrs_only: bool,
        /// Disable log1p + column-max attribute scaling.
        #[arg(long)]
        no_scale: bool,
        /// Fraction of normal edges used for training.
        #[arg(long, default_value_t = 0.5)]
        train_frac: f64,
        /// Metrics CSV output path.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Model checkpoint JSON output path.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sketch-clustering detector with rotating cross-validation. A log
    /// named x.log is an attack log when x.window exists beside it.
    Cluster {
        /// Auditd logs (attack windows read from sibling .window files).
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum, default_value = "pseudo")]
        mode: ModeArg,
        /// Chunk-size search range "lo:hi[:step]".
        #[arg(long, default_value = "10:50:2")]
        chunk_range: String,
        /// Cluster-count search range "lo:hi".
        #[arg(long, default_value = "1:5")]
        k_range: String,
        /// Radius slack candidates, comma separated.
        #[arg(long, default_value = "1.0,1.1,1.25,1.5")]
        slack_range: String,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute metrics from confusion-matrix counts.
    Eval {
        #[arg(long)]
        tp: u64,
        #[arg(long)]
        fp: u64,
        #[arg(long, name = "fn")]
        fn_: u64,
        #[arg(long)]
        tn: u64,
    },
    /// Generate a synthetic auditd log with an optional attack window.
    Synth {
        /// Output stem; writes <stem>.log and, with an attack, <stem>.window.
        #[arg(short, long)]
        output: PathBuf,
        /// Scenario JSON file; overrides the individual flags below.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "none")]
        attack: AttackArg,
        #[arg(long, default_value_t = 600.0)]
        duration: f64,
        #[arg(long, default_value_t = 300.0)]
        attack_start: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-export a graph JSON file as DOT and/or CSV.
    Export {
        input: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AttackArg {
    None,
    Dos,
    Privesc,
}

impl From<AttackArg> for AttackKind {
    fn from(a: AttackArg) -> AttackKind {
        match a {
            AttackArg::None => AttackKind::None,
            AttackArg::Dos => AttackKind::DosLike,
            AttackArg::Privesc => AttackKind::PrivescLike,
        }
    }
}

/// Write via a temp file in the same directory, then rename.
fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let dir = dir.unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file near {}", path.display()))?;
    use std::io::Write;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_log(path: &Path, table: &SyscallTable) -> Result<Vec<rigkit::audit::AuditEvent>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (events, stats) = parse_stream(&text, table);
    for w in &stats.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(events)
}

fn read_window(path: &Path) -> Result<AttackWindow> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    AttackWindow::parse_sidecar(&text)
        .with_context(|| format!("malformed window sidecar {}", path.display()))
}

fn parse_range(spec: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let (lo, hi, step) = match parts.as_slice() {
        [lo, hi] => (lo.parse()?, hi.parse()?, 1),
        [lo, hi, step] => (lo.parse()?, hi.parse()?, step.parse()?),
        _ => bail!("range must be lo:hi[:step], got {spec:?}"),
    };
    if step == 0 || hi < lo {
        bail!("bad range {spec:?}");
    }
    Ok((lo..=hi).step_by(step).collect())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Parse {
            input,
            table,
            output,
        } => {
            let table = table.load()?;
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let (events, stats) = parse_stream(&text, &table);
            if let Some(out) = output {
                let mut ndjson = String::new();
                for e in &events {
                    ndjson.push_str(&serde_json::to_string(e)?);
                    ndjson.push('\n');
                }
                atomic_write(&out, &ndjson)?;
            }
            println!(
                "events={} skipped={} warnings={}",
                stats.emitted,
                stats.skipped_no_syscall,
                stats.warnings.len()
            );
        }
        Command::Build {
            input,
            table,
            mode,
            cwd_node,
            output,
            dot,
            csv,
        } => {
            let table = table.load()?;
            let events = read_log(&input, &table)?;
            let (g, _) = build_graph(&events, mode.into(), BuildOptions { cwd_node });
            let report = check_invariants(&g);
            if !report.acyclic {
                bail!("graph is not acyclic; input violates builder assumptions");
            }
            if let Some(out) = output {
                atomic_write(&out, &rigkit::graph::to_json(&g))?;
            }
            if let Some(out) = dot {
                atomic_write(&out, &rigkit::graph::to_dot(&g))?;
            }
            if let Some(out) = csv {
                atomic_write(&out, &rigkit::graph::to_csv(&g))?;
            }
            println!(
                "nodes={} edges={} max_path_len={}",
                g.nodes.len(),
                g.edges.len(),
                report.max_path_len
            );
        }
        Command::Growth {
            input,
            table,
            mode,
            stride,
            skip_head,
            skip_tail,
            base,
            output,
        } => {
            let table = table.load()?;
            let events = read_log(&input, &table)?;
            let series = growth(&events, mode.into(), stride, skip_head, skip_tail)?;
            atomic_write(&output, &growth_to_csv(&series, base))?;
            println!("points={}", series.points.len());
        }
        Command::Label {
            input,
            window,
            table,
            mode,
            output,
        } => {
            let table = table.load()?;
            let events = read_log(&input, &table)?;
            let w = read_window(&window)?;
            let (g, _) = build_graph(&events, mode.into(), BuildOptions::default());
            let summary = label_edges(&g, &w);
            if summary.window_out_of_range {
                eprintln!("warning: attack window outside the log's time span");
            }
            atomic_write(&output, &labels_to_csv(&summary))?;
            println!("normal={} abnormal={}", summary.normal, summary.abnormal);
        }
        Command::Gae {
            input,
            window,
            table,
            mode,
            epochs,
            threshold,
            sweep,
            seed,
            hidden,
            node_attrs_only,
            no_scale,
            train_frac,
            output,
            checkpoint,
        } => {
            let table = table.load()?;
            let events = read_log(&input, &table)?;
            let w = read_window(&window)?;
            let (g, _) = build_graph(&events, mode.into(), BuildOptions::default());
            let summary = label_edges(&g, &w);
            let (h0, h1) = hidden
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                .context("--hidden must be \"h0,h1\"")?;
            let opts = FeatureOptions {
                mode: if node_attrs_only {
                    AttributeMode::NodeOnly
                } else {
                    AttributeMode::NodeAndEdge
                },
                scale: !no_scale,
            };
            let lp = to_linkpred(&g, table.vector_len(), opts)?;
            let labels = undirected_labels(&lp, &summary.labels);
            let split = split_edges(&lp, &labels, train_frac, seed)?;
            let cfg = TrainConfig {
                epochs,
                learning_rate: 0.01,
                hidden: h0,
                embed: h1,
                seed,
            };
            let trained = train(&lp, &split.train, &cfg)?;
            let scores = rigkit::gae::score_edges(&trained, &split.test)?;
            let rule = match threshold {
                Some(t) => ThresholdRule::Fixed(t),
                None if sweep => ThresholdRule::Sweep,
                None => ThresholdRule::Fixed(0.3),
            };
            let result = classify(&scores, &split.test_labels, rule);
            let m = metrics(&result.confusion);
            let mode_name = match GraphMode::from(mode) {
                GraphMode::ProcessTree => "tree",
                GraphMode::PseudoProcess => "pseudo",
            };
            let mut csv = metrics_csv_header().to_string();
            csv.push_str(&metrics_csv_row(
                input.file_stem().and_then(|s| s.to_str()).unwrap_or("log"),
                mode_name,
                "gae",
                0,
                result.threshold,
                &result.confusion,
                &m,
            ));
            if let Some(out) = output {
                atomic_write(&out, &csv)?;
            }
            if let Some(out) = checkpoint {
                atomic_write(&out, &save_checkpoint(&trained))?;
            }
            print!("{csv}");
        }
        Command::Cluster {
            inputs,
            table,
            mode,
            chunk_range,
            k_range,
            slack_range,
            folds,
            seed,
            output,
        } => {
            let table = table.load()?;
            let mut cases = Vec::new();
            for path in &inputs {
                let events = read_log(path, &table)?;
                let sidecar = path.with_extension("window");
                let window = if sidecar.exists() {
                    Some(read_window(&sidecar)?)
                } else {
                    None
                };
                cases.push(LogCase { events, window });
            }
            let grid = CandidateGrid {
                max_chunks: parse_range(&chunk_range)?,
                ks: parse_range(&k_range)?,
                slacks: slack_range
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .context("--slack-range must be comma-separated numbers")?,
            };
            let opts = CrossvalOptions {
                folds,
                seed,
                mode: mode.into(),
                grid,
            };
            let report = crossval(&cases, &opts)?;
            let mut csv = metrics_csv_header().to_string();
            for fold in &report.folds {
                let m = metrics(&fold.confusion);
                csv.push_str(&metrics_csv_row(
                    "crossval",
                    match GraphMode::from(mode) {
                        GraphMode::ProcessTree => "tree",
                        GraphMode::PseudoProcess => "pseudo",
                    },
                    "cluster",
                    fold.fold,
                    fold.slack,
                    &fold.confusion,
                    &m,
                ));
            }
            if let Some(out) = output {
                atomic_write(&out, &csv)?;
            }
            print!("{csv}");
            println!("mean_f1={:.6}", report.mean_f1);
        }
        Command::Eval { tp, fp, fn_, tn } => {
            let cm = ConfusionMatrix { tp, fp, fn_, tn };
            let m = metrics(&cm);
            print!("{}", metrics_csv_header());
            print!(
                "{}",
                metrics_csv_row("manual", "-", "-", 0, 0.0, &cm, &m)
            );
        }
        Command::Synth {
            output,
            spec,
            attack,
            duration,
            attack_start,
            seed,
        } => {
            let scenario = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<ScenarioSpec>(&text)
                        .with_context(|| format!("malformed scenario {}", path.display()))?
                }
                None => ScenarioSpec::default_background(
                    duration,
                    attack.into(),
                    attack_start,
                    seed,
                ),
            };
            let log = generate(&scenario);
            atomic_write(&output.with_extension("log"), &log.text)?;
            if let Some(w) = &log.window {
                atomic_write(&output.with_extension("window"), &w.to_sidecar())?;
            }
            println!("events={}", log.emitted_events);
        }
        Command::Export { input, dot, csv } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let g = rigkit::graph::from_json(&text)
                .with_context(|| format!("malformed graph JSON {}", input.display()))?;
            if let Some(out) = dot {
                atomic_write(&out, &rigkit::graph::to_dot(&g))?;
            }
            if let Some(out) = csv {
                atomic_write(&out, &rigkit::graph::to_csv(&g))?;
            }
            println!("nodes={} edges={}", g.nodes.len(), g.edges.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
