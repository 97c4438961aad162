use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use timebin::lattice::LatticeGraph;
use timebin::scenario::{
    demo_scenarios, load_scenarios, resolve_out_dir, run_suite, scenarios_to_json, AlphaStep, Demo, DemoOptions,
    InitialState, Overrides, RunMode, Scenario, SnapshotChoice, OUT_ENV,
};
use timebin::schedule::{compile_schedule, PhaseOverride};
use timebin::{Error, Result};

#[derive(Parser)]
#[command(name = "timebin", version, about = "Time-bin photonic lattice emulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files, a lattice file, or a demo.
    Run(RunArgs),
    /// Run a built-in demo.
    Demo {
        name: Demo,
        #[command(flatten)]
        demo: DemoArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Print the scenario file that reproduces a demo.
    DumpDemo {
        name: Demo,
        #[command(flatten)]
        demo: DemoArgs,
        /// Write here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the compiled pass schedule of a lattice.
    Schedule {
        #[arg(long, conflicts_with = "demo", required_unless_present = "demo")]
        lattice: Option<PathBuf>,
        #[arg(long)]
        demo: Option<Demo>,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario files (one object or a list each).
    scenarios: Vec<PathBuf>,
    #[arg(long, conflicts_with_all = ["demo", "scenarios"])]
    lattice: Option<PathBuf>,
    #[arg(long, conflicts_with = "scenarios")]
    demo: Option<Demo>,
    /// Initial bosons for --lattice, as `bin:count,...`.
    #[arg(long, default_value = "0:1")]
    initial: String,
    #[command(flatten)]
    demo_args: DemoArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct DemoArgs {
    /// Ladder length for the hall-ladder demo.
    #[arg(long)]
    rungs: Option<usize>,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "U")]
    u: Option<f64>,
    #[arg(long)]
    kappa_scale: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<RunMode>,
    /// Ladder flux for hall-ladder, uniform phase offset otherwise.
    #[arg(long, conflicts_with = "alpha_schedule")]
    alpha: Option<f64>,
    /// JSON list of phase-table entries.
    #[arg(long)]
    alpha_schedule: Option<PathBuf>,
    #[arg(long)]
    bands: bool,
    #[arg(long)]
    correlations: bool,
    #[arg(long)]
    wavepacket: bool,
    #[arg(long, value_enum)]
    snapshots: Option<SnapshotChoice>,
    /// Output directory; falls back to the environment, then ./timebin-out.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    memory_cap: Option<u64>,
    /// Run the scenarios concurrently.
    #[arg(long)]
    sweep: bool,
}

impl Common {
    fn overrides(&self, alpha_for_scenarios: bool) -> Result<Overrides> {
        let alpha_schedule = match &self.alpha_schedule {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                let steps: Vec<AlphaStep> = serde_json::from_str(&text).map_err(|e| Error::Config {
                    path: format!("{}: line {} column {}", path.display(), e.line(), e.column()),
                    message: e.to_string(),
                })?;
                Some(steps)
            }
            None => None,
        };
        Ok(Overrides {
            mu: self.mu,
            u: self.u,
            kappa_scale: self.kappa_scale,
            iterations: self.iterations,
            mode: self.mode,
            alpha: if alpha_for_scenarios { self.alpha } else { None },
            alpha_schedule,
            bands: self.bands,
            correlations: self.correlations,
            wavepacket: self.wavepacket,
            snapshots: self.snapshots,
            seed: self.seed,
            memory_cap: self.memory_cap,
        })
    }
}

fn parse_initial(text: &str) -> Result<Vec<(usize, u32)>> {
    text.split(',')
        .map(|item| {
            let (b, c) = item.split_once(':').unwrap_or((item, "1"));
            match (b.trim().parse(), c.trim().parse()) {
                (Ok(b), Ok(c)) => Ok((b, c)),
                _ => Err(Error::Config {
                    path: "--initial".into(),
                    message: format!("expected bin:count, got '{item}'"),
                }),
            }
        })
        .collect()
}

fn demo_list(name: Demo, demo: &DemoArgs, alpha: Option<f64>) -> Vec<Scenario> {
    demo_scenarios(
        name,
        &DemoOptions {
            rungs: demo.rungs,
            alpha,
        },
    )
}

fn execute(list: Vec<Scenario>, base: &Path, common: &Common, overrides: Overrides) -> Result<i32> {
    let mut list = list;
    for sc in &mut list {
        overrides.apply(sc);
        sc.validate()?;
    }
    let out = resolve_out_dir(common.out.as_deref());
    let mut code = 0;
    for r in run_suite(&list, base, &out, common.sweep) {
        match r {
            Ok(r) => {
                let mut line = format!("{}: {} files in {}", r.name, r.files.len(), r.out_dir.display());
                for (k, v) in &r.summary {
                    line.push_str(&format!(" {k}={v}"));
                }
                println!("{line}");
            }
            Err(e) => {
                eprintln!("error: {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    Ok(code)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let c = &args.common;
            if let Some(demo) = args.demo {
                let list = demo_list(demo, &args.demo_args, c.alpha);
                return execute(list, Path::new("."), c, c.overrides(false)?);
            }
            if let Some(path) = &args.lattice {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config {
                    path: format!("{}: line {} column {}", path.display(), e.line(), e.column()),
                    message: e.to_string(),
                })?;
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("lattice");
                let sc = Scenario::new(name, doc, InitialState::Fock(parse_initial(&args.initial)?), 1);
                return execute(vec![sc], Path::new("."), c, c.overrides(true)?);
            }
            if args.scenarios.is_empty() {
                return Err(Error::Config {
                    path: "arguments".into(),
                    message: "give scenario files, --lattice or --demo".into(),
                });
            }
            // every file runs against its own directory for relative graph paths
            let mut code = 0;
            for path in &args.scenarios {
                let base = path.parent().unwrap_or(Path::new("."));
                code = code.max(execute(load_scenarios(path)?, base, c, c.overrides(true)?)?);
            }
            Ok(code)
        }
        Command::Demo { name, demo, common } => {
            let list = demo_list(name, &demo, common.alpha);
            execute(list, Path::new("."), &common, common.overrides(false)?)
        }
        Command::DumpDemo { name, demo, output } => {
            let text = scenarios_to_json(&demo_list(name, &demo, None));
            match output {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::Io {
                    path: p.display().to_string(),
                    source: e,
                })?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Schedule { lattice, demo, alpha } => {
            let graph = match (lattice, demo) {
                (Some(p), _) => LatticeGraph::load(&p)?,
                (None, Some(d)) => {
                    let sc = demo_list(d, &DemoArgs { rungs: None }, None).remove(0);
                    timebin::scenario::load_graph(&sc.graph, Path::new("."))?
                }
                (None, None) => unreachable!("clap requires one"),
            };
            let o = alpha.map(PhaseOverride::Additive);
            print!("{}", compile_schedule(&graph, o.as_ref())?.dump());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
