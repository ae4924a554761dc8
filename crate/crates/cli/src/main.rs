//! `htnrefine`: planning, task-insertion planning, method refinement and
//! learning-curve evaluation from the command line.
//!
//! Exit codes: 0 success, 1 parse/IO/configuration error, 2 no solution
//! (or an invalid tree for `validate`), 3 search budget exhausted, 4 no
//! instance had a task-insertion plan.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use htn_refine::eval::{
    benchmark, benchmark_names, degrade, evaluate, gen_instances, EvalConfig, GenParams, Preset,
};
use htn_refine::model::{Domain, Instance};
use htn_refine::parser::{
    parse_domain_named, parse_instance_named, parse_methods, parse_prioritization, parse_tree,
    print_domain, print_instance, print_methods, print_prioritization, print_tree, read_all,
};
use htn_refine::planner::{plan_htn, plan_tihtn, PlanConfig, PlanError};
use htn_refine::preference::{stratify, Prioritization};
use htn_refine::refine::{method_refine, RefineConfig};
use htn_refine::strategy::{
    profile_strategy, profile_strategy_names, MinimizeMode, ProfileStrategy,
};
use htn_refine::tree::{linearize, validate_dt};

/// Writes to stdout. A reader that closed the pipe early is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = write!(std::io::stdout(), $($arg)*) {
            if e.kind() != std::io::ErrorKind::BrokenPipe {
                eprintln!("cannot write output: {e}");
            }
        }
    }};
}

#[derive(Parser)]
#[command(
    name = "htnrefine",
    version,
    about = "HTN planning and method refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance by decomposition only.
    Plan(PlanArgs),
    /// Solve an instance allowing inserted primitive tasks (marked with `+`).
    Tiplan(PlanArgs),
    /// Learn refined methods from a set of instances.
    Refine(RefineArgs),
    /// Learning curve on a bundled benchmark.
    Eval(EvalArgs),
    /// Check a decomposition tree against a domain and instance.
    Validate(ValidateArgs),
    /// Print a file in canonical form.
    Fmt(FmtArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct Budget {
    /// Wall-clock budget per search, in milliseconds.
    #[arg(long, default_value_t = 30_000, value_parser = clap::value_parser!(u64).range(1..))]
    budget_ms: u64,
    /// Search nodes per search.
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    max_nodes: u64,
    /// Upper bound on inserted tasks.
    #[arg(long, default_value_t = 6)]
    max_insertions: usize,
}

impl Budget {
    fn config(&self) -> PlanConfig {
        PlanConfig {
            max_nodes: self.max_nodes,
            time_budget: Some(Duration::from_millis(self.budget_ms)),
            max_insertions: self.max_insertions,
            ..PlanConfig::default()
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    domain: PathBuf,
    instance: PathBuf,
    /// Additional (refined) methods.
    #[arg(long)]
    methods: Option<PathBuf>,
    #[command(flatten)]
    budget: Budget,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct Minimize {
    /// Largest stratum minimized by exhaustive subset search.
    #[arg(long, default_value_t = 12)]
    exact_cap: usize,
    /// Skip the minimization phase.
    #[arg(long)]
    no_minimize: bool,
    /// auto, exact or greedy.
    #[arg(long, default_value = "auto")]
    minimize_mode: String,
}

#[derive(Args)]
struct RefineArgs {
    domain: PathBuf,
    /// Instance files or directories of `.inst` files.
    #[arg(required = true)]
    instances: Vec<PathBuf>,
    /// Profile strategy: strata, strata-inverted or random.
    #[arg(long, default_value = "strata")]
    prio: String,
    /// Prioritization file; defaults to the stratification of the domain.
    #[arg(long)]
    prio_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write learned methods here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON audit log here.
    #[arg(long)]
    audit: Option<PathBuf>,
    #[command(flatten)]
    budget: Budget,
    #[command(flatten)]
    minimize: Minimize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct EvalArgs {
    /// Bundled benchmark domain.
    #[arg(long, default_value = "logistics")]
    benchmark: String,
    /// Degradation preset: MR-H, MR-M or MR-L.
    #[arg(long, default_value = "MR-H")]
    preset: String,
    #[arg(long, default_value_t = 10)]
    train: usize,
    #[arg(long, default_value_t = 20)]
    test: usize,
    /// Generator size knob (cities for logistics, directions for satellite).
    #[arg(long, default_value_t = 3)]
    size: usize,
    /// Generator agent count (planes for logistics, satellites for satellite).
    #[arg(long, default_value_t = 2)]
    agents: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Profile strategy: strata, strata-inverted or random.
    #[arg(long, default_value = "strata")]
    prio: String,
    /// Comma-separated training sizes to report; all prefixes by default.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[command(flatten)]
    budget: Budget,
    #[command(flatten)]
    minimize: Minimize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct ValidateArgs {
    domain: PathBuf,
    instance: PathBuf,
    tree: PathBuf,
    #[arg(long)]
    methods: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct FmtArgs {
    file: PathBuf,
    /// Domain needed to read instances, prioritizations, methods and trees.
    #[arg(long)]
    domain: Option<PathBuf>,
}

/// Failure carrying its exit code.
struct Exit(u8, String);

fn main() -> ExitCode {
    env_logger::init();
    if let Some(n) = std::env::var("HTNREFINE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(&a),
        Command::Tiplan(a) => cmd_tiplan(&a),
        Command::Refine(a) => cmd_refine(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Fmt(a) => cmd_fmt(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, msg)) => {
            if !msg.is_empty() {
                eprintln!("{msg}");
            }
            ExitCode::from(code)
        }
    }
}

fn io(e: anyhow::Error) -> Exit {
    Exit(1, format!("error: {e:#}"))
}

fn plan_failure(e: PlanError) -> Exit {
    match e {
        PlanError::Unsolvable | PlanError::NoTihtnPlan(_) => Exit(2, format!("no solution: {e}")),
        PlanError::ResourceLimit => Exit(3, format!("gave up: {e}")),
        PlanError::Invalid(_) => Exit(1, format!("error: {e}")),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_domain(path: &Path) -> Result<Domain> {
    Ok(parse_domain_named(
        &read(path)?,
        &path.display().to_string(),
    )?)
}

fn load_instance(path: &Path, dom: &Domain) -> Result<Instance> {
    Ok(parse_instance_named(
        &read(path)?,
        dom,
        &path.display().to_string(),
    )?)
}

fn with_methods(dom: Domain, methods: Option<&PathBuf>) -> Result<Domain> {
    match methods {
        None => Ok(dom),
        Some(p) => {
            let ms = parse_methods(&read(p)?, &dom)?;
            Ok(dom.with_methods(&ms))
        }
    }
}

fn write_out(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            out!("{text}");
            Ok(())
        }
    }
}

fn strategy(name: &str) -> Result<Arc<dyn ProfileStrategy>> {
    profile_strategy(name).ok_or_else(|| {
        anyhow!(
            "unknown prioritization mode {name}; expected one of {}",
            profile_strategy_names().join(", ")
        )
    })
}

fn refine_config(budget: &Budget, m: &Minimize, prio: &str, seed: u64) -> Result<RefineConfig> {
    Ok(RefineConfig {
        plan: budget.config(),
        exact_cap: m.exact_cap,
        mode: MinimizeMode::by_name(&m.minimize_mode)
            .ok_or_else(|| anyhow!("unknown minimize mode {}", m.minimize_mode))?,
        minimize: !m.no_minimize,
        strategy: strategy(prio)?,
        seed,
    })
}

fn cmd_plan(a: &PlanArgs) -> Result<(), Exit> {
    let (dom, inst) = (|| -> Result<_> {
        let dom = with_methods(load_domain(&a.domain)?, a.methods.as_ref())?;
        let inst = load_instance(&a.instance, &dom)?;
        Ok((dom, inst))
    })()
    .map_err(io)?;
    let tree = plan_htn(&dom, &inst, &a.budget.config()).map_err(plan_failure)?;
    let plan = linearize(&tree).map_err(|e| Exit(1, format!("error: {e}")))?;
    match a.format {
        Format::Json => {
            let steps: Vec<String> = plan.actions().iter().map(|s| s.to_string()).collect();
            let v = serde_json::json!({ "plan": steps, "tree": tree });
            out!(
                "{}\n",
                serde_json::to_string_pretty(&v).expect("serializable")
            );
        }
        _ => {
            for s in plan.actions() {
                out!("{s}\n");
            }
            out!("\n");
            out!("{}", print_tree(&tree));
        }
    }
    Ok(())
}

fn cmd_tiplan(a: &PlanArgs) -> Result<(), Exit> {
    let (dom, inst) = (|| -> Result<_> {
        let dom = with_methods(load_domain(&a.domain)?, a.methods.as_ref())?;
        let inst = load_instance(&a.instance, &dom)?;
        Ok((dom, inst))
    })()
    .map_err(io)?;
    let r = plan_tihtn(&dom, &inst, &a.budget.config()).map_err(plan_failure)?;
    let steps: Vec<String> = r
        .sigma
        .iter()
        .map(|s| format!("{}{}", if s.is_inserted() { "+" } else { "" }, s.action))
        .collect();
    match a.format {
        Format::Json => {
            let v = serde_json::json!({ "plan": steps, "inserted": r.inserted, "tree": r.tree });
            out!(
                "{}\n",
                serde_json::to_string_pretty(&v).expect("serializable")
            );
        }
        _ => {
            for s in steps {
                out!("{s}\n");
            }
        }
    }
    Ok(())
}

fn instance_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "inst"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn cmd_refine(a: &RefineArgs) -> Result<(), Exit> {
    let (dom, instances, p, cfg) = (|| -> Result<_> {
        let dom = load_domain(&a.domain)?;
        let instances = instance_files(&a.instances)?
            .iter()
            .map(|f| load_instance(f, &dom))
            .collect::<Result<Vec<_>>>()?;
        let p = match &a.prio_file {
            Some(f) => parse_prioritization(&read(f)?, &dom)?,
            None => stratify(&dom).unwrap_or_else(|_| Prioritization::flat(&dom)),
        };
        let cfg = refine_config(&a.budget, &a.minimize, &a.prio, a.seed)?;
        Ok((dom, instances, p, cfg))
    })()
    .map_err(io)?;
    let out = method_refine(&dom, &instances, &p, &cfg);
    let audit = serde_json::to_string_pretty(&out.log).expect("serializable");
    if let Some(path) = &a.audit {
        write_out(Some(path), &audit).map_err(io)?;
    }
    let text = match a.format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&serde_json::json!({
                "methods": print_methods(&out.methods),
                "log": out.log,
            }))
            .expect("serializable")
        ),
        _ => print_methods(&out.methods),
    };
    write_out(a.out.as_ref(), &text).map_err(io)?;
    if !instances.is_empty() && out.solved() == 0 {
        return Err(Exit(4, "no instance has a task-insertion plan".into()));
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Exit> {
    let run = || -> Result<String> {
        let bench = benchmark(&a.benchmark).ok_or_else(|| {
            anyhow!(
                "unknown benchmark {}; expected one of {}",
                a.benchmark,
                benchmark_names().join(", ")
            )
        })?;
        let preset =
            Preset::by_name(&a.preset).ok_or_else(|| anyhow!("unknown preset {}", a.preset))?;
        if a.size == 0 || a.agents == 0 {
            bail!("--size and --agents must be positive");
        }
        let full = bench.domain();
        let degraded = degrade(&full, &bench.preset(preset))?;
        let params = GenParams {
            size: a.size,
            agents: a.agents,
        };
        let insts = gen_instances(bench.as_ref(), a.seed, a.train + a.test, &params);
        let (train, test) = insts.split_at(a.train);
        let p = stratify(&degraded).unwrap_or_else(|_| Prioritization::flat(&degraded));
        let cfg = EvalConfig {
            refine: refine_config(&a.budget, &a.minimize, &a.prio, a.seed)?,
            test_plan: a.budget.config(),
            sizes: a.sizes.clone(),
        };
        let curve = evaluate(&full, &degraded, train, test, &p, &cfg)?;
        Ok(match a.format {
            Format::Json => format!(
                "{}\n",
                serde_json::to_string_pretty(&serde_json::json!({
                    "benchmark": bench.name(),
                    "preset": preset.name(),
                    "prio": a.prio,
                    "seed": a.seed,
                    "points": curve.points,
                }))
                .expect("serializable")
            ),
            _ => curve.to_csv(),
        })
    };
    let text = run().map_err(io)?;
    out!("{text}");
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Result<(), Exit> {
    let (dom, inst, tree) = (|| -> Result<_> {
        let dom = with_methods(load_domain(&a.domain)?, a.methods.as_ref())?;
        let inst = load_instance(&a.instance, &dom)?;
        let tree = parse_tree(&read(&a.tree)?, &dom)?;
        Ok((dom, inst, tree))
    })()
    .map_err(io)?;
    let verdict = validate_dt(&tree, &dom, &inst);
    match a.format {
        Format::Json => out!(
            "{}\n",
            serde_json::to_string_pretty(&verdict).expect("serializable")
        ),
        _ => {
            if verdict.is_valid() {
                out!("valid\n");
            }
            for v in &verdict.violations {
                out!("{v}\n");
            }
        }
    }
    if verdict.is_valid() {
        Ok(())
    } else {
        Err(Exit(2, String::new()))
    }
}

fn cmd_fmt(a: &FmtArgs) -> Result<(), Exit> {
    let run = || -> Result<String> {
        let text = read(&a.file)?;
        let name = a.file.display().to_string();
        let forms = read_all(&text, &name).map_err(htn_refine::parser::ParseError::from)?;
        let kind = forms
            .first()
            .and_then(|f| f.head())
            .unwrap_or("")
            .to_string();
        if kind == "domain" {
            return Ok(print_domain(&parse_domain_named(&text, &name)?));
        }
        let dom = match &a.domain {
            Some(d) => load_domain(d)?,
            None => bail!("formatting a {kind} file needs --domain"),
        };
        Ok(match kind.as_str() {
            "instance" => print_instance(&parse_instance_named(&text, &dom, &name)?),
            "prioritization" => print_prioritization(&parse_prioritization(&text, &dom)?),
            "methods" => print_methods(&parse_methods(&text, &dom)?),
            "tree" => print_tree(&parse_tree(&text, &dom)?),
            other => bail!("{name}: unknown file kind ({other} ...)"),
        })
    };
    let text = run().map_err(io)?;
    out!("{text}");
    Ok(())
}
