mod config;
mod error;
mod render;
mod scenario;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rtp_core::env::four_rooms::{Barrier, FourRoomsClass, FourRoomsConfig, FourRoomsPlp};
use rtp_core::env::gripper::{self, GripperConfig, GripperPlp};
use rtp_core::plp::{self, load_policies, run_plp, save_policies, PlpConfig, PlpDomain, PlpIterationReport, PolicySet, RunDir, TransferMechanism, TransferSpec};
use serde::{Deserialize, Serialize};
use serde_json::json;

use config::{load_file, parse_objects, parse_seeds, FileConfig, Globals, MechanismArg, ModeArg, TraceLevel};
use error::CliError;
use scenario::{drawing, oracle_check, parse_scenario, run_plan, PlanOptions, ScenarioRef};

/// Policy-guided tree planning, hierarchical planning and plan-learn-plan
/// runs on the bundled scenarios.
#[derive(Debug, Parser)]
#[command(name = "rtp", version)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root for run directories.
    #[arg(long, global = true, env = "RTP_OUT")]
    out_root: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    trace_level: Option<TraceLevel>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan one scenario instance and write plan, stats, trace and renders.
    Plan(PlanArgs),
    /// Run plan-learn-plan on a problem class.
    Plp(PlpArgs),
    /// Evaluate saved policies on another problem class.
    Transfer(TransferArgs),
    /// Compare full optimal search against exhaustive enumeration.
    Oracle(OracleArgs),
    /// Render a trace file as SVG (by extension) or ASCII.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// e.g. checkerboard-8x8-neg, four-rooms:original, terrain, gripper:pick-place, pendulum:single
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    levels: Option<usize>,
    /// Tree size budget of the top-level search.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    obstacles: bool,
    /// Directory of saved policy networks.
    #[arg(long)]
    policies: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlpArgs {
    /// four-rooms[:barrier] or gripper:<scenario>
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    examples: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Held-out examples evaluated after each iteration.
    #[arg(long)]
    eval: Option<u64>,
    /// Object count range for gripper classes, e.g. 1..3.
    #[arg(long)]
    objects: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[arg(long)]
    policies: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Families to carry over; all saved families when omitted.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long, value_enum)]
    mechanism: Option<MechanismArg>,
    /// Example seeds, both ends included.
    #[arg(long)]
    examples: Option<String>,
    #[arg(long)]
    objects: Option<String>,
    #[arg(long)]
    obstacles: bool,
    /// Run one plan-learn-plan iteration on the target first.
    #[arg(long)]
    retrain: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: Option<String>,
    /// Seeds, both ends included, e.g. 0..19.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// First record of every trace and the `header` field of JSON artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    tool: String,
    version: String,
    command: String,
    scenario: ScenarioRef,
    seed: u64,
    mode: Option<ModeArg>,
}

impl Header {
    fn new(command: &str, scenario: ScenarioRef, seed: u64, mode: Option<ModeArg>) -> Self {
        Self { tool: "rtp".into(), version: env!("CARGO_PKG_VERSION").into(), command: command.into(), scenario, seed, mode }
    }

    fn line(&self) -> String {
        format!("rtp {} scenario={} seed={}", self.command, self.scenario.name, self.seed)
    }
}

fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' }).collect()
}

fn run_dir(g: &Globals, command: &str, name: &str) -> Result<PathBuf, CliError> {
    let dir = g.out.join(command).join(format!("{}-seed{}", slug(name), g.seed));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{flag} (flag or config file)")))
}

/// Every `*.rtpw` network in `dir`, keyed by file stem.
fn load_policy_dir(dir: &Path) -> Result<PolicySet, CliError> {
    let mut families = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "rtpw") {
            if let Some(stem) = path.file_stem() {
                families.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    families.sort();
    load_policies(dir, &families).map_err(|e| CliError::Config(e.to_string()))
}

fn cmd_plan(g: &Globals, a: PlanArgs, file: &FileConfig) -> Result<(), CliError> {
    let f = &file.plan;
    let name = required(a.scenario.or_else(|| f.scenario.clone()), "scenario")?;
    let sref = ScenarioRef { name, objects: a.objects.or(f.objects), obstacles: a.obstacles || f.obstacles.unwrap_or(false) };
    let scenario = parse_scenario(&sref)?;
    let policies = match a.policies.or_else(|| f.policies.clone()) {
        Some(dir) => load_policy_dir(&dir)?,
        None => PolicySet::new(),
    };
    let mode = a.mode.or(f.mode);
    let opts = PlanOptions { seed: g.seed, mode, levels: a.levels.or(f.levels), budget: a.budget.or(f.budget), policies, trace: g.trace };
    let run = run_plan(&scenario, &opts)?;
    let header = Header::new("plan", sref.clone(), g.seed, mode);
    let dir = run_dir(g, "plan", &sref.name)?;
    write_json(&dir.join("stats.json"), &json!({ "header": header, "run": run }))?;
    write_json(
        &dir.join("plan.json"),
        &json!({ "header": header, "actions": run.actions, "path": run.path, "reward": run.reward }),
    )?;
    if g.trace != TraceLevel::None {
        let mut t = fs::File::create(dir.join("trace.jsonl"))?;
        writeln!(t, "{}", json!({ "kind": "header", "header": header }))?;
        for record in &run.trace {
            writeln!(t, "{record}")?;
        }
        writeln!(t, "{}", json!({ "kind": "path", "solved": run.solved, "points": run.path }))?;
    }
    let d = drawing(&scenario, g.seed, mode, &run.path)?;
    fs::write(dir.join("path.svg"), d.svg(&header.line()))?;
    fs::write(dir.join("path.txt"), d.ascii(&header.line()))?;
    let reward = run.reward.map_or("-".to_string(), |r| format!("{r:.4}"));
    println!(
        "{} {}: length {} R {} tree_size {} nodes_expanded {} levels {} -> {}",
        sref.name,
        if run.solved { "solved" } else { "unsolved" },
        run.plan_length,
        reward,
        run.stats.tree_size,
        run.stats.nodes_expanded,
        run.plan_levels,
        dir.display()
    );
    match run.error {
        Some(e) if !run.solved => Err(CliError::Planner(e)),
        _ => Ok(()),
    }
}

/// Problem classes that plan-learn-plan and transfer accept.
enum Domain {
    FourRooms(FourRoomsPlp),
    Gripper(GripperPlp),
}

fn domain(class: &str, objects: (usize, usize), obstacles: bool, seed: u64) -> Result<Domain, CliError> {
    let not_found = || CliError::ScenarioNotFound(class.to_string());
    if class == "four-rooms" || class.starts_with("four-rooms:") {
        let barrier: Barrier = class.strip_prefix("four-rooms:").unwrap_or("original").parse().map_err(|_| not_found())?;
        let config = FourRoomsConfig { random_order: Some(seed), ..FourRoomsConfig::default() };
        return Ok(Domain::FourRooms(FourRoomsPlp { class: FourRoomsClass::feasible(barrier), config }));
    }
    if let Some(s) = class.strip_prefix("gripper:") {
        if !gripper::SCENARIOS.contains(&s) {
            return Err(not_found());
        }
        if objects.0 == 0 || objects.0 > objects.1 {
            return Err(CliError::Usage(format!("bad object range {objects:?}")));
        }
        // Reject counts the scenario cannot build before any planning.
        gripper::make_gripper_world(s, objects.0, obstacles, 0).map_err(|e| CliError::Usage(e.to_string()))?;
        let config = GripperConfig { random_order: Some(seed), ..GripperConfig::default() };
        return Ok(Domain::Gripper(GripperPlp { scenario: s.to_string(), objects, obstacles, config }));
    }
    Err(not_found())
}

fn print_report(r: &PlpIterationReport) {
    let t = &r.training_summary;
    let e = &r.evaluation_summary;
    println!(
        "{} iteration {}: training {}/{} solved, held-out accuracy {:.3} ({}/{}), median nodes_expanded {}",
        r.class, r.iteration, t.solved, t.attempted, e.accuracy, e.solved, e.attempted, e.median_nodes_expanded
    );
}

fn plp_on<D: PlpDomain>(d: &D, cfg: &PlpConfig, dir: &RunDir) -> Result<(), CliError> {
    let (reports, policies) = run_plp(d, cfg, Some(dir))?;
    reports.iter().for_each(print_report);
    save_policies(&dir.root.join("policies").join("final"), &policies, &d.name())?;
    Ok(())
}

fn cmd_plp(g: &Globals, a: PlpArgs, file: &FileConfig) -> Result<(), CliError> {
    let f = &file.plp;
    let class = required(a.class.or_else(|| f.class.clone()), "class")?;
    let objects = parse_objects(&a.objects.or_else(|| f.objects.clone()).unwrap_or_else(|| "1..3".into()))?;
    let d = domain(&class, objects, false, g.seed)?;
    let examples = a.examples.or(f.examples).unwrap_or(10);
    let eval = a.eval.or(f.eval).unwrap_or(50);
    let mut cfg = PlpConfig { train: 0..examples, eval: 1_000_000..1_000_000 + eval, iterations: a.iterations.or(f.iterations).unwrap_or(1), seed: g.seed, ..PlpConfig::default() };
    if let Some(epochs) = a.epochs.or(f.epochs) {
        cfg.training.epochs = epochs;
    }
    let dir = RunDir::create(run_dir(g, "plp", &class)?)?;
    match &d {
        Domain::FourRooms(d) => plp_on(d, &cfg, &dir)?,
        Domain::Gripper(d) => plp_on(d, &cfg, &dir)?,
    }
    println!("-> {}", dir.root.display());
    Ok(())
}

fn cmd_transfer(g: &Globals, a: TransferArgs, file: &FileConfig) -> Result<(), CliError> {
    let f = &file.transfer;
    let policy_dir = required(a.policies.or_else(|| f.policies.clone()), "policies")?;
    let target = required(a.target.or_else(|| f.target.clone()), "target")?;
    let source = load_policy_dir(&policy_dir)?;
    let families = a.families.or_else(|| f.families.clone()).unwrap_or_else(|| source.keys().cloned().collect());
    let mechanism = match a.mechanism.or(f.mechanism).unwrap_or(MechanismArg::NearGreedy) {
        MechanismArg::NearGreedy => TransferMechanism::NearGreedy,
        MechanismArg::Greedy => TransferMechanism::Greedy,
        MechanismArg::Uniform => TransferMechanism::Uniform,
    };
    let examples = parse_seeds(&a.examples.or_else(|| f.examples.clone()).unwrap_or_else(|| "0..9".into()))?;
    let objects = parse_objects(&a.objects.or_else(|| f.objects.clone()).unwrap_or_else(|| "1..3".into()))?;
    let obstacles = a.obstacles || f.obstacles.unwrap_or(false);
    let spec = TransferSpec { source: policy_dir.display().to_string(), target: target.clone(), families, retrain: a.retrain, mechanism, examples };
    let cfg = PlpConfig { seed: g.seed, ..PlpConfig::default() };
    let report = match domain(&target, objects, obstacles, g.seed)? {
        Domain::FourRooms(d) => plp::run_transfer(&d, &source, &spec, &cfg)?,
        Domain::Gripper(d) => plp::run_transfer(&d, &source, &spec, &cfg)?,
    };
    let dir = run_dir(g, "transfer", &target)?;
    write_json(&dir.join("report.json"), &json!({ "seed": g.seed, "spec": spec, "report": report }))?;
    print_report(&report);
    println!("-> {}", dir.display());
    Ok(())
}

fn cmd_oracle(g: &Globals, a: OracleArgs, file: &FileConfig) -> Result<(), CliError> {
    let f = &file.oracle;
    let name = required(a.scenario.or_else(|| f.scenario.clone()), "scenario")?;
    let seeds = match a.seeds.or_else(|| f.seeds.clone()) {
        Some(s) => parse_seeds(&s)?,
        None => g.seed..g.seed + 1,
    };
    let sref = ScenarioRef { name: name.clone(), objects: None, obstacles: false };
    let scenario = parse_scenario(&sref)?;
    let mut rows = Vec::new();
    let mut matched = 0;
    for seed in seeds.clone() {
        let (ok, states) = oracle_check(&scenario, seed)?;
        matched += usize::from(ok);
        if !ok {
            println!("seed {seed}: mismatch");
        }
        rows.push(json!({ "seed": seed, "match": ok, "states": states }));
    }
    let total = (seeds.end - seeds.start) as usize;
    let dir = run_dir(g, "oracle", &name)?;
    write_json(&dir.join("oracle.json"), &json!({ "header": Header::new("oracle", sref, seeds.start, None), "seeds": rows }))?;
    println!("{matched}/{total} match");
    if matched == total {
        Ok(())
    } else {
        Err(CliError::Planner(format!("{} of {total} seeds disagree with the oracle", total - matched)))
    }
}

fn cmd_render(a: RenderArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.trace).map_err(|e| CliError::Config(format!("{}: {e}", a.trace.display())))?;
    let mut header: Option<Header> = None;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| CliError::Config(format!("trace line {}: {e}", i + 1)))?;
        match v["kind"].as_str() {
            Some("header") => header = Some(serde_json::from_value(v["header"].clone()).map_err(|e| CliError::Config(format!("trace header: {e}")))?),
            Some("path") => points = serde_json::from_value(v["points"].clone()).map_err(|e| CliError::Config(format!("trace path: {e}")))?,
            _ => {}
        }
    }
    let header = header.ok_or_else(|| CliError::Config("trace has no header record".into()))?;
    let d = drawing(&parse_scenario(&header.scenario)?, header.seed, header.mode, &points)?;
    let body = if a.out.extension().is_some_and(|e| e == "svg") { d.svg(&header.line()) } else { d.ascii(&header.line()) };
    if let Some(parent) = a.out.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&a.out, body)?;
    println!("-> {}", a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = load_file(cli.config.as_deref())?;
    let g = Globals::resolve(cli.seed, cli.out_root, cli.trace_level, &file);
    match cli.command {
        Command::Plan(a) => cmd_plan(&g, a, &file),
        Command::Plp(a) => cmd_plp(&g, a, &file),
        Command::Transfer(a) => cmd_transfer(&g, a, &file),
        Command::Oracle(a) => cmd_oracle(&g, a, &file),
        Command::Render(a) => cmd_render(a),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", e.record());
        std::process::exit(e.exit_code());
    }
}
