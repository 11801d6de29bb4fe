mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;
use target_core::dsl::{parse_scenario_text, serialize_scenario, ElementCatalog, ScenarioRep, Subcomponent};
use target_core::map::{build_routes, load_map, RouteGraph};
use target_core::metrics::{evaluate_corpus, weighted_fleiss_kappa, CorpusReport, VoteMatrix};
use target_core::monitor::{make_report, TestReport};
use target_core::rule_parser::{
    default_example, parse_rule_session, BackendError, ChatBackend, HttpBackend, ParseError, ParseOptions, RecordingBackend,
    ReplayBackend, ScriptedBackend, DEFAULT_ALIGN_THRESHOLD,
};
use target_core::scenario::{ConcreteScenario, GenError, Generator};
use target_core::sim::{agent_from_spec, read_trace, run, write_trace, SimConfig};

use config::{RunConfig, CONFIG_ENV};

const SESSION_SCHEMA: &str = "target.session.v1";
const GEN_SCHEMA: &str = "target.gen.v1";
const EVAL_SCHEMA: &str = "target.eval.v1";

const EXIT_UNPARSEABLE: u8 = 2;
const EXIT_NO_SCENARIO: u8 = 3;

#[derive(Parser)]
#[command(name = "target", version, about = "Traffic-rule driven scenario generation and ADS testing")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a traffic rule into a scenario document.
    ParseRule(ParseRuleArgs),
    /// Compile a scenario document onto every map in a directory.
    Gen(GenArgs),
    /// Simulate a concrete scenario against an agent and judge the trace.
    Run(RunArgs),
    /// Score predicted documents against gold ones, or rater agreement.
    Eval(EvalArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("rule").required(true).args(["rule_file", "rule_text"])))]
struct ParseRuleArgs {
    #[arg(long)]
    rule_file: Option<PathBuf>,
    #[arg(long)]
    rule_text: Option<String>,
    /// `replay:DIR`, `script:FILE` or `http`.
    #[arg(long)]
    backend: String,
    /// Also store every response as a replay fixture in DIR.
    #[arg(long, value_name = "DIR")]
    record: Option<PathBuf>,
    /// Align novel tokens by string similarity instead of asking the backend.
    #[arg(long, value_name = "THRESHOLD", num_args = 0..=1, default_missing_value = "0.75")]
    local_align: Option<f64>,
    /// Scenario document to write.
    #[arg(long)]
    out: PathBuf,
    /// Session transcript (default: `<out>.session.json`).
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Worked example rule and document for the extraction prompt.
    #[arg(long, requires = "example_doc")]
    example_rule: Option<PathBuf>,
    #[arg(long, requires = "example_rule")]
    example_doc: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    scenario_doc: PathBuf,
    /// Directory of `*.map.json` files.
    #[arg(long)]
    maps: Option<PathBuf>,
    /// One scenario per eligible ego route instead of the first.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to the document's file stem.
    #[arg(long)]
    rule_id: Option<String>,
    /// Shuffle candidate order with this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// `compliant`, `static`, `violator:<tokens>` or `stdio:<command>`.
    #[arg(long, default_value = "compliant")]
    agent: String,
    /// Map directory holding the scenario's map.
    #[arg(long)]
    maps: Option<PathBuf>,
    #[arg(long)]
    trace_out: PathBuf,
    #[arg(long)]
    report_out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["pred", "votes"])))]
struct EvalArgs {
    #[arg(long, requires = "gold")]
    pred: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Vote matrix CSV; repeat for several surveys.
    #[arg(long)]
    votes: Vec<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::ParseRule(a) => cmd_parse_rule(&cfg, a),
        Command::Gen(a) => cmd_gen(&cfg, a),
        Command::Run(a) => cmd_run(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn catalog(cfg: &RunConfig) -> Result<ElementCatalog> {
    match &cfg.catalog {
        Some(p) => ElementCatalog::load(p).with_context(|| format!("loading catalog {}", p.display())),
        None => Ok(ElementCatalog::builtin()),
    }
}

fn open_backend(spec: &str, cfg: &RunConfig) -> Result<Box<dyn ChatBackend>> {
    if let Some(dir) = spec.strip_prefix("replay:") {
        return Ok(Box::new(ReplayBackend::new(dir)));
    }
    if let Some(file) = spec.strip_prefix("script:") {
        return Ok(Box::new(ScriptedBackend::load(Path::new(file))?));
    }
    if spec == "http" {
        return Ok(Box::new(HttpBackend::from_env(cfg.backend.clone())?));
    }
    bail!("unknown backend `{spec}` (expected replay:DIR, script:FILE or http)")
}

#[derive(Serialize)]
struct SessionFile<'a> {
    schema: &'static str,
    config: &'a RunConfig,
    session: &'a target_core::rule_parser::ParseSession,
    error: Option<String>,
}

fn cmd_parse_rule(cfg: &RunConfig, a: ParseRuleArgs) -> Result<u8> {
    let transcript = a.transcript.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".session.json");
        PathBuf::from(s)
    });
    if a.out.exists() && !a.force {
        parse_scenario_text(&read(&a.out)?).with_context(|| format!("existing {}", a.out.display()))?;
        eprintln!("{} exists; use --force to regenerate", a.out.display());
        return Ok(0);
    }
    let rule = match (&a.rule_file, &a.rule_text) {
        (Some(p), None) => read(p)?,
        (None, Some(t)) => t.clone(),
        _ => unreachable!("clap enforces exactly one rule source"),
    };
    let example = match (&a.example_rule, &a.example_doc) {
        (Some(r), Some(d)) => (read(r)?.trim().to_string(), parse_scenario_text(&read(d)?)?),
        _ => default_example(),
    };
    let catalog = catalog(cfg)?;
    let inner = open_backend(&a.backend, cfg)?;
    let backend: Box<dyn ChatBackend> = match &a.record {
        Some(dir) => Box::new(RecordingBackend::new(inner, dir)),
        None => inner,
    };
    let options = ParseOptions {
        local_alignment: a.local_align.map(|t| if t.is_nan() { DEFAULT_ALIGN_THRESHOLD } else { t }),
        ..Default::default()
    };
    let (session, result) = parse_rule_session(&rule, backend.as_ref(), &catalog, &example, &options);
    let file = SessionFile {
        schema: SESSION_SCHEMA,
        config: cfg,
        session: &session,
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    write(&transcript, &(serde_json::to_string_pretty(&file)? + "\n"))?;
    match result {
        Ok(()) => {
            let rep = session.aligned_rep.as_ref().expect("successful session has a result");
            write(&a.out, &serialize_scenario(rep))?;
            for al in session.alignments.iter().filter(|al| al.novel) {
                eprintln!("warning: novel element `{}` kept at {}", al.aligned, al.path);
            }
            println!("{}", a.out.display());
            Ok(0)
        }
        Err(e @ ParseError::ExtractionUnparseable { .. }) | Err(e @ ParseError::Backend(BackendError::FixtureMissing(_))) => {
            eprintln!("error: {e}");
            Ok(EXIT_UNPARSEABLE)
        }
        Err(e) => Err(e.into()),
    }
}

fn map_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading map directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".map.json"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_graph(path: &Path) -> Result<RouteGraph> {
    let map = load_map(path).with_context(|| format!("loading map {}", path.display()))?;
    Ok(build_routes(&map))
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "_.@-".contains(c) { c } else { '_' }).collect()
}

#[derive(Serialize)]
struct GenSummary<'a> {
    schema: &'static str,
    config: &'a RunConfig,
    rule_id: String,
    generated: Vec<String>,
    unsupported: Vec<String>,
}

fn generator(cfg: &RunConfig, seed: Option<u64>) -> Generator {
    let mut g = Generator::new(cfg.generator.clone());
    g.thresholds = cfg.thresholds.clone();
    if let Some(seed) = seed {
        g.config.seed = seed;
        g.config.random_tie_break = true;
    }
    g
}

fn cmd_gen(cfg: &RunConfig, a: GenArgs) -> Result<u8> {
    let maps = a.maps.clone().or_else(|| cfg.maps.clone()).ok_or_else(|| anyhow!("--maps is required"))?;
    let out = a.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let rep: ScenarioRep =
        parse_scenario_text(&read(&a.scenario_doc)?).with_context(|| format!("parsing {}", a.scenario_doc.display()))?;
    let rule_id = a.rule_id.clone().unwrap_or_else(|| {
        let name = a.scenario_doc.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        name.split('.').next().unwrap_or("rule").to_string()
    });
    let generator = generator(cfg, a.seed);
    let mut summary =
        GenSummary { schema: GEN_SCHEMA, config: cfg, rule_id: rule_id.clone(), generated: vec![], unsupported: vec![] };
    for path in map_files(&maps)? {
        let graph = load_graph(&path)?;
        let limit = if a.all { None } else { Some(1) };
        match generator.generate_all(&rep, &graph, &rule_id, limit) {
            Ok(scenarios) => {
                for scn in scenarios {
                    let name = if a.all {
                        format!("{}@{}@{}.scn.json", rule_id, graph.map_id(), scn.ego.route_id)
                    } else {
                        format!("{}@{}.scn.json", rule_id, graph.map_id())
                    };
                    let target = out.join(file_safe(&name));
                    if target.exists() && !a.force {
                        ConcreteScenario::from_json(&read(&target)?)
                            .map_err(|e| anyhow!("existing {}: {e}", target.display()))?;
                    } else {
                        write(&target, &scn.to_json())?;
                    }
                    println!("{}", target.display());
                    summary.generated.push(target.display().to_string());
                }
            }
            Err(GenError::ScenarioUnsupportedOnMap { map_id }) => {
                eprintln!("{map_id}: ScenarioUnsupportedOnMap");
                summary.unsupported.push(map_id);
            }
            Err(e) => return Err(anyhow!(e).context(format!("generating on {}", path.display()))),
        }
    }
    write(&out.join(file_safe(&format!("{rule_id}.gen.json"))), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(if summary.generated.is_empty() { EXIT_NO_SCENARIO } else { 0 })
}

fn find_map(dir: &Path, map_id: &str) -> Result<RouteGraph> {
    for path in map_files(dir)? {
        let graph = load_graph(&path)?;
        if graph.map_id() == map_id {
            return Ok(graph);
        }
    }
    bail!("map `{map_id}` not found in {}", dir.display())
}

fn cmd_run(cfg: &RunConfig, a: RunArgs) -> Result<u8> {
    if a.report_out.exists() && a.trace_out.exists() && !a.force {
        let report: TestReport =
            serde_json::from_str(&read(&a.report_out)?).with_context(|| format!("existing {}", a.report_out.display()))?;
        read_trace(&a.trace_out).with_context(|| format!("existing {}", a.trace_out.display()))?;
        eprintln!("{} exists; use --force to rerun", a.report_out.display());
        print!("{}", report.render_table());
        return Ok(report.verdict().exit_code() as u8);
    }
    let scn = ConcreteScenario::from_json(&read(&a.scenario)?).map_err(|e| anyhow!("{}: {e}", a.scenario.display()))?;
    let maps = a
        .maps
        .clone()
        .or_else(|| cfg.maps.clone())
        .or_else(|| a.scenario.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let graph = find_map(&maps, &scn.map_id)?;
    let mut agent = agent_from_spec(&a.agent)?;
    let sim_cfg = SimConfig { time_limit: scn.monitor.time_limit, ..Default::default() };
    let trace = run(&scn, &graph, agent.as_mut(), &sim_cfg)?;
    write_trace(&trace, &a.trace_out)?;
    let report = make_report(&trace, &scn.monitor);
    let mut doc = serde_json::to_value(&report)?;
    doc["config"] = serde_json::to_value(cfg)?;
    write(&a.report_out, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    print!("{}", report.render_table());
    Ok(report.verdict().exit_code() as u8)
}

#[derive(Serialize)]
struct KappaResult {
    file: String,
    subjects: usize,
    raters: u32,
    kappa: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum EvalOutput<'a> {
    Corpus { schema: &'static str, config: &'a RunConfig, corpus: CorpusReport },
    Kappa { schema: &'static str, config: &'a RunConfig, surveys: Vec<KappaResult>, mean: Option<f64> },
}

fn cmd_eval(cfg: &RunConfig, a: EvalArgs) -> Result<u8> {
    let output = if let (Some(pred), Some(gold)) = (&a.pred, &a.gold) {
        EvalOutput::Corpus { schema: EVAL_SCHEMA, config: cfg, corpus: evaluate_corpus(pred, gold, &catalog(cfg)?)? }
    } else {
        let mut surveys = Vec::new();
        for p in &a.votes {
            let m = VoteMatrix::from_csv(p)?;
            let k = weighted_fleiss_kappa(&m);
            surveys.push(KappaResult {
                file: p.display().to_string(),
                subjects: m.subjects(),
                raters: m.raters(),
                kappa: k.as_ref().ok().copied(),
                error: k.err().map(|e| e.to_string()),
            });
        }
        let ks: Vec<f64> = surveys.iter().filter_map(|s| s.kappa).collect();
        let mean = (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64);
        EvalOutput::Kappa { schema: EVAL_SCHEMA, config: cfg, surveys, mean }
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&output)?);
        return Ok(0);
    }
    match output {
        EvalOutput::Corpus { corpus, .. } => {
            println!("{:<40} {:>8} {:>9}  note", "rule", "accuracy", "slots");
            for r in &corpus.rules {
                let note = match &r.error {
                    Some(e) => format!("parse failure: {e}"),
                    None => r.mismatched.join(", "),
                };
                println!("{:<40} {:>8.4} {:>4}/{:<4}  {}", r.rule, r.accuracy, r.matched, r.slots, note);
            }
            println!("mean rule accuracy {:.4}", corpus.mean_rule_accuracy);
            println!();
            println!("{:<22} {:>8}", "subcomponent", "accuracy");
            for sub in Subcomponent::ALL {
                let v = corpus.components.get(sub.key()).copied().flatten();
                let shown = v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
                println!("{:<22} {:>8}", sub.key(), shown);
            }
        }
        EvalOutput::Kappa { surveys, mean, .. } => {
            for s in &surveys {
                match (s.kappa, &s.error) {
                    (Some(k), _) => println!("{}: kappa {k:.4} ({} subjects, {} raters)", s.file, s.subjects, s.raters),
                    (None, Some(e)) => println!("{}: {e}", s.file),
                    _ => {}
                }
            }
            if let Some(m) = mean {
                println!("mean kappa {m:.4}");
            }
        }
    }
    Ok(0)
}
