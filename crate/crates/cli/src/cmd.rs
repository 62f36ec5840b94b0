//! Subcommand bodies. Each stage has an in-memory core, shared by `e2e`, and
//! a thin file-I/O wrapper.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use lpkg_core::bench::{
    evaluate_run, generate_benchmark_with, leakage_filter_jaccard, load_predictions, Benchmark, Distribution,
    EvalReport, LeakageReport, Prediction,
};
use lpkg_core::dsl::{parse_plan, StatementKind};
use lpkg_core::exec::{
    execute, kg_corpus, AnswerList, Bm25Retriever, ExecConfig, ExecutionTrace, HttpRetriever, KgQaStub, LlmPlanner,
    OraclePlanner, Planner, Retriever, QA_PROMPT,
};
use lpkg_core::kg::{KgFormat, KnowledgeGraph};
use lpkg_core::llm::{ChatEndpoint, HttpChatClient, RetryPolicy};
use lpkg_core::pattern::{ground, GroundConfig, InstanceRecord, PatternType};
use lpkg_core::plandata::{build_training_set, PlanningPrompt, TrainingExample, TrainingSet};
use lpkg_core::synth::{synthetic_graph, SynthConfig};
use lpkg_core::verbalize::{verbalize, verbalize_template, VerbalizationPromptSet, VerbalizeConfig, VerbalizedInstance};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, Role};
use crate::error::{CliError, CliResult, StageExt};

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    pub stub: bool,
}

impl Ctx {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn kg(&self) -> CliResult<KnowledgeGraph> {
        let Some(path) = &self.cfg.kg else {
            return Err(CliError::usage("kg-store", "no graph given; pass --kg or set `kg` in the config"));
        };
        let format = match &self.cfg.kg_format {
            Some(f) => f.parse::<KgFormat>().map_err(|e| CliError::usage("kg-store", e))?,
            None if path.extension().is_some_and(|e| e == "nt") => KgFormat::NTriples,
            None => KgFormat::Tsv,
        };
        let kg = match &self.cfg.labels {
            Some(labels) => KnowledgeGraph::load_with_labels(path, format, labels),
            None => KnowledgeGraph::load(path, format),
        }
        .bad_input("kg-store")?;
        tracing::info!(entities = kg.entity_count(), triples = kg.triple_count(), "graph loaded");
        Ok(kg)
    }

    fn prompt_dir(&self, sub: &str) -> Option<PathBuf> {
        self.cfg.prompts.as_ref().map(|p| p.join(sub))
    }

    fn planning_prompt(&self) -> CliResult<PlanningPrompt> {
        match self.prompt_dir("plan") {
            Some(dir) => PlanningPrompt::from_dir(&dir).bad_input("plan"),
            None => Ok(PlanningPrompt::default()),
        }
    }

    fn verbalization_prompts(&self) -> CliResult<VerbalizationPromptSet> {
        match self.prompt_dir("verbalize") {
            Some(dir) => VerbalizationPromptSet::from_dir(&dir).bad_input("verbalize"),
            None => Ok(VerbalizationPromptSet::default()),
        }
    }

    fn qa_prompt(&self) -> CliResult<String> {
        if let Some(dir) = self.prompt_dir("qa") {
            let path = dir.join("prompt.txt");
            if path.exists() {
                return std::fs::read_to_string(&path).bad_input("execute");
            }
        }
        Ok(QA_PROMPT.to_string())
    }

    /// Chat client for `role`. The client itself does not retry when the
    /// caller already wraps calls in a retry policy.
    fn endpoint(&self, role: Role, stage: &'static str, retry: RetryPolicy) -> CliResult<HttpChatClient> {
        let cfg = self.cfg.endpoint(role).bad_input(stage)?;
        HttpChatClient::new(cfg, retry).bad_input(stage)
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).bad_input("output")
}

fn write_file(path: &Path, text: &str, stage: &'static str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).in_stage(stage)?;
    }
    std::fs::write(path, text)
        .map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
        .in_stage(stage)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T], stage: &'static str) -> CliResult<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).in_stage(stage)?);
        text.push('\n');
    }
    write_file(path, &text, stage)
}

fn write_json<T: Serialize>(path: &Path, value: &T, stage: &'static str) -> CliResult<()> {
    write_file(path, &(serde_json::to_string_pretty(value).in_stage(stage)? + "\n"), stage)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, stage: &'static str) -> CliResult<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))
        .bad_input(stage)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| anyhow::anyhow!("{} line {}: {e}", path.display(), i + 1))
                .bad_input(stage)
        })
        .collect()
}

fn load_benchmark(path: &Path, stage: &'static str) -> CliResult<Benchmark> {
    Benchmark::load(path).bad_input(stage)
}

// ---- synth-kg ----------------------------------------------------------

pub fn synth_kg(entities: usize, seed: u64, output: &Path) -> CliResult<()> {
    if entities == 0 {
        return Err(CliError::usage("synth-kg", "--entities must be at least 1"));
    }
    let kg = synthetic_graph(&SynthConfig::new(entities, seed));
    write_file(output, &kg.to_tsv(), "synth-kg")?;
    println!(
        "{}: {} entities, {} relations, {} triples",
        output.display(),
        kg.entity_count(),
        kg.relation_count(),
        kg.triple_count()
    );
    Ok(())
}

// ---- ground -------------------------------------------------------------

pub fn ground_records(
    ctx: &Ctx,
    kg: &KnowledgeGraph,
    patterns: &[PatternType],
    budget: usize,
    seed: u64,
) -> CliResult<Vec<InstanceRecord>> {
    if budget == 0 {
        return Err(CliError::usage("ground", "--budget must be at least 1"));
    }
    let groundings: Vec<_> = patterns
        .par_iter()
        .map(|&p| {
            let cfg = GroundConfig {
                max_answers: ctx.cfg.ground.max_answers,
                ..GroundConfig::new(budget, seed)
            };
            ground(kg, p, &cfg)
        })
        .collect::<Result<_, _>>()
        .in_stage("ground")?;
    let mut out = Vec::new();
    for g in groundings {
        let line = format!("{}: {}/{} instances", g.pattern, g.instances.len(), g.requested);
        if g.shortfall() > 0 {
            eprintln!("warning: {} shortfall: {} of {} instances", g.pattern, g.instances.len(), g.requested);
        }
        println!("{line}");
        for inst in &g.instances {
            out.push(InstanceRecord::from_instance(kg, inst).in_stage("ground")?);
        }
    }
    Ok(out)
}

pub fn cmd_ground(ctx: &Ctx, pattern: Option<PatternType>, budget: usize, seed: u64, output: &Path) -> CliResult<()> {
    if budget == 0 {
        return Err(CliError::usage("ground", "--budget must be at least 1"));
    }
    let kg = ctx.kg()?;
    let patterns = pattern.map_or(PatternType::ALL.to_vec(), |p| vec![p]);
    let records = ground_records(ctx, &kg, &patterns, budget, seed)?;
    write_jsonl(output, &records, "ground")
}

// ---- verbalize ----------------------------------------------------------

enum Verbalizer {
    Template,
    Llm(HttpChatClient, VerbalizationPromptSet),
}

impl Verbalizer {
    fn new(ctx: &Ctx) -> CliResult<Self> {
        if ctx.stub {
            return Ok(Verbalizer::Template);
        }
        Ok(Verbalizer::Llm(
            ctx.endpoint(Role::Verbalizer, "verbalize", ctx.cfg.retry)?,
            ctx.verbalization_prompts()?,
        ))
    }

    fn run(
        &self,
        kg: &KnowledgeGraph,
        inst: &lpkg_core::pattern::GroundedInstance,
    ) -> Result<Option<VerbalizedInstance>, lpkg_core::verbalize::VerbalizeError> {
        match self {
            Verbalizer::Template => verbalize_template(kg, inst).map(Some),
            Verbalizer::Llm(ep, prompts) => verbalize(kg, inst, ep, prompts, &VerbalizeConfig::default()),
        }
    }
}

pub fn verbalize_records(ctx: &Ctx, kg: &KnowledgeGraph, records: &[InstanceRecord]) -> CliResult<Vec<VerbalizedInstance>> {
    let verbalizer = Verbalizer::new(ctx)?;
    let instances: Vec<_> = records
        .iter()
        .map(|r| r.to_instance(kg))
        .collect::<Result<_, _>>()
        .bad_input("verbalize")?;
    let out: Vec<Option<VerbalizedInstance>> = instances
        .par_iter()
        .map(|inst| verbalizer.run(kg, inst))
        .collect::<Result<_, _>>()
        .in_stage("verbalize")?;
    let kept: Vec<VerbalizedInstance> = out.into_iter().flatten().collect();
    if kept.len() < records.len() {
        eprintln!("warning: {} instances skipped", records.len() - kept.len());
    }
    Ok(kept)
}

pub fn cmd_verbalize(ctx: &Ctx, input: &Path, output: &Path) -> CliResult<()> {
    let kg = ctx.kg()?;
    let records: Vec<InstanceRecord> = read_jsonl(input, "verbalize")?;
    let v = verbalize_records(ctx, &kg, &records)?;
    println!("{} verbalized", v.len());
    write_jsonl(output, &v, "verbalize")
}

// ---- build-train --------------------------------------------------------

pub fn train_set(ctx: &Ctx, verbalized: &[VerbalizedInstance], quota: usize) -> CliResult<TrainingSet> {
    if quota == 0 {
        return Err(CliError::usage("build-train", "--quota must be at least 1"));
    }
    let set = build_training_set(verbalized, quota, &ctx.planning_prompt()?).in_stage("build-train")?;
    for line in &set.report {
        println!("{}: {}/{} examples", line.pattern, line.emitted, line.quota);
    }
    println!("{} training examples", set.examples.len());
    Ok(set)
}

pub fn cmd_build_train(ctx: &Ctx, input: &Path, quota: usize, output: &Path) -> CliResult<()> {
    if quota == 0 {
        return Err(CliError::usage("build-train", "--quota must be at least 1"));
    }
    let v: Vec<VerbalizedInstance> = read_jsonl(input, "build-train")?;
    let set = train_set(ctx, &v, quota)?;
    set.write_jsonl(output).in_stage("build-train")?;
    write_json(&output.with_extension("report.json"), &set.report, "build-train")
}

// ---- gen-bench ----------------------------------------------------------

/// Instance hashes from JSONL files with an `instance` or `hash` field.
pub fn exclusion_hashes(paths: &[PathBuf]) -> CliResult<HashSet<String>> {
    #[derive(Deserialize)]
    struct Line {
        instance: Option<String>,
        hash: Option<String>,
    }
    let mut out = HashSet::new();
    for p in paths {
        for l in read_jsonl::<Line>(p, "gen-bench")? {
            out.extend(l.instance.or(l.hash));
        }
    }
    Ok(out)
}

pub fn benchmark(
    ctx: &Ctx,
    kg: &KnowledgeGraph,
    dist: &Distribution,
    seed: u64,
    exclude: &HashSet<String>,
) -> CliResult<Benchmark> {
    let verbalizer = Verbalizer::new(ctx)?;
    let gen = generate_benchmark_with(kg, dist, seed, exclude, |inst| verbalizer.run(kg, inst)).in_stage("gen-bench")?;
    for (p, n) in gen.benchmark.counts() {
        println!("{p}: {n}/{} items", dist.get(p));
    }
    for s in &gen.shortfalls {
        eprintln!("warning: {} shortfall: {} of {} items", s.pattern, s.emitted, s.requested);
    }
    println!("{} benchmark items", gen.benchmark.items.len());
    Ok(gen.benchmark)
}

pub fn cmd_gen_bench(
    ctx: &Ctx,
    scale: Option<usize>,
    seed: u64,
    exclude: &[PathBuf],
    output: &Path,
) -> CliResult<()> {
    let dist = match scale {
        Some(0) => return Err(CliError::usage("gen-bench", "--scale must be at least 1")),
        Some(n) => ctx.cfg.distribution().bad_input("gen-bench")?.scaled(n),
        None => ctx.cfg.distribution().bad_input("gen-bench")?,
    };
    let excluded = exclusion_hashes(exclude)?;
    let kg = ctx.kg()?;
    let b = benchmark(ctx, &kg, &dist, seed, &excluded)?;
    write_file(output, &b.to_json(), "gen-bench")
}

// ---- plan ---------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanLine {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn planner(ctx: &Ctx, bench: Option<&Benchmark>) -> CliResult<Box<dyn Planner>> {
    if ctx.stub {
        let mut p = OraclePlanner::new();
        for it in bench.map_or(&[][..], |b| &b.items) {
            p.insert(it.question.clone(), it.pattern, it.sub_questions.clone());
        }
        return Ok(Box::new(p));
    }
    let ep = ctx.endpoint(Role::Planner, "plan", ctx.cfg.retry)?;
    Ok(Box::new(LlmPlanner::new(ep, ctx.planning_prompt()?)))
}

pub fn plans(ctx: &Ctx, bench: &Benchmark) -> CliResult<Vec<PlanLine>> {
    let planner = planner(ctx, Some(bench))?;
    let lines: Vec<PlanLine> = bench
        .items
        .par_iter()
        .map(|it| {
            let (plan, error) = match planner.plan(&it.question) {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e.to_string())),
            };
            PlanLine {
                id: it.id.clone(),
                question: it.question.clone(),
                plan,
                error,
            }
        })
        .collect();
    let failed = lines.iter().filter(|l| l.error.is_some()).count();
    println!("{} plans, {failed} failed", lines.len());
    Ok(lines)
}

pub fn cmd_plan(ctx: &Ctx, question: Option<&str>, bench: &Path, output: &Path) -> CliResult<()> {
    if let Some(q) = question {
        let b = if ctx.stub { Some(load_benchmark(bench, "plan")?) } else { None };
        let text = planner(ctx, b.as_ref())?.plan(q).in_stage("plan")?;
        print!("{text}");
        return Ok(());
    }
    let b = load_benchmark(bench, "plan")?;
    let lines = plans(ctx, &b)?;
    write_jsonl(output, &lines, "plan")
}

// ---- execute ------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceLine {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ExecutionTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn retriever(ctx: &Ctx, kg: &KnowledgeGraph) -> CliResult<Box<dyn Retriever>> {
    if !ctx.stub {
        if let Some(url) = ctx.cfg.retriever_url() {
            let r = HttpRetriever::new(url, Duration::from_secs(ctx.cfg.retriever.timeout_secs)).bad_input("execute")?;
            return Ok(Box::new(r));
        }
        if let Some(corpus) = &ctx.cfg.retriever.corpus {
            return Ok(Box::new(Bm25Retriever::from_jsonl(corpus).bad_input("execute")?));
        }
    }
    Ok(Box::new(Bm25Retriever::new(kg_corpus(kg)).in_stage("execute")?))
}

fn original_question(plan: &str) -> Option<String> {
    let line = plan.lines().rev().find(|l| l.trim_start().starts_with("Original_Question"))?;
    let prog = parse_plan(line).ok()?;
    match &prog.statements.first()?.kind {
        StatementKind::Literal { text } => Some(text.clone()),
        _ => None,
    }
}

pub fn run_plans(
    ctx: &Ctx,
    kg: &KnowledgeGraph,
    lines: &[PlanLine],
    bench: Option<&Benchmark>,
) -> CliResult<(Vec<TraceLine>, Vec<Prediction>)> {
    let retriever = retriever(ctx, kg)?;
    let stub;
    let client;
    let qa: &dyn ChatEndpoint = if ctx.stub {
        stub = KgQaStub::new(kg);
        &stub
    } else {
        client = ctx.endpoint(Role::Qa, "execute", RetryPolicy::none())?;
        &client
    };
    let cfg = ExecConfig {
        k: ctx.cfg.exec.k,
        retry: ctx.cfg.retry,
        record_durations: false,
        fan_out: ctx.cfg.exec.fan_out,
        qa_prompt: ctx.qa_prompt()?,
    };
    let gold = |id: &str| {
        bench
            .and_then(|b| b.items.iter().find(|i| i.id == id))
            .map(|i| AnswerList::new(&i.answers))
    };
    let traces: Vec<TraceLine> = lines
        .par_iter()
        .map(|line| {
            let fail = |msg: String| TraceLine {
                id: line.id.clone(),
                trace: None,
                error: Some(msg),
            };
            let Some(plan) = &line.plan else {
                return fail(line.error.clone().unwrap_or_else(|| "no plan".into()));
            };
            let program = match parse_plan(plan) {
                Ok(p) => p,
                Err(e) => return fail(format!("plan does not parse: {e}")),
            };
            let question = if line.question.is_empty() {
                original_question(plan).unwrap_or_default()
            } else {
                line.question.clone()
            };
            match execute(&program, &question, retriever.as_ref(), qa, &cfg) {
                Ok(mut t) => {
                    t.gold = gold(&line.id);
                    TraceLine {
                        id: line.id.clone(),
                        trace: Some(t),
                        error: None,
                    }
                }
                Err(e) => fail(e.to_string()),
            }
        })
        .collect();
    let preds: Vec<Prediction> = traces
        .iter()
        .map(|t| Prediction {
            id: t.id.clone(),
            answers: t.trace.as_ref().map(|t| t.answer.values().to_vec()).unwrap_or_default(),
        })
        .collect();
    let ok = traces.iter().filter(|t| t.trace.as_ref().is_some_and(|t| t.is_ok())).count();
    println!("{} executed, {ok} ok, {} failed", traces.len(), traces.len() - ok);
    Ok((traces, preds))
}

pub fn cmd_execute(ctx: &Ctx, plans_path: &Path, bench: Option<&Path>, traces: &Path, predictions: &Path) -> CliResult<()> {
    let lines: Vec<PlanLine> = read_jsonl(plans_path, "execute")?;
    let b = match bench {
        Some(p) if p.exists() => Some(load_benchmark(p, "execute")?),
        _ => None,
    };
    let kg = ctx.kg()?;
    let (t, p) = run_plans(ctx, &kg, &lines, b.as_ref())?;
    write_jsonl(traces, &t, "execute")?;
    write_jsonl(predictions, &p, "execute")
}

// ---- eval ---------------------------------------------------------------

pub fn report(preds: &[Prediction], bench: &Benchmark) -> CliResult<EvalReport> {
    let r = evaluate_run(preds, bench).bad_input("eval")?;
    print!("{}", r.table());
    Ok(r)
}

pub fn cmd_eval(predictions: &Path, bench: &Path, output: &Path) -> CliResult<()> {
    let preds = load_predictions(predictions).bad_input("eval")?;
    let b = load_benchmark(bench, "eval")?;
    let r = report(&preds, &b)?;
    write_json(output, &r, "eval")
}

// ---- leakage ------------------------------------------------------------

/// Training questions, read back from the quoted question ending each input.
fn training_questions(path: &Path) -> CliResult<Vec<String>> {
    let rows: Vec<TrainingExample> = read_jsonl(path, "leakage")?;
    rows.iter()
        .map(|r| {
            original_question(&r.input)
                .ok_or_else(|| CliError::usage("leakage", format!("{}: input without a question", path.display())))
        })
        .collect()
}

pub fn cmd_leakage(train: &Path, bench: &Path, threshold: f64, output: &Path, report_path: &Path) -> CliResult<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::usage("leakage", "--threshold must be within [0, 1]"));
    }
    let train_q = training_questions(train)?;
    let mut b = load_benchmark(bench, "leakage")?;
    let questions: Vec<String> = b.items.iter().map(|i| i.question.clone()).collect();
    let r: LeakageReport = leakage_filter_jaccard(&train_q, &questions, threshold);
    println!("{} kept, {} removed", r.retained.len(), r.removed.len());
    let keep: HashSet<usize> = r.retained.iter().copied().collect();
    let mut i = 0;
    b.items.retain(|_| {
        i += 1;
        keep.contains(&(i - 1))
    });
    write_file(output, &b.to_json(), "leakage")?;
    write_json(report_path, &r, "leakage")
}

// ---- e2e ----------------------------------------------------------------

pub struct E2eOptions {
    pub scale: usize,
    pub train_quota: usize,
    pub seed: u64,
    pub threshold: f64,
}

pub fn cmd_e2e(ctx: &Ctx, opts: &E2eOptions) -> CliResult<()> {
    if opts.scale == 0 {
        return Err(CliError::usage("e2e", "--scale must be at least 1"));
    }
    if opts.train_quota == 0 {
        return Err(CliError::usage("e2e", "--train-quota must be at least 1"));
    }
    let dist = ctx.cfg.distribution().bad_input("e2e")?.scaled(opts.scale);
    let kg = ctx.kg()?;
    ensure_dir(&ctx.out)?;

    let records = ground_records(ctx, &kg, &PatternType::ALL, opts.train_quota, opts.seed)?;
    write_jsonl(&ctx.path("instances.jsonl"), &records, "ground")?;
    let verbalized = verbalize_records(ctx, &kg, &records)?;
    write_jsonl(&ctx.path("verbalized.jsonl"), &verbalized, "verbalize")?;
    let train = train_set(ctx, &verbalized, opts.train_quota)?;
    train.write_jsonl(&ctx.path("train.jsonl")).in_stage("build-train")?;

    let exclude: HashSet<String> = train.examples.iter().map(|e| e.instance.clone()).collect();
    let bench = benchmark(ctx, &kg, &dist, opts.seed, &exclude)?;
    write_file(&ctx.path("benchmark.json"), &bench.to_json(), "gen-bench")?;
    if bench.items.is_empty() {
        return Err(CliError::stage("gen-bench", "no benchmark items could be generated"));
    }
    let plan_lines = plans(ctx, &bench)?;
    write_jsonl(&ctx.path("plans.jsonl"), &plan_lines, "plan")?;
    let (traces, preds) = run_plans(ctx, &kg, &plan_lines, Some(&bench))?;
    write_jsonl(&ctx.path("traces.jsonl"), &traces, "execute")?;
    write_jsonl(&ctx.path("predictions.jsonl"), &preds, "execute")?;
    let r = report(&preds, &bench)?;
    write_json(&ctx.path("report.json"), &r, "eval")?;
    println!(
        "precision {:.4} recall {:.4} over {} items",
        r.overall.precision, r.overall.recall, r.overall.count
    );
    if r.overall.precision < opts.threshold || r.overall.recall < opts.threshold {
        return Err(CliError::stage(
            "eval",
            format!("precision/recall below threshold {}", opts.threshold),
        ));
    }
    Ok(())
}

pub fn flush_stdout() {
    let _ = std::io::stdout().flush();
}
