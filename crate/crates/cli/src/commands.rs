use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use chembot_core::datasets::{dataset_stats, generate_synthetic, training_set, Dataset, SampleOptions, SynthOptions};
use chembot_core::eval::{run_eval, EvalConfig, MatchParams};
use chembot_core::executor::{ActionSource, ExecMode, ExecutionTrace, InferenceRequest, ReplanOracle};
use chembot_core::mcp::{
    execute_skill_descriptor, serve_stdio, serve_tcp, ExecutorSkillRunner, McpServer, PolicyChoice, ProgressChoice, SkillCall,
    SkillRunner, SkillStatus,
};
use chembot_core::memory::{extract_profile, Dashboard, DialogueTurn, EpisodicRecord, EpisodicStore, Outcome, MEMORY_DIR_ENV};
use chembot_core::planner::{
    describe_scene, ChatBackend, HttpChatBackend, PlanState, Planner, PlannerError, SceneSource, ScriptedBackend,
    ScriptedPlanFixture,
};
use chembot_core::policy::nn::Adam;
use chembot_core::policy::{
    load_checkpoint, save_checkpoint, ActionChunk, Checkpoint, CheckpointMeta, MetricsRow, PolicyError, PolicyParams, Trainer,
};
use chembot_core::skills::SkillLibrary;
use serde::Serialize;

use crate::config::FileConfig;
use crate::{Cli, CliError, Command};

const DEFAULT_OUT: &str = "chembot-out";

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let out = || cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    match &cli.command {
        Command::Plan(a) => plan(a, &file, &out()),
        Command::Simulate(a) => simulate(a, &file, cli.seed, &out()),
        Command::Train(a) => train(a, &file, cli.seed, &out()),
        Command::GenData(a) => gen_data(a.n, cli.seed, &out()),
        Command::Eval(a) => eval(a, &file, cli.out.clone()),
        Command::Serve(a) => serve(a, &file, cli.seed, &out()),
        Command::Stats(a) => stats(a),
        Command::Profile(a) => profile(a.memory.as_deref()),
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn memory_dir(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| std::env::var_os(MEMORY_DIR_ENV).map(PathBuf::from))
}

fn plan(a: &crate::PlanArgs, file: &FileConfig, out: &Path) -> Result<(), CliError> {
    let mut config = file.planner.clone();
    if let Some(cap) = a.iteration_cap {
        config.iteration_cap = cap;
    }
    if !a.scene.is_file() {
        return Err(CliError::Input(format!("scene fixture {} not found", a.scene.display())));
    }
    let mut dashboard = Dashboard::default();
    describe_scene(SceneSource::Fixture(&a.scene), &mut dashboard)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.scene.display())))?;
    let (mut reasoner, mut reflector): (Box<dyn ChatBackend>, Box<dyn ChatBackend>) = match &a.script {
        Some(path) => {
            let fx = ScriptedPlanFixture::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            (Box::new(ScriptedBackend::from_spec(&fx.reasoner)), Box::new(ScriptedBackend::from_spec(&fx.reflector)))
        }
        None => {
            let http = HttpChatBackend::from_env().map_err(input)?;
            (Box::new(http.clone()), Box::new(http))
        }
    };
    let store = match memory_dir(a.memory.as_deref()) {
        Some(dir) => Some(EpisodicStore::open(&dir).map_err(input)?),
        None => None,
    };
    create_dir(out)?;
    let result = Planner::new(reasoner.as_mut(), reflector.as_mut(), config).plan_loop(&a.goal, &mut dashboard, store.as_ref());
    write_file(&out.join("dashboard.json"), &(dashboard.to_json() + "\n"))?;
    match result {
        Ok(state) => {
            let path = out.join("plan.json");
            write_file(&path, &state.to_json())?;
            println!(
                "planned {} subtasks in {} iterations ({} rejected) -> {}",
                state.queue.len(),
                state.iteration,
                state.backtrack_events.len(),
                path.display()
            );
            for s in &state.queue {
                println!("  [{}] {}", s.index, s.instruction);
            }
            Ok(())
        }
        Err(PlannerError::IterationCap { cap, partial }) => {
            write_file(&out.join("plan.partial.json"), &partial.to_json())?;
            Err(CliError::Task(format!(
                "iteration cap {cap} reached; partial plan in {}",
                out.join("plan.partial.json").display()
            )))
        }
        Err(e @ (PlannerError::Backend(_) | PlannerError::EmptyOutput | PlannerError::NotAtomic(_))) => {
            Err(CliError::Task(e.to_string()))
        }
        Err(e) => Err(input(e)),
    }
}

/// Emits NaN chunks, standing in for a policy numeric fault.
struct FaultySource;

impl ActionSource for FaultySource {
    fn infer(&mut self, r: &InferenceRequest<'_>) -> Result<ActionChunk, PolicyError> {
        let dim = r.state.to_vector().len();
        Ok(ActionChunk::new(r.origin_step, chembot_core::ndarray::Array2::from_elem((r.horizon, dim), f64::NAN)))
    }
}

fn runner(
    file: &FileConfig,
    mode: Option<&str>,
    checkpoint: Option<&Path>,
    seed: u64,
    traces: PathBuf,
) -> Result<ExecutorSkillRunner, CliError> {
    let mut cfg = file.executor.clone();
    if let Some(m) = mode {
        cfg.mode = m.parse::<ExecMode>().map_err(input)?;
    }
    cfg.validate().map_err(input)?;
    let library = SkillLibrary::default();
    library.validate(&cfg.limits).map_err(input)?;
    let mut runner = ExecutorSkillRunner::new(library, cfg, traces);
    runner.seed = seed;
    if let Some(path) = checkpoint {
        let ck = load_checkpoint(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if ck.meta.instructions.is_empty() {
            return Err(CliError::Input(format!("{} carries no instruction vocabulary", path.display())));
        }
        runner.policy = PolicyChoice::Learned { params: Arc::new(ck.params), instructions: ck.meta.instructions };
        runner.progress = ProgressChoice::Learned;
    }
    Ok(runner)
}

#[derive(Serialize)]
struct SubtaskReport {
    index: usize,
    instruction: String,
    status: SkillStatus,
    final_progress: f64,
    executed_steps: Option<u64>,
    wall_steps: Option<u64>,
    trace_ref: String,
    logs: Vec<String>,
}

#[derive(Serialize)]
struct SimulationReport {
    goal: String,
    mode: String,
    completed: bool,
    executed_steps: u64,
    wall_steps: u64,
    subtasks: Vec<SubtaskReport>,
}

fn simulate(a: &crate::SimulateArgs, file: &FileConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.plan).map_err(|e| CliError::Input(format!("{}: {e}", a.plan.display())))?;
    let plan = PlanState::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.plan.display())))?;
    if plan.queue.is_empty() {
        return Err(CliError::Input(format!("{} has no queued subtasks", a.plan.display())));
    }
    let traces = out.join("traces");
    let mut runner = runner(file, a.mode.as_deref(), a.checkpoint.as_deref(), seed, traces.clone())?;
    if let Some(target) = a.inject_fault {
        if a.checkpoint.is_some() {
            return Err(CliError::Input("--inject-fault works with the oracle policy only".into()));
        }
        let calls = AtomicUsize::new(0);
        let pos = plan.queue.iter().position(|s| s.index == target);
        runner.policy = PolicyChoice::Custom(Box::new(move |skill, state| -> Box<dyn ActionSource> {
            if Some(calls.fetch_add(1, Ordering::SeqCst)) == pos {
                return Box::new(FaultySource);
            }
            let duration = SynthOptions::default().duration_for(&state.to_vector(), &skill.target) as u64;
            Box::new(ReplanOracle::new(skill.target.clone(), state.step, duration, 0.0, seed))
        }));
    }
    create_dir(&traces)?;
    let mut report = SimulationReport {
        goal: plan.goal.clone(),
        mode: runner.config.mode.as_str().into(),
        completed: true,
        executed_steps: 0,
        wall_steps: 0,
        subtasks: Vec::new(),
    };
    for sub in &plan.queue {
        let call = SkillCall {
            instruction: sub.instruction.clone(),
            subtask_id: format!("subtask-{}", sub.index),
            completion_threshold: None,
        };
        let result = runner.run(&call, &mut |n| log::debug!("{} progress {:.3} at step {}", n.subtask_id, n.value, n.step));
        let trace =
            std::fs::read_to_string(&result.trace_ref).ok().and_then(|t| ExecutionTrace::from_csv(&t, runner.config.mode).ok());
        let (executed, wall) = (trace.as_ref().map(|t| t.executed_steps()), trace.as_ref().map(|t| t.wall_steps()));
        report.executed_steps += executed.unwrap_or(0);
        report.wall_steps += wall.unwrap_or(0);
        println!(
            "[{}] {}: {:?} (progress {:.3}, {} steps, {} ticks)",
            sub.index,
            sub.instruction,
            result.status,
            result.final_progress,
            executed.unwrap_or(0),
            wall.unwrap_or(0)
        );
        let failed = result.status == SkillStatus::Failure;
        report.subtasks.push(SubtaskReport {
            index: sub.index,
            instruction: sub.instruction.clone(),
            status: result.status,
            final_progress: result.final_progress,
            executed_steps: executed,
            wall_steps: wall,
            trace_ref: result.trace_ref,
            logs: result.logs,
        });
        if failed {
            report.completed = false;
            break;
        }
    }
    println!("{} mode: {} executed steps, {} wall ticks", report.mode, report.executed_steps, report.wall_steps);
    write_file(&out.join("results.json"), &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    if let Some(dir) = memory_dir(a.memory.as_deref()) {
        let mut store = EpisodicStore::open(&dir).map_err(input)?;
        let record = EpisodicRecord {
            session_id: String::new(),
            // A logical clock keeps reruns reproducible.
            timestamp: store.len() as u64,
            instruction: plan.goal.clone(),
            category: a.category.clone(),
            dialogue: std::iter::once(DialogueTurn { role: "user".into(), text: plan.goal.clone() })
                .chain(
                    report
                        .subtasks
                        .iter()
                        .map(|r| DialogueTurn { role: "robot".into(), text: format!("{}: {:?}", r.instruction, r.status) }),
                )
                .collect(),
            final_plan: plan.instructions(),
            outcome: if report.completed { Outcome::Success } else { Outcome::Failure },
        };
        let id = store.store(record).map_err(input)?;
        println!("recorded session {id} in {}", store.path().display());
    }
    if !report.completed {
        let last = report.subtasks.last().expect("a failed subtask was recorded");
        return Err(CliError::Task(format!("subtask {} ({}) failed: {}", last.index, last.instruction, last.logs.join("; "))));
    }
    Ok(())
}

fn checkpoint_of(trainer: &Trainer, instructions: &[String]) -> Checkpoint {
    Checkpoint {
        params: trainer.params.clone(),
        adam: Some(trainer.adam.clone()),
        meta: CheckpointMeta {
            step: trainer.step,
            seed: trainer.seed,
            batch_size: trainer.batch_size,
            instructions: instructions.to_vec(),
        },
    }
}

fn train(a: &crate::TrainArgs, file: &FileConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let mut settings = file.train.clone();
    settings.steps = a.steps.unwrap_or(settings.steps);
    settings.lr = a.lr.unwrap_or(settings.lr);
    settings.batch_size = a.batch_size.unwrap_or(settings.batch_size);
    settings.checkpoint_every = a.checkpoint_every.unwrap_or(settings.checkpoint_every);
    if settings.batch_size == 0 {
        return Err(CliError::Input("batch_size must be positive".into()));
    }
    let dataset = match &a.data {
        Some(dir) => Dataset::load(dir).map_err(input)?,
        None => generate_synthetic(&SkillLibrary::default(), a.episodes, seed, &SynthOptions::default()).map_err(input)?,
    };
    let instructions = dataset.manifest.instructions.clone();
    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if ck.meta.instructions != instructions {
                return Err(CliError::Input(format!("{} was trained on a different instruction vocabulary", path.display())));
            }
            let adam = ck.adam.unwrap_or_else(|| Adam::new(ck.params.tensors.iter().map(|t| t.len())));
            Trainer { params: ck.params, adam, step: ck.meta.step, seed: ck.meta.seed, batch_size: ck.meta.batch_size }
        }
        None => {
            let mut cfg = file.policy.clone().unwrap_or_default();
            cfg.n_instructions = instructions.len();
            Trainer::new(PolicyParams::init(cfg, seed).map_err(input)?, seed, settings.batch_size)
        }
    };
    let set = training_set(&dataset, &dataset.episodes, &trainer.params.config, &SampleOptions::default()).map_err(input)?;
    create_dir(out)?;
    let metrics_path = out.join("metrics.csv");
    let append = a.resume.is_some() && metrics_path.is_file();
    let mut metrics = std::fs::OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(&metrics_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", metrics_path.display())))?;
    if !append {
        writeln!(metrics, "{}", MetricsRow::CSV_HEADER).map_err(input)?;
    }
    println!("training on {} samples from {} episodes, starting at step {}", set.len(), dataset.episodes.len(), trainer.step);
    let mut remaining = settings.steps;
    let mut recent: Vec<MetricsRow> = Vec::new();
    loop {
        let chunk = if settings.checkpoint_every > 0 { remaining.min(settings.checkpoint_every) } else { remaining };
        let mut io_error = None;
        let rows = trainer
            .fit(&set, chunk, settings.lr, |r| {
                if let Err(e) = writeln!(metrics, "{}", r.to_csv()) {
                    io_error.get_or_insert(e);
                }
            })
            .map_err(|e| CliError::Task(e.to_string()))?;
        if let Some(e) = io_error {
            return Err(CliError::Input(format!("{}: {e}", metrics_path.display())));
        }
        recent.extend(rows);
        remaining -= chunk;
        let path = out.join(format!("checkpoint-{}.bin", trainer.step));
        save_checkpoint(&path, &checkpoint_of(&trainer, &instructions))
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        if remaining == 0 {
            println!("checkpoint {}", path.display());
            break;
        }
    }
    let tail = &recent[recent.len().saturating_sub(100)..];
    if !tail.is_empty() {
        let n = tail.len() as f64;
        let flow = tail.iter().map(|r| r.flow_loss).sum::<f64>() / n;
        let prog = tail.iter().filter_map(|r| r.progress_mse).sum::<f64>() / n;
        println!("step {}: flow loss {flow:.5}, progress mse {prog:.5} (mean of last {} steps)", trainer.step, tail.len());
    }
    Ok(())
}

fn gen_data(n: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Input("--n must be positive".into()));
    }
    let data = generate_synthetic(&SkillLibrary::default(), n, seed, &SynthOptions::default()).map_err(input)?;
    data.save(out).map_err(input)?;
    println!("wrote {n} episodes to {}", out.display());
    Ok(())
}

fn eval(a: &crate::EvalArgs, file: &FileConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let params = MatchParams { sigma: a.sigma.unwrap_or(file.eval.sigma), theta_match: a.theta.unwrap_or(file.eval.theta) };
    let cfg = EvalConfig { runs_dir: a.runs.clone(), out_dir: out, params };
    let report = run_eval(&cfg).map_err(input)?;
    print!("{}", report.metrics_csv());
    if !report.sr.is_empty() {
        print!("{}", report.sr_csv());
    }
    println!("report written to {}", cfg.report_dir().display());
    if report.is_partial() {
        return Err(CliError::Input(format!("partial report; missing or unusable inputs: {}", report.missing.join(", "))));
    }
    Ok(())
}

fn serve(a: &crate::ServeArgs, file: &FileConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let runner = runner(file, None, a.checkpoint.as_deref(), seed, out.join("traces"))?;
    let server =
        Arc::new(McpServer::new(vec![execute_skill_descriptor()], Arc::new(runner) as Arc<dyn SkillRunner>).map_err(input)?);
    if a.stdio {
        return serve_stdio(server).map_err(|e| CliError::Task(format!("stdio transport: {e}")));
    }
    let addr = a.listen.as_deref().expect("clap requires --stdio or --listen");
    let listener = std::net::TcpListener::bind(addr).map_err(|e| CliError::Input(format!("cannot listen on {addr}: {e}")))?;
    eprintln!("listening on {}", listener.local_addr().map_err(input)?);
    serve_tcp(server, listener).map_err(|e| CliError::Task(e.to_string()))
}

fn stats(a: &crate::StatsArgs) -> Result<(), CliError> {
    let data = Dataset::load(&a.data).map_err(input)?;
    let filter = (!a.category.is_empty()).then_some(a.category.as_slice());
    let s = dataset_stats(&data, filter).map_err(input)?;
    print!("{}", s.to_csv());
    Ok(())
}

fn profile(memory: Option<&Path>) -> Result<(), CliError> {
    let dir = memory_dir(memory).ok_or_else(|| CliError::Input(format!("pass --memory or set {MEMORY_DIR_ENV}")))?;
    let store = EpisodicStore::open(&dir).map_err(input)?;
    let p = extract_profile(&store);
    println!("{}", serde_json::to_string_pretty(&p).expect("profile serializes"));
    Ok(())
}
