use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use kgqa::eval::{evaluate, filter_trajectory, FilterCheck, FilterConfig, Judge, RemoteJudge, RuleJudge, SftRecord};
use kgqa::io::{read_jsonl, write_jsonl};
use kgqa::kg::{apply_removal_log, sample_ikg, Coverage, RemovalLog};
use kgqa::qa::{base_id, load_qa};
use kgqa::reward::{group_records, score_text, ScoreRecord, DEFAULT_GROUP_SIZE};
use kgqa::rollout::policy::Policy;
use kgqa::rollout::web::WebSearch;
use kgqa::rollout::{
    run_rollout, OfflineCorpus, RemotePolicy, RemoteWeb, RolloutConfig, ScriptedOracle, DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOP_K_DOCS,
};
use kgqa::trajectory::{MaskRecord, ParseOptions, TrajectoryRecord};
use kgqa::{KnowledgeGraph, QaExample, Trajectory};
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

/// Knowledge-graph QA agent toolkit.
#[derive(Debug, Parser)]
#[command(name = "kgqa", version, args_override_self = true)]
struct Cli {
    /// key=value file supplying defaults for any flag of the subcommand
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a triple file and write it back in canonical order
    #[command(args_override_self = true)]
    BuildKg(BuildKg),
    /// Remove a fraction of each question's critical triples
    #[command(args_override_self = true)]
    SampleIkg(SampleIkg),
    /// Generate trajectories
    #[command(args_override_self = true)]
    Rollout(Rollout),
    /// Compute rewards for trajectories
    #[command(args_override_self = true)]
    Score(Score),
    /// Group rewards and compute relative advantages
    #[command(args_override_self = true)]
    Advantages(Advantages),
    /// Filter trajectories into a fine-tuning set
    #[command(args_override_self = true)]
    FilterSft(FilterSft),
    /// Hits@1 and web-search usage
    #[command(args_override_self = true)]
    Eval(Eval),
    /// Retrieval-mask spans per trajectory
    #[command(args_override_self = true)]
    Mask(Mask),
}

#[derive(Debug, Args)]
struct BuildKg {
    #[arg(long)]
    triples: PathBuf,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleIkg {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    qa: PathBuf,
    #[arg(long)]
    fraction: f64,
    /// incomplete graph, TSV
    #[arg(long)]
    out_kg: PathBuf,
    #[arg(long)]
    out_log: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WebKind {
    Offline,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum JudgeKind {
    Rule,
    Remote,
}

#[derive(Debug, Args)]
struct Rollout {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    qa: PathBuf,
    /// removal log; rollouts then run on the incomplete graph
    #[arg(long)]
    ikg_log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyKind::Scripted)]
    policy: PolicyKind,
    #[arg(long)]
    policy_url: Option<String>,
    #[arg(long, value_enum, default_value_t = WebKind::Offline)]
    web: WebKind,
    #[arg(long)]
    web_corpus: Option<PathBuf>,
    #[arg(long)]
    web_url: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    max_iters: usize,
    #[arg(long, default_value_t = kgqa::kg::DEFAULT_TOP_K_RELATIONS)]
    top_k_relations: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_K_DOCS)]
    top_k_docs: usize,
    /// reject text outside tags
    #[arg(long)]
    strict: bool,
    /// rollouts per question; ids get a `#k` suffix when above 1
    #[arg(long, default_value_t = 1)]
    rollouts: usize,
}

#[derive(Debug, Args)]
struct Score {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    qa: PathBuf,
    /// without it every question is treated as complete-graph
    #[arg(long)]
    ikg_log: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Advantages {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GROUP_SIZE)]
    group_size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FilterSft {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    qa: PathBuf,
    #[arg(long)]
    ikg_log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = JudgeKind::Rule)]
    judge: JudgeKind,
    #[arg(long)]
    judge_url: Option<String>,
    /// graph whose aliases the rule judge accepts as plan heads
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long, requires = "kg")]
    aliases: Option<PathBuf>,
    /// minimum answer F1
    #[arg(long, default_value_t = 1.0)]
    answer_threshold: f64,
    #[arg(long)]
    out: PathBuf,
    /// per-trajectory verdicts, JSON-lines
    #[arg(long)]
    verdicts: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Eval {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    qa: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Mask {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Index of the subcommand name, skipping global flags and their values.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" || a == "--seed" {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Turns `key = value` lines into flags understood by `subcommand`.
/// Unknown keys are skipped with a warning; `#` starts a comment.
fn config_flags(path: &Path, subcommand: &str) -> Result<Vec<OsString>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let root = Cli::command();
    let sub = root
        .find_subcommand(subcommand)
        .with_context(|| format!("unknown subcommand {subcommand}"))?;
    let mut known: HashMap<String, bool> = HashMap::new();
    for arg in root.get_arguments().chain(sub.get_arguments()) {
        if let Some(long) = arg.get_long() {
            known.insert(long.to_string(), arg.get_action().takes_values());
        }
    }
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected key=value", path.display(), n + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key == "config" {
            continue;
        }
        match known.get(&key) {
            Some(true) => {
                flags.push(format!("--{key}").into());
                flags.push(value.into());
            }
            Some(false) => match value {
                "true" | "1" | "yes" => flags.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => bail!("{}:{}: {key} expects true or false, got {other}", path.display(), n + 1),
            },
            None => log::warn!("{}:{}: {key} is not a flag of {subcommand}; ignored", path.display(), n + 1),
        }
    }
    Ok(flags)
}

fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let (Some(path), Some(idx)) = (config_path(&args), subcommand_index(&args)) else {
        return Ok(args);
    };
    let name = args[idx].to_string_lossy().into_owned();
    if Cli::command().find_subcommand(&name).is_none() {
        return Ok(args);
    }
    let flags = config_flags(&path, &name)?;
    let mut out = args[..=idx].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[idx + 1..]);
    Ok(out)
}

fn load_kg(path: &Path, aliases: Option<&Path>) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load(path, aliases).with_context(|| format!("loading graph {}", path.display()))
}

fn load_questions(path: &Path) -> Result<Vec<QaExample>> {
    load_qa(path).with_context(|| format!("loading questions {}", path.display()))
}

fn load_log(path: Option<&Path>) -> Result<Option<RemovalLog>> {
    path.map(|p| RemovalLog::load(p).with_context(|| format!("loading removal log {}", p.display())))
        .transpose()
}

fn load_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    read_jsonl(path).with_context(|| format!("loading trajectories {}", path.display()))
}

fn coverage_of(log: Option<&RemovalLog>, id: &str) -> Result<Coverage> {
    match log {
        None => Ok(Coverage::Ckg),
        Some(log) => log
            .coverage(base_id(id))
            .with_context(|| format!("question {} is not in the removal log", base_id(id))),
    }
}

fn question_index(qa: &[QaExample]) -> HashMap<&str, &QaExample> {
    qa.iter().map(|q| (q.id.as_str(), q)).collect()
}

fn build_kg(a: BuildKg) -> Result<()> {
    let kg = load_kg(&a.triples, a.aliases.as_deref())?;
    fs::write(&a.out, kg.to_tsv()).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} triples, {} head entities, {} relations",
        kg.len(),
        kg.head_count(),
        kg.relation_vocabulary().len()
    );
    Ok(())
}

fn sample(a: SampleIkg, seed: u64) -> Result<()> {
    let kg = load_kg(&a.kg, a.aliases.as_deref())?;
    let qa = load_questions(&a.qa)?;
    let (ikg, log) = sample_ikg(&kg, &qa, a.fraction, seed)?;
    fs::write(&a.out_kg, ikg.to_tsv()).with_context(|| format!("writing {}", a.out_kg.display()))?;
    log.save(&a.out_log)?;
    let removed: usize = log.entries.iter().map(|e| e.removed.len()).sum();
    println!(
        "removed {removed} critical triples ({} graph triples gone) across {} questions",
        kg.len() - ikg.len(),
        log.entries.iter().filter(|e| e.coverage == Coverage::Ikg).count()
    );
    Ok(())
}

fn rollout(a: Rollout, seed: u64) -> Result<bool> {
    let reference = Arc::new(load_kg(&a.kg, a.aliases.as_deref())?);
    let qa = load_questions(&a.qa)?;
    let graph = match load_log(a.ikg_log.as_deref())? {
        Some(log) => Arc::new(apply_removal_log(&reference, &log)?),
        None => reference.clone(),
    };
    let web: Box<dyn WebSearch> = match a.web {
        WebKind::Offline => {
            let path = a.web_corpus.as_deref().context("--web offline needs --web-corpus")?;
            Box::new(OfflineCorpus::load(path).with_context(|| format!("loading corpus {}", path.display()))?)
        }
        WebKind::Remote => Box::new(RemoteWeb::new(a.web_url.clone().context("--web remote needs --web-url")?)),
    };
    if matches!(a.policy, PolicyKind::Remote) && a.policy_url.is_none() {
        bail!("--policy remote needs --policy-url");
    }
    let rollouts = a.rollouts.max(1);
    let jobs: Vec<(usize, usize)> = (0..qa.len()).flat_map(|q| (0..rollouts).map(move |k| (q, k))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(qi, k)| {
            let mut question = qa[qi].clone();
            if rollouts > 1 {
                question.id = format!("{}#{k}", question.id);
            }
            let cfg = RolloutConfig {
                max_iterations: a.max_iters,
                top_k_relations: a.top_k_relations,
                top_k_docs: a.top_k_docs,
                seed: seed.wrapping_add(k as u64),
                strict_format: a.strict,
            };
            let mut policy: Box<dyn Policy> = match a.policy {
                PolicyKind::Scripted => Box::new(ScriptedOracle::new(reference.clone())),
                PolicyKind::Remote => Box::new(RemotePolicy::new(a.policy_url.clone().unwrap_or_default())),
            };
            run_rollout(policy.as_mut(), &graph, web.as_ref(), &question, &cfg)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = 0;
    for r in results {
        match r {
            Ok(traj) => records.push(TrajectoryRecord::from(&traj)),
            Err(e) => {
                failures += 1;
                log::error!("{e}");
            }
        }
    }
    write_jsonl(&a.out, &records)?;
    let trajs: Vec<Trajectory> = records
        .iter()
        .filter_map(|r| r.parse(ParseOptions::default()).ok())
        .collect();
    let web_used = trajs.iter().filter(|t| t.uses_web()).count();
    println!("{} trajectories written, {web_used} used web search, {failures} failed", records.len());
    Ok(failures == 0)
}

fn score(a: Score) -> Result<()> {
    let qa = load_questions(&a.qa)?;
    let index = question_index(&qa);
    let log = load_log(a.ikg_log.as_deref())?;
    let mut out = Vec::new();
    for rec in load_trajectories(&a.traj)? {
        let q = index
            .get(base_id(&rec.id))
            .with_context(|| format!("trajectory {} has no question", rec.id))?;
        let coverage = coverage_of(log.as_ref(), &rec.id)?;
        let breakdown = score_text(&rec.id, &rec.text, &q.answers, Some(coverage))?;
        out.push(ScoreRecord {
            id: rec.id,
            breakdown,
            coverage,
        });
    }
    write_jsonl(&a.out, &out)?;
    let mean = out.iter().map(|s| s.breakdown.r_over).sum::<f64>() / out.len().max(1) as f64;
    println!("{} trajectories scored, mean R_over {mean:.4}", out.len());
    Ok(())
}

fn advantages(a: Advantages) -> Result<()> {
    let scores: Vec<ScoreRecord> =
        read_jsonl(&a.scores).with_context(|| format!("loading scores {}", a.scores.display()))?;
    let pairs: Vec<(String, f64)> = scores.into_iter().map(|s| (s.id, s.breakdown.r_over)).collect();
    let groups = group_records(&pairs, a.group_size)?;
    write_jsonl(&a.out, &groups)?;
    println!("{} groups written", groups.len());
    Ok(())
}

#[derive(serde::Serialize)]
struct VerdictLine<'a> {
    id: &'a str,
    keep: bool,
    failed_checks: &'a [FilterCheck],
}

fn filter_sft(a: FilterSft) -> Result<()> {
    let qa = load_questions(&a.qa)?;
    let index = question_index(&qa);
    let log = load_log(a.ikg_log.as_deref())?;
    let judge: Box<dyn Judge> = match a.judge {
        JudgeKind::Rule => match &a.kg {
            Some(kg) => Box::new(RuleJudge::with_graph(Arc::new(load_kg(kg, a.aliases.as_deref())?))),
            None => Box::new(RuleJudge::new()),
        },
        JudgeKind::Remote => Box::new(RemoteJudge::new(a.judge_url.clone().context("--judge remote needs --judge-url")?)),
    };
    let cfg = FilterConfig {
        answer_threshold: a.answer_threshold,
    };
    let records = load_trajectories(&a.traj)?;
    let verdicts: Vec<(String, bool, Vec<FilterCheck>, Option<SftRecord>)> = records
        .par_iter()
        .map(|rec| -> Result<_> {
            let q = index
                .get(base_id(&rec.id))
                .with_context(|| format!("trajectory {} has no question", rec.id))?;
            let coverage = coverage_of(log.as_ref(), &rec.id)?;
            let Ok(traj) = rec.parse(ParseOptions::default()) else {
                return Ok((rec.id.clone(), false, vec![FilterCheck::Format], None));
            };
            let v = filter_trajectory(&traj, q, coverage, judge.as_ref(), &cfg)
                .with_context(|| format!("judging {}", rec.id))?;
            let sft = v.keep.then(|| SftRecord::new(q, &traj));
            Ok((rec.id.clone(), v.keep, v.failed_checks, sft))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<&SftRecord> = verdicts.iter().filter_map(|v| v.3.as_ref()).collect();
    write_jsonl(&a.out, kept.iter().copied())?;
    if let Some(path) = &a.verdicts {
        let lines: Vec<VerdictLine> = verdicts
            .iter()
            .map(|(id, keep, failed, _)| VerdictLine {
                id,
                keep: *keep,
                failed_checks: failed,
            })
            .collect();
        write_jsonl(path, &lines)?;
    }
    let mut by_check: BTreeMap<FilterCheck, usize> = BTreeMap::new();
    for check in verdicts.iter().flat_map(|v| &v.2) {
        *by_check.entry(*check).or_default() += 1;
    }
    let summary: Vec<String> = by_check.iter().map(|(c, n)| format!("{c} {n}")).collect();
    println!(
        "kept {} of {}{}",
        kept.len(),
        verdicts.len(),
        if summary.is_empty() { String::new() } else { format!("; failures: {}", summary.join(", ")) }
    );
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    let qa = load_questions(&a.qa)?;
    let trajs: Vec<Trajectory> = load_trajectories(&a.traj)?
        .iter()
        .map(|rec| {
            rec.parse(ParseOptions::default()).unwrap_or_else(|e| {
                log::warn!("trajectory {} does not parse ({e}); counted as unanswered", rec.id);
                Trajectory {
                    question_id: rec.id.clone(),
                    steps: Vec::new(),
                    raw: rec.text.clone(),
                }
            })
        })
        .collect();
    let report = evaluate(&trajs, &qa)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(&a.out, format!("{json}\n")).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "Hits@1 {:.4}, web search ratio {:.4}, web calls per tool call {:.4}, {} questions",
        report.hits_at_1, report.web_search_ratio, report.web_calls_per_tool_call, report.n_questions
    );
    Ok(())
}

fn mask(a: Mask) -> Result<()> {
    let mut out = Vec::new();
    for rec in load_trajectories(&a.traj)? {
        let traj = rec
            .parse(ParseOptions::default())
            .with_context(|| format!("trajectory {} does not parse", rec.id))?;
        out.push(MaskRecord::from_trajectory(&traj));
    }
    write_jsonl(&a.out, &out)?;
    println!("{} mask records written", out.len());
    Ok(())
}

fn run() -> Result<bool> {
    let args = expand_args(std::env::args_os().collect())?;
    let cli = Cli::parse_from(args);
    if let Some(path) = &cli.config {
        log::debug!("flags from {}", path.display());
    }
    match cli.command {
        Command::BuildKg(a) => build_kg(a)?,
        Command::SampleIkg(a) => sample(a, cli.seed)?,
        Command::Rollout(a) => return rollout(a, cli.seed),
        Command::Score(a) => score(a)?,
        Command::Advantages(a) => advantages(a)?,
        Command::FilterSft(a) => filter_sft(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Mask(a) => mask(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn finds_the_subcommand_after_global_flags() {
        assert_eq!(subcommand_index(&os(&["kgqa", "--seed", "3", "eval", "--out", "x"])), Some(3));
        assert_eq!(subcommand_index(&os(&["kgqa", "--config", "c", "rollout"])), Some(3));
        assert_eq!(subcommand_index(&os(&["kgqa", "--help"])), None);
    }

    #[test]
    fn config_flags_are_filtered_and_overridable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        fs::write(&cfg, "# defaults\nmax_iters = 4\nstrict = true\ngroup-size = 2\nseed = 9\n").unwrap();
        let args = expand_args(os(&[
            "kgqa", "--config", cfg.to_str().unwrap(), "rollout", "--kg", "k", "--qa", "q", "--out", "o", "--max-iters", "6",
        ]))
        .unwrap();
        let cli = Cli::try_parse_from(args).unwrap();
        assert_eq!(cli.seed, 9);
        let Command::Rollout(r) = cli.command else { panic!("expected rollout") };
        assert_eq!(r.max_iters, 6);
        assert!(r.strict);
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
