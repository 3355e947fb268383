//! Command-line front end. Each subcommand maps to one library entry point.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::coverage::{coverage_tuple, select_next_scenario, weakest_dimension, CoverageContext, CoverageTuple};
use crate::efficiency::{calibrate_budget, CalibrationConfig};
use crate::error::{Error, Result};
use crate::gate::report::{emit_reports, from_json, render_terminal, to_junit_xml, ReportDestinations, JSON_REPORT_NAME};
use crate::gate::{exit_code, run_gate, Decision, GateInputs, TrialMethod};
use crate::mutation::{generate_mutants, run_mutation_analysis, KillConfig, MutationRunConfig};
use crate::sequential::{run_sprt, SprtConfig, SprtRun};
use crate::simkit::{ImpactTable, SimAgentSpec};
use crate::stats::{suite_verdict, threshold_verdict, ThresholdResult, Verdict};
use crate::traces::{trial_seed, Runner, TraceStore};

pub use config::{load_baseline, parse_config, parse_config_str, AgentRef, CampaignConfig};

/// Exit status for usage and configuration errors; 0-2 belong to gate decisions.
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stochtest", version, about = "Statistical regression testing for stochastic agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Campaign configuration (YAML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Trace store (JSON lines); overrides the config's `store`.
    #[arg(long, global = true, value_name = "PATH")]
    pub store: Option<PathBuf>,
    /// Baseline version id.
    #[arg(long, global = true, value_name = "VERSION")]
    pub baseline: Option<String>,
    /// Candidate version id.
    #[arg(long, global = true, value_name = "VERSION")]
    pub candidate: Option<String>,
    /// Campaign seed; generated and printed when absent.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Directory for structured reports.
    #[arg(long, global = true, value_name = "PATH")]
    pub report_dir: Option<PathBuf>,
    /// JUnit XML output file.
    #[arg(long, global = true, value_name = "PATH")]
    pub xml: Option<PathBuf>,
    /// Exit 0 with a warning instead of 2 when the outcome is inconclusive.
    #[arg(long, global = true)]
    pub inconclusive_warn: bool,
    /// Scenarios run concurrently (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Size the trial budget from a short calibration run per scenario.
    Calibrate,
    /// Run the candidate on every scenario and judge it against the threshold.
    Run,
    /// Full deployment gate against the baseline; exit 0/1/2 = deploy/block/manual.
    Gate,
    /// Mutation analysis of the candidate: how many injected faults the suite kills.
    Mutate,
    /// Coverage of the stored candidate traces.
    Coverage,
    /// Deployment gate from stored traces only, with no live candidate runs.
    Replay,
    /// Re-render a stored gate report (and optionally its XML).
    Report,
}

/// Parse `args` and run; returns the process exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

/// Config, store and runners resolved from flags and the campaign file.
pub struct Session {
    pub cfg: CampaignConfig,
    pub seed: u64,
    pub store: TraceStore,
    pub candidate_version: String,
    pub candidate: Option<SimAgentSpec>,
    pub baseline_version: Option<String>,
    pub baseline: Option<SimAgentSpec>,
}

fn renamed(mut spec: SimAgentSpec, version: Option<&String>) -> SimAgentSpec {
    if let Some(v) = version {
        spec.agent.version_id = v.clone();
    }
    spec
}

impl Session {
    pub fn open(common: &Common) -> Result<Self> {
        let path = common
            .config
            .as_ref()
            .ok_or_else(|| Error::Config(vec!["--config is required for this subcommand".into()]))?;
        let mut cfg = parse_config(path)?;
        if let Some(p) = common.parallelism {
            cfg.gate.parallelism = p;
        }
        let seed = match common.seed.or(cfg.seed) {
            Some(s) => s,
            None => {
                let s: u64 = rand::random();
                println!("seed: {s} (generated)");
                s
            }
        };
        let store = match common.store.as_ref().or(cfg.store.as_ref()) {
            Some(p) => TraceStore::open(p)?,
            None => TraceStore::in_memory(),
        };
        let candidate = cfg.agent.sim().cloned().map(|s| renamed(s, common.candidate.as_ref()));
        let candidate_version = common.candidate.clone().unwrap_or_else(|| cfg.agent.version_id().to_string());
        let baseline = match &cfg.config.regression {
            Some(r) => Some(renamed(load_baseline(&r.baseline)?, common.baseline.as_ref())),
            None => None,
        };
        let baseline_version = common.baseline.clone().or_else(|| baseline.as_ref().map(|b| b.version_id().to_string()));
        Ok(Self {
            cfg,
            seed,
            store,
            candidate_version,
            candidate,
            baseline_version,
            baseline,
        })
    }

    fn candidate_sim(&self) -> Result<&SimAgentSpec> {
        self.candidate.as_ref().ok_or_else(|| {
            Error::Config(vec![format!(
                "agent `{}` is a version name only; live runs need a simulator spec",
                self.candidate_version
            )])
        })
    }
}

fn write_json<T: Serialize>(dir: Option<&PathBuf>, name: &str, value: &T) -> Result<()> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(value)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn verdict_code(v: Verdict, warn: bool) -> i32 {
    let d = match v {
        Verdict::Pass => Decision::Deploy,
        Verdict::Fail => Decision::Block,
        Verdict::Inconclusive => Decision::Manual,
    };
    if d == Decision::Manual && warn {
        eprintln!("warning: inconclusive outcome reported as success (--inconclusive-warn)");
    }
    exit_code(d, warn)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let c = &cli.common;
    match cli.command {
        Command::Report => report(c),
        Command::Calibrate => calibrate(&Session::open(c)?, c),
        Command::Run => run(&Session::open(c)?, c),
        Command::Gate => gate(&Session::open(c)?, c, false),
        Command::Replay => gate(&Session::open(c)?, c, true),
        Command::Mutate => mutate(&Session::open(c)?, c),
        Command::Coverage => coverage(&Session::open(c)?, c),
    }
}

#[derive(Serialize)]
struct CalibrationRow {
    scenario_id: String,
    #[serde(flatten)]
    estimate: crate::efficiency::BudgetEstimate,
}

fn calibrate(s: &Session, c: &Common) -> Result<i32> {
    let runner = s.candidate_sim()?;
    let mut rows = Vec::new();
    println!("{:<32}  {:>9}  {:<8}  {:>5}  {:>5}", "scenario", "sigma2", "class", "raw", "n*");
    for sc in &s.cfg.scenarios {
        let cal = calibrate_budget(
            runner,
            sc,
            &CalibrationConfig {
                alpha: s.cfg.config.alpha,
                beta: s.cfg.config.beta,
                seed: s.seed,
                ..CalibrationConfig::default()
            },
        )?;
        let e = cal.estimate;
        println!(
            "{:<32}  {:>9.4}  {:<8}  {:>5}  {:>5}",
            sc.scenario_id,
            e.sigma2_fp,
            format!("{:?}", e.variance_class).to_lowercase(),
            e.n_raw,
            e.n_star
        );
        if let Some(w) = &e.warning {
            println!("  warning: {w}");
        }
        rows.push(CalibrationRow {
            scenario_id: sc.scenario_id.clone(),
            estimate: e,
        });
    }
    write_json(c.report_dir.as_ref(), "calibration.json", &rows)?;
    Ok(0)
}

#[derive(Serialize)]
struct RunRow {
    scenario_id: String,
    threshold: ThresholdResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    sprt: Option<SprtRun>,
}

#[derive(Serialize)]
struct RunReport {
    campaign: String,
    version_id: String,
    seed: u64,
    suite_verdict: Verdict,
    scenarios: Vec<RunRow>,
}

fn run(s: &Session, c: &Common) -> Result<i32> {
    let runner = s.candidate_sim()?;
    let t = &s.cfg.config;
    let mut rows = Vec::new();
    for sc in &s.cfg.scenarios {
        let mut bits = Vec::new();
        let mut failure = None;
        let mut next = || -> Option<bool> {
            let i = bits.len();
            let trace = match runner.run(sc, trial_seed(s.seed, runner.version_id(), &sc.scenario_id, i)) {
                Ok(t) => t,
                Err(e) => {
                    failure = Some(e);
                    return None;
                }
            };
            let bit = sc.evaluate(&trace);
            if let Err(e) = s.store.append_trace(runner.version_id(), &sc.scenario_id, &sc.input, trace) {
                failure = Some(e);
                return None;
            }
            bits.push(bit);
            Some(bit)
        };
        let sprt = match t.method {
            TrialMethod::Sprt => {
                let delta = s.cfg.gate.delta.min(t.threshold - 1e-3);
                Some(run_sprt(&mut next, &SprtConfig::new(t.threshold, delta, t.alpha, t.beta, Some(t.trials))?, None)?)
            }
            TrialMethod::Fixed => {
                for _ in 0..t.trials {
                    if next().is_none() {
                        break;
                    }
                }
                None
            }
        };
        if let Some(e) = failure {
            return Err(e);
        }
        let outcomes = crate::stats::TrialOutcomes::new(sc.scenario_id.clone(), runner.version_id(), bits);
        let thr = threshold_verdict(&outcomes, t.threshold, t.alpha)?;
        let verdict = sprt.as_ref().map_or(thr.verdict, |r| if r.verdict == Verdict::Inconclusive { thr.verdict } else { r.verdict });
        let mut th = thr;
        th.verdict = verdict;
        println!(
            "{:<32}  {:<12}  {}/{}  ci [{:.3}, {:.3}]{}",
            sc.scenario_id,
            verdict.as_str(),
            th.pass_count,
            th.n,
            th.interval.lower,
            th.interval.upper,
            sprt.as_ref().map_or(String::new(), |r| format!("  sprt {} @{}", r.verdict, r.trials_used))
        );
        rows.push(RunRow {
            scenario_id: sc.scenario_id.clone(),
            threshold: th,
            sprt,
        });
    }
    let suite = suite_verdict(&rows.iter().map(|r| r.threshold.verdict).collect::<Vec<_>>())?;
    println!("suite {suite}");
    write_json(
        c.report_dir.as_ref(),
        "run_report.json",
        &RunReport {
            campaign: s.cfg.name.clone(),
            version_id: runner.version_id().to_string(),
            seed: s.seed,
            suite_verdict: suite,
            scenarios: rows,
        },
    )?;
    Ok(verdict_code(suite, c.inconclusive_warn))
}

fn gate(s: &Session, c: &Common, replay: bool) -> Result<i32> {
    let baseline_version = s
        .baseline_version
        .as_deref()
        .ok_or_else(|| Error::Config(vec!["no baseline: set config.regression.baseline or pass --baseline".into()]))?;
    let candidate: Option<&dyn Runner> = if replay { None } else { Some(s.candidate_sim()? as &dyn Runner) };
    let coverage = s.candidate.as_ref().or(s.baseline.as_ref()).map(|spec| {
        let target: Vec<&str> = s.cfg.gate.target_models.iter().map(String::as_str).collect();
        let tested: Vec<&str> = [s.candidate.as_ref(), s.baseline.as_ref()].into_iter().flatten().map(|x| x.agent.model.id.as_str()).collect();
        CoverageContext::from_tools(&spec.agent.tools).with_models(&target, &tested)
    });
    let decision = run_gate(
        GateInputs {
            campaign: &s.cfg.name,
            suite: &s.cfg.scenarios,
            store: &s.store,
            baseline_version,
            candidate_version: &s.candidate_version,
            baseline: s.baseline.as_ref().map(|b| b as &dyn Runner),
            candidate,
            coverage,
        },
        &s.cfg.gate,
        s.seed,
    )?;
    let (terminal, written) = emit_reports(
        &decision,
        &ReportDestinations {
            report_dir: c.report_dir.clone(),
            xml: c.xml.clone(),
        },
    );
    print!("{terminal}");
    for p in written? {
        println!("wrote {}", p.display());
    }
    if decision.decision == Decision::Manual && c.inconclusive_warn {
        eprintln!("warning: manual review needed; exiting 0 because of --inconclusive-warn");
    }
    Ok(decision.exit_code(c.inconclusive_warn))
}

fn mutate(s: &Session, c: &Common) -> Result<i32> {
    let parent = s.candidate_sim()?;
    let m = &s.cfg.mutation;
    let (mutants, skipped) = generate_mutants(parent, &m.operators, m.per_operator, &ImpactTable::default(), s.seed)?;
    let cfg = MutationRunConfig {
        trials: m.trials,
        kill: KillConfig {
            delta_min: m.delta_min,
            alpha_kill: m.alpha_kill,
            theta: s.cfg.config.threshold,
            ..KillConfig::default()
        },
        sequential: m.sequential,
        beta: s.cfg.config.beta,
        seed: s.seed,
        ..MutationRunConfig::default()
    };
    let report = run_mutation_analysis(parent, &mutants, skipped, &s.cfg.scenarios, &cfg)?;
    for o in &report.outcomes {
        println!(
            "{:<40}  {:<7}  {:<8}  p {:.4}  trials {}",
            o.version_id,
            o.class.as_str(),
            if o.result.killed {
                "killed"
            } else if o.result.presumed_equivalent {
                "equiv?"
            } else {
                "survived"
            },
            o.result.p_value,
            o.trials_used
        );
    }
    for sk in &report.skipped {
        println!("skipped {:?}: {}", sk.operator.op, sk.reason);
    }
    match &report.score {
        Some(sc) => {
            println!("mutation score {:.3} ({} killed of {})", sc.overall, sc.killed_count, sc.total);
            for (class, v) in &sc.per_class {
                println!("  {:<8} {}", class.as_str(), v.map_or_else(|| "n/a".into(), |x| format!("{x:.3}")));
            }
        }
        None => println!("mutation score undefined: every mutant is presumed equivalent"),
    }
    write_json(c.report_dir.as_ref(), "mutation_report.json", &report)?;
    Ok(0)
}

#[derive(Serialize)]
struct CoverageOut<'a> {
    version_id: &'a str,
    traces: usize,
    report: crate::coverage::CoverageReport,
    weakest: Option<&'static str>,
    suggested_scenario: Option<String>,
}

fn coverage(s: &Session, c: &Common) -> Result<i32> {
    let records = s.store.query(&s.candidate_version, &[]);
    if records.is_empty() {
        return Err(Error::InsufficientData {
            what: format!("stored traces for {}", s.candidate_version),
            needed: 1,
            available: 0,
        });
    }
    let ctx = match s.candidate.as_ref().or(s.baseline.as_ref()) {
        Some(spec) => {
            let target: Vec<&str> = s.cfg.gate.target_models.iter().map(String::as_str).collect();
            CoverageContext::from_tools(&spec.agent.tools).with_models(&target, &[spec.agent.model.id.as_str()])
        }
        None => CoverageContext::from_tools(&[]),
    };
    let report = coverage_tuple(records.iter().map(|r| &r.trace), &ctx)?;
    for (d, v) in report.tuple.applicable() {
        println!("{:<9} {v:.3}", d.as_str());
    }
    println!("overall   {:.3} (min {:.3})", report.overall, s.cfg.gate.coverage_min);
    let target = CoverageTuple::full();
    let weakest = weakest_dimension(&report.tuple, &target);
    let suggestion = select_next_scenario(&report.tuple, &target, &s.cfg.scenarios).map(|sc| sc.scenario_id.clone());
    if let Some(d) = weakest {
        println!("weakest dimension: {}", d.as_str());
    }
    if let Some(id) = &suggestion {
        println!("next scenario: {id}");
    }
    write_json(
        c.report_dir.as_ref(),
        "coverage_report.json",
        &CoverageOut {
            version_id: &s.candidate_version,
            traces: records.len(),
            report,
            weakest: weakest.map(|d| d.as_str()),
            suggested_scenario: suggestion,
        },
    )?;
    Ok(0)
}

fn report(c: &Common) -> Result<i32> {
    let dir = c
        .report_dir
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["report needs --report-dir holding a gate report".into()]))?;
    let path: &Path = &dir.join(JSON_REPORT_NAME);
    let d = from_json(&fs::read_to_string(path)?)?;
    print!("{}", render_terminal(&d));
    if let Some(xml) = &c.xml {
        fs::write(xml, to_junit_xml(&d))?;
        println!("wrote {}", xml.display());
    }
    Ok(0)
}
