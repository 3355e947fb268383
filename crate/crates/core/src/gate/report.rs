//! Terminal, JSON and JUnit XML renderings of a gate decision.
//!
//! The terminal summary is a pure function of the decision, so re-reading the
//! JSON report reproduces it exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{GateDecision, ScenarioResult};
use crate::coverage::Dimension;
use crate::error::Result;
use crate::stats::Verdict;

pub const JSON_REPORT_NAME: &str = "gate_report.json";
pub const TERMINAL_REPORT_NAME: &str = "gate_report.txt";

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.prec$}"))
}

fn scenario_detail(r: &ScenarioResult) -> String {
    if let Some(reg) = &r.regression {
        let mut s = format!(
            "b {}/{} c {}/{} drop {:+.3} p {:.4}",
            reg.baseline.pass_count, reg.baseline.n, reg.current.pass_count, reg.current.n, reg.effects.absolute_diff, reg.p_value
        );
        if let Some(adj) = r.adjusted_p {
            let _ = write!(s, " holm {adj:.4}");
        }
        if let Some(sp) = &r.sprt {
            let _ = write!(s, " sprt {} @{}", sp.verdict, sp.trials_used);
        }
        s
    } else if let Some(mr) = &r.metamorphic {
        format!("{} violations {}/{}", mr.relation, mr.stats.violations, mr.stats.pairs_checked)
    } else if let Some(t) = &r.threshold {
        format!("{}/{} ci [{:.3}, {:.3}]", t.pass_count, t.n, t.interval.lower, t.interval.upper)
    } else {
        String::new()
    }
}

/// Human-readable summary.
pub fn render_terminal(d: &GateDecision) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "campaign {}  baseline {} -> candidate {}  seed {}",
        d.campaign, d.baseline_version, d.candidate_version, d.seed
    );
    let id_w = d.scenarios.iter().map(|s| s.scenario_id.len()).max().unwrap_or(8).max(8);
    let _ = writeln!(out, "{:<id_w$}  {:<11}  {:<7}  {:<12}  {:>5}  detail", "scenario", "kind", "mode", "verdict", "live");
    for r in &d.scenarios {
        let kind = serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<id_w$}  {:<11}  {:<7}  {:<12}  {:>5}  {}",
            r.scenario_id,
            kind,
            if r.offline { "offline" } else { "live" },
            r.verdict.as_str(),
            r.trials.live(),
            scenario_detail(r)
        );
        if let Some(diag) = &r.diagnostic {
            let _ = writeln!(out, "{:<id_w$}  note: {diag}", "");
        }
    }
    let c = &d.coverage;
    let dims: Vec<String> = Dimension::ALL.iter().map(|&dim| format!("{} {}", dim.as_str(), opt(c.tuple.get(dim), 3))).collect();
    let _ = writeln!(
        out,
        "coverage: {} | overall {:.3} (min {:.3})",
        dims.join("  "),
        c.overall,
        d.config.coverage_min
    );
    let r = &d.reduction;
    let _ = writeln!(
        out,
        "trials: {} live of {} consumed; {} of {} scenarios offline; sequential {} vs fixed {}; cost factor {:.3}",
        r.live_trials, r.total_trials, r.offline_scenarios, r.total_scenarios, r.sequential_trials, r.fixed_n_trials, r.combined
    );
    if let Some(m) = &d.mutation {
        let score = m.score.as_ref().map_or_else(|| "undefined".into(), |s| format!("{:.3}", s.overall));
        let _ = writeln!(out, "mutation: {} mutants, score {score}", m.outcomes.len());
    }
    for w in &d.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(out, "suite {}  decision {}", d.suite_verdict, d.decision.as_str().to_uppercase());
    out
}

/// Structured report; field order is fixed, so equal decisions give equal bytes.
pub fn to_json(d: &GateDecision) -> Result<String> {
    Ok(serde_json::to_string_pretty(d)?)
}

pub fn from_json(s: &str) -> Result<GateDecision> {
    Ok(serde_json::from_str(s)?)
}

fn esc(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            '\'' => o.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\n' | '\r' | '\t') => {
                let _ = write!(o, "&#x{:x};", c as u32);
            }
            c => o.push(c),
        }
    }
    o
}

fn properties(r: &ScenarioResult) -> Vec<(String, String)> {
    let mut p = vec![
        ("verdict".to_string(), r.verdict.as_str().to_string()),
        ("offline".into(), r.offline.to_string()),
        ("live_trials".into(), r.trials.live().to_string()),
        ("total_trials".into(), r.trials.total().to_string()),
    ];
    if let Some(t) = &r.threshold {
        p.push(("pass_rate".into(), format!("{:.6}", t.pass_count as f64 / t.n as f64)));
        p.push(("ci_lower".into(), format!("{:.6}", t.interval.lower)));
        p.push(("ci_upper".into(), format!("{:.6}", t.interval.upper)));
    }
    if let Some(reg) = &r.regression {
        p.push(("baseline_pass_rate".into(), format!("{:.6}", reg.baseline.pass_rate)));
        p.push(("candidate_pass_rate".into(), format!("{:.6}", reg.current.pass_rate)));
        p.push(("p_value".into(), format!("{:.6}", reg.p_value)));
        p.push(("achieved_power".into(), format!("{:.6}", reg.achieved_power)));
    }
    if let Some(adj) = r.adjusted_p {
        p.push(("holm_adjusted_p".into(), format!("{adj:.6}")));
    }
    if let Some(s) = &r.sprt {
        p.push(("sprt_verdict".into(), s.verdict.as_str().into()));
        p.push(("sprt_trials".into(), s.trials_used.to_string()));
        p.push(("sprt_llr".into(), format!("{:.6}", s.final_llr)));
    }
    if let Some(m) = &r.metamorphic {
        p.push(("relation".into(), m.relation.as_str().into()));
        p.push(("mr_violations".into(), m.stats.violations.to_string()));
        p.push(("mr_pairs".into(), m.stats.pairs_checked.to_string()));
    }
    p
}

/// JUnit-style XML: one test case per scenario, INCONCLUSIVE as skipped.
pub fn to_junit_xml(d: &GateDecision) -> String {
    let count = |v: Verdict| d.scenarios.iter().filter(|s| s.verdict == v).count();
    let mut x = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        x,
        "<testsuites name=\"{}\" tests=\"{}\" failures=\"{}\" skipped=\"{}\">",
        esc(&d.campaign),
        d.scenarios.len(),
        count(Verdict::Fail),
        count(Verdict::Inconclusive)
    );
    let _ = writeln!(
        x,
        "  <testsuite name=\"{}\" tests=\"{}\" failures=\"{}\" errors=\"0\" skipped=\"{}\">",
        esc(&d.campaign),
        d.scenarios.len(),
        count(Verdict::Fail),
        count(Verdict::Inconclusive)
    );
    x.push_str("    <properties>\n");
    let suite_props = [
        ("decision", d.decision.as_str().to_string()),
        ("suite_verdict", d.suite_verdict.as_str().to_string()),
        ("baseline_version", d.baseline_version.clone()),
        ("candidate_version", d.candidate_version.clone()),
        ("seed", d.seed.to_string()),
        ("coverage_overall", format!("{:.6}", d.coverage.overall)),
        ("alpha", d.config.alpha.to_string()),
        ("beta", d.config.beta.to_string()),
        ("delta", d.config.delta.to_string()),
        ("theta", d.config.theta.to_string()),
    ];
    for (k, v) in suite_props {
        let _ = writeln!(x, "      <property name=\"{k}\" value=\"{}\"/>", esc(&v));
    }
    x.push_str("    </properties>\n");
    for r in &d.scenarios {
        let kind = serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(x, "    <testcase name=\"{}\" classname=\"{}.{}\">", esc(&r.scenario_id), esc(&d.campaign), kind);
        x.push_str("      <properties>\n");
        for (k, v) in properties(r) {
            let _ = writeln!(x, "        <property name=\"{k}\" value=\"{}\"/>", esc(&v));
        }
        x.push_str("      </properties>\n");
        let detail = scenario_detail(r);
        match r.verdict {
            Verdict::Pass => {}
            Verdict::Fail => {
                let _ = writeln!(x, "      <failure message=\"regression detected\">{}</failure>", esc(&detail));
            }
            Verdict::Inconclusive => {
                let msg = r.diagnostic.clone().unwrap_or_else(|| format!("inconclusive: {detail}"));
                let _ = writeln!(x, "      <skipped message=\"{}\"/>", esc(&msg));
            }
        }
        x.push_str("    </testcase>\n");
    }
    x.push_str("  </testsuite>\n</testsuites>\n");
    x
}

/// Where reports go. Unset destinations are skipped.
#[derive(Debug, Clone, Default)]
pub struct ReportDestinations {
    pub report_dir: Option<PathBuf>,
    pub xml: Option<PathBuf>,
}

/// Write the configured artifacts and return the terminal summary.
///
/// The summary is computed before any write, so callers can print it even
/// when writing fails.
pub fn emit_reports(d: &GateDecision, dest: &ReportDestinations) -> (String, Result<Vec<PathBuf>>) {
    let terminal = render_terminal(d);
    let written = write_artifacts(d, &terminal, dest);
    (terminal, written)
}

fn write_artifacts(d: &GateDecision, terminal: &str, dest: &ReportDestinations) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if let Some(dir) = &dest.report_dir {
        fs::create_dir_all(dir)?;
        let json = dir.join(JSON_REPORT_NAME);
        fs::write(&json, to_json(d)?)?;
        let txt = dir.join(TERMINAL_REPORT_NAME);
        fs::write(&txt, terminal)?;
        out.extend([json, txt]);
    }
    if let Some(xml) = &dest.xml {
        if let Some(parent) = xml.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(xml, to_junit_xml(d))?;
        out.push(xml.clone());
    }
    Ok(out)
}

/// Terminal summary regenerated from a stored JSON report.
pub fn summary_from_file(path: &Path) -> Result<String> {
    Ok(render_terminal(&from_json(&fs::read_to_string(path)?)?))
}
