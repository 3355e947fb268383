//! Token-efficiency tools: adaptive trial budgets, variance classes,
//! multi-fidelity allocation and evidence combination, and the combined
//! reduction report.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, invalid, Error, Result};
use crate::fingerprint::{extract_fingerprint, pca_project, Fingerprint, FingerprintScale, ToolSlots};
use crate::stats::special::{chi2_sf, normal_quantile, normal_sf, z};
use crate::traces::{trial_seed, Runner, Scenario, Trace};

/// Smallest calibration size accepted; below `RECOMMENDED_K` a warning is attached.
pub const MIN_CALIBRATION: usize = 5;
pub const RECOMMENDED_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceClass {
    Stable,
    Moderate,
    Volatile,
}

impl VarianceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceClass::Stable => "stable",
            VarianceClass::Moderate => "moderate",
            VarianceClass::Volatile => "volatile",
        }
    }
}

impl fmt::Display for VarianceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Total-variance cut points; `low < high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for VarianceThresholds {
    fn default() -> Self {
        Self { low: 1.5, high: 5.0 }
    }
}

pub fn classify_variance(sigma2_fp: f64, t: VarianceThresholds) -> Result<VarianceClass> {
    if !(t.low < t.high) {
        return invalid(format!("variance thresholds need low < high, got {} and {}", t.low, t.high));
    }
    Ok(if sigma2_fp < t.low {
        VarianceClass::Stable
    } else if sigma2_fp < t.high {
        VarianceClass::Moderate
    } else {
        VarianceClass::Volatile
    })
}

/// Sum over components of the sample variance: `Σ‖f_i − f̄‖² / (k − 1)`.
pub fn fingerprint_variance(rows: &[Vec<f64>]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData {
            what: "fingerprints for a variance estimate".into(),
            needed: 2,
            available: rows.len(),
        });
    }
    let d = rows[0].len();
    let k = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / k).collect();
    let ss: f64 = rows.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>()).sum();
    Ok(ss / (k - 1.0))
}

/// `⌈(z_{1−α} + z_{1−β})² σ² / Δ² + (d_eff + 1)/2⌉`, before any floor or margin.
pub fn raw_budget(sigma2_fp: f64, d_eff: usize, alpha: f64, beta: f64, mahalanobis_min: f64) -> Result<usize> {
    check_probability("alpha", alpha)?;
    check_probability("beta", beta)?;
    if !(mahalanobis_min > 0.0) {
        return invalid(format!("minimum Mahalanobis distance must be positive, got {mahalanobis_min}"));
    }
    if !(sigma2_fp >= 0.0) {
        return invalid(format!("fingerprint variance must be non-negative, got {sigma2_fp}"));
    }
    let zs = z(1.0 - alpha) + z(1.0 - beta);
    let x = zs * zs * sigma2_fp / (mahalanobis_min * mahalanobis_min) + (d_eff as f64 + 1.0) / 2.0;
    Ok((x - 1e-9).ceil().max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEstimate {
    pub n_star: usize,
    pub n_raw: usize,
    pub variance_class: VarianceClass,
    pub sigma2_fp: f64,
    pub d_eff: usize,
    /// `1 + √(2/k)`.
    pub safety_factor: f64,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Floors and margin applied to a raw budget: `⌈max(raw, k+5) · (1 + √(2/k))⌉`.
pub fn budget_from_variance(
    sigma2_fp: f64,
    d_eff: usize,
    k: usize,
    alpha: f64,
    beta: f64,
    mahalanobis_min: f64,
    thresholds: VarianceThresholds,
) -> Result<BudgetEstimate> {
    if k < MIN_CALIBRATION {
        return Err(Error::InsufficientData {
            what: "calibration trials".into(),
            needed: MIN_CALIBRATION,
            available: k,
        });
    }
    let n_raw = raw_budget(sigma2_fp, d_eff, alpha, beta, mahalanobis_min)?;
    let safety_factor = 1.0 + (2.0 / k as f64).sqrt();
    let n_star = ((n_raw.max(k + 5) as f64) * safety_factor - 1e-9).ceil() as usize;
    Ok(BudgetEstimate {
        n_star,
        n_raw,
        variance_class: classify_variance(sigma2_fp, thresholds)?,
        sigma2_fp,
        d_eff,
        safety_factor,
        k,
        warning: (k < RECOMMENDED_K).then(|| format!("calibration size {k} is below {RECOMMENDED_K}; the variance estimate is loose")),
    })
}

/// Calibration inputs beyond the runner and scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mahalanobis_min: f64,
    pub thresholds: VarianceThresholds,
    pub scale: FingerprintScale,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: 0.05,
            beta: 0.10,
            mahalanobis_min: 0.5,
            thresholds: VarianceThresholds::default(),
            scale: FingerprintScale::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub estimate: BudgetEstimate,
    pub traces: Vec<Trace>,
    pub fingerprints: Vec<Fingerprint>,
}

/// Run `k` calibration trials, then size the campaign from their fingerprint spread.
pub fn calibrate_budget(runner: &dyn Runner, scenario: &Scenario, cfg: &CalibrationConfig) -> Result<Calibration> {
    if cfg.k < MIN_CALIBRATION {
        return Err(Error::InsufficientData {
            what: "calibration trials".into(),
            needed: MIN_CALIBRATION,
            available: cfg.k,
        });
    }
    let names = runner.config().map(|c| c.tool_names()).unwrap_or_default();
    let slots = ToolSlots::from_inventory(&names);
    let mut traces = Vec::with_capacity(cfg.k);
    for i in 0..cfg.k {
        let t = runner
            .run(scenario, trial_seed(cfg.seed, runner.version_id(), &scenario.scenario_id, i))
            .map_err(|e| Error::Runner(format!("calibration stopped after {i} of {} trials: {e}", cfg.k)))?;
        traces.push(t);
    }
    let fingerprints: Vec<Fingerprint> = traces.iter().map(|t| extract_fingerprint(t, &slots)).collect::<Result<_>>()?;
    let rows = cfg.scale.normalize_all(&fingerprints);
    let sigma2 = fingerprint_variance(&rows)?;
    let d_eff = pca_project(&rows)?.d_eff;
    let estimate = budget_from_variance(sigma2, d_eff, cfg.k, cfg.alpha, cfg.beta, cfg.mahalanobis_min, cfg.thresholds)?;
    Ok(Calibration {
        estimate,
        traces,
        fingerprints,
    })
}

/// An expensive target model and a cheap correlated proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPair {
    pub cost_expensive: f64,
    pub cost_cheap: f64,
    pub rho: f64,
    pub sigma_e: f64,
    pub sigma_c: f64,
}

impl FidelityPair {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost_expensive > 0.0 && self.cost_cheap > 0.0) {
            return invalid("per-trial costs must be positive");
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return invalid(format!("rho must lie in [-1, 1], got {}", self.rho));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_c >= 0.0) {
            return invalid("standard deviations must be non-negative");
        }
        Ok(())
    }

    /// Optimal `n_c / n_e` from the Lagrangian; zero when the proxy carries no information.
    pub fn optimal_ratio(&self) -> f64 {
        if self.rho <= 0.0 || self.sigma_e == 0.0 {
            return 0.0;
        }
        self.rho * (self.cost_expensive * self.sigma_c.powi(2) / (self.cost_cheap * self.sigma_e.powi(2))).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub n_e: usize,
    pub n_c: usize,
    /// `n_e + ρ² n_c`.
    pub effective_n: f64,
    pub total_cost: f64,
    /// Plan is the all-expensive fallback.
    pub fallback: bool,
}

/// Split near the optimal ratio, rounded to the cheapest integer pair that
/// still meets `n_single` effective trials; never costlier than all-expensive.
pub fn optimal_allocation(pair: &FidelityPair, n_single: usize) -> Result<AllocationPlan> {
    pair.validate()?;
    if n_single == 0 {
        return invalid("n_single must be positive");
    }
    let fallback = AllocationPlan {
        n_e: n_single,
        n_c: 0,
        effective_n: n_single as f64,
        total_cost: n_single as f64 * pair.cost_expensive,
        fallback: true,
    };
    let r = pair.optimal_ratio();
    let rho2 = pair.rho * pair.rho;
    if r == 0.0 || rho2 == 0.0 {
        return Ok(fallback);
    }
    let ne_real = n_single as f64 / (1.0 + rho2 * r);
    let mut best = fallback;
    for n_e in [ne_real.floor() as usize, ne_real.ceil() as usize] {
        let n_e = n_e.clamp(1, n_single);
        let missing = n_single as f64 - n_e as f64;
        let n_c = if missing <= 0.0 { 0 } else { (missing / rho2 - 1e-9).ceil() as usize };
        let plan = AllocationPlan {
            n_e,
            n_c,
            effective_n: n_e as f64 + rho2 * n_c as f64,
            total_cost: n_e as f64 * pair.cost_expensive + n_c as f64 * pair.cost_cheap,
            fallback: false,
        };
        if plan.total_cost < best.total_cost {
            best = plan;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMethod {
    #[default]
    Stouffer,
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedEvidence {
    pub p_value: f64,
    pub method: CombineMethod,
    /// An input p-value sat at 0 or 1 and was pulled inside.
    pub clamped: bool,
}

const P_FLOOR: f64 = 1e-15;

/// Correlation-weighted combination of a target and a proxy p-value.
pub fn combine_evidence(p_expensive: f64, p_cheap: f64, rho: f64, method: CombineMethod) -> Result<CombinedEvidence> {
    if !(0.0..=1.0).contains(&rho) {
        return invalid(format!("rho must lie in [0, 1], got {rho}"));
    }
    for p in [p_expensive, p_cheap] {
        if !(0.0..=1.0).contains(&p) {
            return invalid(format!("p-values must lie in [0, 1], got {p}"));
        }
    }
    let clamp = |p: f64| p.clamp(P_FLOOR, 1.0 - P_FLOOR);
    let clamped = clamp(p_expensive) != p_expensive || clamp(p_cheap) != p_cheap;
    let (pe, pc) = (clamp(p_expensive), clamp(p_cheap));
    let p_value = match method {
        CombineMethod::Stouffer => {
            let (ze, zc) = (normal_quantile(1.0 - pe), normal_quantile(1.0 - pc));
            let zc_w = (rho * zc + (1.0 - rho) * ze) / (rho * rho + (1.0 - rho).powi(2)).sqrt();
            normal_sf(zc_w)
        }
        CombineMethod::Fisher => chi2_sf(-2.0 * (rho * pc.ln() + (1.0 - rho) * pe.ln()), 4.0),
    };
    Ok(CombinedEvidence { p_value, method, clamped })
}

/// Cost of the multi-fidelity plan relative to all-expensive: `1 − ρ² + ρ² c_c/c_e`.
pub fn mf_cost_ratio(rho: f64, cost_ratio: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) || !(0.0..=1.0).contains(&cost_ratio) {
        return invalid("rho and cost ratio must lie in [0, 1]");
    }
    let r2 = rho * rho;
    Ok(1.0 - r2 + r2 * cost_ratio)
}

/// Component-wise Pearson correlation of paired fingerprints, Fisher-z
/// averaged over components with spread on both sides, clamped to [0, 1].
pub fn estimate_rho(expensive: &[Vec<f64>], cheap: &[Vec<f64>]) -> Result<f64> {
    if expensive.len() != cheap.len() || expensive.len() < 3 {
        return invalid("rho estimation needs at least three paired fingerprints");
    }
    let n = expensive.len() as f64;
    let d = expensive[0].len();
    let mut zs = Vec::new();
    for j in 0..d {
        let (x, y): (Vec<f64>, Vec<f64>) = expensive.iter().zip(cheap).map(|(a, b)| (a[j], b[j])).unzip();
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        if sxx <= 1e-300 || syy <= 1e-300 {
            continue;
        }
        let r = (sxy / (sxx * syy).sqrt()).clamp(-0.999_999, 0.999_999);
        zs.push(r.atanh());
    }
    if zs.is_empty() {
        return Ok(0.0);
    }
    Ok((zs.iter().sum::<f64>() / zs.len() as f64).tanh().clamp(0.0, 1.0))
}

/// The five per-technique cost factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionFactors {
    pub fingerprint: f64,
    pub budget: f64,
    pub trace_first: f64,
    pub multi_fidelity: f64,
    pub warm_start: f64,
}

impl ReductionFactors {
    pub fn as_array(&self) -> [f64; 5] {
        [self.fingerprint, self.budget, self.trace_first, self.multi_fidelity, self.warm_start]
    }
}

/// Product of the five factors. A reporting figure: the techniques interact,
/// so this is an approximation rather than a guarantee.
pub fn combined_reduction(f: &ReductionFactors) -> Result<f64> {
    let a = f.as_array();
    if a.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
        return invalid(format!("reduction factors must lie in (0, 1], got {a:?}"));
    }
    Ok(a.iter().product())
}
