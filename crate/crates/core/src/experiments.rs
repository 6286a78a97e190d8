//! Seeded random-instance studies and the two golden counterexamples.
//!
//! The instance generator is one reasonable choice, not a reconstruction of
//! any published sampling scheme: rates log-uniform on `rate_range`,
//! collaboration increments `xi_i = u_i mu_i` with `u_i` uniform on
//! `[0.05, 1]` (redrawn until `nu_i + xi_i > mu_i`), holding costs
//! log-uniform on `h_range`. Regime constraints are applied by swaps and
//! zeroing where possible and by rejection otherwise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, StructureError};
use crate::model::{FlexAssignment, State, SystemParams};
use crate::solver::{solve, Policy};
use crate::structure::{extract_switching_curve, verify, DecisionFunctions, Regime};

pub const GENERATOR_LABEL: &str =
    "log-uniform rates on rate_range, xi_i = u*mu_i with u ~ U[0.05,1] redrawn until nu_i+xi_i > mu_i, \
     log-uniform h on h_range; regime constraints by swap/zeroing then rejection";

const RESAMPLE_BUDGET: u32 = 10_000;

/// Named parameter regions for batch studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    /// h1 >= h2, nu2 >= mu2, mu1 >= mu2.
    Thm1Hypotheses,
    /// h1 >= h2, nu2 < mu2, mu1 >= mu2.
    Thm1ViolateNu2,
    /// h1 >= h2, nu2 >= mu2, mu1 < mu2.
    Thm1ViolateMu1,
    /// h1 >= h2, nu2 < mu2, mu1 < mu2.
    Thm1ViolateBoth,
    /// nu1 = 0, nu2 >= mu2, mu1 (h1 - h2) < mu2 h2.
    Thm2Nu2GeMu2,
    /// nu1 = 0, nu2 < mu2, mu1 (h1 - h2) < mu2 h2.
    Thm2Nu2LtMu2,
    /// nu1 = 0, mu1 (h1 - h2) >= mu2 h2.
    Thm2Priority,
    /// h1 >= h2, nu2 = 0, mu1 >= mu2.
    Thm3Hypotheses,
    /// h1 >= h2, nu2 = 0, mu1 >= mu2, mu1 (h1 - h2) <= mu2 h2.
    Thm3Priority,
    /// h1 >= h2, nu2 = 0, mu1 < mu2, mu1 (h1 - h2) > mu2 h2.
    Thm3Mu1LtMu2,
    /// h1 < h2 with both dedicated servers.
    IdlingH1LtH2,
    /// h1 < h2, nu2 >= mu2.
    Thm5Nu2GeMu2,
    /// h1 < h2, xi_i = mu_i.
    Thm5FullCollaboration,
    /// h1 < h2, nu2 = 0.
    Thm6Nu2Zero,
    /// No constraint beyond validity.
    Any,
}

impl RegimeName {
    pub const ALL: [RegimeName; 15] = [
        RegimeName::Thm1Hypotheses,
        RegimeName::Thm1ViolateNu2,
        RegimeName::Thm1ViolateMu1,
        RegimeName::Thm1ViolateBoth,
        RegimeName::Thm2Nu2GeMu2,
        RegimeName::Thm2Nu2LtMu2,
        RegimeName::Thm2Priority,
        RegimeName::Thm3Hypotheses,
        RegimeName::Thm3Priority,
        RegimeName::Thm3Mu1LtMu2,
        RegimeName::IdlingH1LtH2,
        RegimeName::Thm5Nu2GeMu2,
        RegimeName::Thm5FullCollaboration,
        RegimeName::Thm6Nu2Zero,
        RegimeName::Any,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeName::Thm1Hypotheses => "thm1_hypotheses",
            RegimeName::Thm1ViolateNu2 => "thm1_violate_nu2",
            RegimeName::Thm1ViolateMu1 => "thm1_violate_mu1",
            RegimeName::Thm1ViolateBoth => "thm1_violate_both",
            RegimeName::Thm2Nu2GeMu2 => "thm2_nu2_ge_mu2",
            RegimeName::Thm2Nu2LtMu2 => "thm2_nu2_lt_mu2",
            RegimeName::Thm2Priority => "thm2_priority",
            RegimeName::Thm3Hypotheses => "thm3_hypotheses",
            RegimeName::Thm3Priority => "thm3_priority",
            RegimeName::Thm3Mu1LtMu2 => "thm3_mu1_lt_mu2",
            RegimeName::IdlingH1LtH2 => "idling_h1_lt_h2",
            RegimeName::Thm5Nu2GeMu2 => "thm5_nu2_ge_mu2",
            RegimeName::Thm5FullCollaboration => "thm5_full_collaboration",
            RegimeName::Thm6Nu2Zero => "thm6_nu2_zero",
            RegimeName::Any => "any",
        }
    }

    fn zero_nu1(&self) -> bool {
        matches!(self, RegimeName::Thm2Nu2GeMu2 | RegimeName::Thm2Nu2LtMu2 | RegimeName::Thm2Priority)
    }

    fn zero_nu2(&self) -> bool {
        matches!(
            self,
            RegimeName::Thm3Hypotheses | RegimeName::Thm3Priority | RegimeName::Thm3Mu1LtMu2 | RegimeName::Thm6Nu2Zero
        )
    }

    fn full_collaboration(&self) -> bool {
        matches!(self, RegimeName::Thm5FullCollaboration)
    }

    /// `Some(true)` for h1 >= h2, `Some(false)` for h1 < h2.
    fn upstream_costlier(&self) -> Option<bool> {
        use RegimeName::*;
        match self {
            Thm1Hypotheses | Thm1ViolateNu2 | Thm1ViolateMu1 | Thm1ViolateBoth | Thm3Hypotheses | Thm3Priority
            | Thm3Mu1LtMu2 => Some(true),
            IdlingH1LtH2 | Thm5Nu2GeMu2 | Thm5FullCollaboration | Thm6Nu2Zero => Some(false),
            Thm2Nu2GeMu2 | Thm2Nu2LtMu2 | Thm2Priority | Any => None,
        }
    }

    /// Whether validated parameters belong to the regime.
    pub fn admits(&self, p: &SystemParams) -> bool {
        use RegimeName::*;
        let s1 = p.mu1 * (p.h1 - p.h2);
        let s2 = p.mu2 * p.h2;
        let both = p.nu1 > 0.0 && p.nu2 > 0.0;
        match self {
            Thm1Hypotheses => both && p.h1 >= p.h2 && p.nu2 >= p.mu2 && p.mu1 >= p.mu2,
            Thm1ViolateNu2 => both && p.h1 >= p.h2 && p.nu2 < p.mu2 && p.mu1 >= p.mu2,
            Thm1ViolateMu1 => both && p.h1 >= p.h2 && p.nu2 >= p.mu2 && p.mu1 < p.mu2,
            Thm1ViolateBoth => both && p.h1 >= p.h2 && p.nu2 < p.mu2 && p.mu1 < p.mu2,
            Thm2Nu2GeMu2 => p.nu1 == 0.0 && p.nu2 >= p.mu2 && s1 < s2,
            Thm2Nu2LtMu2 => p.nu1 == 0.0 && p.nu2 < p.mu2 && s1 < s2,
            Thm2Priority => p.nu1 == 0.0 && s1 >= s2,
            Thm3Hypotheses => p.nu1 > 0.0 && p.nu2 == 0.0 && p.h1 >= p.h2 && p.mu1 >= p.mu2,
            Thm3Priority => p.nu1 > 0.0 && p.nu2 == 0.0 && p.h1 >= p.h2 && p.mu1 >= p.mu2 && s1 <= s2,
            Thm3Mu1LtMu2 => p.nu1 > 0.0 && p.nu2 == 0.0 && p.h1 >= p.h2 && p.mu1 < p.mu2 && s1 > s2,
            IdlingH1LtH2 => both && p.h1 < p.h2,
            Thm5Nu2GeMu2 => both && p.h1 < p.h2 && p.nu2 >= p.mu2,
            Thm5FullCollaboration => both && p.h1 < p.h2 && p.xi1 == p.mu1 && p.xi2 == p.mu2,
            Thm6Nu2Zero => p.nu1 > 0.0 && p.nu2 == 0.0 && p.h1 < p.h2,
            Any => true,
        }
    }

    /// Claims the regime asserts beyond the structural report: the
    /// threshold shape and slope bound outside the proven hypotheses.
    fn asserts_observed_curve(&self) -> bool {
        matches!(
            self,
            RegimeName::Thm1ViolateNu2 | RegimeName::Thm1ViolateMu1 | RegimeName::Thm2Nu2LtMu2 | RegimeName::Thm3Mu1LtMu2
        )
    }
}

impl fmt::Display for RegimeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeName {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RegimeName::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| ExperimentError::UnknownRegime(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub regime: RegimeName,
    pub count: u64,
    pub seed: u64,
    pub n_max: u32,
    pub rate_range: (f64, f64),
    pub h_range: (f64, f64),
    /// How many counterexamples and findings to keep.
    pub keep: usize,
}

impl ExperimentConfig {
    pub fn new(regime: RegimeName) -> Self {
        ExperimentConfig {
            regime,
            count: 1_000,
            seed: 0,
            n_max: 40,
            rate_range: (0.05, 10.0),
            h_range: (0.1, 20.0),
            keep: 5,
        }
    }

    pub fn with_count(mut self, count: u64) -> Self {
        self.count = count;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n_max(mut self, n_max: u32) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidConfig(m.to_string()));
        if self.count < 1 {
            return bad("count must be at least 1");
        }
        if self.n_max < 10 {
            return bad("n_max must be at least 10");
        }
        for (name, (lo, hi)) in [("rate_range", self.rate_range), ("h_range", self.h_range)] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(ExperimentError::InvalidConfig(format!("{name} must satisfy 0 < lo <= hi")));
            }
        }
        Ok(())
    }

    pub fn instance_seed(&self, index: u64) -> u64 {
        self.seed ^ index
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Collaboration increment for one station, `None` if the budget runs out.
fn sample_xi(rng: &mut impl Rng, nu: f64, mu: f64) -> Option<f64> {
    (0..RESAMPLE_BUDGET).find_map(|_| {
        let xi = rng.gen_range(0.05..=1.0) * mu;
        (nu + xi > mu).then_some(xi)
    })
}

/// Deterministic instance `index` of a configured study.
pub fn generate_instance(config: &ExperimentConfig, index: u64) -> Result<SystemParams, ExperimentError> {
    let regime = config.regime;
    let mut rng = ChaCha8Rng::seed_from_u64(config.instance_seed(index));
    for _ in 0..RESAMPLE_BUDGET {
        let mut nu1 = log_uniform(&mut rng, config.rate_range);
        let mut nu2 = log_uniform(&mut rng, config.rate_range);
        let mut mu1 = log_uniform(&mut rng, config.rate_range);
        let mut mu2 = log_uniform(&mut rng, config.rate_range);
        match regime {
            RegimeName::Thm1Hypotheses => {
                // mu2 becomes the smallest of nu2, mu1, mu2
                if nu2 < mu2 {
                    std::mem::swap(&mut nu2, &mut mu2);
                }
                if mu1 < mu2 {
                    std::mem::swap(&mut mu1, &mut mu2);
                }
            }
            RegimeName::Thm1ViolateBoth => {
                if nu2 > mu2 {
                    std::mem::swap(&mut nu2, &mut mu2);
                }
                if mu1 > mu2 {
                    std::mem::swap(&mut mu1, &mut mu2);
                }
            }
            RegimeName::Thm2Nu2GeMu2 | RegimeName::Thm5Nu2GeMu2 if nu2 < mu2 => std::mem::swap(&mut nu2, &mut mu2),
            RegimeName::Thm2Nu2LtMu2 if nu2 > mu2 => std::mem::swap(&mut nu2, &mut mu2),
            RegimeName::Thm3Hypotheses | RegimeName::Thm3Priority if mu1 < mu2 => std::mem::swap(&mut mu1, &mut mu2),
            RegimeName::Thm3Mu1LtMu2 if mu1 > mu2 => std::mem::swap(&mut mu1, &mut mu2),
            _ => {}
        }
        if regime.zero_nu1() {
            nu1 = 0.0;
        }
        if regime.zero_nu2() {
            nu2 = 0.0;
        }
        let xi = |rng: &mut ChaCha8Rng, nu: f64, mu: f64| -> Option<f64> {
            if nu == 0.0 {
                Some(0.0)
            } else if regime.full_collaboration() {
                Some(mu)
            } else {
                sample_xi(rng, nu, mu)
            }
        };
        let (Some(xi1), Some(xi2)) = (xi(&mut rng, nu1, mu1), xi(&mut rng, nu2, mu2)) else {
            continue;
        };
        let mut h1 = log_uniform(&mut rng, config.h_range);
        let mut h2 = log_uniform(&mut rng, config.h_range);
        match regime.upstream_costlier() {
            Some(true) if h1 < h2 => std::mem::swap(&mut h1, &mut h2),
            Some(false) if h1 > h2 => std::mem::swap(&mut h1, &mut h2),
            _ => {}
        }
        let p = SystemParams::new(nu1, nu2, mu1, mu2, xi1, xi2, h1, h2);
        if regime.admits(&p) && p.validate().is_ok() {
            return Ok(p);
        }
    }
    Err(ExperimentError::RegimeUnsatisfiable {
        regime: regime.to_string(),
        tries: RESAMPLE_BUDGET,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub checked: u64,
    pub violations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub index: u64,
    pub seed: u64,
    pub params: SystemParams,
    pub claim: String,
    pub witness: Option<State>,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub index: u64,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Instances whose optimal flexible assignment is single crossing in x2.
    pub threshold_shaped: u64,
    pub slope_below_minus_one: u64,
    pub nondecreasing_curve: u64,
    pub max_finite_threshold: Option<u32>,
    pub mean_apex_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub regime: String,
    pub generator: String,
    pub config: Option<ExperimentConfig>,
    pub instances: u64,
    /// Asserted claims; any violation fails the batch.
    pub claims: BTreeMap<String, Tally>,
    /// Reported but never asserted.
    pub observations: BTreeMap<String, Tally>,
    pub counterexamples: Vec<Counterexample>,
    /// Instances that fail an observation (for example slope below -1).
    pub findings: Vec<Counterexample>,
    pub failures: Vec<InstanceFailure>,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_secs: Option<f64>,
}

impl BatchReport {
    pub fn total_violations(&self) -> u64 {
        self.claims.values().map(|t| t.violations).sum::<u64>() + self.failures.len() as u64
    }

    pub fn passed(&self) -> bool {
        self.total_violations() == 0
    }

    pub fn claim(&self, name: &str) -> Option<&Tally> {
        self.claims.get(name)
    }

    pub fn observation(&self, name: &str) -> Option<&Tally> {
        self.observations.get(name)
    }

    /// The report with timing removed, for byte-level comparisons.
    pub fn without_timing(mut self) -> Self {
        self.wall_clock_secs = None;
        self
    }
}

/// Checked outcome of one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceOutcome {
    pub claims: Vec<(String, bool, Option<State>, Option<String>)>,
    pub observations: Vec<(String, bool, Option<State>, Option<String>)>,
    pub threshold_shaped: Option<bool>,
    pub max_finite_threshold: Option<u32>,
    pub apex_value: f64,
}

/// Solves one instance and evaluates the claims of `regime` on it.
pub fn evaluate_instance(params: &SystemParams, regime: RegimeName, n_max: u32) -> Result<InstanceOutcome, ExperimentError> {
    let (table, policy) = solve(params, n_max)?;
    let report = verify(&table, &policy)?;
    let fns = DecisionFunctions::new(&table)?;
    let mut claims: Vec<_> = report
        .verdicts
        .iter()
        .map(|v| (v.claim.clone(), v.pass, v.witness, v.detail.clone()))
        .collect();
    let mut observations: Vec<_> = report
        .diagnostics
        .iter()
        .map(|v| (v.claim.clone(), v.pass, v.witness, v.detail.clone()))
        .collect();
    let mut threshold_shaped = None;
    let mut max_finite = None;
    if Regime::classify(&fns.params).non_idling {
        let curve = extract_switching_curve(&policy, &fns);
        let shaped = match &curve {
            Ok(c) => {
                max_finite = c.t.iter().flatten().copied().max();
                (true, None, None)
            }
            Err(StructureError::NotThresholdShaped { witness, detail, .. }) => (false, Some(*witness), Some(detail.clone())),
            Err(e) => return Err(e.clone().into()),
        };
        threshold_shaped = Some(shaped.0);
        let entry = ("threshold_single_crossing".to_string(), shaped.0, shaped.1, shaped.2);
        if regime.asserts_observed_curve() {
            claims.push(entry);
            let slope = observations
                .iter()
                .find(|o| o.0 == "switching_curve_slope")
                .cloned()
                .map(|o| ("switching_curve_slope".to_string(), o.1, o.2, o.3))
                .unwrap_or_else(|| ("switching_curve_slope".to_string(), shaped.0, shaped.1, None));
            claims.push(slope);
        } else {
            observations.push(entry);
        }
    }
    let apex = table.value(0, n_max).max(table.value(n_max, 0));
    Ok(InstanceOutcome {
        claims,
        observations,
        threshold_shaped,
        max_finite_threshold: max_finite,
        apex_value: apex,
    })
}

/// Runs a seeded batch. Instances are processed in parallel; aggregation
/// follows instance order so reports are reproducible.
pub fn run_batch(config: &ExperimentConfig) -> Result<BatchReport, ExperimentError> {
    config.validate()?;
    let start = Instant::now();
    let outcomes: Vec<(u64, Result<(SystemParams, InstanceOutcome), ExperimentError>)> = (0..config.count)
        .into_par_iter()
        .map(|index| {
            let out = generate_instance(config, index)
                .and_then(|p| evaluate_instance(&p, config.regime, config.n_max).map(|o| (p, o)));
            (index, out)
        })
        .collect();

    let mut report = BatchReport {
        regime: config.regime.to_string(),
        generator: GENERATOR_LABEL.to_string(),
        config: Some(config.clone()),
        instances: config.count,
        claims: BTreeMap::new(),
        observations: BTreeMap::new(),
        counterexamples: Vec::new(),
        findings: Vec::new(),
        failures: Vec::new(),
        summary: Summary::default(),
        wall_clock_secs: None,
    };
    let mut apex_sum = 0.0;
    let mut solved = 0u64;
    for (index, out) in outcomes {
        let seed = config.instance_seed(index);
        let (params, outcome) = match out {
            Ok(v) => v,
            Err(e) => {
                report.failures.push(InstanceFailure {
                    index,
                    seed,
                    message: e.to_string(),
                });
                continue;
            }
        };
        solved += 1;
        apex_sum += outcome.apex_value;
        for (claim, pass, witness, detail) in &outcome.claims {
            let t = report.claims.entry(claim.clone()).or_default();
            t.checked += 1;
            if !pass {
                t.violations += 1;
                if report.counterexamples.len() < config.keep {
                    report.counterexamples.push(Counterexample {
                        index,
                        seed,
                        params,
                        claim: claim.clone(),
                        witness: *witness,
                        detail: detail.clone(),
                    });
                }
            }
        }
        for (name, pass, witness, detail) in &outcome.observations {
            let t = report.observations.entry(name.clone()).or_default();
            t.checked += 1;
            if !pass {
                t.violations += 1;
                if report.findings.len() < config.keep {
                    report.findings.push(Counterexample {
                        index,
                        seed,
                        params,
                        claim: name.clone(),
                        witness: *witness,
                        detail: detail.clone(),
                    });
                }
            }
        }
        let s = &mut report.summary;
        if outcome.threshold_shaped == Some(true) {
            s.threshold_shaped += 1;
        }
        s.max_finite_threshold = s.max_finite_threshold.max(outcome.max_finite_threshold);
    }
    let slope = |m: &BTreeMap<String, Tally>, k: &str| m.get(k).map(|t| t.violations);
    report.summary.slope_below_minus_one = slope(&report.observations, "switching_curve_slope")
        .or(slope(&report.claims, "switching_curve_slope"))
        .unwrap_or(0);
    report.summary.nondecreasing_curve = report
        .observations
        .get("switching_curve_nondecreasing")
        .map(|t| t.checked - t.violations)
        .unwrap_or(0);
    report.summary.mean_apex_value = if solved > 0 { apex_sum / solved as f64 } else { 0.0 };
    report.wall_clock_secs = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

/// Re-evaluates a single instance of a batch, e.g. to replay a counterexample.
pub fn replay(config: &ExperimentConfig, index: u64) -> Result<(SystemParams, InstanceOutcome), ExperimentError> {
    let p = generate_instance(config, index)?;
    let outcome = evaluate_instance(&p, config.regime, config.n_max)?;
    Ok((p, outcome))
}

/// Parameters of the counterexample with a switching curve dropping by two.
pub fn example1_params() -> SystemParams {
    SystemParams::new(0.8, 0.6, 0.6, 8.0, 0.03, 7.43, 16.0, 1.5)
}

/// Parameters of the counterexample to the downstream priority rule.
pub fn example2_params() -> SystemParams {
    SystemParams::new(1.3, 0.0, 0.9, 7.7, 0.1, 0.0, 11.4, 1.2)
}

const GOLDEN_DEPTH: u32 = 10;

fn flex_at(policy: &Policy, x1: u32, x2: u32) -> FlexAssignment {
    policy.action(State::new(x1, x2)).expect("state in domain").flex
}

/// Golden checks on the two published counterexamples, as a report.
pub fn paper_examples_report() -> Result<BatchReport, ExperimentError> {
    let start = Instant::now();
    let mut claims = BTreeMap::new();
    let mut counterexamples = Vec::new();
    let mut record = |name: &str, params: SystemParams, ok: bool, s: State, detail: String| {
        claims.insert(
            name.to_string(),
            Tally {
                checked: 1,
                violations: (!ok) as u64,
            },
        );
        if !ok {
            counterexamples.push(Counterexample {
                index: 0,
                seed: 0,
                params,
                claim: name.to_string(),
                witness: Some(s),
                detail: Some(detail),
            });
        }
    };

    let p1 = example1_params();
    let (t1, pol1) = solve(&p1, GOLDEN_DEPTH)?;
    let a33 = flex_at(&pol1, 3, 3);
    let a24 = flex_at(&pol1, 2, 4);
    record(
        "example1_flex_downstream_at_3_3",
        p1,
        a33 == FlexAssignment::Station2,
        State::new(3, 3),
        format!("flexible server at {}", a33.label()),
    );
    record(
        "example1_flex_upstream_at_2_4",
        p1,
        a24 == FlexAssignment::Station1,
        State::new(2, 4),
        format!("flexible server at {}", a24.label()),
    );
    let fns1 = DecisionFunctions::new(&t1)?;
    let curve = extract_switching_curve(&pol1, &fns1);
    let steep = matches!(&curve, Ok(c) if !c.slope_ok);
    record(
        "example1_slope_below_minus_one",
        p1,
        steep,
        State::new(3, 3),
        format!("switching curve {curve:?}"),
    );

    let p2 = example2_params();
    let s1 = p2.mu1 * (p2.h1 - p2.h2);
    let s2 = p2.mu2 * p2.h2;
    record(
        "example2_downstream_savings_larger",
        p2,
        s1 < s2 && (s1 - 9.18).abs() < 1e-9 && (s2 - 9.24).abs() < 1e-9,
        State::EMPTY,
        format!("mu1 (h1 - h2) = {s1}, mu2 h2 = {s2}"),
    );
    let (_, pol2) = solve(&p2, GOLDEN_DEPTH)?;
    let a31 = flex_at(&pol2, 3, 1);
    record(
        "example2_flex_upstream_at_3_1",
        p2,
        a31 == FlexAssignment::Station1,
        State::new(3, 1),
        format!("flexible server at {}", a31.label()),
    );

    Ok(BatchReport {
        regime: "paper_examples".into(),
        generator: "fixed golden instances".into(),
        config: None,
        instances: 2,
        claims,
        observations: BTreeMap::new(),
        counterexamples,
        findings: Vec::new(),
        failures: Vec::new(),
        summary: Summary::default(),
        wall_clock_secs: Some(start.elapsed().as_secs_f64()),
    })
}

/// Like [`paper_examples_report`] but fails on any mismatch.
pub fn reproduce_paper_examples() -> Result<BatchReport, ExperimentError> {
    let report = paper_examples_report()?;
    if !report.passed() {
        let detail = report
            .counterexamples
            .iter()
            .map(|c| format!("{} at {:?}: {}", c.claim, c.witness, c.detail.as_deref().unwrap_or("")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(ExperimentError::GoldenMismatch(detail));
    }
    Ok(report)
}
