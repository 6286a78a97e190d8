//! Decision functions, switching curves and structural verdicts.
//!
//! With `f(x1,x2) = V(x1,x2) - V(x1-1,x2+1)` and
//! `g(x1,x2) = V(x1,x2-1) - V(x1,x2)` (and `g(x1,0) = 0`), the sign of
//!
//! ```text
//! d(x1,x2)  = mu1 f + mu2 g      at least two jobs in each station
//! dt(1,x2)  = xi1 f + mu2 g      one job upstream
//! dh(x1,1)  = mu1 f + xi2 g      one job downstream
//! db(1,1)   = xi1 f + xi2 g      one job in each station
//! ```
//!
//! decides where the flexible server goes in a non-idling regime: upstream
//! when non-negative, downstream otherwise. All decision functions here are
//! in uniformized units (normalized rates, `V` scaled by the rate sum) so the
//! recursions they satisfy can be checked verbatim.

use serde::{Deserialize, Serialize};

use crate::error::StructureError;
use crate::model::{max_rate_given_flex, Allocation, FlexAssignment, ServerMode, State, Station, SystemParams};
use crate::solver::{sweep_strip, Policy, Triangle, ValueTable};

/// Relative width of the sign classification band for decision functions.
pub const SIGN_TOLERANCE: f64 = 1e-10;

/// Depth at which finite-domain surrogates for limits are asserted.
pub const LIMIT_DEPTH: u32 = 200;

/// Largest `x1` for which in-domain crossings are required at [`LIMIT_DEPTH`].
pub const CROSSING_X1_MAX: u32 = 20;

/// Residual bound for the decision-function recursions.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

/// Strip depths tried in turn when a crossing lies beyond the domain.
pub const ESCALATION_DEPTHS: [u32; 6] = [1_600, 12_800, 102_400, 819_200, 6_553_600, 26_214_400];

/// Relative tolerance for boundary closed forms.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

fn pos(a: f64) -> f64 {
    a.max(0.0)
}

fn neg(a: f64) -> f64 {
    a.min(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKind {
    D,
    DTilde,
    DHat,
    DBar,
}

/// Value differences and decision functions over a solved triangle.
#[derive(Clone, Debug)]
pub struct DecisionFunctions {
    pub n_max: u32,
    pub params: SystemParams,
    v: Vec<f64>,
}

impl DecisionFunctions {
    pub fn new(table: &ValueTable) -> Result<Self, StructureError> {
        if table.n_max < 2 {
            return Err(StructureError::DomainTooSmall(table.n_max));
        }
        let scale = table.params.uniformization_scale;
        Ok(DecisionFunctions {
            n_max: table.n_max,
            params: table.params,
            v: table.values.iter().map(|v| v * scale).collect(),
        })
    }

    fn tri(&self) -> Triangle {
        Triangle::new(self.n_max)
    }

    /// Uniformized `V(x1, x2)`.
    pub fn v(&self, x1: u32, x2: u32) -> Option<f64> {
        self.tri().index(State::new(x1, x2)).map(|i| self.v[i])
    }

    pub fn f(&self, x1: u32, x2: u32) -> Option<f64> {
        if x1 == 0 {
            return None;
        }
        Some(self.v(x1, x2)? - self.v(x1 - 1, x2 + 1)?)
    }

    pub fn g(&self, x1: u32, x2: u32) -> Option<f64> {
        if x2 == 0 {
            return self.v(x1, 0).map(|_| 0.0);
        }
        Some(self.v(x1, x2 - 1)? - self.v(x1, x2)?)
    }

    fn combo(&self, a: f64, b: f64, x1: u32, x2: u32) -> Option<f64> {
        Some(a * self.f(x1, x2)? + b * self.g(x1, x2)?)
    }

    pub fn d(&self, x1: u32, x2: u32) -> Option<f64> {
        self.combo(self.params.mu1, self.params.mu2, x1, x2)
    }

    pub fn dtilde(&self, x2: u32) -> Option<f64> {
        self.combo(self.params.xi1, self.params.mu2, 1, x2)
    }

    pub fn dhat(&self, x1: u32) -> Option<f64> {
        self.combo(self.params.mu1, self.params.xi2, x1, 1)
    }

    pub fn dbar(&self) -> Option<f64> {
        self.combo(self.params.xi1, self.params.xi2, 1, 1)
    }

    /// The decision function that decides the flexible server's station at
    /// `(x1, x2)` when no server idles, and its value.
    ///
    /// Moving the flexible server adds `mu_i` to station `i` unless it would
    /// join the dedicated server on a single job, in which case it adds
    /// `xi_i`. Stations without a dedicated server always gain `mu_i`.
    pub fn governing(&self, x1: u32, x2: u32) -> Option<(DecisionKind, f64)> {
        if x1 == 0 || x2 == 0 {
            return None;
        }
        let p = &self.params;
        let shares1 = p.has_dedicated(Station::One) && x1 == 1;
        let shares2 = p.has_dedicated(Station::Two) && x2 == 1;
        let (kind, a, b) = match (shares1, shares2) {
            (false, false) => (DecisionKind::D, p.mu1, p.mu2),
            (true, false) => (DecisionKind::DTilde, p.xi1, p.mu2),
            (false, true) => (DecisionKind::DHat, p.mu1, p.xi2),
            (true, true) => (DecisionKind::DBar, p.xi1, p.xi2),
        };
        Some((kind, self.combo(a, b, x1, x2)?))
    }

    /// Half-width of the sign tie band at `(x1, x2)`.
    pub fn sign_band(&self, x1: u32, x2: u32) -> f64 {
        SIGN_TOLERANCE * (1.0 + self.v(x1, x2).unwrap_or(0.0).abs())
    }
}

/// Which structural results apply to an instance. Depends only on parameters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    pub non_idling: bool,
    pub idling: bool,
    pub both_dedicated: bool,
    pub fully_collaborative: bool,
    pub lemma3: bool,
    pub lemma4: bool,
    pub lemma5: bool,
    pub thm1: bool,
    pub thm2_i: bool,
    pub thm2_ii: bool,
    pub thm3_i: bool,
    pub thm3_ii: bool,
    pub thm4: bool,
    pub thm5: bool,
    pub thm6: bool,
    pub appendix: bool,
}

impl Regime {
    pub fn classify(p: &SystemParams) -> Regime {
        let nu1 = p.has_dedicated(Station::One);
        let nu2 = p.has_dedicated(Station::Two);
        let h_ge = p.h1 >= p.h2;
        let savings1 = p.mu1 * (p.h1 - p.h2);
        let savings2 = p.mu2 * p.h2;
        let full = nu1 && nu2 && p.xi1 == p.mu1 && p.xi2 == p.mu2;
        let lemma4 = h_ge && nu1 && p.nu2 >= p.mu2;
        let lemma5 = lemma4 && p.mu1 >= p.mu2;
        let idling = !h_ge && nu1;
        Regime {
            non_idling: h_ge || !nu1,
            idling,
            both_dedicated: nu1 && nu2,
            fully_collaborative: full,
            lemma3: h_ge,
            lemma4,
            lemma5,
            thm1: lemma5,
            thm2_i: !nu1 && savings1 < savings2 && p.nu2 >= p.mu2,
            thm2_ii: !nu1 && savings1 >= savings2,
            thm3_i: h_ge && nu1 && !nu2 && p.mu1 >= p.mu2,
            thm3_ii: h_ge && nu1 && !nu2 && p.mu1 >= p.mu2 && savings1 <= savings2,
            thm4: idling,
            thm5: idling && (full || p.nu2 >= p.mu2),
            thm6: idling && !nu2,
            appendix: h_ge && nu1 && nu2,
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        let flags = [
            (self.non_idling, "non_idling"),
            (self.idling, "idling"),
            (self.both_dedicated, "both_dedicated"),
            (self.fully_collaborative, "fully_collaborative"),
            (self.lemma3, "lemma3"),
            (self.lemma4, "lemma4"),
            (self.lemma5, "lemma5"),
            (self.thm1, "thm1"),
            (self.thm2_i, "thm2_i"),
            (self.thm2_ii, "thm2_ii"),
            (self.thm3_i, "thm3_i"),
            (self.thm3_ii, "thm3_ii"),
            (self.thm4, "thm4"),
            (self.thm5, "thm5"),
            (self.thm6, "thm6"),
            (self.appendix, "appendix"),
        ];
        flags.iter().filter(|(on, _)| *on).map(|(_, n)| *n).collect()
    }
}

/// `None` means the threshold lies beyond the solved domain.
pub type Threshold = Option<u32>;

/// Thresholds in `x2`, one entry per `x1 = 1, 2, ...`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SwitchingCurve {
    pub n_max: u32,
    /// Smallest `x2 >= 1` at which the flexible server works downstream.
    pub t: Vec<Threshold>,
    /// Smallest `x2 >= 1` at which the Station 1 dedicated server idles.
    pub t2: Vec<Threshold>,
    pub slope_ok: bool,
    pub nondecreasing: bool,
    /// First `x1` with `t(x1 + 1) < t(x1) - 1`.
    pub slope_witness: Option<u32>,
}

impl SwitchingCurve {
    pub fn t_at(&self, x1: u32) -> Threshold {
        self.t.get(x1 as usize - 1).copied().flatten()
    }

    pub fn t2_at(&self, x1: u32) -> Threshold {
        self.t2.get(x1 as usize - 1).copied().flatten()
    }
}

/// Where a predicate over `x2 = 1..=n_max-x1` first holds and from where on
/// it holds up to the edge of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThresholdScan {
    pub first: Threshold,
    pub eventual: Threshold,
}

impl ThresholdScan {
    pub fn single_crossing(&self) -> bool {
        self.first == self.eventual
    }
}

pub fn scan_threshold(n_max: u32, x1: u32, mut pred: impl FnMut(State) -> bool) -> ThresholdScan {
    let mut first = None;
    let mut eventual = None;
    for x2 in 1..=n_max.saturating_sub(x1) {
        if pred(State::new(x1, x2)) {
            first.get_or_insert(x2);
            eventual.get_or_insert(x2);
        } else {
            eventual = None;
        }
    }
    ThresholdScan { first, eventual }
}

/// First `x1` at which `t(x1 + 1) < t(x1) + min_step` is certain given that
/// `None` only bounds a threshold from below by the domain edge.
pub fn step_violation(t: &[Threshold], n_max: u32, min_step: i64) -> Option<u32> {
    for k in 0..t.len().saturating_sub(1) {
        let x1 = k as u32 + 1;
        let Some(next) = t[k + 1] else { continue };
        let lower = t[k].unwrap_or(n_max - x1 + 1) as i64;
        if (next as i64) < lower + min_step {
            return Some(x1);
        }
    }
    None
}

fn flex_downstream(policy: &Policy) -> impl Fn(State) -> bool + '_ {
    move |s| policy.action(s).map(|a| a.flex == FlexAssignment::Station2).unwrap_or(false)
}

fn dedicated1_idle(policy: &Policy) -> impl Fn(State) -> bool + '_ {
    move |s| policy.action(s).map(|a| a.d1 == ServerMode::Idle).unwrap_or(false)
}

/// Switching curve `t(x1)` of a non-idling policy.
pub fn extract_switching_curve(policy: &Policy, fns: &DecisionFunctions) -> Result<SwitchingCurve, StructureError> {
    if !Regime::classify(&fns.params).non_idling {
        return Err(StructureError::NonIdlingRegimeRequired);
    }
    let n_max = policy.n_max.min(fns.n_max);
    let mut t = Vec::new();
    for x1 in 1..n_max {
        let scan = scan_threshold(n_max, x1, flex_downstream(policy));
        if !scan.single_crossing() {
            let first = scan.first.expect("non-single crossing has a first hit");
            let back = (first..=n_max - x1)
                .find(|&x2| !flex_downstream(policy)(State::new(x1, x2)))
                .expect("returns upstream");
            return Err(StructureError::NotThresholdShaped {
                x1,
                witness: State::new(x1, back),
                detail: format!("flexible server downstream at x2 = {first} but upstream again at x2 = {back}"),
            });
        }
        t.push(scan.first);
    }
    let slope_witness = step_violation(&t, n_max, -1);
    Ok(SwitchingCurve {
        n_max,
        slope_ok: slope_witness.is_none(),
        nondecreasing: step_violation(&t, n_max, 0).is_none(),
        slope_witness,
        t,
        t2: Vec::new(),
    })
}

/// Flexible-server threshold `t1(x1)` and idling threshold `t2(x1)` when
/// `h1 < h2`.
pub fn extract_idling_thresholds(policy: &Policy, fns: &DecisionFunctions) -> Result<SwitchingCurve, StructureError> {
    if !Regime::classify(&fns.params).idling {
        return Err(StructureError::IdlingRegimeRequired);
    }
    let n_max = policy.n_max.min(fns.n_max);
    let mut t = Vec::new();
    let mut t2 = Vec::new();
    for x1 in 1..n_max {
        for (pred, what, out) in [
            (&flex_downstream(policy) as &dyn Fn(State) -> bool, "flexible server downstream", &mut t),
            (&dedicated1_idle(policy) as &dyn Fn(State) -> bool, "Station 1 dedicated server idle", &mut t2),
        ] {
            let scan = scan_threshold(n_max, x1, pred);
            if !scan.single_crossing() {
                let first = scan.first.expect("first hit");
                let back = (first..=n_max - x1).find(|&x2| !pred(State::new(x1, x2))).expect("reverts");
                return Err(StructureError::NotThresholdShaped {
                    x1,
                    witness: State::new(x1, back),
                    detail: format!("{what} from x2 = {first} but not at x2 = {back}"),
                });
            }
            out.push(scan.first);
        }
    }
    let slope_witness = step_violation(&t, n_max, -1);
    Ok(SwitchingCurve {
        n_max,
        slope_ok: slope_witness.is_none(),
        nondecreasing: step_violation(&t2, n_max, 0).is_none(),
        slope_witness,
        t,
        t2,
    })
}

/// Outcome of one numerically checked claim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub claim: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<State>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl Verdict {
    pub fn pass(claim: &str) -> Self {
        Verdict {
            claim: claim.to_string(),
            pass: true,
            witness: None,
            residual: None,
            detail: None,
        }
    }

    pub fn fail(claim: &str, witness: State, detail: String) -> Self {
        Verdict {
            claim: claim.to_string(),
            pass: false,
            witness: Some(witness),
            residual: None,
            detail: Some(detail),
        }
    }

    fn from_first(claim: &str, first: Option<(State, String)>) -> Self {
        match first {
            None => Verdict::pass(claim),
            Some((s, detail)) => Verdict::fail(claim, s, detail),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub regime: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub t: Vec<Threshold>,
    pub t2: Vec<Threshold>,
    /// Observations that are reported but never asserted.
    pub diagnostics: Vec<Verdict>,
    pub notes: Vec<String>,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }

    pub fn verdict(&self, claim: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.claim == claim)
    }
}

fn interior(n_max: u32) -> impl Iterator<Item = State> {
    Triangle::new(n_max).states().skip(1)
}

/// `V` strictly increasing in each coordinate.
pub fn check_value_monotone(fns: &DecisionFunctions) -> Verdict {
    let n = fns.n_max;
    let first = Triangle::new(n).states().filter(|s| s.total() < n).find_map(|s| {
        let here = fns.v(s.x1, s.x2)?;
        let up1 = fns.v(s.x1 + 1, s.x2)?;
        let up2 = fns.v(s.x1, s.x2 + 1)?;
        if up1 <= here {
            Some((s, format!("V(x1+1,x2) = {up1} <= V = {here}")))
        } else if up2 <= here {
            Some((s, format!("V(x1,x2+1) = {up2} <= V = {here}")))
        } else {
            None
        }
    });
    Verdict::from_first("lemma1_value_increasing", first)
}

/// `f > 0` everywhere (expected when `h1 >= h2`).
pub fn check_f_positive(fns: &DecisionFunctions) -> Verdict {
    let first = interior(fns.n_max).filter(|s| s.x1 >= 1).find_map(|s| {
        let f = fns.f(s.x1, s.x2)?;
        (f <= 0.0).then(|| (s, format!("f = {f}")))
    });
    Verdict::from_first("lemma3_f_positive", first)
}

/// Boundary values against their closed forms in original units. The
/// residual is the largest error relative to the larger of `V` and the
/// closed-form increment.
pub fn check_boundary_closed_forms(table: &ValueTable) -> Verdict {
    let p = table.params.original_rates();
    let mut worst = 0.0f64;
    let mut witness = None;
    let mut visit = |s: State, prev: State, rhs: f64| {
        let (Some(a), Some(b)) = (table.get(s), table.get(prev)) else {
            return;
        };
        let err = ((a - b) - rhs).abs() / a.abs().max(rhs.abs());
        if err > worst {
            worst = err;
            witness = Some(s);
        }
    };
    let first1 = if p.nu1 > 0.0 { p.nu1 + p.xi1 } else { p.mu1 };
    let first2 = if p.nu2 > 0.0 { p.nu2 + p.xi2 } else { p.mu2 };
    visit(State::new(0, 1), State::EMPTY, p.h2 / first2);
    visit(State::new(1, 0), State::new(0, 1), p.h1 / first1);
    for k in 2..=table.n_max {
        let kf = k as f64;
        visit(State::new(k, 0), State::new(k - 1, 1), p.h1 * kf / (p.nu1 + p.mu1));
        visit(State::new(0, k), State::new(0, k - 1), p.h2 * kf / (p.nu2 + p.mu2));
    }
    let mut v = if worst <= BOUNDARY_TOLERANCE {
        Verdict::pass("boundary_closed_forms")
    } else {
        Verdict::fail(
            "boundary_closed_forms",
            witness.unwrap_or(State::EMPTY),
            format!("relative error {worst:e}"),
        )
    };
    v.residual = Some(worst);
    v
}

/// Optimal actions use maximal Station 2 rate and extreme Station 1 rate.
pub fn check_propositions(policy: &Policy, fns: &DecisionFunctions) -> (Verdict, Verdict) {
    let p = &fns.params;
    let mut prop1 = None;
    let mut prop2 = None;
    for s in interior(fns.n_max) {
        let Some(a) = policy.action(s) else { continue };
        if prop1.is_none() && s.x2 >= 1 {
            let max2 = max_rate_given_flex(s, p, Station::Two, a.flex);
            if a.flex == FlexAssignment::Idle {
                prop1 = Some((s, format!("flexible server idle with x2 = {}", s.x2)));
            } else if a.rho2 < max2 {
                prop1 = Some((s, format!("rho2 = {} below maximal {max2}", a.rho2)));
            }
        }
        if prop2.is_none() && s.x1 >= 1 {
            let f = fns.f(s.x1, s.x2).expect("x1 >= 1");
            let max1 = max_rate_given_flex(s, p, Station::One, a.flex);
            let band = fns.sign_band(s.x1, s.x2);
            if f >= band && a.rho1 < max1 {
                prop2 = Some((s, format!("f = {f} >= 0 but rho1 = {} below maximal {max1}", a.rho1)));
            } else if f <= -band && a.rho1 > 0.0 {
                prop2 = Some((s, format!("f = {f} < 0 but rho1 = {}", a.rho1)));
            } else if f.abs() < band && a.rho1 > 0.0 && a.rho1 < max1 {
                prop2 = Some((s, format!("f = {f} ~ 0 with intermediate rho1 = {}", a.rho1)));
            }
        }
    }
    (
        Verdict::from_first("prop1_max_rho2", prop1),
        Verdict::from_first("prop2_extreme_rho1", prop2),
    )
}

/// In a non-idling regime the flexible server's station follows the sign of
/// the governing decision function, and no server idles next to work.
pub fn check_sign_consistency(policy: &Policy, fns: &DecisionFunctions) -> (Verdict, Verdict) {
    let p = &fns.params;
    let mut sign = None;
    let mut idle = None;
    for s in interior(fns.n_max) {
        let Some(a) = policy.action(s) else { continue };
        if idle.is_none() {
            let d1_idle = p.has_dedicated(Station::One) && s.x1 >= 1 && a.d1 == ServerMode::Idle;
            let d2_idle = p.has_dedicated(Station::Two) && s.x2 >= 1 && a.d2 == ServerMode::Idle;
            if d1_idle || d2_idle || a.flex == FlexAssignment::Idle {
                idle = Some((s, format!("idling action {}", a.label())));
            }
        }
        if sign.is_none() {
            if let Some((kind, val)) = fns.governing(s.x1, s.x2) {
                let band = fns.sign_band(s.x1, s.x2);
                let expected = if val >= band {
                    Some(FlexAssignment::Station1)
                } else if val <= -band {
                    Some(FlexAssignment::Station2)
                } else {
                    None
                };
                if let Some(want) = expected {
                    if a.flex != want {
                        sign = Some((s, format!("{kind:?} = {val} but flexible server at {}", a.flex.label())));
                    }
                }
            }
        }
    }
    (
        Verdict::from_first("decision_sign_matches_policy", sign),
        Verdict::from_first("non_idling", idle),
    )
}

/// Strict decrease of a sequence `x2 -> value` plus a zero crossing.
fn check_decreasing(
    values: impl Iterator<Item = (State, f64)>,
    require_crossing: bool,
) -> (Option<(State, String)>, Option<(State, String)>) {
    let mut prev: Option<(State, f64)> = None;
    let mut crossed = false;
    let mut last = None;
    let mut dec = None;
    for (s, v) in values {
        if let Some((ps, pv)) = prev {
            if dec.is_none() && v >= pv {
                dec = Some((s, format!("value {v} at {s} not below {pv} at {ps}")));
            }
        }
        crossed |= v < 0.0;
        prev = Some((s, v));
        last = Some((s, v));
    }
    let cross = match (require_crossing, crossed, last) {
        (true, false, Some((s, v))) => Some((s, format!("still {v} >= 0 at the domain edge"))),
        _ => None,
    };
    (dec, cross)
}

/// What a deep strip is searched for in each column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Probe {
    /// First `x2` with `dt(1, x2) < 0` (column 1 only).
    DTildeNegative,
    /// First `x2` with `d(x1, x2) < 0`.
    DNegative,
    /// Dedicated server 1 idles at the column edge; reports where idling
    /// starts for good.
    IdlingAtEdge,
}

/// Located `x2` for `probe` in column `x1`, given that column and the one
/// before it.
fn probe_column(
    params: &SystemParams,
    probe: Probe,
    prev: &[f64],
    cur: &[f64],
    actions: &[Option<Allocation>],
) -> Option<u32> {
    match probe {
        Probe::DTildeNegative | Probe::DNegative => {
            let a = if probe == Probe::DTildeNegative { params.xi1 } else { params.mu1 };
            (0..cur.len()).find(|&x2| {
                let f = cur[x2] - prev[x2 + 1];
                let g = if x2 == 0 { 0.0 } else { cur[x2 - 1] - cur[x2] };
                a * f + params.mu2 * g < 0.0
            })
            .map(|x2| x2 as u32)
        }
        Probe::IdlingAtEdge => {
            let idle = |x2: usize| actions[x2].map(|a| a.d1 == ServerMode::Idle).unwrap_or(false);
            let mut t = actions.len().checked_sub(1)?;
            if !idle(t) {
                return None;
            }
            while t > 0 && idle(t - 1) {
                t -= 1;
            }
            Some(t as u32)
        }
    }
}

/// Re-solves on strips of increasing depth until `probe` succeeds in every
/// column of `x1s`. Returns the depth used and the located `x2` per column.
pub fn escalate(params: &SystemParams, x1s: &[u32], probe: Probe) -> Result<Option<(u32, Vec<(u32, u32)>)>, StructureError> {
    let Some(&x1_max) = x1s.iter().max() else {
        return Ok(Some((0, Vec::new())));
    };
    let normalized = params.prepare().map_err(crate::error::SolveError::from)?;
    for depth in ESCALATION_DEPTHS {
        let mut found = Vec::with_capacity(x1s.len());
        sweep_strip(params, x1_max, depth, probe == Probe::IdlingAtEdge, |x1, prev, cur, actions| {
            if !x1s.contains(&x1) {
                return true;
            }
            match probe_column(&normalized, probe, prev, cur, actions) {
                Some(x2) => {
                    found.push((x1, x2));
                    true
                }
                None => false,
            }
        })?;
        if found.len() == x1s.len() {
            return Ok(Some((depth, found)));
        }
    }
    Ok(None)
}

/// Turns per-column in-domain failures into a verdict, escalating to
/// deeper strips before declaring a violation. Escalations are reported as
/// a failing `<claim>_in_domain` diagnostic.
fn crossing_verdict(
    report: &mut StructureReport,
    params: &SystemParams,
    claim: &str,
    misses: Vec<(u32, State, String)>,
    probe: Probe,
) -> Result<(), StructureError> {
    let in_domain = format!("{claim}_in_domain");
    let Some((_, first_state, first_detail)) = misses.first().cloned() else {
        report.verdicts.push(Verdict::pass(claim));
        report.diagnostics.push(Verdict::pass(&in_domain));
        return Ok(());
    };
    report.diagnostics.push(Verdict::fail(&in_domain, first_state, first_detail.clone()));
    let x1s: Vec<u32> = misses.iter().map(|m| m.0).collect();
    match escalate(params, &x1s, probe)? {
        Some((depth, found)) => {
            let mut v = Verdict::pass(claim);
            v.detail = Some(format!(
                "beyond the domain; found on a strip of depth {depth} at {}",
                found.iter().map(|(a, b)| format!("({a},{b})")).collect::<Vec<_>>().join(" ")
            ));
            report.verdicts.push(v);
        }
        None => report.verdicts.push(Verdict::fail(
            claim,
            first_state,
            format!("{first_detail}; not found up to depth {}", ESCALATION_DEPTHS[ESCALATION_DEPTHS.len() - 1]),
        )),
    }
    Ok(())
}

/// Monotonicity and implication claims for `dt(1,.)` and `d(x1,.)`.
pub fn verify_lemmas(fns: &DecisionFunctions, params: &SystemParams) -> Result<StructureReport, StructureError> {
    let regime = Regime::classify(params);
    let mut report = StructureReport {
        regime: regime.names().into_iter().map(String::from).collect(),
        ..Default::default()
    };
    let n = fns.n_max;
    let deep = n >= LIMIT_DEPTH;
    report.verdicts.push(check_value_monotone(fns));
    if regime.lemma3 {
        report.verdicts.push(check_f_positive(fns));
    }
    if !deep && (regime.lemma4 || regime.lemma5) {
        report
            .notes
            .push(format!("zero-crossing surrogates need n_max >= {LIMIT_DEPTH}; skipped"));
    }
    if regime.lemma4 {
        let seq = (0..n).filter_map(|x2| Some((State::new(1, x2), fns.dtilde(x2)?)));
        let (dec, cross) = check_decreasing(seq, deep);
        report.verdicts.push(Verdict::from_first("lemma4_dtilde_decreasing", dec));
        if deep {
            let misses = cross.into_iter().map(|(s, d)| (1, s, d)).collect();
            crossing_verdict(&mut report, params, "lemma4_dtilde_crosses_zero", misses, Probe::DTildeNegative)?;
        }
    }
    if regime.lemma5 {
        let mut dec_all = None;
        let mut misses = Vec::new();
        for x1 in 1..n {
            let seq = (0..=n - x1).filter_map(|x2| Some((State::new(x1, x2), fns.d(x1, x2)?)));
            let need = deep && x1 <= CROSSING_X1_MAX;
            let (dec, cross) = check_decreasing(seq, need);
            dec_all = dec_all.or(dec);
            misses.extend(cross.map(|(s, d)| (x1, s, d)));
        }
        report.verdicts.push(Verdict::from_first("lemma5_d_decreasing", dec_all));
        if deep {
            crossing_verdict(&mut report, params, "lemma5_d_crosses_zero", misses, Probe::DNegative)?;
        }
        report.verdicts.extend(check_lemma6(fns));
    }
    Ok(report)
}

fn check_lemma6(fns: &DecisionFunctions) -> Vec<Verdict> {
    let n = fns.n_max;
    let tol = |x1: u32, x2: u32| fns.sign_band(x1, x2);
    // (i) d(2,x2) >= 0  =>  d(2,x2) >= d(1,x2+1)
    let first_i = (1..=n.saturating_sub(2)).find_map(|x2| {
        let a = fns.d(2, x2)?;
        let b = fns.d(1, x2 + 1)?;
        (a >= 0.0 && a < b - tol(2, x2)).then(|| (State::new(2, x2), format!("d(2,x2) = {a} < d(1,x2+1) = {b}")))
    });
    // (ii) dt(1,x2) >= 0  =>  dt(1,x2) <= d(2,x2-1)
    let first_ii = (2..n).find_map(|x2| {
        let a = fns.dtilde(x2)?;
        let b = fns.d(2, x2 - 1)?;
        (a >= 0.0 && a > b + tol(1, x2)).then(|| (State::new(1, x2), format!("dt(1,x2) = {a} > d(2,x2-1) = {b}")))
    });
    // (iii) d(x1,x2) >= 0  =>  d(x1,x2) <= d(x1+1,x2-1), x1 >= 2, x2 >= 2
    let first_iii = Triangle::new(n)
        .states()
        .filter(|s| s.x1 >= 2 && s.x2 >= 2)
        .find_map(|s| {
            let a = fns.d(s.x1, s.x2)?;
            let b = fns.d(s.x1 + 1, s.x2 - 1)?;
            (a >= 0.0 && a > b + tol(s.x1, s.x2)).then(|| (s, format!("d = {a} > d(x1+1,x2-1) = {b}")))
        });
    vec![
        Verdict::from_first("lemma6_i", first_i),
        Verdict::from_first("lemma6_ii", first_ii),
        Verdict::from_first("lemma6_iii", first_iii),
    ]
}

/// Largest residual of one recursion family.
#[derive(Debug, Default)]
struct ResidualTracker {
    worst: f64,
    at: Option<State>,
    checked: usize,
}

impl ResidualTracker {
    fn add(&mut self, s: State, lhs: f64, terms: &[f64]) {
        let rhs: f64 = terms.iter().sum();
        let scale = terms.iter().fold(lhs.abs(), |m, t| m.max(t.abs())).max(f64::MIN_POSITIVE);
        let r = (lhs - rhs).abs() / scale;
        self.checked += 1;
        if r > self.worst || self.at.is_none() {
            self.worst = self.worst.max(r);
            self.at = Some(s);
        }
    }

    fn verdict(self, claim: &str) -> Verdict {
        let pass = self.worst <= IDENTITY_TOLERANCE;
        Verdict {
            claim: claim.to_string(),
            pass,
            witness: if pass { None } else { self.at },
            residual: Some(self.worst),
            detail: Some(format!("{} states checked", self.checked)),
        }
    }
}

/// Substitutes solver output into the recursions satisfied by `dt(1,.)`,
/// `d(1,.)` and `d(x1,.)` under non-idling service and reports the largest
/// relative residual of each family.
///
/// Residuals are relative to the largest absolute term of the identity.
pub fn verify_appendix_recursions(fns: &DecisionFunctions) -> Result<StructureReport, StructureError> {
    let p = fns.params;
    let regime = Regime::classify(&p);
    if !regime.appendix {
        return Err(StructureError::HypothesisNotMet(
            "appendix recursions",
            "they need h1 >= h2 and dedicated servers in both stations".into(),
        ));
    }
    if fns.n_max < 6 {
        return Err(StructureError::DomainTooSmall(fns.n_max));
    }
    let n = fns.n_max;
    let (nu1, nu2, mu1, mu2, xi1, xi2, h1, h2) = (p.nu1, p.nu2, p.mu1, p.mu2, p.xi1, p.xi2, p.h1, p.h2);
    let f = |a, b| fns.f(a, b).expect("f in domain");
    let g = |a, b| fns.g(a, b).expect("g in domain");
    let d = |a, b| fns.d(a, b).expect("d in domain");
    let dt = |b| fns.dtilde(b).expect("dtilde in domain");
    let dh = |a| fns.dhat(a).expect("dhat in domain");
    let db = fns.dbar().expect("dbar in domain");
    let v01 = fns.v(0, 1).expect("V(0,1)");
    let ind = |c: bool| if c { 1.0 } else { 0.0 };

    let mut r15 = ResidualTracker::default();
    r15.add(
        State::new(1, 0),
        dt(0),
        &[xi1 * (h1 - h2), xi1 * (nu2 + xi2) * v01, (nu2 + mu1 + mu2 + xi2) * dt(0)],
    );

    let mut r16 = ResidualTracker::default();
    r16.add(
        State::new(1, 1),
        dt(1),
        &[
            xi1 * (h1 - h2),
            -mu2 * h2,
            nu2 * dt(0),
            mu1 * dt(1),
            nu1 * mu2 * g(0, 2),
            xi1 * xi2 * f(1, 1),
            mu2 * mu2 * g(1, 1),
            xi1 * neg(db),
            mu2 * pos(db),
        ],
    );

    let mut r17 = ResidualTracker::default();
    for x2 in 2..n {
        let x = dt(x2);
        r17.add(
            State::new(1, x2),
            x,
            &[
                xi1 * (h1 - h2),
                -mu2 * h2,
                nu2 * dt(x2 - 1),
                (mu1 + xi2) * x,
                nu1 * mu2 * g(0, x2 + 1),
                xi1 * neg(x),
                mu2 * pos(x),
                mu2 * (neg(db) * ind(x2 == 2) + if x2 > 2 { neg(dt(x2 - 1)) } else { 0.0 }),
            ],
        );
    }

    let mut r20 = ResidualTracker::default();
    r20.add(
        State::new(1, 0),
        d(1, 0),
        &[mu1 * (h1 - h2), mu1 * (nu2 + xi2) * v01, (nu2 + mu1 + mu2 + xi2) * d(1, 0)],
    );

    let mut r21 = ResidualTracker::default();
    for x2 in 1..n {
        let x = d(1, x2);
        let here = if x2 == 1 { neg(db) } else { neg(dt(x2)) };
        let below = match x2 {
            1 => 0.0,
            2 => neg(db),
            _ => neg(dt(x2 - 1)),
        };
        r21.add(
            State::new(1, x2),
            x,
            &[
                mu1 * (h1 - h2),
                -mu2 * h2,
                nu2 * d(1, x2 - 1),
                (mu1 + mu2 + xi2) * x,
                mu2 * (nu1 + xi1 - mu1) * g(0, x2 + 1),
                (mu1 - mu2) * here,
                mu2 * below,
            ],
        );
    }

    let mut r22 = ResidualTracker::default();
    for x1 in 2..=n {
        let x = d(x1, 0);
        let tail = if x1 == 2 { pos(db) } else { pos(dh(x1 - 1)) };
        r22.add(
            State::new(x1, 0),
            x,
            &[
                mu1 * (h1 - h2),
                nu1 * mu1 * f(x1 - 1, 1),
                -mu1 * (nu2 + xi2) * g(x1 - 1, 1),
                (nu2 + mu2 + xi1 + xi2) * x,
                mu1 * tail,
            ],
        );
    }

    let mut r23 = ResidualTracker::default();
    for x1 in 2..n {
        let x = d(x1, 1);
        let hat = dh(x1);
        let tail = if x1 == 2 { pos(dt(2)) } else { pos(d(x1 - 1, 2)) };
        r23.add(
            State::new(x1, 1),
            x,
            &[
                mu1 * (h1 - h2),
                -mu2 * h2,
                nu1 * d(x1 - 1, 2),
                nu2 * d(x1, 0),
                (xi1 + xi2) * x,
                mu2 * (mu2 - xi2) * g(x1, 1),
                mu1 * neg(hat),
                mu2 * pos(hat),
                mu1 * tail,
            ],
        );
    }

    let mut r24 = ResidualTracker::default();
    for s in Triangle::new(n).states().filter(|s| s.x1 >= 2 && s.x2 >= 2) {
        let (x1, x2) = (s.x1, s.x2);
        let x = d(x1, x2);
        let up = if x1 == 2 { pos(dt(x2 + 1)) } else { pos(d(x1 - 1, x2 + 1)) };
        let down = if x2 == 2 { neg(dh(x1)) } else { neg(d(x1, x2 - 1)) };
        r24.add(
            s,
            x,
            &[
                mu1 * (h1 - h2),
                -mu2 * h2,
                nu1 * d(x1 - 1, x2 + 1),
                nu2 * d(x1, x2 - 1),
                (xi1 + xi2) * x,
                mu1 * neg(x),
                mu2 * pos(x),
                mu1 * up,
                mu2 * down,
            ],
        );
    }

    Ok(StructureReport {
        regime: regime.names().into_iter().map(String::from).collect(),
        verdicts: vec![
            r15.verdict("recursion_dtilde_1_0"),
            r16.verdict("recursion_dtilde_1_1"),
            r17.verdict("recursion_dtilde_1_x2"),
            r20.verdict("recursion_d_1_0"),
            r21.verdict("recursion_d_1_x2"),
            r22.verdict("recursion_d_x1_0"),
            r23.verdict("recursion_d_x1_1"),
            r24.verdict("recursion_d_x1_x2"),
        ],
        ..Default::default()
    })
}

fn push_curve_claims(report: &mut StructureReport, curve: Result<SwitchingCurve, StructureError>, claim: &str) -> Option<SwitchingCurve> {
    match curve {
        Ok(c) => {
            report.verdicts.push(Verdict::pass(&format!("{claim}_threshold")));
            report.verdicts.push(match c.slope_witness {
                None => Verdict::pass(&format!("{claim}_slope")),
                Some(x1) => Verdict::fail(
                    &format!("{claim}_slope"),
                    State::new(x1 + 1, c.t_at(x1 + 1).unwrap_or(0)),
                    format!("t({}) = {:?} < t({x1}) - 1 with t({x1}) = {:?}", x1 + 1, c.t_at(x1 + 1), c.t_at(x1)),
                ),
            });
            Some(c)
        }
        Err(StructureError::NotThresholdShaped { witness, detail, .. }) => {
            report.verdicts.push(Verdict::fail(&format!("{claim}_threshold"), witness, detail));
            None
        }
        Err(e) => {
            report.notes.push(format!("{claim}: {e}"));
            None
        }
    }
}

/// Runs every structural check that applies to the instance.
pub fn verify(table: &ValueTable, policy: &Policy) -> Result<StructureReport, StructureError> {
    let fns = DecisionFunctions::new(table)?;
    let p = fns.params;
    let regime = Regime::classify(&p);
    let n = fns.n_max;
    let mut report = verify_lemmas(&fns, &p)?;
    report.verdicts.push(check_boundary_closed_forms(table));
    let (p1, p2) = check_propositions(policy, &fns);
    report.verdicts.push(p1);
    report.verdicts.push(p2);

    if regime.non_idling {
        let (sign, idle) = check_sign_consistency(policy, &fns);
        report.verdicts.push(sign);
        report.verdicts.push(idle);
        let curve = extract_switching_curve(policy, &fns);
        if let Ok(c) = &curve {
            report.t = c.t.clone();
            report.diagnostics.push(if c.nondecreasing {
                Verdict::pass("switching_curve_nondecreasing")
            } else {
                let x1 = step_violation(&c.t, n, 0).expect("decrease");
                Verdict::fail(
                    "switching_curve_nondecreasing",
                    State::new(x1 + 1, c.t_at(x1 + 1).unwrap_or(0)),
                    format!("t({}) = {:?} < t({x1}) = {:?}", x1 + 1, c.t_at(x1 + 1), c.t_at(x1)),
                )
            });
            report.diagnostics.push(match c.slope_witness {
                None => Verdict::pass("switching_curve_slope"),
                Some(x1) => Verdict::fail(
                    "switching_curve_slope",
                    State::new(x1 + 1, c.t_at(x1 + 1).unwrap_or(0)),
                    format!("t({}) = {:?}, t({x1}) = {:?}", x1 + 1, c.t_at(x1 + 1), c.t_at(x1)),
                ),
            });
        }
        for (on, name) in [(regime.thm1, "thm1"), (regime.thm2_i, "thm2_i"), (regime.thm3_i, "thm3_i")] {
            if on {
                push_curve_claims(&mut report, curve.clone(), name);
            }
        }
        if regime.thm2_ii {
            let first = interior(n)
                .filter(|s| s.x1 >= 1)
                .find(|&s| policy.action(s).map(|a| a.flex != FlexAssignment::Station1).unwrap_or(false))
                .map(|s| (s, "flexible server not upstream".to_string()));
            report.verdicts.push(Verdict::from_first("thm2_ii_upstream_priority", first));
        }
        if regime.thm3_ii {
            report.verdicts.push(downstream_priority(policy, n, "thm3_ii_downstream_priority"));
        }
    }

    if regime.idling {
        let deep = n >= LIMIT_DEPTH;
        let mut misses = Vec::new();
        for x1 in 1..=CROSSING_X1_MAX.min(n - 1) {
            let scan = scan_threshold(n, x1, dedicated1_idle(policy));
            if scan.eventual.is_none() {
                misses.push((x1, State::new(x1, n - x1), "no idling threshold inside the domain".to_string()));
            }
        }
        if deep {
            crossing_verdict(&mut report, &p, "thm4_idling_threshold_exists", misses, Probe::IdlingAtEdge)?;
        } else {
            report
                .notes
                .push(format!("idling threshold existence is asserted only at n_max >= {LIMIT_DEPTH}"));
        }
        if regime.thm5 {
            let flex = scan_threshold(n, 1, flex_downstream(policy));
            let idle = scan_threshold(n, 1, dedicated1_idle(policy));
            let v = match (flex.single_crossing(), idle.single_crossing(), flex.first, idle.first) {
                (false, _, _, _) => Verdict::fail("thm5_two_switching_points", State::new(1, flex.first.unwrap_or(0)), "flexible assignment not single crossing at x1 = 1".into()),
                (_, false, _, _) => Verdict::fail("thm5_two_switching_points", State::new(1, idle.first.unwrap_or(0)), "idling not single crossing at x1 = 1".into()),
                (_, _, Some(t1), Some(t2)) if t1 <= t2 => Verdict::pass("thm5_two_switching_points"),
                (_, _, t1, t2) if deep || (t1.is_some() && t2.is_some()) => Verdict::fail(
                    "thm5_two_switching_points",
                    State::new(1, t2.unwrap_or(n - 1)),
                    format!("t1 = {t1:?}, t2 = {t2:?}"),
                ),
                _ => {
                    report.notes.push("thm5 thresholds beyond a shallow domain; not asserted".into());
                    Verdict::pass("thm5_two_switching_points")
                }
            };
            report.verdicts.push(v);
        }
        let curve = extract_idling_thresholds(policy, &fns);
        match &curve {
            Ok(c) => {
                report.t = c.t.clone();
                report.t2 = c.t2.clone();
            }
            Err(e) => report.notes.push(format!("idling thresholds: {e}")),
        }
        if regime.thm6 {
            report.verdicts.push(downstream_priority(policy, n, "thm6_downstream_priority"));
            report.verdicts.push(match &curve {
                Ok(c) if c.nondecreasing => Verdict::pass("thm6_t2_nondecreasing"),
                Ok(c) => {
                    let x1 = step_violation(&c.t2, n, 0).expect("decrease");
                    Verdict::fail(
                        "thm6_t2_nondecreasing",
                        State::new(x1 + 1, c.t2_at(x1 + 1).unwrap_or(0)),
                        format!("t2({}) = {:?} < t2({x1}) = {:?}", x1 + 1, c.t2_at(x1 + 1), c.t2_at(x1)),
                    )
                }
                Err(StructureError::NotThresholdShaped { witness, detail, .. }) => {
                    Verdict::fail("thm6_t2_nondecreasing", *witness, detail.clone())
                }
                Err(e) => Verdict::fail("thm6_t2_nondecreasing", State::EMPTY, e.to_string()),
            });
        }
    }

    if regime.appendix && n >= 6 {
        let identities = verify_appendix_recursions(&fns)?;
        report.verdicts.extend(identities.verdicts);
    }
    Ok(report)
}

fn downstream_priority(policy: &Policy, n: u32, claim: &str) -> Verdict {
    let first = interior(n)
        .filter(|s| s.x1 >= 1 && s.x2 >= 1)
        .find(|&s| policy.action(s).map(|a| a.flex != FlexAssignment::Station2).unwrap_or(false))
        .map(|s| (s, "flexible server not downstream".to_string()));
    Verdict::from_first(claim, first)
}
