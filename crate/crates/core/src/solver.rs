//! Exact backward recursion over the triangular domain `x1 + x2 <= n_max`.
//!
//! Every transition either moves a job downstream (same total) or removes a
//! job (total drops by one), so evaluating levels `n = 1..=n_max` and, within
//! a level, states in increasing `x1` order visits each state after all of
//! its successors. Solving `V = h.x + W` for `V` with the self-loop moved to
//! the left gives the per-action value
//!
//! ```text
//! q(x, a) = (h1 x1 + h2 x2 + rho1 V(x1-1, x2+1) + rho2 V(x1, x2-1)) / (rho1 + rho2)
//! ```
//!
//! so no fixed-point iteration is needed.

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::model::{feasible_allocations, Allocation, FlexAssignment, State, SystemParams};

/// Relative width of the argmin tie band.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Which flexible-server assignment wins an exact tie, after non-idling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Upstream,
    Downstream,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tie_tolerance: f64,
    pub tie_break: TieBreak,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tie_tolerance: TIE_TOLERANCE,
            tie_break: TieBreak::Upstream,
        }
    }
}

/// Index arithmetic for the triangle `{(x1, x2) : x1 + x2 <= n_max}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triangle {
    pub n_max: u32,
}

impl Triangle {
    pub fn new(n_max: u32) -> Self {
        Triangle { n_max }
    }

    pub fn len(&self) -> usize {
        let n = self.n_max as usize;
        (n + 1) * (n + 2) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: State) -> bool {
        s.total() <= self.n_max
    }

    pub fn index(&self, s: State) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let n = s.total() as usize;
        Some(n * (n + 1) / 2 + s.x1 as usize)
    }

    /// States in evaluation order: by level, then by `x1`.
    pub fn states(&self) -> impl Iterator<Item = State> {
        let n_max = self.n_max;
        (0..=n_max).flat_map(|n| (0..=n).map(move |x1| State::new(x1, n - x1)))
    }
}

/// Minimal expected holding cost until the system clears, in original time
/// units, for every state of the triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub n_max: u32,
    pub values: Vec<f64>,
    /// Normalized parameters the table was computed from.
    pub params: SystemParams,
}

impl ValueTable {
    pub fn triangle(&self) -> Triangle {
        Triangle::new(self.n_max)
    }

    pub fn get(&self, s: State) -> Option<f64> {
        self.triangle().index(s).map(|i| self.values[i])
    }

    /// `V(x1, x2)`; panics outside the triangle.
    pub fn value(&self, x1: u32, x2: u32) -> f64 {
        self.get(State::new(x1, x2))
            .unwrap_or_else(|| panic!("({x1},{x2}) is outside the domain n_max = {}", self.n_max))
    }

    /// `V(x1, x2)` in uniformized time units (scaled by the rate sum).
    pub fn uniformized(&self, x1: u32, x2: u32) -> f64 {
        self.value(x1, x2) * self.params.uniformization_scale
    }
}

/// Optimal stationary action per non-empty state.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub n_max: u32,
    pub actions: Vec<Option<Allocation>>,
    /// Gap between the best and second-best action value (original cost units).
    pub q_gap: Vec<f64>,
}

impl Policy {
    pub fn action(&self, s: State) -> Option<&Allocation> {
        Triangle::new(self.n_max)
            .index(s)
            .and_then(|i| self.actions[i].as_ref())
    }

    pub fn gap(&self, s: State) -> Option<f64> {
        Triangle::new(self.n_max).index(s).map(|i| self.q_gap[i])
    }
}

/// Value of taking `alloc` in `state` and following the values in `lookup`
/// afterwards. Rates in `alloc` must be normalized for `params`; the result
/// is in original cost units.
pub fn q_value(
    state: State,
    alloc: &Allocation,
    params: &SystemParams,
    lookup: impl Fn(State) -> Option<f64>,
) -> Result<f64, SolveError> {
    let holding = (params.h1 * state.x1 as f64 + params.h2 * state.x2 as f64) / params.uniformization_scale;
    let mut num = holding;
    if alloc.rho1 > 0.0 {
        let next = state.after_station1();
        num += alloc.rho1 * lookup(next).ok_or(SolveError::DependencyMissing(next))?;
    }
    if alloc.rho2 > 0.0 {
        let next = state.after_station2();
        num += alloc.rho2 * lookup(next).ok_or(SolveError::DependencyMissing(next))?;
    }
    Ok(num / (alloc.rho1 + alloc.rho2))
}

/// Feasible allocations per state class. The action set depends on each
/// station only through `min(x_i, 2)`.
struct ActionSets([Vec<Allocation>; 9]);

impl ActionSets {
    fn new(params: &SystemParams, tie_break: TieBreak) -> Result<Self, SolveError> {
        let mut sets: [Vec<Allocation>; 9] = Default::default();
        for c1 in 0..3u32 {
            for c2 in 0..3u32 {
                if c1 + c2 > 0 {
                    let mut set = feasible_allocations(State::new(c1, c2), params)?;
                    if tie_break == TieBreak::Downstream {
                        set.sort_by_key(|a| {
                            let (idle, flex, collab) = a.preference_key(params);
                            let rank = match flex {
                                FlexAssignment::Station2 => 0,
                                FlexAssignment::Station1 => 1,
                                FlexAssignment::Idle => 2,
                            };
                            (idle, rank, collab)
                        });
                    }
                    sets[(c1 * 3 + c2) as usize] = set;
                }
            }
        }
        Ok(ActionSets(sets))
    }

    fn get(&self, s: State) -> &[Allocation] {
        &self.0[(s.x1.min(2) * 3 + s.x2.min(2)) as usize]
    }
}

/// Minimal action value at `s`, the chosen allocation and the gap to the
/// runner-up.
fn best_action(
    s: State,
    allocs: &[Allocation],
    tie_tolerance: f64,
    params: &SystemParams,
    lookup: impl Fn(State) -> Option<f64>,
) -> Result<(f64, Allocation, f64), SolveError> {
    let mut best = f64::INFINITY;
    let mut qs = [0.0f64; 32];
    for (i, a) in allocs.iter().enumerate() {
        let q = q_value(s, a, params, &lookup)?;
        qs[i] = q;
        best = best.min(q);
    }
    let qs = &qs[..allocs.len()];
    let band = tie_tolerance * (1.0 + best.abs());
    let chosen = qs.iter().position(|&q| q <= best + band).expect("non-empty action set");
    let second = qs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != chosen)
        .map(|(_, &q)| q)
        .fold(f64::INFINITY, f64::min);
    Ok((best, allocs[chosen], (second - qs[chosen]).max(0.0)))
}

/// Computes `V` and an optimal policy on `x1 + x2 <= n_max`.
///
/// Parameters are validated and normalized first. Ties within
/// `TIE_TOLERANCE * (1 + |V|)` go to the earliest allocation in
/// [`feasible_allocations`] order.
pub fn solve(params: &SystemParams, n_max: u32) -> Result<(ValueTable, Policy), SolveError> {
    solve_with(params, n_max, &SolveOptions::default())
}

/// [`solve`] with an explicit tie band and tie-break order.
pub fn solve_with(params: &SystemParams, n_max: u32, options: &SolveOptions) -> Result<(ValueTable, Policy), SolveError> {
    if n_max < 1 {
        return Err(SolveError::DomainTooSmall { min: 1, got: n_max });
    }
    let params = params.prepare()?;
    let tri = Triangle::new(n_max);
    let mut values = vec![f64::NAN; tri.len()];
    let mut actions = vec![None; tri.len()];
    let mut q_gap = vec![0.0; tri.len()];
    values[0] = 0.0;
    let sets = ActionSets::new(&params, options.tie_break)?;

    for s in tri.states().skip(1) {
        let (v, a, gap) = best_action(s, sets.get(s), options.tie_tolerance, &params, |t| tri.index(t).map(|i| values[i]))?;
        let i = tri.index(s).expect("in domain");
        values[i] = v;
        actions[i] = Some(a);
        q_gap[i] = gap;
    }

    Ok((
        ValueTable { n_max, values, params },
        Policy { n_max, actions, q_gap },
    ))
}

/// Values and optimal actions on `{x1 <= x1_max, x1 + x2 <= n_max}`.
///
/// Transitions never increase `x1`, so this strip is closed and its values
/// agree with the full triangle. It reaches large `x2` at a cost linear in
/// `n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Strip {
    pub x1_max: u32,
    pub n_max: u32,
    columns: Vec<Vec<(f64, Option<Allocation>)>>,
    pub params: SystemParams,
}

impl Strip {
    fn entry(&self, s: State) -> Option<&(f64, Option<Allocation>)> {
        self.columns.get(s.x1 as usize)?.get(s.x2 as usize)
    }

    /// `V` in original units.
    pub fn get(&self, s: State) -> Option<f64> {
        self.entry(s).map(|e| e.0)
    }

    pub fn action(&self, s: State) -> Option<&Allocation> {
        self.entry(s).and_then(|e| e.1.as_ref())
    }

    /// Largest `x2` stored for column `x1`.
    pub fn reach(&self, x1: u32) -> u32 {
        self.n_max - x1
    }
}

/// Solves the strip `{x1 <= x1_max, x1 + x2 <= n_max}` column by column,
/// keeping only two columns of values alive. `visit(x1, previous, current,
/// actions)` sees each finished column (`previous` is empty for `x1 = 0`)
/// and returns `false` to stop early. With `keep_actions` unset the action
/// slice is empty, which halves memory on very deep strips.
pub fn sweep_strip(
    params: &SystemParams,
    x1_max: u32,
    n_max: u32,
    keep_actions: bool,
    mut visit: impl FnMut(u32, &[f64], &[f64], &[Option<Allocation>]) -> bool,
) -> Result<(), SolveError> {
    if n_max < x1_max.max(1) {
        return Err(SolveError::DomainTooSmall {
            min: x1_max.max(1),
            got: n_max,
        });
    }
    let params = params.prepare()?;
    let sets = ActionSets::new(&params, TieBreak::Upstream)?;
    let mut prev: Vec<f64> = Vec::new();
    let mut cur: Vec<f64> = Vec::new();
    let mut actions: Vec<Option<Allocation>> = Vec::new();
    for x1 in 0..=x1_max {
        let len = (n_max - x1) as usize + 1;
        cur.clear();
        actions.clear();
        for x2 in 0..len as u32 {
            let s = State::new(x1, x2);
            if s.is_empty() {
                cur.push(0.0);
                if keep_actions {
                    actions.push(None);
                }
                continue;
            }
            let (v, a, _) = best_action(s, sets.get(s), TIE_TOLERANCE, &params, |t| {
                if t.x1 == x1 {
                    cur.get(t.x2 as usize).copied()
                } else {
                    prev.get(t.x2 as usize).copied()
                }
            })?;
            cur.push(v);
            if keep_actions {
                actions.push(Some(a));
            }
        }
        if !visit(x1, &prev, &cur, &actions) {
            break;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(())
}

pub fn solve_strip(params: &SystemParams, x1_max: u32, n_max: u32) -> Result<Strip, SolveError> {
    let mut columns = Vec::with_capacity(x1_max as usize + 1);
    sweep_strip(params, x1_max, n_max, true, |_, _, cur, actions| {
        columns.push(cur.iter().copied().zip(actions.iter().copied()).collect());
        true
    })?;
    Ok(Strip {
        x1_max,
        n_max,
        columns,
        params: params.prepare()?,
    })
}

fn rates_match(a: &Allocation, b: &Allocation) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300);
    close(a.rho1, b.rho1) && close(a.rho2, b.rho2)
}

/// Exact cost of an arbitrary stationary policy given as a function of state.
pub fn evaluate_with(
    params: &SystemParams,
    n_max: u32,
    mut policy: impl FnMut(State) -> Option<Allocation>,
) -> Result<ValueTable, SolveError> {
    if n_max < 1 {
        return Err(SolveError::DomainTooSmall { min: 1, got: n_max });
    }
    let params = params.prepare()?;
    let tri = Triangle::new(n_max);
    let mut values = vec![f64::NAN; tri.len()];
    values[0] = 0.0;
    for s in tri.states().skip(1) {
        let alloc = policy(s).ok_or(SolveError::MissingAction(s))?;
        let feasible = feasible_allocations(s, &params)?;
        if !feasible.iter().any(|f| rates_match(f, &alloc)) {
            return Err(SolveError::InfeasibleAction {
                state: s,
                rho1: alloc.rho1,
                rho2: alloc.rho2,
            });
        }
        let v = q_value(s, &alloc, &params, |t| tri.index(t).map(|i| values[i]))?;
        values[tri.index(s).expect("in domain")] = v;
    }
    Ok(ValueTable { n_max, values, params })
}

/// Exact cost `V^pi` of a stored policy.
pub fn evaluate_policy(params: &SystemParams, policy: &Policy, n_max: u32) -> Result<ValueTable, SolveError> {
    evaluate_with(params, n_max, |s| policy.action(s).copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlexAssignment, ServerMode, Station};

    fn symmetric() -> SystemParams {
        SystemParams::new(0.25, 0.25, 0.15, 0.15, 0.1, 0.1, 1.0, 1.0)
    }

    fn example1() -> SystemParams {
        SystemParams::new(0.8, 0.6, 0.6, 8.0, 0.03, 7.43, 16.0, 1.5)
    }

    #[test]
    fn action_sets_match_direct_enumeration() {
        let p = example1().prepare().unwrap();
        let sets = ActionSets::new(&p, TieBreak::Upstream).unwrap();
        for s in Triangle::new(6).states().skip(1) {
            assert_eq!(sets.get(s), feasible_allocations(s, &p).unwrap().as_slice(), "{s}");
        }
    }

    #[test]
    fn tie_break_order_decides_within_the_band() {
        let p = example1();
        let wide = |tie_break| SolveOptions {
            tie_tolerance: 1e6,
            tie_break,
        };
        let (_, up) = solve_with(&p, 3, &wide(TieBreak::Upstream)).unwrap();
        let (_, down) = solve_with(&p, 3, &wide(TieBreak::Downstream)).unwrap();
        let s = State::new(1, 1);
        assert_eq!(up.action(s).unwrap().flex, FlexAssignment::Station1);
        assert_eq!(down.action(s).unwrap().flex, FlexAssignment::Station2);
        let (v, pol) = solve(&p, 6).unwrap();
        let (v2, pol2) = solve_with(&p, 6, &SolveOptions::default()).unwrap();
        assert_eq!((v, pol), (v2, pol2));
    }

    #[test]
    fn strip_agrees_with_triangle() {
        let p = example1();
        let (v, pol) = solve(&p, 30).unwrap();
        let strip = solve_strip(&p, 4, 30).unwrap();
        for s in Triangle::new(30).states().filter(|s| s.x1 <= 4) {
            assert_eq!(strip.get(s), v.get(s), "{s}");
            assert_eq!(strip.action(s), pol.action(s), "{s}");
        }
        assert_eq!(strip.get(State::new(5, 0)), None);
        assert_eq!(strip.reach(4), 26);
    }

    #[test]
    fn triangle_indexing_is_level_major() {
        let t = Triangle::new(3);
        assert_eq!(t.len(), 10);
        let order: Vec<State> = t.states().collect();
        for (i, s) in order.iter().enumerate() {
            assert_eq!(t.index(*s), Some(i));
        }
        assert_eq!(order[1], State::new(0, 1));
        assert_eq!(order[2], State::new(1, 0));
        assert_eq!(t.index(State::new(2, 2)), None);
    }

    #[test]
    fn boundary_values_for_symmetric_instance() {
        let (v, _) = solve(&symmetric(), 4).unwrap();
        assert_eq!(v.value(0, 0), 0.0);
        // 1/0.35 + 1/0.35
        assert!((v.value(1, 0) - 5.714285714285714).abs() < 1e-12);
        // 2/0.4 + 1/0.35
        assert!((v.value(0, 2) - 7.857142857142857).abs() < 1e-12);
    }

    #[test]
    fn q_value_single_upstream_job() {
        let p = example1().prepare().unwrap();
        let (v, _) = solve(&example1(), 3).unwrap();
        let alloc = Allocation {
            d1: ServerMode::Work,
            d2: ServerMode::Idle,
            flex: FlexAssignment::Station1,
            collab1: true,
            collab2: false,
            rho1: p.nu1 + p.xi1,
            rho2: 0.0,
        };
        let q = q_value(State::new(1, 0), &alloc, &p, |s| v.get(s)).unwrap();
        let want = 16.0 / (0.8 + 0.03) + v.value(0, 1);
        assert!((q - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn q_value_reports_missing_dependency() {
        let p = symmetric();
        let alloc = feasible_allocations(State::new(0, 2), &p).unwrap()[0];
        let err = q_value(State::new(0, 2), &alloc, &p, |_| None).unwrap_err();
        assert_eq!(err, SolveError::DependencyMissing(State::new(0, 1)));
    }

    #[test]
    fn q_value_ratio_invariance() {
        let p = symmetric();
        let alloc = feasible_allocations(State::new(2, 1), &p).unwrap()[0];
        let lookup = |s: State| Some(1.0 + s.x1 as f64 * 2.0 + s.x2 as f64);
        let q = q_value(State::new(2, 1), &alloc, &p, lookup).unwrap();
        let c = 3.5;
        let mut scaled = p;
        scaled.h1 *= c;
        scaled.h2 *= c;
        let mut a2 = alloc;
        a2.rho1 *= c;
        a2.rho2 *= c;
        let q2 = q_value(State::new(2, 1), &a2, &scaled, lookup).unwrap();
        assert!((q2 - q).abs() < 1e-12 * q);
    }

    #[test]
    fn optimal_policy_evaluates_to_its_own_value() {
        let (v, pol) = solve(&example1(), 12).unwrap();
        let vp = evaluate_policy(&example1(), &pol, 12).unwrap();
        for (a, b) in v.values.iter().zip(&vp.values) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn suboptimal_policy_costs_more() {
        let p = SystemParams::new(0.9, 0.5, 0.6, 0.4, 0.3, 0.2, 3.0, 1.0);
        let (v, _) = solve(&p, 8).unwrap();
        let np = p.prepare().unwrap();
        // keep dedicated server 1 idle whenever anything else can work
        let vp = evaluate_with(&p, 8, |s| {
            let acts = feasible_allocations(s, &np).ok()?;
            acts.iter()
                .find(|a| a.d1 == ServerMode::Idle && a.total_rate() > 0.0)
                .or(acts.first())
                .copied()
        })
        .unwrap();
        for s in Triangle::new(8).states() {
            assert!(vp.get(s).unwrap() >= v.get(s).unwrap() - 1e-12);
        }
        assert!(vp.value(3, 3) > v.value(3, 3));
    }

    #[test]
    fn single_job_policy_value() {
        let p = symmetric();
        let np = p.prepare().unwrap();
        // only the flexible server works on the upstream job
        let vp = evaluate_with(&p, 1, |s| {
            let acts = feasible_allocations(s, &np).ok()?;
            acts.into_iter().find(|a| a.rho1 == np.mu1 || (s.x1 == 0 && a.rho2 == np.nu2 + np.xi2))
        })
        .unwrap();
        let want = 1.0 / 0.15 + vp.value(0, 1);
        assert!((vp.value(1, 0) - want).abs() < 1e-12);
    }

    #[test]
    fn infeasible_action_is_rejected() {
        let p = symmetric();
        let np = p.prepare().unwrap();
        let err = evaluate_with(&p, 2, |s| {
            let mut a = feasible_allocations(s, &np).ok()?[0];
            if s == State::new(1, 1) {
                a.rho1 = 0.77;
            }
            Some(a)
        })
        .unwrap_err();
        assert!(matches!(err, SolveError::InfeasibleAction { state, .. } if state == State::new(1, 1)));
    }

    #[test]
    fn policy_is_invariant_under_time_rescaling() {
        let p = example1();
        let mut fast = p;
        for r in [&mut fast.nu1, &mut fast.nu2, &mut fast.mu1, &mut fast.mu2, &mut fast.xi1, &mut fast.xi2] {
            *r *= 4.0;
        }
        let (v, pol) = solve(&p, 10).unwrap();
        let (vf, polf) = solve(&fast, 10).unwrap();
        for s in Triangle::new(10).states().skip(1) {
            let (a, b) = (pol.action(s).unwrap(), polf.action(s).unwrap());
            assert_eq!((a.d1, a.d2, a.flex), (b.d1, b.d2, b.flex), "at {s}");
            assert!((v.get(s).unwrap() / 4.0 - vf.get(s).unwrap()).abs() < 1e-12 * v.get(s).unwrap());
        }
    }

    #[test]
    fn dedicated_two_never_idles_with_work() {
        let (_, pol) = solve(&example1(), 10).unwrap();
        for s in Triangle::new(10).states().skip(1).filter(|s| s.x2 > 0) {
            assert_eq!(pol.action(s).unwrap().dedicated(Station::Two), ServerMode::Work);
        }
    }
}
