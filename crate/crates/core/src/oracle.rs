//! Independent checks of the exact solver: brute force over every
//! deterministic stationary policy, and value iteration on the uniformized
//! chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OracleError, SolveError};
use crate::model::{feasible_allocations, max_rate_given_flex, Allocation, State, Station, SystemParams};
use crate::solver::{q_value, solve, Triangle};

/// Largest policy space `enumerate_policies` accepts by default.
pub const ENUMERATION_LIMIT: f64 = 1e7;
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_VI_MAX_ITERATIONS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Enumeration,
    ValueIteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub method: OracleMethod,
    pub n_max: u32,
    /// Best cost per state in triangle order, original units.
    pub values: Vec<f64>,
    /// Largest `|V_oracle - V_solver|` over the domain.
    pub residual: f64,
    pub worst_state: State,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub policies_examined: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<u64>,
    /// Span of the last value-iteration update, uniformized units.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub convergence_gap: Option<f64>,
}

impl OracleResult {
    pub fn value(&self, s: State) -> Option<f64> {
        Triangle::new(self.n_max).index(s).map(|i| self.values[i])
    }

    pub fn agrees(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

fn compare_with_solver(params: &SystemParams, n_max: u32, values: &[f64]) -> Result<(f64, State), SolveError> {
    let (table, _) = solve(params, n_max)?;
    let mut worst = (0.0, State::EMPTY);
    for (i, s) in Triangle::new(n_max).states().enumerate() {
        let r = (values[i] - table.values[i]).abs();
        if r > worst.0 || r.is_nan() {
            worst = (r, s);
        }
    }
    Ok(worst)
}

/// Keeps the allocations that use the largest Station 2 rate for their
/// flexible assignment and either no or the largest Station 1 rate.
fn undominated(state: State, params: &SystemParams, allocs: Vec<Allocation>) -> Vec<Allocation> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300);
    allocs
        .into_iter()
        .filter(|a| {
            let r2 = max_rate_given_flex(state, params, Station::Two, a.flex);
            let r1 = max_rate_given_flex(state, params, Station::One, a.flex);
            close(a.rho2, r2) && (a.rho1 == 0.0 || close(a.rho1, r1))
        })
        .collect()
}

/// Number of deterministic stationary policies on the triangle.
pub fn policy_space_size(params: &SystemParams, n_max: u32, prune: bool) -> Result<f64, OracleError> {
    let params = params.prepare().map_err(SolveError::from)?;
    let mut size = 1.0;
    for s in Triangle::new(n_max).states().skip(1) {
        let mut a = feasible_allocations(s, &params).map_err(SolveError::from)?;
        if prune {
            a = undominated(s, &params, a);
        }
        size *= a.len() as f64;
    }
    Ok(size)
}

struct Search<'a> {
    params: &'a SystemParams,
    tri: Triangle,
    states: &'a [State],
    actions: &'a [Vec<Allocation>],
}

impl Search<'_> {
    /// Depth-first over action choices from position `k` on. `values` holds
    /// `V^pi` for states before `k`; `best` collects pointwise minima.
    fn descend(&self, k: usize, values: &mut [f64], best: &mut [f64], leaves: &mut u64) {
        if k == self.states.len() {
            *leaves += 1;
            return;
        }
        let s = self.states[k];
        let i = self.tri.index(s).expect("in domain");
        for a in &self.actions[k] {
            let v = q_value(s, a, self.params, |t| self.tri.index(t).map(|j| values[j])).expect("earlier states are set");
            values[i] = v;
            if v < best[i] {
                best[i] = v;
            }
            self.descend(k + 1, values, best, leaves);
        }
        values[i] = f64::NAN;
    }
}

/// Evaluates every deterministic stationary policy exactly and keeps the
/// pointwise minimum cost per state. With `prune`, actions dominated by
/// the rate-maximization rules are skipped.
pub fn enumerate_policies(params: &SystemParams, n_max: u32, prune: bool) -> Result<OracleResult, OracleError> {
    enumerate_policies_with_limit(params, n_max, prune, ENUMERATION_LIMIT)
}

pub fn enumerate_policies_with_limit(
    params: &SystemParams,
    n_max: u32,
    prune: bool,
    limit: f64,
) -> Result<OracleResult, OracleError> {
    if n_max < 1 {
        return Err(SolveError::DomainTooSmall { min: 1, got: n_max }.into());
    }
    let size = policy_space_size(params, n_max, prune)?;
    if size > limit {
        return Err(OracleError::SearchSpaceTooLarge { size, limit });
    }
    let p = params.prepare().map_err(SolveError::from)?;
    let tri = Triangle::new(n_max);
    let states: Vec<State> = tri.states().skip(1).collect();
    let actions: Vec<Vec<Allocation>> = states
        .iter()
        .map(|&s| {
            let a = feasible_allocations(s, &p).expect("validated");
            if prune {
                undominated(s, &p, a)
            } else {
                a
            }
        })
        .collect();
    let search = Search {
        params: &p,
        tri,
        states: &states,
        actions: &actions,
    };

    // Split on the first state's actions; each branch runs its own search.
    let first = states[0];
    let i0 = tri.index(first).expect("in domain");
    let branches: Vec<(Vec<f64>, u64)> = actions[0]
        .par_iter()
        .map(|a| {
            let mut values = vec![f64::NAN; tri.len()];
            let mut best = vec![f64::INFINITY; tri.len()];
            values[0] = 0.0;
            best[0] = 0.0;
            let v = q_value(first, a, &p, |t| tri.index(t).map(|j| values[j])).expect("only the empty state precedes");
            values[i0] = v;
            best[i0] = v;
            let mut leaves = 0;
            search.descend(1, &mut values, &mut best, &mut leaves);
            (best, leaves)
        })
        .collect();

    let mut best = vec![f64::INFINITY; tri.len()];
    let mut examined = 0;
    for (b, leaves) in branches {
        examined += leaves;
        for (x, y) in best.iter_mut().zip(b) {
            *x = x.min(y);
        }
    }
    let (residual, worst_state) = compare_with_solver(params, n_max, &best)?;
    Ok(OracleResult {
        method: OracleMethod::Enumeration,
        n_max,
        values: best,
        residual,
        worst_state,
        policies_examined: Some(examined),
        iterations: None,
        convergence_gap: None,
    })
}

/// Synchronous Bellman sweeps on the uniformized chain from `V = 0` until
/// the span of successive iterates drops below `tol`.
pub fn value_iteration(params: &SystemParams, n_max: u32, tol: f64) -> Result<OracleResult, OracleError> {
    value_iteration_capped(params, n_max, tol, DEFAULT_VI_MAX_ITERATIONS)
}

pub fn value_iteration_capped(
    params: &SystemParams,
    n_max: u32,
    tol: f64,
    max_iterations: u64,
) -> Result<OracleResult, OracleError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(OracleError::BadTolerance);
    }
    if n_max < 1 {
        return Err(SolveError::DomainTooSmall { min: 1, got: n_max }.into());
    }
    let p = params.prepare().map_err(SolveError::from)?;
    let tri = Triangle::new(n_max);
    let states: Vec<State> = tri.states().collect();
    let actions: Vec<Vec<Allocation>> = states
        .iter()
        .map(|&s| if s.is_empty() { Vec::new() } else { feasible_allocations(s, &p).expect("validated") })
        .collect();
    let idx = |s: State| tri.index(s).expect("transitions stay in domain");

    let mut v = vec![0.0; tri.len()];
    let mut next = vec![0.0; tri.len()];
    for iteration in 1..=max_iterations {
        for (i, &s) in states.iter().enumerate() {
            if s.is_empty() {
                next[i] = 0.0;
                continue;
            }
            let hold = p.h1 * s.x1 as f64 + p.h2 * s.x2 as f64;
            next[i] = actions[i]
                .iter()
                .map(|a| {
                    let mut w = (1.0 - a.rho1 - a.rho2) * v[i];
                    if a.rho1 > 0.0 {
                        w += a.rho1 * v[idx(s.after_station1())];
                    }
                    if a.rho2 > 0.0 {
                        w += a.rho2 * v[idx(s.after_station2())];
                    }
                    hold + w
                })
                .fold(f64::INFINITY, f64::min);
        }
        let (lo, hi) = next
            .iter()
            .zip(&v)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        std::mem::swap(&mut v, &mut next);
        let span = hi - lo;
        if span < tol {
            let values: Vec<f64> = v.iter().map(|x| x / p.uniformization_scale).collect();
            let (residual, worst_state) = compare_with_solver(params, n_max, &values)?;
            return Ok(OracleResult {
                method: OracleMethod::ValueIteration,
                n_max,
                values,
                residual,
                worst_state,
                policies_examined: None,
                iterations: Some(iteration),
                convergence_gap: Some(span),
            });
        }
    }
    Err(OracleError::MaxIterationsExceeded { tol, max_iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> SystemParams {
        SystemParams::new(0.25, 0.25, 0.15, 0.15, 0.1, 0.1, 1.0, 1.0)
    }

    fn example1() -> SystemParams {
        SystemParams::new(0.8, 0.6, 0.6, 8.0, 0.03, 7.43, 16.0, 1.5)
    }

    #[test]
    fn enumeration_matches_solver_small() {
        let r = enumerate_policies(&symmetric(), 2, false).unwrap();
        assert!(r.residual <= 1e-9, "{r:?}");
        assert_eq!(r.policies_examined.unwrap() as f64, policy_space_size(&symmetric(), 2, false).unwrap());
    }

    #[test]
    fn enumeration_matches_solver_example1() {
        let r = enumerate_policies(&example1(), 3, false).unwrap();
        assert!(r.residual <= 1e-9, "{r:?}");
    }

    #[test]
    fn pruned_enumeration_has_same_minimum() {
        let full = enumerate_policies(&example1(), 3, false).unwrap();
        let pruned = enumerate_policies(&example1(), 3, true).unwrap();
        assert!(pruned.policies_examined < full.policies_examined);
        for (a, b) in full.values.iter().zip(&pruned.values) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn boundary_only_domain() {
        let r = enumerate_policies(&symmetric(), 1, false).unwrap();
        assert!((r.value(State::new(0, 1)).unwrap() - 1.0 / 0.35).abs() < 1e-12);
        assert!((r.value(State::new(1, 0)).unwrap() - 2.0 / 0.35).abs() < 1e-12);
    }

    #[test]
    fn enumeration_refuses_large_spaces() {
        assert!(matches!(
            enumerate_policies(&example1(), 5, false),
            Err(OracleError::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn value_iteration_matches_solver() {
        let r = value_iteration(&example1(), 15, DEFAULT_VI_TOLERANCE).unwrap();
        assert!(r.residual <= 1e-6, "{r:?}");
        assert!(r.convergence_gap.unwrap() < DEFAULT_VI_TOLERANCE);
    }

    #[test]
    fn tighter_tolerance_does_not_hurt() {
        let a = value_iteration(&symmetric(), 6, 1e-8).unwrap();
        let b = value_iteration(&symmetric(), 6, 5e-9).unwrap();
        assert!(b.residual <= a.residual);
    }

    #[test]
    fn three_way_agreement() {
        let e = enumerate_policies(&symmetric(), 2, false).unwrap();
        let v = value_iteration(&symmetric(), 2, DEFAULT_VI_TOLERANCE).unwrap();
        for (a, b) in e.values.iter().zip(&v.values) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn value_iteration_errors() {
        assert_eq!(value_iteration(&symmetric(), 3, 0.0), Err(OracleError::BadTolerance));
        assert!(matches!(
            value_iteration_capped(&symmetric(), 10, 1e-10, 3),
            Err(OracleError::MaxIterationsExceeded { .. })
        ));
    }
}
