//! Continuous-time Monte Carlo estimate of the holding cost until clearing
//! under a fixed policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{SimError, SolveError};
use crate::model::{State, SystemParams};
use crate::solver::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub start: State,
    pub replications: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(start: State, replications: u64, seed: u64) -> Self {
        SimConfig {
            start,
            replications,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(replications)`.
    pub se: f64,
    pub reps: u64,
    /// SHA-256 of the per-replication costs, little-endian, in order.
    pub digest: String,
}

impl SimResult {
    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// One sample path from `start` to the empty state.
fn replicate(params: &SystemParams, policy: &Policy, start: State, rng: &mut ChaCha8Rng) -> Result<f64, SimError> {
    let scale = params.uniformization_scale;
    let mut s = start;
    let mut cost = 0.0;
    while !s.is_empty() {
        let a = policy.action(s).ok_or(SolveError::MissingAction(s))?;
        let (r1, r2) = (a.rho1 * scale, a.rho2 * scale);
        let total = r1 + r2;
        if !(total > 0.0) {
            return Err(SimError::DeadPolicy(s));
        }
        let sojourn = Exp::new(total).expect("positive rate").sample(rng);
        cost += (params.h1 * s.x1 as f64 + params.h2 * s.x2 as f64) * sojourn;
        let u: f64 = rand::Rng::gen(rng);
        s = if u * total < r1 { s.after_station1() } else { s.after_station2() };
    }
    Ok(cost)
}

/// Estimates the expected holding cost from `config.start` under `policy`.
/// `policy` must come from the same parameters (its rates are normalized).
pub fn simulate(params: &SystemParams, policy: &Policy, config: &SimConfig) -> Result<SimResult, SimError> {
    if config.replications < 1 {
        return Err(SimError::NoReplications);
    }
    let p = params.prepare().map_err(SolveError::from)?;
    let costs: Vec<f64> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ rep);
            replicate(&p, policy, config.start, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let n = costs.len() as f64;
    let mean = pairwise_sum(&costs) / n;
    let sq: Vec<f64> = costs.iter().map(|c| (c - mean) * (c - mean)).collect();
    let var = if costs.len() > 1 { pairwise_sum(&sq) / (n - 1.0) } else { 0.0 };
    let mut hasher = Sha256::new();
    for c in &costs {
        hasher.update(c.to_le_bytes());
    }
    let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(SimResult {
        mean,
        se: (var / n).sqrt(),
        reps: config.replications,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Allocation;
    use crate::solver::solve;

    fn example1() -> SystemParams {
        SystemParams::new(0.8, 0.6, 0.6, 8.0, 0.03, 7.43, 16.0, 1.5)
    }

    #[test]
    fn single_downstream_job() {
        let p = example1();
        let (_, pol) = solve(&p, 2).unwrap();
        let r = simulate(&p, &pol, &SimConfig::new(State::new(0, 1), 100_000, 3)).unwrap();
        assert!(r.covers(p.h2 / (p.nu2 + p.xi2), 3.0), "{r:?}");
    }

    #[test]
    fn empty_start_costs_nothing() {
        let p = example1();
        let (_, pol) = solve(&p, 2).unwrap();
        let r = simulate(&p, &pol, &SimConfig::new(State::EMPTY, 10, 0)).unwrap();
        assert_eq!((r.mean, r.se), (0.0, 0.0));
    }

    #[test]
    fn optimal_policy_cost_from_five_five() {
        let p = SystemParams::new(1.2, 1.5, 1.0, 0.8, 0.4, 0.5, 3.0, 2.0);
        let (v, pol) = solve(&p, 10).unwrap();
        let r = simulate(&p, &pol, &SimConfig::new(State::new(5, 5), 20_000, 9)).unwrap();
        assert!(r.covers(v.value(5, 5), 3.0), "{r:?} vs {}", v.value(5, 5));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = example1();
        let (_, pol) = solve(&p, 6).unwrap();
        let c = SimConfig::new(State::new(3, 3), 500, 42);
        let a = simulate(&p, &pol, &c).unwrap();
        assert_eq!(a, simulate(&p, &pol, &c).unwrap());
        assert_ne!(a.digest, simulate(&p, &pol, &SimConfig { seed: 43, ..c }).unwrap().digest);
    }

    #[test]
    fn dead_policy_is_reported() {
        let p = example1();
        let (_, mut pol) = solve(&p, 2).unwrap();
        let idle = Allocation {
            rho1: 0.0,
            rho2: 0.0,
            ..*pol.action(State::new(0, 1)).unwrap()
        };
        pol.actions[1] = Some(idle);
        let r = simulate(&p, &pol, &SimConfig::new(State::new(1, 1), 10, 0));
        assert_eq!(r, Err(SimError::DeadPolicy(State::new(0, 1))));
        assert_eq!(
            simulate(&p, &pol, &SimConfig::new(State::new(1, 1), 0, 0)),
            Err(SimError::NoReplications)
        );
    }
}
