//! System parameters, states and the feasible action set.
//!
//! A tandem clearing system has a dedicated server in each station (rates
//! `nu1`, `nu2`, either may be absent when its rate is zero) and one flexible
//! server (rates `mu1`, `mu2`). When the dedicated and flexible server share a
//! single job in station `i` their combined rate is `nu_i + xi_i`.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::ModelError;

/// Rates and holding costs of one problem instance.
///
/// Constructed raw (for example from an instance file), then checked with
/// [`SystemParams::validate`] and normalized with [`SystemParams::uniformize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub nu1: f64,
    pub nu2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub h1: f64,
    pub h2: f64,
    /// Sum of the six rates before normalization. `1.0` for raw input.
    #[serde(default = "unit_scale")]
    pub uniformization_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

/// Which station a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Station {
    One,
    Two,
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Station::One => f.write_str("1"),
            Station::Two => f.write_str("2"),
        }
    }
}

impl SystemParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(nu1: f64, nu2: f64, mu1: f64, mu2: f64, xi1: f64, xi2: f64, h1: f64, h2: f64) -> Self {
        SystemParams {
            nu1,
            nu2,
            mu1,
            mu2,
            xi1,
            xi2,
            h1,
            h2,
            uniformization_scale: 1.0,
        }
    }

    pub fn nu(&self, station: Station) -> f64 {
        match station {
            Station::One => self.nu1,
            Station::Two => self.nu2,
        }
    }

    pub fn mu(&self, station: Station) -> f64 {
        match station {
            Station::One => self.mu1,
            Station::Two => self.mu2,
        }
    }

    pub fn xi(&self, station: Station) -> f64 {
        match station {
            Station::One => self.xi1,
            Station::Two => self.xi2,
        }
    }

    /// True when station `i` has a dedicated server.
    pub fn has_dedicated(&self, station: Station) -> bool {
        self.nu(station) > 0.0
    }

    pub fn rate_sum(&self) -> f64 {
        self.nu1 + self.nu2 + self.mu1 + self.mu2 + self.xi1 + self.xi2
    }

    /// Full collaboration in station `i`: the pair on one job works at `nu_i + mu_i`.
    pub fn is_fully_collaborative(&self, station: Station) -> bool {
        self.has_dedicated(station) && self.xi(station) == self.mu(station)
    }

    /// Checks every parameter constraint and returns the parameters unchanged.
    ///
    /// Collaboration increments larger than the flexible rate (superadditive
    /// service) are rejected: with `xi_i > mu_i` the flexible server always
    /// collaborates, which is the additive model with flexible rates `xi_i`.
    pub fn validate(self) -> Result<Self, ModelError> {
        let named = [
            ("nu1", self.nu1),
            ("nu2", self.nu2),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("xi1", self.xi1),
            ("xi2", self.xi2),
            ("h1", self.h1),
            ("h2", self.h2),
            ("uniformization_scale", self.uniformization_scale),
        ];
        for (name, value) in named {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::NonPositiveRate { name, value });
            }
        }
        for (name, value) in [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("h1", self.h1),
            ("h2", self.h2),
            ("uniformization_scale", self.uniformization_scale),
        ] {
            if value <= 0.0 {
                return Err(ModelError::NonPositiveRate { name, value });
            }
        }
        for station in [Station::One, Station::Two] {
            let (nu, mu, xi) = (self.nu(station), self.mu(station), self.xi(station));
            if nu == 0.0 {
                if xi != 0.0 {
                    return Err(ModelError::OrphanCollaboration { station, xi });
                }
                continue;
            }
            if xi > mu {
                return Err(ModelError::CollaborationBoundViolated {
                    station,
                    reason: format!(
                        "xi{station} = {xi} exceeds mu{station} = {mu}; superadditive collaboration \
                         is equivalent to the additive model with flexible rate xi{station}, \
                         re-enter the instance with mu{station} = xi{station}"
                    ),
                });
            }
            if xi <= 0.0 {
                return Err(ModelError::CollaborationBoundViolated {
                    station,
                    reason: format!("xi{station} = {xi} must be positive when nu{station} > 0"),
                });
            }
            if nu + xi <= mu {
                return Err(ModelError::CollaborationBoundViolated {
                    station,
                    reason: format!(
                        "nu{station} + xi{station} = {} must exceed mu{station} = {mu}",
                        nu + xi
                    ),
                });
            }
        }
        Ok(self)
    }

    /// Rescales the six rates so that they sum to one. The previous sum is
    /// folded into `uniformization_scale`; holding costs are untouched.
    pub fn uniformize(self) -> Self {
        let sum = self.rate_sum();
        if sum == 1.0 {
            return self;
        }
        SystemParams {
            nu1: self.nu1 / sum,
            nu2: self.nu2 / sum,
            mu1: self.mu1 / sum,
            mu2: self.mu2 / sum,
            xi1: self.xi1 / sum,
            xi2: self.xi2 / sum,
            h1: self.h1,
            h2: self.h2,
            uniformization_scale: self.uniformization_scale * sum,
        }
    }

    /// Rates in original time units (undoes [`uniformize`](Self::uniformize)).
    pub fn original_rates(&self) -> SystemParams {
        let s = self.uniformization_scale;
        SystemParams {
            nu1: self.nu1 * s,
            nu2: self.nu2 * s,
            mu1: self.mu1 * s,
            mu2: self.mu2 * s,
            xi1: self.xi1 * s,
            xi2: self.xi2 * s,
            h1: self.h1,
            h2: self.h2,
            uniformization_scale: 1.0,
        }
    }

    /// Validates and normalizes in one step.
    pub fn prepare(self) -> Result<Self, ModelError> {
        Ok(self.validate()?.uniformize())
    }
}

/// Numbers of jobs in Station 1 and Station 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub x1: u32,
    pub x2: u32,
}

impl State {
    pub const EMPTY: State = State { x1: 0, x2: 0 };

    pub fn new(x1: u32, x2: u32) -> Self {
        State { x1, x2 }
    }

    pub fn total(&self) -> u32 {
        self.x1 + self.x2
    }

    pub fn is_empty(&self) -> bool {
        self.x1 == 0 && self.x2 == 0
    }

    pub fn jobs(&self, station: Station) -> u32 {
        match station {
            Station::One => self.x1,
            Station::Two => self.x2,
        }
    }

    /// State after a Station 1 completion.
    pub fn after_station1(&self) -> State {
        State::new(self.x1 - 1, self.x2 + 1)
    }

    /// State after a Station 2 completion.
    pub fn after_station2(&self) -> State {
        State::new(self.x1, self.x2 - 1)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1, self.x2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerMode {
    Work,
    Idle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlexAssignment {
    Station1,
    Station2,
    Idle,
}

impl FlexAssignment {
    pub fn station(&self) -> Option<Station> {
        match self {
            FlexAssignment::Station1 => Some(Station::One),
            FlexAssignment::Station2 => Some(Station::Two),
            FlexAssignment::Idle => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FlexAssignment::Station1 => "1",
            FlexAssignment::Station2 => "2",
            FlexAssignment::Idle => "idle",
        }
    }
}

impl ServerMode {
    pub fn label(&self) -> &'static str {
        match self {
            ServerMode::Work => "work",
            ServerMode::Idle => "idle",
        }
    }
}

/// One server assignment and the service rates it induces.
///
/// Rates are in whatever time unit the parameters used to build it were in
/// (normalized inside the solver).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub d1: ServerMode,
    pub d2: ServerMode,
    pub flex: FlexAssignment,
    pub collab1: bool,
    pub collab2: bool,
    pub rho1: f64,
    pub rho2: f64,
}

impl Allocation {
    pub fn total_rate(&self) -> f64 {
        self.rho1 + self.rho2
    }

    pub fn rho(&self, station: Station) -> f64 {
        match station {
            Station::One => self.rho1,
            Station::Two => self.rho2,
        }
    }

    pub fn dedicated(&self, station: Station) -> ServerMode {
        match station {
            Station::One => self.d1,
            Station::Two => self.d2,
        }
    }

    /// Idle servers that exist in `params`.
    pub fn idle_count(&self, params: &SystemParams) -> u8 {
        let mut n = 0;
        if params.has_dedicated(Station::One) && self.d1 == ServerMode::Idle {
            n += 1;
        }
        if params.has_dedicated(Station::Two) && self.d2 == ServerMode::Idle {
            n += 1;
        }
        if self.flex == FlexAssignment::Idle {
            n += 1;
        }
        n
    }

    /// Sort key for tie-breaking: fewer idle servers, then flexible server
    /// upstream, then separate jobs over collaboration.
    pub fn preference_key(&self, params: &SystemParams) -> (u8, FlexAssignment, u8) {
        (
            self.idle_count(params),
            self.flex,
            self.collab1 as u8 + self.collab2 as u8,
        )
    }

    /// Compact label such as `d1=work d2=idle flex=2c`.
    pub fn label(&self) -> String {
        let collab = if self.collab1 || self.collab2 { "c" } else { "" };
        format!(
            "d1={} d2={} flex={}{}",
            self.d1.label(),
            self.d2.label(),
            self.flex.label(),
            collab
        )
    }

    pub fn same_rates(&self, other: &Allocation) -> bool {
        self.rho1 == other.rho1 && self.rho2 == other.rho2
    }
}

/// Servers present in one station for a given assignment.
fn station_options(
    params: &SystemParams,
    station: Station,
    jobs: u32,
    dedicated: bool,
    flexible: bool,
) -> Vec<(f64, bool)> {
    let (nu, mu, xi) = (params.nu(station), params.mu(station), params.xi(station));
    match (dedicated, flexible) {
        (false, false) => vec![(0.0, false)],
        (true, false) => vec![(nu, false)],
        (false, true) => vec![(mu, false)],
        (true, true) if jobs >= 2 => vec![(nu + mu, false), (nu + xi, true)],
        (true, true) => vec![(nu + xi, true)],
    }
}

/// Every distinct feasible allocation in `state`, ordered by
/// [`Allocation::preference_key`].
///
/// Allocations that induce the same `(rho1, rho2)` pair are collapsed onto
/// the most preferred one. Dominated actions (idling, collaboration with two
/// or more jobs waiting) are kept.
pub fn feasible_allocations(state: State, params: &SystemParams) -> Result<Vec<Allocation>, ModelError> {
    if state.is_empty() {
        return Err(ModelError::EmptySystem);
    }
    let dedicated_modes = |station: Station| -> Vec<ServerMode> {
        if params.has_dedicated(station) && state.jobs(station) > 0 {
            vec![ServerMode::Work, ServerMode::Idle]
        } else {
            vec![ServerMode::Idle]
        }
    };
    let mut flex_modes = Vec::with_capacity(3);
    if state.x1 > 0 {
        flex_modes.push(FlexAssignment::Station1);
    }
    if state.x2 > 0 {
        flex_modes.push(FlexAssignment::Station2);
    }
    flex_modes.push(FlexAssignment::Idle);

    let mut all = Vec::new();
    for &d1 in &dedicated_modes(Station::One) {
        for &d2 in &dedicated_modes(Station::Two) {
            for &flex in &flex_modes {
                let s1 = station_options(
                    params,
                    Station::One,
                    state.x1,
                    d1 == ServerMode::Work,
                    flex == FlexAssignment::Station1,
                );
                let s2 = station_options(
                    params,
                    Station::Two,
                    state.x2,
                    d2 == ServerMode::Work,
                    flex == FlexAssignment::Station2,
                );
                for &(rho1, collab1) in &s1 {
                    for &(rho2, collab2) in &s2 {
                        if rho1 + rho2 <= 0.0 {
                            continue;
                        }
                        all.push(Allocation {
                            d1,
                            d2,
                            flex,
                            collab1,
                            collab2,
                            rho1,
                            rho2,
                        });
                    }
                }
            }
        }
    }
    all.sort_by_key(|a| a.preference_key(params));
    let mut out: Vec<Allocation> = Vec::with_capacity(all.len());
    for a in all {
        if !out.iter().any(|b| b.same_rates(&a)) {
            out.push(a);
        }
    }
    Ok(out)
}

/// Largest Station `i` rate reachable when the flexible server is at
/// `flex` and the dedicated servers work.
pub fn max_rate_given_flex(state: State, params: &SystemParams, station: Station, flex: FlexAssignment) -> f64 {
    let jobs = state.jobs(station);
    if jobs == 0 {
        return 0.0;
    }
    let ded = params.has_dedicated(station);
    let flex_here = flex.station() == Some(station);
    station_options(params, station, jobs, ded, flex_here)
        .into_iter()
        .map(|(r, _)| r)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> SystemParams {
        SystemParams::new(0.8, 0.6, 0.6, 8.0, 0.03, 7.43, 16.0, 1.5)
    }

    fn symmetric() -> SystemParams {
        SystemParams::new(0.25, 0.25, 0.15, 0.15, 0.1, 0.1, 1.0, 1.0)
    }

    #[test]
    fn example_one_is_valid() {
        let p = example1().validate().unwrap();
        assert!(!p.is_fully_collaborative(Station::One));
    }

    #[test]
    fn superadditive_rejected() {
        let p = SystemParams::new(1.0, 1.0, 1.0, 1.0, 2.0, 0.5, 1.0, 1.0);
        match p.validate() {
            Err(ModelError::CollaborationBoundViolated { station, reason }) => {
                assert_eq!(station, Station::One);
                assert!(reason.contains("additive"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn orphan_collaboration_rejected() {
        let p = SystemParams::new(0.0, 1.0, 1.0, 1.0, 0.1, 0.5, 1.0, 1.0);
        assert!(matches!(
            p.validate(),
            Err(ModelError::OrphanCollaboration { station: Station::One, .. })
        ));
    }

    #[test]
    fn weak_collaboration_rejected() {
        // nu1 + xi1 = 0.3 <= mu1
        let p = SystemParams::new(0.2, 1.0, 1.0, 1.0, 0.1, 0.5, 1.0, 1.0);
        assert!(matches!(
            p.validate(),
            Err(ModelError::CollaborationBoundViolated { .. })
        ));
        let p = SystemParams::new(1.0, 1.0, 1.0, 0.0, 0.5, 0.0, 1.0, 1.0);
        assert!(matches!(p.validate(), Err(ModelError::NonPositiveRate { name: "mu2", .. })));
        let p = SystemParams::new(1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 1.0, -1.0);
        assert!(matches!(p.validate(), Err(ModelError::NonPositiveRate { name: "h2", .. })));
    }

    #[test]
    fn uniformize_halves_rates_summing_to_two() {
        let p = SystemParams::new(0.5, 0.5, 0.3, 0.3, 0.2, 0.2, 3.0, 1.0).uniformize();
        assert_eq!(p.uniformization_scale, 2.0);
        assert_eq!(p.nu1, 0.25);
        assert_eq!(p.mu2, 0.15);
        assert_eq!(p.h1, 3.0);
        let q = symmetric().uniformize();
        assert_eq!(q, symmetric());
    }

    #[test]
    fn uniformize_example_one() {
        let p = example1().uniformize();
        assert!((p.uniformization_scale - 17.46).abs() < 1e-12);
        assert!((p.rate_sum() - 1.0).abs() <= 1e-15);
        assert!((p.mu2 - 8.0 / 17.46).abs() < 1e-15);
        let back = p.original_rates();
        assert!((back.xi2 - 7.43).abs() < 1e-12);
    }

    #[test]
    fn single_job_upstream_actions() {
        let p = example1();
        let acts = feasible_allocations(State::new(1, 0), &p).unwrap();
        let rates: Vec<f64> = acts.iter().map(|a| a.rho1).collect();
        assert_eq!(acts.len(), 3);
        assert!(rates.contains(&(0.8 + 0.03)));
        assert!(rates.contains(&0.8));
        assert!(rates.contains(&0.6));
        assert!(acts.iter().all(|a| a.rho2 == 0.0));
        // collaboration is forced with a single job
        assert!(acts.iter().all(|a| a.rho1 != 0.8 + 0.6));
    }

    #[test]
    fn two_jobs_downstream_actions() {
        let p = example1();
        let acts = feasible_allocations(State::new(0, 2), &p).unwrap();
        let pairs: Vec<(f64, f64)> = acts.iter().map(|a| (a.rho1, a.rho2)).collect();
        for want in [(0.0, 0.6 + 8.0), (0.0, 0.6 + 7.43), (0.0, 0.6), (0.0, 8.0)] {
            assert!(pairs.contains(&want), "missing {want:?}");
        }
        assert_eq!(pairs.len(), 4);
        assert_eq!(acts[0].rho2, 8.6);
    }

    #[test]
    fn no_upstream_dedicated_server() {
        let p = SystemParams::new(0.0, 1.0, 0.7, 0.5, 0.0, 0.4, 1.0, 1.0);
        let acts = feasible_allocations(State::new(2, 2), &p).unwrap();
        let pairs: Vec<(f64, f64)> = acts.iter().map(|a| (a.rho1, a.rho2)).collect();
        assert!(pairs.contains(&(0.7, 1.0)));
        assert!(pairs.contains(&(0.0, 1.5)));
        assert!(pairs.contains(&(0.0, 1.4)));
        assert!(pairs.contains(&(0.7, 0.0)));
        assert!(pairs.contains(&(0.0, 1.0)));
        assert!(pairs.contains(&(0.0, 0.5)));
        assert_eq!(pairs.len(), 6);
        assert!(acts.iter().all(|a| a.d1 == ServerMode::Idle));
    }

    #[test]
    fn empty_state_is_an_error() {
        assert!(matches!(
            feasible_allocations(State::EMPTY, &example1()),
            Err(ModelError::EmptySystem)
        ));
    }

    #[test]
    fn duplicate_rates_keep_preferred_label() {
        // nu1 == mu1: dedicated-only and flexible-only give the same rho1
        let p = SystemParams::new(1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 1.0, 1.0);
        let acts = feasible_allocations(State::new(1, 0), &p).unwrap();
        assert_eq!(acts.len(), 2);
        let single = acts.iter().find(|a| a.rho1 == 1.0).unwrap();
        // both variants leave one server idle; the flexible server upstream wins
        assert_eq!(single.flex, FlexAssignment::Station1);
    }

    #[test]
    fn preference_order_puts_non_idling_first() {
        let p = symmetric();
        let acts = feasible_allocations(State::new(2, 2), &p).unwrap();
        assert_eq!(acts[0].idle_count(&p), 0);
        assert_eq!(acts[0].flex, FlexAssignment::Station1);
        assert!(!acts[0].collab1);
    }
}
