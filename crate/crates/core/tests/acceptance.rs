//! Acceptance suite. Runs every criterion in order on one thread of control
//! so the wall-clock limits are not distorted by other tests, prints one
//! PASS/FAIL line per criterion and fails if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tandem_core::experiments::{
    example1_params, example2_params, generate_instance, run_batch, BatchReport, ExperimentConfig, RegimeName,
};
use tandem_core::oracle::{enumerate_policies, value_iteration};
use tandem_core::simulate::{simulate, SimConfig};
use tandem_core::structure::{check_boundary_closed_forms, verify_appendix_recursions, DecisionFunctions, Regime};
use tandem_core::{solve, FlexAssignment, State, SystemParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed <= limit
}

fn batch(regime: RegimeName, count: u64, seed: u64, n_max: u32) -> BatchReport {
    let cfg = ExperimentConfig::new(regime).with_count(count).with_seed(seed).with_n_max(n_max);
    run_batch(&cfg).expect("batch runs")
}

/// Claims with violations, failed instances, and the checked count of each
/// required claim.
fn batch_problems(r: &BatchReport, required: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = r
        .claims
        .iter()
        .filter(|(_, t)| t.violations > 0)
        .map(|(k, t)| format!("{k} violated {}/{}", t.violations, t.checked))
        .collect();
    if !r.failures.is_empty() {
        out.push(format!("{} instances failed to solve", r.failures.len()));
    }
    for &claim in required {
        match r.claim(claim) {
            Some(t) if t.checked == r.instances => {}
            Some(t) => out.push(format!("{claim} checked on {}/{} instances", t.checked, r.instances)),
            None => out.push(format!("{claim} never checked")),
        }
    }
    out
}

fn batch_outcome(r: &BatchReport, required: &[&str], elapsed: Duration, limit: Option<Duration>) -> Outcome {
    let mut problems = batch_problems(r, required);
    if let Some(l) = limit {
        if !within(l, elapsed) {
            problems.push(format!("took {elapsed:.1?}, limit {l:?}"));
        }
    }
    let checked: u64 = r.claims.values().map(|t| t.checked).sum();
    if problems.is_empty() {
        outcome(true, format!("{}: {} instances, {checked} claim checks, {elapsed:.1?}", r.regime, r.instances))
    } else {
        outcome(false, format!("{}: {}", r.regime, problems.join("; ")))
    }
}

/// Random valid instance with both dedicated servers present or absent at
/// random, independent of the regime generator.
fn random_instance(rng: &mut ChaCha8Rng) -> SystemParams {
    loop {
        let mut rate = || 10f64.powf(rng.gen_range(-1.0..1.0));
        let (nu1, nu2, mu1, mu2) = (rate(), rate(), rate(), rate());
        let (h1, h2) = (rate(), rate());
        let nu1 = if rng.gen_bool(0.2) { 0.0 } else { nu1 };
        let nu2 = if rng.gen_bool(0.2) { 0.0 } else { nu2 };
        let xi1 = if nu1 > 0.0 { rng.gen_range(0.05..=1.0) * mu1 } else { 0.0 };
        let xi2 = if nu2 > 0.0 { rng.gen_range(0.05..=1.0) * mu2 } else { 0.0 };
        let p = SystemParams::new(nu1, nu2, mu1, mu2, xi1, xi2, h1, h2);
        if p.validate().is_ok() {
            return p;
        }
    }
}

fn c1_boundary() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for i in 0..100 {
        let p = random_instance(&mut rng);
        let (v, _) = solve(&p, 40).expect("solves");
        let verdict = check_boundary_closed_forms(&v);
        worst = worst.max(verdict.residual.unwrap_or(0.0));
        if !verdict.pass {
            bad.push(i);
        }
    }
    let e = t.elapsed();
    let pass = bad.is_empty() && worst <= 1e-12 && within(Duration::from_secs(5), e);
    outcome(pass, format!("100 instances, max relative error {worst:.2e}, failing {bad:?}, {e:.1?}"))
}

fn flex_at(p: &SystemParams, s: State, want: FlexAssignment, label: &str) -> Result<(), String> {
    let (_, pol) = solve(p, s.total() + 4).map_err(|e| e.to_string())?;
    let a = pol.action(s).ok_or("no action")?;
    if a.flex == want && a.label() == label {
        Ok(())
    } else {
        Err(format!("at {s}: {} (expected {label})", a.label()))
    }
}

fn c2_example1() -> Outcome {
    let t = Instant::now();
    let p = example1_params();
    let r = [
        flex_at(&p, State::new(3, 3), FlexAssignment::Station2, "d1=work d2=work flex=2"),
        flex_at(&p, State::new(2, 4), FlexAssignment::Station1, "d1=work d2=work flex=1"),
    ];
    let e = t.elapsed();
    let errs: Vec<String> = r.into_iter().filter_map(Result::err).collect();
    outcome(
        errs.is_empty() && within(Duration::from_secs(1), e),
        if errs.is_empty() { format!("(3,3) downstream, (2,4) upstream, {e:.1?}") } else { errs.join("; ") },
    )
}

fn c3_example2() -> Outcome {
    let t = Instant::now();
    let p = example2_params();
    let lhs = p.mu1 * (p.h1 - p.h2);
    let rhs = p.mu2 * p.h2;
    let arith = (lhs - 9.18).abs() < 1e-9 && (rhs - 9.24).abs() < 1e-9 && lhs < rhs;
    let r = flex_at(&p, State::new(3, 1), FlexAssignment::Station1, "d1=work d2=idle flex=1");
    let e = t.elapsed();
    outcome(
        arith && r.is_ok() && within(Duration::from_secs(1), e),
        format!("mu1(h1-h2) = {lhs:.2} < mu2 h2 = {rhs:.2}; (3,1): {}; {e:.1?}", r.err().unwrap_or("upstream".into())),
    )
}

fn c5_violation_hunt() -> Outcome {
    let t = Instant::now();
    let r = batch(RegimeName::Thm1ViolateBoth, 10_000, 0, 40);
    let e = t.elapsed();
    let found = r.summary.slope_below_minus_one;
    let (_, pol) = solve(&example1_params(), 12).expect("solves");
    let fns = DecisionFunctions::new(&solve(&example1_params(), 12).expect("solves").0).expect("fns");
    let fallback = tandem_core::structure::extract_switching_curve(&pol, &fns)
        .map(|c| c.slope_witness.is_some())
        .unwrap_or(false);
    outcome(
        found >= 1 && fallback,
        format!("{found} of 10000 instances with a slope below -1; Example 1 witness {fallback}; {e:.1?}"),
    )
}

fn c9_identities() -> Outcome {
    let cfg = ExperimentConfig::new(RegimeName::Thm1ViolateBoth).with_seed(9).with_n_max(40);
    let cfg_b = ExperimentConfig::new(RegimeName::Thm1Hypotheses).with_seed(9).with_n_max(40);
    let mut worst = 0.0f64;
    let mut failing = Vec::new();
    let mut identities = 0usize;
    for i in 0..100u64 {
        let c = if i % 2 == 0 { &cfg } else { &cfg_b };
        let p = generate_instance(c, i).expect("instance");
        assert!(Regime::classify(&p.uniformize()).non_idling);
        let (v, _) = solve(&p, 40).expect("solves");
        let fns = DecisionFunctions::new(&v).expect("fns");
        let rep = verify_appendix_recursions(&fns).expect("identities");
        identities = identities.max(rep.verdicts.len());
        for verdict in &rep.verdicts {
            worst = worst.max(verdict.residual.unwrap_or(0.0));
            if !verdict.pass {
                failing.push(format!("{i}:{}", verdict.claim));
            }
        }
    }
    outcome(
        failing.is_empty() && worst <= 1e-8 && identities == 8,
        format!("100 instances, {identities} identities, max relative residual {worst:.2e}, failing {failing:?}"),
    )
}

fn c10_oracles() -> Outcome {
    let t = Instant::now();
    let mut worst_small = 0.0f64;
    let mut worst_vi = 0.0f64;
    let mut bad = Vec::new();
    let cfg = ExperimentConfig::new(RegimeName::Any).with_seed(10);
    for i in 0..50u64 {
        let p = generate_instance(&cfg, i).expect("instance");
        let n = if i % 2 == 0 { 3 } else { 2 };
        let (v, _) = solve(&p, n).expect("solves");
        let en = enumerate_policies(&p, n, false).expect("enumeration");
        let vi = value_iteration(&p, n, 1e-10).expect("vi");
        for s in v.triangle().states() {
            let x = v.get(s).unwrap();
            let gap = (x - en.value(s).unwrap()).abs().max((x - vi.value(s).unwrap()).abs());
            worst_small = worst_small.max(gap);
        }
        let vi15 = value_iteration(&p, 15, 1e-10).expect("vi");
        worst_vi = worst_vi.max(vi15.residual);
        if !en.agrees(1e-6) || !vi.agrees(1e-6) || !vi15.agrees(1e-6) {
            bad.push(i);
        }
    }
    outcome(
        bad.is_empty() && worst_small <= 1e-6 && worst_vi <= 1e-6,
        format!(
            "50 instances: enumeration/VI vs solve at n_max 2-3 max {worst_small:.2e}; VI at n_max 15 max {worst_vi:.2e}; failing {bad:?}; {:.1?}",
            t.elapsed()
        ),
    )
}

fn c11_simulation() -> Outcome {
    let cfg = ExperimentConfig::new(RegimeName::Any).with_seed(11);
    let mut instances = vec![example1_params(), example2_params()];
    instances.extend((0..3).map(|i| generate_instance(&cfg, i).expect("instance")));
    let start = State::new(5, 5);
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, p) in instances.iter().enumerate() {
        let t = Instant::now();
        let (v, pol) = solve(p, 10).expect("solves");
        let target = v.get(start).unwrap();
        let r = simulate(p, &pol, &SimConfig::new(start, 100_000, 1000 + i as u64)).expect("simulates");
        let e = t.elapsed();
        let z = (r.mean - target) / r.se;
        pass &= r.covers(target, 3.0) && within(Duration::from_secs(60), e);
        lines.push(format!("z={z:+.2} ({e:.1?})"));
    }
    outcome(pass, format!("V(5,5) vs 1e5 replications: {}", lines.join(", ")))
}

#[test]
fn acceptance() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, name: &'static str, o: Outcome| {
        println!("{} criterion {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    let mut solved: Vec<BatchReport> = Vec::new();

    record(1, "boundary closed forms", c1_boundary());
    record(2, "example 1 golden", c2_example1());
    record(3, "example 2 golden", c3_example2());

    let t = Instant::now();
    let r = batch(RegimeName::Thm1Hypotheses, 1000, 4, 40);
    record(
        4,
        "thm1 batch",
        batch_outcome(&r, &["thm1_threshold", "thm1_slope"], t.elapsed(), Some(Duration::from_secs(120))),
    );
    solved.push(r);

    record(5, "thm1 violation hunt", c5_violation_hunt());

    let mut parts = Vec::new();
    let mut pass = true;
    for (regime, required) in [
        (RegimeName::Thm2Priority, "thm2_ii_upstream_priority"),
        (RegimeName::Thm3Priority, "thm3_ii_downstream_priority"),
        (RegimeName::Thm6Nu2Zero, "thm6_downstream_priority"),
    ] {
        let t = Instant::now();
        let r = batch(regime, 500, 6, 40);
        let extra: &[&str] = if regime == RegimeName::Thm6Nu2Zero { &["thm6_t2_nondecreasing"] } else { &[] };
        let mut req = vec![required];
        req.extend_from_slice(extra);
        let o = batch_outcome(&r, &req, t.elapsed(), None);
        pass &= o.pass;
        parts.push(o.detail);
        solved.push(r);
    }
    record(6, "priority rules", outcome(pass, parts.join(" | ")));

    let mut parts = Vec::new();
    let mut pass = true;
    for (regime, required) in [
        (RegimeName::IdlingH1LtH2, &["thm4_idling_threshold_exists"][..]),
        (RegimeName::Thm5Nu2GeMu2, &["thm4_idling_threshold_exists", "thm5_two_switching_points"][..]),
        (RegimeName::Thm5FullCollaboration, &["thm4_idling_threshold_exists", "thm5_two_switching_points"][..]),
    ] {
        let t = Instant::now();
        let r = batch(regime, 500, 7, 200);
        let o = batch_outcome(&r, required, t.elapsed(), None);
        pass &= o.pass;
        parts.push(o.detail);
        solved.push(r);
    }
    record(7, "idling structure", outcome(pass, parts.join(" | ")));

    let t = Instant::now();
    let r = batch(RegimeName::Thm1Hypotheses, 500, 8, 200);
    let mut o = batch_outcome(
        &r,
        &[
            "lemma1_value_increasing",
            "lemma3_f_positive",
            "lemma4_dtilde_decreasing",
            "lemma4_dtilde_crosses_zero",
            "lemma5_d_decreasing",
            "lemma5_d_crosses_zero",
        ],
        t.elapsed(),
        None,
    );
    for l6 in ["lemma6_i", "lemma6_ii", "lemma6_iii"] {
        if r.claim(l6).map(|t| t.checked).unwrap_or(0) == 0 {
            o.pass = false;
            o.detail.push_str(&format!("; {l6} never checked"));
        }
    }
    record(8, "lemma suites", o);
    solved.push(r);

    record(9, "appendix identities", c9_identities());
    record(10, "oracle triangulation", c10_oracles());
    record(11, "simulation cross-check", c11_simulation());

    let mut checked = 0u64;
    let mut violations = 0u64;
    for r in &solved {
        for k in ["prop1_max_rho2", "prop2_extreme_rho1"] {
            let t = r.claim(k).cloned().unwrap_or_default();
            checked += t.checked;
            violations += t.violations;
        }
    }
    let instances: u64 = solved.iter().map(|r| r.instances).sum();
    record(
        12,
        "propositions",
        outcome(
            violations == 0 && checked == 2 * instances,
            format!("{instances} solved instances, {checked} checks, {violations} violations"),
        ),
    );

    let failed: Vec<String> = results.iter().filter(|r| !r.2.pass).map(|r| format!("{} {}", r.0, r.1)).collect();
    println!("{} of {} criteria pass", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
