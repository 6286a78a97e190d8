//! Flat-file formats: value/policy and decision-grid CSV, instance and
//! report JSON.
//!
//! Floats are written with 17 significant digits so files round-trip and
//! compare byte for byte.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::IoError;
use crate::model::{feasible_allocations, Allocation, State, SystemParams};
use crate::solver::{Policy, Triangle, ValueTable};
use crate::structure::DecisionFunctions;

pub const VALUE_POLICY_HEADER: [&str; 9] = ["x1", "x2", "V", "rho1", "rho2", "d1", "d2", "flex", "q_gap"];
pub const DECISION_GRID_HEADER: [&str; 8] = ["x1", "x2", "f", "g", "d", "dtilde", "dhat", "dbar"];

/// Stable float rendering: 17 significant digits, `inf`/`-inf`/`nan` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// One row per state in level order. Rates are in original units.
pub fn write_value_policy_csv<W: Write>(table: &ValueTable, policy: &Policy, out: W) -> Result<(), IoError> {
    let scale = table.params.uniformization_scale;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VALUE_POLICY_HEADER)?;
    for s in table.triangle().states() {
        let v = table.get(s).expect("in domain");
        let mut row = vec![s.x1.to_string(), s.x2.to_string(), fmt_f64(v)];
        match policy.action(s) {
            Some(a) => row.extend([
                fmt_f64(a.rho1 * scale),
                fmt_f64(a.rho2 * scale),
                a.d1.label().to_string(),
                a.d2.label().to_string(),
                a.flex.label().to_string(),
                fmt_f64(policy.gap(s).unwrap_or(f64::NAN)),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(field: &str, row: usize, name: &str) -> Result<f64, IoError> {
    field.trim().parse::<f64>().map_err(|_| IoError::Parse {
        row,
        message: format!("{name} = {field:?} is not a number"),
    })
}

fn parse_u32(field: &str, row: usize, name: &str) -> Result<u32, IoError> {
    field.trim().parse::<u32>().map_err(|_| IoError::Parse {
        row,
        message: format!("{name} = {field:?} is not a state coordinate"),
    })
}

/// Reads a policy written by [`write_value_policy_csv`] (or edited by hand)
/// and maps each row onto a feasible allocation of `params`. Rows are
/// matched on the server labels and on the rates.
pub fn read_policy_csv<R: Read>(input: R, params: &SystemParams) -> Result<Policy, IoError> {
    let p = params.prepare()?;
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| IoError::Parse {
            row: 0,
            message: format!("missing column {name}"),
        })
    };
    let [cx1, cx2, cr1, cr2, cd1, cd2, cf] = ["x1", "x2", "rho1", "rho2", "d1", "d2", "flex"].map(col);
    let (cx1, cx2, cr1, cr2, cd1, cd2, cf) = (cx1?, cx2?, cr1?, cr2?, cd1?, cd2?, cf?);

    let mut rows: Vec<(State, Option<Allocation>)> = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let s = State::new(parse_u32(field(cx1), row, "x1")?, parse_u32(field(cx2), row, "x2")?);
        if s.is_empty() {
            rows.push((s, None));
            continue;
        }
        let rho1 = parse_f64(field(cr1), row, "rho1")? / p.uniformization_scale;
        let rho2 = parse_f64(field(cr2), row, "rho2")? / p.uniformization_scale;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
        let alloc = feasible_allocations(s, &p)?
            .into_iter()
            .find(|a| {
                a.d1.label() == field(cd1).trim()
                    && a.d2.label() == field(cd2).trim()
                    && a.flex.label() == field(cf).trim()
                    && close(a.rho1, rho1)
                    && close(a.rho2, rho2)
            })
            .ok_or_else(|| IoError::Parse {
                row,
                message: format!("no feasible allocation at {s} matches the row"),
            })?;
        rows.push((s, Some(alloc)));
    }
    let n_max = rows.iter().map(|(s, _)| s.total()).max().unwrap_or(0);
    let tri = Triangle::new(n_max);
    let mut actions = vec![None; tri.len()];
    let mut seen = vec![false; tri.len()];
    for (s, a) in rows {
        let i = tri.index(s).expect("within max level");
        actions[i] = a;
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|&b| !b) {
        let s = tri.states().nth(i).expect("index in range");
        return Err(IoError::Parse {
            row: 0,
            message: format!("no row for state {s}; the policy must cover the whole triangle"),
        });
    }
    Ok(Policy {
        n_max,
        actions,
        q_gap: vec![f64::NAN; tri.len()],
    })
}

/// Decision functions on the grid; entries that do not exist are empty.
pub fn write_decision_grid_csv<W: Write>(fns: &DecisionFunctions, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DECISION_GRID_HEADER)?;
    for s in Triangle::new(fns.n_max).states() {
        let (x1, x2) = (s.x1, s.x2);
        let f = (x1 >= 1).then(|| fns.f(x1, x2)).flatten();
        let dtilde = (x1 == 1).then(|| fns.dtilde(x2)).flatten();
        let dhat = (x2 == 1).then(|| fns.dhat(x1)).flatten();
        let dbar = (x1 == 1 && x2 == 1).then(|| fns.dbar()).flatten();
        let d = (x1 >= 1).then(|| fns.d(x1, x2)).flatten();
        w.write_record([
            x1.to_string(),
            x2.to_string(),
            opt(f),
            opt(fns.g(x1, x2)),
            opt(d),
            opt(dtilde),
            opt(dhat),
            opt(dbar),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Instance parameters from JSON. The instance is validated.
pub fn read_instance_json<R: Read>(input: R) -> Result<SystemParams, IoError> {
    let p: SystemParams = serde_json::from_reader(input)?;
    Ok(p.validate()?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ModelError;
    use crate::solver::{evaluate_policy, solve};

    fn example1() -> SystemParams {
        SystemParams::new(0.8, 0.6, 0.6, 8.0, 0.03, 7.43, 16.0, 1.5)
    }

    #[test]
    fn float_format_is_stable() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(-0.0), "-0.0000000000000000e0");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn value_policy_round_trip() {
        let p = example1();
        let (v, pol) = solve(&p, 8).unwrap();
        let mut buf = Vec::new();
        write_value_policy_csv(&v, &pol, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,V,rho1,rho2,d1,d2,flex,q_gap\n0,0,"));
        assert_eq!(text.lines().count(), 1 + Triangle::new(8).len());
        let loaded = read_policy_csv(buf.as_slice(), &p).unwrap();
        assert_eq!(loaded.actions, pol.actions);
        let again = evaluate_policy(&p, &loaded, 8).unwrap();
        assert_eq!(again.values, v.values);
    }

    #[test]
    fn writing_is_deterministic() {
        let (v, pol) = solve(&example1(), 5).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_value_policy_csv(&v, &pol, &mut a).unwrap();
        write_value_policy_csv(&v, &pol, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_policy_rows_are_rejected() {
        let csv = "x1,x2,V,rho1,rho2,d1,d2,flex,q_gap\n0,0,0,,,,,,\n1,0,1,99,0,work,idle,1,0\n0,1,1,0,8.03,idle,work,2,0\n";
        let err = read_policy_csv(csv.as_bytes(), &example1()).unwrap_err();
        assert!(matches!(err, IoError::Parse { row: 2, .. }), "{err}");
        let short = "x1,x2,V,rho1,rho2,d1,d2,flex,q_gap\n0,0,0,,,,,,\n";
        assert!(read_policy_csv(short.as_bytes(), &example1()).is_ok());
        let gap = "x1,x2,V,rho1,rho2,d1,d2,flex,q_gap\n0,0,0,,,,,,\n1,0,1,0.83,0,work,idle,1,0\n";
        assert!(read_policy_csv(gap.as_bytes(), &example1()).is_err());
    }

    #[test]
    fn decision_grid_has_empty_cells() {
        let (v, _) = solve(&example1(), 4).unwrap();
        let fns = DecisionFunctions::new(&v).unwrap();
        let mut buf = Vec::new();
        write_decision_grid_csv(&fns, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,x2,f,g,d,dtilde,dhat,dbar"));
        assert!(text.contains("\n0,0,,0.0000000000000000e0,,,,\n"));
        let row11 = text.lines().find(|l| l.starts_with("1,1,")).unwrap();
        assert_eq!(row11.split(',').filter(|c| c.is_empty()).count(), 0);
    }

    #[test]
    fn instance_json_is_validated() {
        let ok = r#"{"nu1":0.8,"nu2":0.6,"mu1":0.6,"mu2":8.0,"xi1":0.03,"xi2":7.43,"h1":16.0,"h2":1.5}"#;
        assert_eq!(read_instance_json(ok.as_bytes()).unwrap(), example1());
        let bad = r#"{"nu1":0.8,"nu2":0.6,"mu1":0.6,"mu2":8.0,"xi1":0.9,"xi2":7.43,"h1":16.0,"h2":1.5}"#;
        assert!(matches!(
            read_instance_json(bad.as_bytes()),
            Err(IoError::Model(ModelError::CollaborationBoundViolated { .. }))
        ));
        assert!(matches!(read_instance_json("{".as_bytes()), Err(IoError::Json(_))));
    }
}
