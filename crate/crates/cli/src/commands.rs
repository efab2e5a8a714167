//! One function per subcommand. Each returns a [`Report`] holding the JSON
//! document, the equivalent CSV table, and the exit status.

use std::f64::consts::LN_2;

use serde::Serialize;
use serde_json::{json, Value};

use ceo_rd::bergertung::check_symmetric_rate;
use ceo_rd::converse::{select_case, solve_numeric, verify_kkt, STATIONARITY_TOL};
use ceo_rd::mcsim::{
    admissible_lambda_w_upper, decomposition_check, empirical_profile, EntryComparison, VALUE_GATE,
};
use ceo_rd::rdcore::{
    check_conditions, distortion_at, frontier_point, solve_lambda_q, Condition, Verdict,
};
use ceo_rd::SourceModel;

use crate::config::{need, RunConfig};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Allowed gap between the numerical optimum and the closed-form rate when
/// the certificate is valid.
pub const GAP_TOL: f64 = 1e-6;

/// Allowed slack on the full-set constraint of the achievable region.
pub const FULL_SET_TOL: f64 = 1e-10;

const DEFAULT_STEPS: usize = 50;
const DEFAULT_N: usize = 100_000;
const DEFAULT_SEED: u64 = 42;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INCONSISTENT: u8 = 3;
pub const EXIT_STATISTICAL: u8 = 4;

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub struct Report {
    pub json: Value,
    pub table: Table,
    pub exit: u8,
}

/// Twelve significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn verdict(c: &Condition) -> &'static str {
    match c.verdict {
        Verdict::Holds => "holds",
        Verdict::Fails => "fails",
        Verdict::Redundant => "redundant",
        Verdict::NotApplicable => "not-applicable",
    }
}

struct Units {
    bits: bool,
}

impl Units {
    fn rate(&self, nats: f64) -> f64 {
        if self.bits {
            nats / LN_2
        } else {
            nats
        }
    }

    fn name(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }
}

fn envelope(command: &str, cfg: &RunConfig, model: &SourceModel) -> serde_json::Map<String, Value> {
    let units = Units { bits: cfg.bits() };
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("command".into(), json!(command));
    doc.insert("units".into(), json!(units.name()));
    doc.insert("model".into(), json!(model));
    doc
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Header of the frontier table: `d_k,lambda_q,rate,d_<k>..d_<ell>,cond1,cond2`.
pub fn frontier_header(k: usize, ell: usize) -> Vec<String> {
    let mut h = vec!["d_k".to_string(), "lambda_q".into(), "rate".into()];
    h.extend((k..=ell).map(|j| format!("d_{j}")));
    h.push("cond1".into());
    h.push("cond2".into());
    h
}

fn frontier_row(
    model: &SourceModel,
    k: usize,
    d_k: f64,
    units: &Units,
) -> Result<(Vec<String>, Value), CliError> {
    let p = frontier_point(model, k, d_k)?;
    let rep = check_conditions(model, k, d_k)?;
    let mut row = vec![num(d_k), num(p.lambda_q), num(units.rate(p.rate))];
    row.extend(p.profile.iter().map(|d| num(*d)));
    row.push(verdict(&rep.cond1).into());
    row.push(verdict(&rep.cond2).into());
    let profile: Vec<Value> = p
        .profile_entries()
        .map(|(j, d)| json!({"j": j, "d_j": d}))
        .collect();
    let point = json!({
        "k": k,
        "d_k": d_k,
        "lambda_q": p.lambda_q,
        "rate": units.rate(p.rate),
        "profile": profile,
    });
    Ok((row, json!({"point": point, "conditions": to_value(&rep)})))
}

pub fn point(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let k = need(cfg.k, "k")?;
    let d = need(cfg.d_k, "dk")?;
    let units = Units { bits: cfg.bits() };
    let (row, body) = frontier_row(&model, k, d, &units)?;
    let mut doc = envelope("point", cfg, &model);
    doc.insert("point".into(), body["point"].clone());
    doc.insert("conditions".into(), body["conditions"].clone());
    Ok(Report {
        json: Value::Object(doc),
        table: Table {
            header: frontier_header(k, model.ell()),
            rows: vec![row],
        },
        exit: EXIT_OK,
    })
}

/// `steps` points from `lo` to `hi` inclusive; a single step yields `lo`.
pub fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

pub fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let k = need(cfg.k, "k")?;
    model.check_index("k", k, 1)?;
    let steps = cfg.steps.unwrap_or(DEFAULT_STEPS);
    if steps == 0 {
        return Err(CliError::Domain("--steps must be at least 1".into()));
    }
    let (lo, hi) = (model.d_min(k), model.x.gamma);
    let dk_min = cfg.dk_min.unwrap_or(lo + 0.01 * (hi - lo));
    let dk_max = cfg.dk_max.unwrap_or(hi - 0.01 * (hi - lo));
    let units = Units { bits: cfg.bits() };
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for d in grid(dk_min, dk_max, steps) {
        match frontier_row(&model, k, d, &units) {
            Ok((row, body)) => {
                rows.push(row);
                points.push(body);
            }
            Err(CliError::Domain(msg)) => eprintln!("warning: skipping d_k = {d}: {msg}"),
            Err(e) => return Err(e),
        }
    }
    let mut doc = envelope("sweep", cfg, &model);
    doc.insert("k".into(), json!(k));
    doc.insert("rows".into(), Value::Array(points));
    Ok(Report {
        json: Value::Object(doc),
        table: Table {
            header: frontier_header(k, model.ell()),
            rows,
        },
        exit: EXIT_OK,
    })
}

pub fn region(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let k = need(cfg.k, "k")?;
    let d = need(cfg.d_k, "dk")?;
    let p = frontier_point(&model, k, d)?;
    let rep = check_conditions(&model, k, d)?;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (j, dj) in p.profile_entries() {
        let certified = rep.profile_certified(j);
        rows.push(vec![
            j.to_string(),
            num(dj),
            num(model.d_min(j)),
            certified.to_string(),
        ]);
        entries.push(json!({"j": j, "d_j": dj, "d_min": model.d_min(j), "certified": certified}));
    }
    let mut doc = envelope("region", cfg, &model);
    doc.insert("k".into(), json!(k));
    doc.insert("d_k".into(), json!(d));
    doc.insert("lambda_q".into(), json!(p.lambda_q));
    doc.insert("profile".into(), Value::Array(entries));
    Ok(Report {
        json: Value::Object(doc),
        table: Table {
            header: ["j", "d_j", "d_min", "certified"]
                .map(String::from)
                .to_vec(),
            rows,
        },
        exit: EXIT_OK,
    })
}

pub fn conditions(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let k = need(cfg.k, "k")?;
    let d = need(cfg.d_k, "dk")?;
    let rep = check_conditions(&model, k, d)?;
    let mut rows = vec![
        vec![
            "cond1".into(),
            String::new(),
            opt_num(rep.cond1.value),
            verdict(&rep.cond1).into(),
        ],
        vec![
            "cond2".into(),
            String::new(),
            opt_num(rep.cond2.value),
            verdict(&rep.cond2).into(),
        ],
    ];
    for p in &rep.profile {
        rows.push(vec![
            "cond3".into(),
            p.j.to_string(),
            opt_num(p.cond3.value),
            verdict(&p.cond3).into(),
        ]);
        rows.push(vec![
            "cond4".into(),
            p.j.to_string(),
            opt_num(p.cond4.value),
            verdict(&p.cond4).into(),
        ]);
    }
    let mut doc = envelope("conditions", cfg, &model);
    doc.insert("rate_certified".into(), json!(rep.rate_certified()));
    doc.insert("conditions".into(), to_value(&rep));
    Ok(Report {
        json: Value::Object(doc),
        table: Table {
            header: ["condition", "j", "value", "verdict"]
                .map(String::from)
                .to_vec(),
            rows,
        },
        exit: EXIT_OK,
    })
}

pub fn verify(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let k = need(cfg.k, "k")?;
    let d = need(cfg.d_k, "dk")?;
    let j = cfg.j.unwrap_or(model.ell());
    let tol = cfg.tol.unwrap_or(STATIONARITY_TOL);
    model.check_index("k", k, 1)?;
    model.check_index("j", j, k)?;
    let case = select_case(&model, j)?;
    let cert = verify_kkt(&model, k, j, d, case, tol)?;
    let opt = solve_numeric(&model, k, j, d, case)?;
    let gap = (opt.objective - cert.rate_bar).abs();

    let (status, exit) = if cert.valid {
        if gap <= GAP_TOL {
            ("valid", EXIT_OK)
        } else {
            ("inconsistent", EXIT_INCONSISTENT)
        }
    } else if cert.fails_only_on_sign() {
        ("conditions fail", EXIT_OK)
    } else {
        ("inconsistent", EXIT_INCONSISTENT)
    };
    let units = Units { bits: cfg.bits() };

    let m = &cert.multipliers;
    let mut rows: Vec<Vec<String>> = [
        ("a1", m.a1),
        ("a2", m.a2),
        ("b1", m.b1),
        ("b2", m.b2),
        ("c", m.c),
    ]
    .iter()
    .map(|(name, v)| {
        vec![
            "multiplier".into(),
            name.to_string(),
            num(*v),
            (*v >= 0.0).to_string(),
        ]
    })
    .collect();
    for (group, list) in [
        ("stationarity", &cert.stationarity),
        ("complementarity", &cert.complementarity),
        ("primal", &cert.primal),
    ] {
        for r in list {
            rows.push(vec![
                group.into(),
                r.label.clone(),
                num(r.value),
                (!cert.violations.contains(&r.label)).to_string(),
            ]);
        }
    }
    rows.push(vec![
        "oracle".into(),
        "gap".into(),
        num(gap),
        (gap <= GAP_TOL || !cert.valid).to_string(),
    ]);

    let mut certificate = to_value(&cert);
    certificate["objective"] = json!(units.rate(cert.objective));
    certificate["rate_bar"] = json!(units.rate(cert.rate_bar));
    let mut doc = envelope("verify", cfg, &model);
    doc.insert("status".into(), json!(status));
    doc.insert("certificate".into(), certificate);
    doc.insert(
        "numeric".into(),
        json!({"point": opt.point, "objective": units.rate(opt.objective)}),
    );
    doc.insert("gap".into(), json!(units.rate(gap)));
    doc.insert("gap_tol".into(), json!(GAP_TOL));
    Ok(Report {
        json: Value::Object(doc),
        table: Table {
            header: ["group", "label", "value", "ok"].map(String::from).to_vec(),
            rows,
        },
        exit,
    })
}

pub fn bt_check(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let k = need(cfg.k, "k")?;
    let d = need(cfg.d_k, "dk")?;
    let rc = check_symmetric_rate(&model, k, d)?;
    let units = Units { bits: cfg.bits() };
    let consistent = rc.all_satisfied() && rc.full_set_gap() <= FULL_SET_TOL;
    let rows = rc
        .constraints
        .iter()
        .map(|c| {
            vec![
                c.size.to_string(),
                num(units.rate(c.required)),
                num(units.rate(c.provided)),
                c.satisfied.to_string(),
            ]
        })
        .collect();
    let constraints: Vec<Value> = rc
        .constraints
        .iter()
        .map(|c| {
            json!({
                "size": c.size,
                "required": units.rate(c.required),
                "provided": units.rate(c.provided),
                "satisfied": c.satisfied,
            })
        })
        .collect();
    let mut doc = envelope("bt-check", cfg, &model);
    doc.insert("k".into(), json!(k));
    doc.insert("d_k".into(), json!(d));
    doc.insert("lambda_q".into(), json!(rc.lambda_q));
    doc.insert("rate".into(), json!(units.rate(rc.rate)));
    doc.insert("full_set_gap".into(), json!(units.rate(rc.full_set_gap())));
    doc.insert("all_satisfied".into(), json!(rc.all_satisfied()));
    doc.insert("constraints".into(), Value::Array(constraints));
    Ok(Report {
        json: Value::Object(doc),
        table: Table {
            header: ["size", "required", "provided", "satisfied"]
                .map(String::from)
                .to_vec(),
            rows,
        },
        exit: if consistent {
            EXIT_OK
        } else {
            EXIT_INCONSISTENT
        },
    })
}

fn resolve_lambda_q(cfg: &RunConfig, model: &SourceModel) -> Result<f64, CliError> {
    let lambda = match cfg.lambda_q {
        Some(l) => l,
        None => {
            let k = need(cfg.k, "k")?;
            solve_lambda_q(model, k, need(cfg.d_k, "dk (or --lambda-q)")?)?
        }
    };
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(CliError::Domain(format!(
            "lambda_q must be positive, got {lambda}"
        )));
    }
    Ok(lambda)
}

pub fn simulate(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let k = need(cfg.k, "k")?;
    model.check_index("k", k, 1)?;
    let lambda = resolve_lambda_q(cfg, &model)?;
    let n = cfg.n.unwrap_or(DEFAULT_N);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let emp = empirical_profile(&model, k, lambda, n, seed)?;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut all_pass = true;
    for e in &emp.estimates {
        let analytic = distortion_at(&model, e.j, lambda);
        let z = e.z_score(analytic);
        let pass = z <= VALUE_GATE;
        all_pass &= pass;
        rows.push(vec![
            e.j.to_string(),
            num(e.mean),
            num(e.std_err),
            num(analytic),
            num(z),
            pass.to_string(),
        ]);
        entries.push(json!({
            "j": e.j, "empirical": e.mean, "std_err": e.std_err,
            "analytic": analytic, "z": z, "pass": pass,
        }));
    }
    let mut doc = envelope("simulate", cfg, &model);
    doc.insert("k".into(), json!(k));
    doc.insert("lambda_q".into(), json!(lambda));
    doc.insert("n".into(), json!(n));
    doc.insert("seed".into(), json!(seed));
    doc.insert("gate".into(), json!(VALUE_GATE));
    doc.insert("rows".into(), Value::Array(entries));
    Ok(Report {
        json: Value::Object(doc),
        table: Table {
            header: ["j", "empirical", "std_err", "analytic", "z", "pass"]
                .map(String::from)
                .to_vec(),
            rows,
        },
        exit: if all_pass { EXIT_OK } else { EXIT_STATISTICAL },
    })
}

pub fn decomp_check(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let j = cfg.j.unwrap_or(model.ell());
    model.check_index("j", j, 1)?;
    let lambda = resolve_lambda_q(cfg, &model)?;
    let lambda_w = cfg
        .lambda_w
        .unwrap_or(0.5 * admissible_lambda_w_upper(&model, j));
    let n = cfg.n.unwrap_or(DEFAULT_N);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let rep = decomposition_check(&model, j, lambda_w, lambda, n, seed)?;
    let entry_row = |name: &str, e: &EntryComparison| {
        vec![
            name.to_string(),
            e.row.to_string(),
            e.col.to_string(),
            num(e.estimate),
            num(e.expected),
            num(e.std_err),
            num(e.z_score()),
        ]
    };
    let rows = rep
        .sigma
        .iter()
        .map(|e| entry_row("sigma", e))
        .chain(rep.delta.iter().map(|e| entry_row("delta", e)))
        .collect();
    let mut doc = envelope("decomp-check", cfg, &model);
    doc.insert("sigma_passes".into(), json!(rep.sigma_passes()));
    doc.insert("delta_passes".into(), json!(rep.delta_passes()));
    doc.insert("max_sigma_z".into(), json!(rep.max_sigma_z()));
    doc.insert("max_off_diagonal_z".into(), json!(rep.max_off_diagonal_z()));
    doc.insert("report".into(), to_value(&rep));
    Ok(Report {
        json: Value::Object(doc),
        table: Table {
            header: [
                "matrix", "row", "col", "estimate", "expected", "std_err", "z",
            ]
            .map(String::from)
            .to_vec(),
            rows,
        },
        exit: if rep.passes() {
            EXIT_OK
        } else {
            EXIT_STATISTICAL
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_numbers_keep_twelve_digits() {
        let x = 0.346_573_590_279_972_6;
        let s = num(x);
        let back: f64 = s.parse().unwrap();
        assert!((back - x).abs() <= 1e-12 * x);
        assert_eq!(s, "3.46573590280e-1");
    }

    #[test]
    fn grid_endpoints() {
        assert_eq!(grid(0.5, 0.9, 1), vec![0.5]);
        let g = grid(0.5, 0.9, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.5);
        assert!((g[4] - 0.9).abs() < 1e-15);
    }
}
