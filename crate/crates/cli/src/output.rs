use std::fmt::Write as _;

use serde_json::{json, Value};

use wfaudit_core::perspectives::Perspective;
use wfaudit_core::protocol::{
    kets, JointDistribution, MonteCarloSummary, ProtocolConfig, WignerOutcome, F, FBAR, R, S,
};
use wfaudit_core::qcore::{DensityMatrix, Tensor};
use wfaudit_core::reasoning::{AuditReport, Evaluation};

pub const SCHEMA_VERSION: &str = "1.0";

/// Largest denominator tried when printing a probability as a fraction.
const MAX_DENOMINATOR: i64 = 144;

pub struct Document {
    pub command: &'static str,
    pub config: Value,
    pub json: Value,
    pub table: String,
}

#[derive(Default)]
pub struct Outputs {
    /// Extra files for `--out-dir`, as (name, contents).
    pub extra: Vec<(String, String)>,
}

fn document(command: &'static str, config: Value, result: Value, table: String) -> Document {
    let json = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "result": result,
    });
    Document {
        command,
        config,
        json,
        table,
    }
}

/// `p/q` with `q ≤ 144` when `x` is such a fraction to within 1e-10.
pub fn rational(x: f64) -> Option<String> {
    if !x.is_finite() {
        return None;
    }
    for q in 1..=MAX_DENOMINATOR {
        let n = (x * q as f64).round();
        if (x - n / q as f64).abs() < 1e-10 {
            let n = n as i64;
            return Some(if q == 1 { n.to_string() } else { format!("{n}/{q}") });
        }
    }
    None
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-13 {
        0.0
    } else {
        x
    }
}

fn prob(p: f64) -> Value {
    let p = clean(p);
    json!({ "value": p, "rational": rational(p) })
}

fn prob_text(p: f64) -> String {
    let p = clean(p);
    match rational(p) {
        Some(r) => format!("{p:.6} ({r})"),
        None => format!("{p:.6}"),
    }
}

fn wbar_name(o: WignerOutcome) -> &'static str {
    match o {
        WignerOutcome::Ok => "ok_bar",
        WignerOutcome::Fail => "fail_bar",
        WignerOutcome::Other => "other",
    }
}

fn protocol_config(config: &ProtocolConfig) -> Value {
    serde_json::to_value(config).expect("config serializes")
}

pub fn exact(config: &ProtocolConfig, joint: &JointDistribution) -> Document {
    let cells: Vec<Value> = joint
        .cells
        .iter()
        .map(|c| json!({ "wbar": wbar_name(c.wbar), "w": c.w.to_string(), "probability": prob(c.probability) }))
        .collect();
    let result = json!({
        "semantics": joint.semantics,
        "theta": joint.theta,
        "cells": cells,
        "halting_probability": prob(joint.halting_probability()),
    });
    let mut t = String::new();
    writeln!(t, "exact joint  semantics={}  theta={}", joint.semantics, joint.theta).unwrap();
    writeln!(t, "{:<14}{:<22}{:<22}{:<22}", "", "w=ok", "w=fail", "w=other").unwrap();
    for a in WignerOutcome::ALL {
        write!(t, "{:<14}", format!("wbar={}", wbar_name(a))).unwrap();
        for b in WignerOutcome::ALL {
            write!(t, "{:<22}", prob_text(joint.probability(a, b))).unwrap();
        }
        writeln!(t).unwrap();
    }
    writeln!(t, "P(halt) = {}", prob_text(joint.halting_probability())).unwrap();
    document("exact", protocol_config(config), result, t)
}

pub fn mc(config: &ProtocolConfig, s: &MonteCarloSummary) -> Document {
    let cells: Vec<Value> = s
        .cells
        .iter()
        .map(|c| {
            json!({
                "wbar": wbar_name(c.wbar),
                "w": c.w.to_string(),
                "count": c.count,
                "frequency": c.frequency,
                "standard_error": c.standard_error,
            })
        })
        .collect();
    let histogram: Vec<Value> = s
        .histogram()
        .iter()
        .map(|(round, count)| json!({ "round": round, "count": count }))
        .collect();
    let result = json!({
        "semantics": config.semantics,
        "theta": config.theta,
        "seed": config.seed,
        "rounds": s.rounds,
        "cells": cells,
        "halting": {
            "completed_runs": s.halting_rounds.len(),
            "censored_rounds": s.censored,
            "mean_round": s.mean_halting_round(),
            "standard_error": s.halting_round_standard_error(),
            "histogram": histogram,
        },
    });
    let mut t = String::new();
    writeln!(
        t,
        "monte carlo  semantics={}  theta={}  rounds={}  seed={}",
        config.semantics, config.theta, s.rounds, config.seed
    )
    .unwrap();
    writeln!(t, "{:<14}{:<8}{:>10}{:>12}{:>12}", "wbar", "w", "count", "freq", "stderr").unwrap();
    for c in &s.cells {
        writeln!(
            t,
            "{:<14}{:<8}{:>10}{:>12.6}{:>12.6}",
            wbar_name(c.wbar),
            c.w.to_string(),
            c.count,
            c.frequency,
            c.standard_error
        )
        .unwrap();
    }
    match (s.mean_halting_round(), s.halting_round_standard_error()) {
        (Some(m), Some(se)) => writeln!(
            t,
            "halting round: mean {m:.4} ± {se:.4} over {} runs ({} censored rounds)",
            s.halting_rounds.len(),
            s.censored
        )
        .unwrap(),
        (Some(m), None) => writeln!(t, "halting round: mean {m:.4} over 1 run").unwrap(),
        _ => writeln!(t, "halting round: no halt in {} rounds", s.rounds).unwrap(),
    }
    document("mc", protocol_config(config), result, t)
}

pub fn histogram_csv(s: &MonteCarloSummary) -> String {
    let mut out = String::from("halting_round,count\n");
    for (round, count) in s.histogram() {
        writeln!(out, "{round},{count}").unwrap();
    }
    out
}

pub struct Prediction {
    pub measurement: &'static str,
    pub outcome: &'static str,
    pub probability: f64,
}

/// Born predictions of the Wigners' ok/fail outcomes that fit inside the
/// described subsystems, plus `ok_bar ⊗ down` when Lbar and S are both there.
pub fn predictions(rho: &DensityMatrix) -> anyhow::Result<Vec<Prediction>> {
    let has = |names: &[&str]| names.iter().all(|n| rho.layout().contains(n));
    let mut out = Vec::new();
    if has(&[R, FBAR]) {
        for (label, v) in [("ok_bar", kets::ok_bar()), ("fail_bar", kets::fail_bar())] {
            out.push(Prediction {
                measurement: "wbar",
                outcome: label,
                probability: rho.probability_of(&v)?,
            });
        }
    }
    if has(&[S, F]) {
        for (label, v) in [("ok", kets::ok()), ("fail", kets::fail())] {
            out.push(Prediction {
                measurement: "w",
                outcome: label,
                probability: rho.probability_of(&v)?,
            });
        }
    }
    if has(&[R, FBAR, S]) {
        let v = kets::ok_bar().tensor(&kets::down())?;
        out.push(Prediction {
            measurement: "wbar,S",
            outcome: "ok_bar,down",
            probability: rho.probability_of(&v)?,
        });
    }
    Ok(out)
}

fn grid(rho: &DensityMatrix, part: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
    let m = rho.matrix();
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| clean(part(m[(i, j)].re, m[(i, j)].im))).collect())
        .collect()
}

pub fn perspective(
    view: &Perspective,
    names: &[&str],
    rho: &DensityMatrix,
    predictions: &[Prediction],
    theta: f64,
) -> Document {
    let records = |rs: &[wfaudit_core::protocol::Record]| rs.iter().map(|r| r.to_string()).collect::<Vec<_>>();
    let basis: Vec<String> = (0..rho.dim()).map(|i| rho.layout().basis_label(i)).collect();
    let preds: Vec<Value> = predictions
        .iter()
        .map(|p| json!({ "measurement": p.measurement, "outcome": p.outcome, "probability": prob(p.probability) }))
        .collect();
    let config = json!({
        "agent": view.agent,
        "time": view.time,
        "rule": view.rule,
        "conditions": records(&view.known).into_iter().chain(records(&view.branch)).collect::<Vec<_>>(),
        "subsystems": names,
        "theta": theta,
    });
    let result = json!({
        "agent": view.agent,
        "time": view.time,
        "rule": view.rule,
        "known": records(&view.known),
        "branch": records(&view.branch),
        "subsystems": rho.layout().names(),
        "basis": basis,
        "matrix": { "re": grid(rho, |re, _| re), "im": grid(rho, |_, im| im) },
        "trace": clean(rho.trace()),
        "purity": prob(rho.purity()),
        "predictions": preds,
    });

    let mut t = String::new();
    writeln!(
        t,
        "perspective  agent={}  time={}  rule={}  theta={}",
        view.agent, view.time, view.rule, theta
    )
    .unwrap();
    if !view.known.is_empty() {
        writeln!(t, "known: {}", records(&view.known).join(", ")).unwrap();
    }
    if !view.branch.is_empty() {
        writeln!(t, "given: {}", records(&view.branch).join(", ")).unwrap();
    }
    writeln!(t, "subsystems: {}", rho.layout().names().join(" ⊗ ")).unwrap();
    for (title, g) in [("re", grid(rho, |re, _| re)), ("im", grid(rho, |_, im| im))] {
        writeln!(t, "{title}:").unwrap();
        for (label, row) in basis.iter().zip(&g) {
            write!(t, "  {label:<28}").unwrap();
            for x in row {
                write!(t, "{x:>8.4}").unwrap();
            }
            writeln!(t).unwrap();
        }
    }
    writeln!(t, "purity: {}", prob_text(rho.purity())).unwrap();
    for p in predictions {
        writeln!(t, "P({}={}) = {}", p.measurement, p.outcome, prob_text(p.probability)).unwrap();
    }
    document("perspectives", config, result, t)
}

fn evaluation_json(e: &Evaluation) -> Value {
    let records = |rs: &[wfaudit_core::protocol::Record]| rs.iter().map(|r| r.to_string()).collect::<Vec<_>>();
    json!({
        "id": e.id.to_string(),
        "speaker": e.speaker,
        "time": e.time,
        "rule": e.rule,
        "verdict": e.verdict,
        "value": e.value.map(prob),
        "condition": records(&e.condition),
        "ignored": records(&e.ignored),
        "premise": e.premise.map(|r| r.to_string()),
        "nested": e.nested.as_deref().map(evaluation_json),
    })
}

pub fn audit(config: &ProtocolConfig, r: &AuditReport) -> Document {
    let conclusion = r.chain_conclusion.as_ref().map(|c| {
        json!({
            "kind": c.kind,
            "event": c.event.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            "value": c.value.map(prob),
        })
    });
    let result = json!({
        "ruleset": r.ruleset,
        "semantics": r.semantics,
        "theta": r.theta,
        "statements": r.statement_results.iter().map(evaluation_json).collect::<Vec<_>>(),
        "chain": r.chain.iter().map(|id| id.to_string()).collect::<Vec<_>>(),
        "broken_at": r.broken_at.map(|id| id.to_string()),
        "chain_conclusion": conclusion,
        "halting_probability": prob(r.halting_probability),
        "contradiction": r.contradiction,
        "witness": r.witness.map(prob),
    });
    let mut config_json = protocol_config(config);
    config_json["ruleset"] = json!(r.ruleset);

    let mut t = String::new();
    writeln!(t, "audit  ruleset={}  semantics={}  theta={}", r.ruleset, r.semantics, r.theta).unwrap();
    writeln!(t, "{:<14}{:<6}{:<7}{:<17}{:<15}{:<22}condition", "statement", "by", "time", "rule", "verdict", "value").unwrap();
    for e in &r.statement_results {
        let value = e.value.map(prob_text).unwrap_or_else(|| "-".into());
        let mut cond = e.condition.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        if !e.ignored.is_empty() {
            let ignored = e.ignored.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
            cond = format!("{cond} (ignored: {ignored})");
        }
        if let Some(p) = e.premise {
            cond = format!("{cond} => {p}");
        }
        writeln!(
            t,
            "{:<14}{:<6}{:<7}{:<17}{:<15}{:<22}{}",
            e.id.to_string(),
            e.speaker.to_string(),
            e.time.to_string(),
            e.rule.to_string(),
            e.verdict.to_string(),
            value,
            cond
        )
        .unwrap();
    }
    let chain = r.chain.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(" -> ");
    writeln!(t, "chain: {chain}").unwrap();
    match (&r.broken_at, &r.chain_conclusion) {
        (Some(id), _) => writeln!(t, "chain broken at {id}; no conclusion").unwrap(),
        (None, Some(c)) => writeln!(
            t,
            "chain conclusion: {:?}(wbar=ok_bar, w=ok){}",
            c.kind,
            c.value.map(|v| format!(" with P(w=ok | wbar=ok_bar) = {}", prob_text(v))).unwrap_or_default()
        )
        .unwrap(),
        (None, None) => {}
    }
    writeln!(t, "exact P(halt) = {}", prob_text(r.halting_probability)).unwrap();
    match r.witness {
        Some(w) => writeln!(t, "contradiction: true (witness {})", prob_text(w)).unwrap(),
        None => writeln!(t, "contradiction: false").unwrap(),
    }
    document("audit", config_json, result, t)
}
