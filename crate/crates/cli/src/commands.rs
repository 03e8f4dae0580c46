//! One pipeline per subcommand. Each returns a JSON report; numerical
//! failures that still leave something to report set a non-zero exit code
//! instead of aborting.

use serde_json::{json, Value};
use watatani::angle::{group_closed_form, AngleContext, AnglePath, AngleReport};
use watatani::basic::BasicConstruction;
use watatani::expectation::{ind_p_estimate, make_compatible, CondExpectation};
use watatani::groups::{PermGroup, DEFAULT_ENUMERATION_BOUND};
use watatani::linalg::{hermitian_eigen, identity, normalized_trace, op_norm, real};
use watatani::pimsner::{self, BasisDiagnostics};
use watatani::{Matrix, Tolerances};

use crate::scenario::{self, Scenario, ScenarioKind, Setup};
use crate::{CliError, Command, RunArgs};

/// Random samples used for reconstruction residuals.
pub const RECONSTRUCTION_SAMPLES: usize = 100;
/// Trials of the probabilistic-index estimator.
pub const IND_P_TRIALS: usize = 16;
/// Random samples used for conditional-expectation verification.
pub const VERIFY_SAMPLES: usize = 20;
/// Largest `dim A` for which `verify` materializes `M₁`.
pub const MATERIALIZE_LIMIT: usize = 16;

#[derive(Debug, Clone)]
pub struct Output {
    pub report: Value,
    /// Angle matrix for `lattice`.
    pub csv: Option<String>,
    pub exit_code: i32,
    pub failure: Option<String>,
}

impl Output {
    fn ok(report: Value) -> Self {
        Output {
            report,
            csv: None,
            exit_code: 0,
            failure: None,
        }
    }

    fn failing_if(mut self, failed: bool, msg: impl Into<String>) -> Self {
        if failed && self.exit_code == 0 {
            self.exit_code = 3;
            self.failure = Some(msg.into());
        }
        self
    }
}

/// Defaults, then scenario options, then command-line flags.
pub fn resolve(args: &RunArgs, scenario: Option<&Scenario>) -> Result<(Tolerances, u64), CliError> {
    let mut tol = Tolerances::default();
    let mut seed = 0;
    if let Some(s) = scenario {
        let o = &s.file.options;
        tol.eq_tol = o.eq_tol.unwrap_or(tol.eq_tol);
        tol.rank_tol = o.rank_tol.unwrap_or(tol.rank_tol);
        tol.angle_tol = o.angle_tol.unwrap_or(tol.angle_tol);
        seed = o.seed.unwrap_or(seed);
    }
    tol.eq_tol = args.tol.unwrap_or(tol.eq_tol);
    tol.rank_tol = args.rank_tol.unwrap_or(tol.rank_tol);
    tol.angle_tol = args.angle_tol.unwrap_or(tol.angle_tol);
    seed = args.seed.unwrap_or(seed);
    tol.validate().map_err(|err| CliError::Validation(err.to_string()))?;
    Ok((tol, seed))
}

fn tolerances_json(tol: &Tolerances) -> Value {
    json!({"eq_tol": tol.eq_tol, "rank_tol": tol.rank_tol, "angle_tol": tol.angle_tol})
}

fn envelope(command: &str, scenario: &Scenario, tol: &Tolerances, seed: u64, result: Value) -> Value {
    json!({
        "command": command,
        "library_version": watatani::VERSION,
        "cli_version": env!("CARGO_PKG_VERSION"),
        "scenario_name": scenario.file.name,
        "scenario": scenario.raw,
        "tolerances": tolerances_json(tol),
        "seed": seed,
        "tensor_factor": scenario.file.options.tensor_factor.unwrap_or(1),
        "result": result,
    })
}

pub fn matrix_json(m: &Matrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| {
                Value::Array(
                    (0..m.ncols())
                        .map(|j| json!([m[(i, j)].re, m[(i, j)].im]))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// Sorted eigenvalues grouped within `tol` of the cluster's first value.
fn spectrum(values: &[f64], tol: f64) -> Value {
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        match groups.last_mut() {
            Some((first, count)) if (v - *first).abs() <= tol * first.abs().max(1.0) => *count += 1,
            _ => groups.push((v, 1)),
        }
    }
    Value::Array(
        groups
            .into_iter()
            .map(|(value, multiplicity)| json!({"value": value, "multiplicity": multiplicity}))
            .collect(),
    )
}

fn diagnostics_json(d: &BasisDiagnostics) -> Value {
    json!({"projection": d.projection, "orthogonality": d.orthogonality, "reconstruction": d.reconstruction})
}

fn angle_json(r: &AngleReport) -> Value {
    json!({
        "cos": r.cos_value,
        "raw_cos": r.raw_cos,
        "angle": r.angle,
        "path": r.path.name(),
        "definition_cos": r.definition_cos,
        "quasibasis_cos": r.quasibasis_cos,
        "path_disagreement": r.path_disagreement,
        "numerator": r.numerator,
        "denominators": [r.denominators.0, r.denominators.1],
        "commuting_square": r.commuting_square,
        "commuting_square_residual": r.commuting_square_residual,
        "provenance": r.provenance,
    })
}

fn group_oracle_applies(setup: &Setup) -> bool {
    setup.family.as_ref().is_some_and(|f| f.has_group_oracle())
}

pub fn execute(command: &Command) -> Result<Output, CliError> {
    let args = command.args();
    if let Command::Validate(_) = command {
        return Ok(validate(args));
    }
    let scenario = scenario::load(&args.scenario)?;
    let (tol, seed) = resolve(args, Some(&scenario))?;
    let name = command.name();
    let (result, csv, failure) = match command {
        Command::Index(_) => index(&scenario, &tol, seed)?,
        Command::QuasiBasis(_) => quasi_basis(&scenario, &tol, seed)?,
        Command::Angle(_) => angle(&scenario, &tol, args.path.into())?,
        Command::ExteriorAngle(_) => exterior_angle(&scenario, &tol, args.path.into())?,
        Command::Lattice(_) => lattice(&scenario, &tol, args.path.into())?,
        Command::Verify(_) => verify(&scenario, &tol, seed)?,
        Command::Validate(_) => unreachable!(),
    };
    let mut out = Output::ok(envelope(name, &scenario, &tol, seed, result));
    out.csv = csv;
    Ok(out.failing_if(failure.is_some(), failure.unwrap_or_default()))
}

type Pipeline = Result<(Value, Option<String>, Option<String>), CliError>;

fn validate(args: &RunArgs) -> Output {
    let checked = scenario::load(&args.scenario).and_then(|s| resolve(args, Some(&s)).map(|(t, seed)| (s, t, seed)));
    match checked {
        Ok((s, tol, seed)) => {
            let mut summary = json!({"valid": true, "kind": s.kind()});
            if let Some(sg) = &s.subgroups {
                summary["group_order"] = json!(sg.g.order());
                summary["h_order"] = json!(sg.h.order());
                summary["k_order"] = json!(sg.k.as_ref().map(PermGroup::order));
                summary["l_order"] = json!(sg.l.as_ref().map(PermGroup::order));
            }
            Output::ok(envelope("validate", &s, &tol, seed, summary))
        }
        Err(err) => Output {
            report: json!({
                "command": "validate",
                "library_version": watatani::VERSION,
                "cli_version": env!("CARGO_PKG_VERSION"),
                "result": {"valid": false, "error": err.to_string()},
            }),
            csv: None,
            exit_code: 2,
            failure: Some(err.to_string()),
        },
    }
}

fn index(scenario: &Scenario, tol: &Tolerances, seed: u64) -> Pipeline {
    let setup = scenario.build(tol)?;
    let e = &setup.e;
    let (basis, index) = pimsner::index_of(e, tol)?;
    let (eigen, _) = hermitian_eigen(&index.value);
    let ind_p = ind_p_estimate(e, IND_P_TRIALS, seed, tol);
    let mut result = json!({
        "dim_a": e.big().dim(),
        "dim_b": e.small().dim(),
        "ambient_dim": e.ambient_dim(),
        "basis_size": basis.len(),
        "index_scalar": index.scalar,
        "index_norm": index.norm(),
        "index_trace": normalized_trace(&index.value).re,
        "index_spectrum": spectrum(&eigen, tol.eq_tol),
        "basis_diagnostics": diagnostics_json(&basis.diagnostics(e)),
        "ind_p_estimate": ind_p,
        "ind_p_trials": IND_P_TRIALS,
    });
    if index.scalar.is_none() {
        result["index_matrix"] = matrix_json(&index.value);
    }
    let mut failure = None;
    if group_oracle_applies(&setup) {
        let sg = scenario.subgroups.as_ref().expect("group family");
        let expected = sg.g.index(&sg.h)? as f64;
        let residual = op_norm(&(&index.value - identity(e.ambient_dim()) * real(expected)))?;
        let matched = residual < tol.eq_tol;
        result["oracle"] = json!({"index": expected, "residual": residual, "match": matched});
        if !matched {
            failure = Some(format!("index differs from [G:H] = {expected} by {residual:.3e}"));
        }
    }
    Ok((result, None, failure))
}

fn quasi_basis(scenario: &Scenario, tol: &Tolerances, seed: u64) -> Pipeline {
    let setup = scenario.build(tol)?;
    let e = &setup.e;
    let (basis, index) = pimsner::index_of(e, tol)?;
    let residual = pimsner::verify_quasi_basis(e, &basis.elements, RECONSTRUCTION_SAMPLES, seed);
    let elements: Vec<Value> = basis
        .elements
        .iter()
        .zip(&basis.support_projections)
        .map(|(m, p)| json!({"matrix": matrix_json(m), "support_trace": normalized_trace(p).re}))
        .collect();
    let result = json!({
        "dim_a": e.big().dim(),
        "dim_b": e.small().dim(),
        "basis_size": basis.len(),
        "elements": elements,
        "basis_diagnostics": diagnostics_json(&basis.diagnostics(e)),
        "reconstruction_residual": residual,
        "reconstruction_samples": RECONSTRUCTION_SAMPLES,
        "index_scalar": index.scalar,
    });
    let failure = (residual >= tol.eq_tol).then(|| format!("quasi-basis reconstruction residual {residual:.3e}"));
    Ok((result, None, failure))
}

fn require_pair(scenario: &Scenario, setup: &Setup) -> Result<(), CliError> {
    if setup.p.is_none() || setup.q.is_none() {
        let what = match scenario.kind() {
            ScenarioKind::CustomMatrix => "p and q",
            _ => "k and l",
        };
        return Err(CliError::Validation(format!("this command needs {what} in the scenario")));
    }
    Ok(())
}

fn context(e: &CondExpectation, tol: &Tolerances, path: AnglePath) -> watatani::Result<AngleContext> {
    match path {
        AnglePath::Quasibasis => AngleContext::quasibasis_only(e, tol),
        _ => AngleContext::new(e, tol),
    }
}

fn angle(scenario: &Scenario, tol: &Tolerances, path: AnglePath) -> Pipeline {
    let setup = scenario.build(tol)?;
    require_pair(scenario, &setup)?;
    let ctx = context(&setup.e, tol, path)?;
    let p = ctx.intermediate(setup.p.clone().expect("checked"))?;
    let q = ctx.intermediate(setup.q.clone().expect("checked"))?;
    let report = ctx.interior_angle(&p, &q, path)?;
    let mut result = angle_json(&report);
    result["dim_p"] = json!(p.algebra().dim());
    result["dim_q"] = json!(q.algebra().dim());
    let mut failure = None;
    if group_oracle_applies(&setup) {
        let sg = scenario.subgroups.as_ref().expect("group family");
        let (k, l) = (sg.k.as_ref().expect("pair"), sg.l.as_ref().expect("pair"));
        if let Some(cos) = group_closed_form(&sg.h, k, l)? {
            let discrepancy = (report.cos_value - cos).abs();
            let matched = discrepancy < tol.angle_tol;
            result["oracle"] = json!({"cos": cos, "discrepancy": discrepancy});
            result["oracle_match"] = json!(matched);
            if !matched {
                failure = Some(format!("cosine differs from the closed form by {discrepancy:.3e}"));
            }
        }
    }
    Ok((result, None, failure))
}

fn exterior_angle(scenario: &Scenario, tol: &Tolerances, path: AnglePath) -> Pipeline {
    let setup = scenario.build(tol)?;
    require_pair(scenario, &setup)?;
    let ctx = AngleContext::new(&setup.e, tol)?;
    let p = ctx.intermediate(setup.p.clone().expect("checked"))?;
    let q = ctx.intermediate(setup.q.clone().expect("checked"))?;
    let report = ctx.exterior_angle(&p, &q, path != AnglePath::Quasibasis)?;
    Ok((angle_json(&report), None, None))
}

fn group_label(g: &PermGroup) -> Vec<String> {
    g.elements().iter().map(|x| x.to_string()).collect()
}

fn lattice(scenario: &Scenario, tol: &Tolerances, path: AnglePath) -> Pipeline {
    if !matches!(scenario.kind(), ScenarioKind::Group | ScenarioKind::CrossedProduct) {
        return Err(CliError::Validation(
            "lattice needs a group or crossed_product scenario".into(),
        ));
    }
    let sg = scenario.subgroups.as_ref().expect("validated");
    let all = sg.g.intermediate_subgroups(&sg.h, DEFAULT_ENUMERATION_BOUND).map_err(|err| match err {
        watatani::Error::Size(msg) => CliError::Validation(msg),
        other => CliError::Numerical(other),
    })?;
    let mut proper: Vec<PermGroup> = all
        .into_iter()
        .filter(|s| s.order() != sg.h.order() && s.order() != sg.g.order())
        .collect();
    proper.sort_by(|a, b| (a.order(), a.elements()).cmp(&(b.order(), b.elements())));
    let labels: Vec<String> = (1..=proper.len()).map(|i| format!("I{i}")).collect();

    let setup = scenario.build(tol)?;
    let oracle = group_oracle_applies(&setup);
    let mut csv = String::from("intermediate");
    for l in &labels {
        csv.push(',');
        csv.push_str(l);
    }
    csv.push('\n');
    let mut pairs = Vec::new();
    let mut failed = 0;
    let mut worst: f64 = 0.0;
    if !proper.is_empty() {
        let ctx = context(&setup.e, tol, path)?;
        let prepared = proper
            .iter()
            .map(|s| ctx.intermediate(setup.intermediate_for(s, tol)?))
            .collect::<watatani::Result<Vec<_>>>()?;
        let matrix = ctx.angle_matrix(&prepared, path);
        for (i, row) in matrix.angles().iter().enumerate() {
            csv.push_str(&labels[i]);
            for a in row {
                csv.push_str(&format!(",{a:.15}"));
            }
            csv.push('\n');
        }
        for i in 0..proper.len() {
            for j in i + 1..proper.len() {
                let mut entry = json!({"i": labels[i], "j": labels[j]});
                match matrix.get(i, j) {
                    Ok(r) => {
                        entry["cos"] = json!(r.cos_value);
                        entry["angle"] = json!(r.angle);
                        entry["commuting_square"] = json!(r.commuting_square);
                        if oracle {
                            if let Some(cos) = group_closed_form(&sg.h, &proper[i], &proper[j])? {
                                let d = (r.cos_value - cos).abs();
                                worst = worst.max(d);
                                entry["oracle_cos"] = json!(cos);
                                entry["discrepancy"] = json!(d);
                            }
                        }
                    }
                    Err(err) => {
                        failed += 1;
                        entry["error"] = json!(err.to_string());
                    }
                }
                pairs.push(entry);
            }
        }
    }
    let intermediates: Vec<Value> = proper
        .iter()
        .zip(&labels)
        .map(|(s, label)| {
            json!({
                "label": label,
                "order": s.order(),
                "index_over_h": s.order() / sg.h.order(),
                "elements": group_label(s),
            })
        })
        .collect();
    let within = worst < tol.angle_tol;
    let result = json!({
        "intermediate_count": proper.len(),
        "pair_count": pairs.len(),
        "intermediates": intermediates,
        "pairs": pairs,
        "failed_pairs": failed,
        "max_discrepancy": if oracle { json!(worst) } else { Value::Null },
        "all_within_tol": if oracle { json!(within) } else { Value::Null },
    });
    let failure = if failed > 0 {
        Some(format!("{failed} pair(s) failed"))
    } else if oracle && !within {
        Some(format!("closed-form discrepancy {worst:.3e}"))
    } else {
        None
    };
    Ok((result, Some(csv), failure))
}

struct Check {
    name: &'static str,
    residual: Option<f64>,
    passed: bool,
    detail: Option<String>,
}

impl Check {
    fn residual(name: &'static str, residual: f64, tol: f64) -> Check {
        Check {
            name,
            residual: Some(residual),
            passed: residual < tol,
            detail: None,
        }
    }

    fn error(name: &'static str, err: &watatani::Error) -> Check {
        Check {
            name,
            residual: None,
            passed: false,
            detail: Some(err.to_string()),
        }
    }

    fn json(&self) -> Value {
        json!({"name": self.name, "passed": self.passed, "residual": self.residual, "detail": self.detail})
    }
}

fn verify(scenario: &Scenario, tol: &Tolerances, seed: u64) -> Pipeline {
    let setup = scenario.build(tol)?;
    let e = &setup.e;
    let mut checks = Vec::new();
    let report = e.verify(VERIFY_SAMPLES, seed, tol);
    for (name, value) in [
        ("expectation idempotency", report.idempotency),
        ("expectation range", report.range),
        ("expectation fixes B", report.fixes_subalgebra),
        ("expectation unitality", report.unitality),
        ("expectation bimodule property", report.bimodule),
        ("expectation positivity", report.positivity),
    ] {
        checks.push(Check::residual(name, value, tol.eq_tol));
    }
    checks.push(Check {
        name: "expectation faithfulness",
        residual: Some(report.faithfulness),
        passed: report.faithfulness > tol.rank_tol,
        detail: None,
    });
    match pimsner::index_of(e, tol) {
        Ok((basis, _)) => {
            let d = basis.diagnostics(e);
            checks.push(Check::residual("basis support projections", d.projection, tol.eq_tol));
            checks.push(Check::residual("basis orthogonality", d.orthogonality, tol.eq_tol));
            let r = pimsner::verify_quasi_basis(e, &basis.elements, RECONSTRUCTION_SAMPLES, seed);
            checks.push(Check::residual("quasi-basis reconstruction", r, tol.eq_tol));
        }
        Err(err) => checks.push(Check::error("orthonormal basis", &err)),
    }
    let materialize = e.big().dim() <= MATERIALIZE_LIMIT;
    let built = if materialize {
        BasicConstruction::build(e, tol)
    } else {
        BasicConstruction::build_light(e, tol)
    };
    match built {
        Ok(bc) => {
            let d = *bc.diagnostics();
            checks.push(Check::residual("e² = e = e*", d.projection, tol.eq_tol));
            checks.push(Check::residual("Jones relation", d.jones_relation, tol.eq_tol));
            checks.push(Check {
                name: "{e}' ∩ λ(A) = λ(B)",
                residual: Some(d.commutant_residual),
                passed: d.commutant_dim == e.small().dim() && d.commutant_residual < tol.eq_tol,
                detail: Some(format!("dimension {} vs dim B = {}", d.commutant_dim, e.small().dim())),
            });
            checks.push(Check::residual("Σ λ(m_j) e λ(m_j)* = 1", d.completeness, tol.eq_tol));
            let e1_of_e = bc.dual_apply(bc.e_proj());
            let r = op_norm(&(e1_of_e - bc.index_inverse()))?;
            checks.push(Check::residual("E₁(e) = Ind⁻¹", r, tol.eq_tol));
            if let Some(dual) = bc.dual_expectation() {
                checks.push(Check::residual("E₁ consistency on spanning pairs", dual.consistency_residual, tol.eq_tol));
                match dual.as_cond_expectation(tol) {
                    Ok(_) => checks.push(Check::residual("E₁ is a conditional expectation", 0.0, tol.eq_tol)),
                    Err(err) => checks.push(Check::error("E₁ is a conditional expectation", &err)),
                }
            }
        }
        Err(err) => checks.push(Check::error("basic construction", &err)),
    }
    for (name, alg) in [("P compatible", &setup.p), ("Q compatible", &setup.q)] {
        if let Some(alg) = alg {
            match make_compatible(e, alg.clone(), tol) {
                Ok(ci) => checks.push(Check::residual(name, ci.compatibility_residual, tol.eq_tol)),
                Err(err) => checks.push(Check::error(name, &err)),
            }
        }
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let result = json!({
        "passed": failed.is_empty(),
        "m1_materialized": materialize,
        "checks": checks.iter().map(Check::json).collect::<Vec<_>>(),
    });
    let failure = (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", ")));
    Ok((result, None, failure))
}
