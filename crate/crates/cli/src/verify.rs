use bcv_core::smt::{build_query, emit_smtlib, validate_counterexample, QueryMode, QuerySpec, SolverVerdict};
use bcv_core::solver::{grid_oracle_search, run_solver, violating_pairs, SolverError};
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{to_json, Artifacts};

pub struct VerifyArgs {
    pub mode: QueryMode,
    pub n: usize,
    pub emit_only: bool,
}

/// Writes `query.smt2` and, unless emit-only, `verdict.json`.
///
/// Succeeds for an unsat closed-loop query or a validated sat open-loop
/// query on which the grid oracle agrees; any other outcome is a
/// verification failure, reported after the artifacts are written.
pub fn run(config: &RunConfig, artifacts: &Artifacts, args: &VerifyArgs) -> Result<(), CliError> {
    let spec = QuerySpec {
        n: args.n,
        mode: args.mode,
        params: config.barrier,
        bounds: config.query.bounds,
        length: config.query.vehicle_length,
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let system = build_query(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let text = emit_smtlib(&system);
    let query_path = artifacts.write("query.smt2", &format!("{}{text}", artifacts.comment_line(";")))?;
    eprintln!(
        "wrote {} ({} assertions)",
        query_path.display(),
        system.assertions.len() + 1
    );
    if args.emit_only {
        return Ok(());
    }

    let oracle = grid_oracle_search(&spec, &config.grid).map_err(|e| CliError::Config(e.to_string()))?;
    let mut body = Map::new();
    body.insert("mode".into(), args.mode.as_str().into());
    body.insert("n".into(), (args.n as u64).into());
    let mut oracle_json = Map::new();
    oracle_json.insert("counterexample_found".into(), oracle.is_some().into());
    oracle_json.insert("resolution".into(), (config.grid.resolution as u64).into());
    oracle_json.insert("witness".into(), oracle.map_or(Value::Null, |w| to_json(&w)));
    body.insert("oracle".into(), Value::Object(oracle_json));

    let run = match run_solver(&text, &config.solver) {
        Ok(run) => run,
        Err(SolverError::LaunchFailure(detail)) => {
            return Err(CliError::Config(format!(
                "cannot launch solver `{}`: {detail}",
                config.solver.executable_path.display()
            )))
        }
        Err(e) => {
            let status = if matches!(e, SolverError::Timeout(_)) {
                "timeout"
            } else {
                "error"
            };
            body.insert("status".into(), status.into());
            body.insert("detail".into(), e.to_string().into());
            body.insert("oracle_agreement".into(), false.into());
            body.insert("validated".into(), false.into());
            artifacts.write_json("verdict.json", body)?;
            return Err(CliError::Verification(e.to_string()));
        }
    };
    eprintln!("solver answered in {:.3} s", run.elapsed.as_secs_f64());

    let (status, validated, agreement) = match &run.verdict {
        SolverVerdict::Sat(model) => {
            let valid = validate_counterexample(model, &spec).unwrap_or(false);
            let values: Map<String, Value> = model.values.iter().map(|(k, &v)| (k.clone(), exact(v))).collect();
            body.insert("model".into(), Value::Object(values));
            body.insert(
                "violating_pairs".into(),
                violating_pairs(model, &spec)
                    .into_iter()
                    .map(|i| Value::from(i as u64))
                    .collect(),
            );
            ("sat", valid, oracle.is_some())
        }
        // nothing to check a refutation against except the oracle
        SolverVerdict::Unsat => ("unsat", oracle.is_none(), oracle.is_none()),
        SolverVerdict::Unknown => ("unknown", false, false),
    };
    body.insert("status".into(), status.into());
    body.insert("validated".into(), validated.into());
    body.insert("oracle_agreement".into(), agreement.into());
    let path = artifacts.write_json("verdict.json", body)?;
    eprintln!(
        "wrote {}: {status}, validated={validated}, oracle_agreement={agreement}",
        path.display()
    );

    let expected = match args.mode {
        QueryMode::Closed => "unsat",
        QueryMode::Open => "sat",
    };
    if status != expected {
        return Err(CliError::Verification(format!(
            "{} query returned {status}, expected {expected}",
            args.mode.as_str()
        )));
    }
    if !validated {
        return Err(CliError::Verification(
            "solver answer failed independent validation".into(),
        ));
    }
    if !agreement {
        return Err(CliError::Verification("solver and grid oracle disagree".into()));
    }
    Ok(())
}

/// Model values keep full precision; rounding them would break validation.
fn exact(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}
