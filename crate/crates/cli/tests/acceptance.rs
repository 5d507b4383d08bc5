//! Acceptance suite. Prints one `PASS`/`FAIL`/`SKIP` line per criterion
//! and exits non-zero if any criterion fails.
//!
//! The dataset criterion runs only when `BCV_HIGHD_TRACKS` lists one or
//! more local recording CSVs (separated like `PATH`).

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bcv_core::conflict::{rollout, AccelProfile, RolloutConfig};
use bcv_core::kinematics::{barrier_derivative, barrier_value, safe_accel_bound};
use bcv_core::smt::{
    build_query, emit_smtlib, parse_solver_output, validate_counterexample, ModelAssignment, QueryMode, QuerySpec,
    SolverVerdict,
};
use bcv_core::{BarrierParams, BarrierValue, PairState, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const VERIFY_BUDGET: Duration = Duration::from_secs(10);
const ROLLOUT_BUDGET: Duration = Duration::from_secs(60);
const IMPLICATION_SAMPLES: usize = 100_000;
const FD_STEP: f64 = 1e-4;
const FD_TOLERANCE: f64 = 1e-6;
const FD_TRAJECTORIES: usize = 24;
const ROLLOUTS: usize = 1000;
const INVARIANCE_TOLERANCE: f64 = 1e-6;
const MODEL_TOLERANCE: f64 = 1e-9;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn bcv(out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_bcv"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| format!("cannot run bcv: {e}"))?;
    if !status.status.success() {
        return Err(format!(
            "`bcv {}` exited {:?}: {}",
            args.join(" "),
            status.status.code(),
            String::from_utf8_lossy(&status.stderr).trim()
        ));
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/smt")
        .join(name)
}

fn cli_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn closed_loop(tmp: &Path) -> Check {
    let started = Instant::now();
    for n in ["2", "5"] {
        let out = tmp.join(format!("closed-{n}"));
        bcv(&out, &["verify", "--mode", "closed", "--n", n])?;
        let v = read_json(&out.join("verdict.json"))?;
        ensure(v["status"] == "unsat", || format!("n={n}: status {}", v["status"]))?;
        ensure(v["oracle"]["counterexample_found"] == false, || {
            format!("n={n}: grid oracle found {}", v["oracle"]["witness"])
        })?;
        ensure(v["oracle"]["resolution"] == 50, || "grid resolution is not 50".into())?;
        ensure(v["oracle_agreement"] == true, || format!("n={n}: oracle disagrees"))?;
    }

    let params = BarrierParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..IMPLICATION_SAMPLES {
        let g = rng.gen_range(1e-3..500.0);
        let d = rng.gen_range(1e-3..60.0);
        let a_l = rng.gen_range(-6.0..3.0);
        let pair = PairState::from_relative(g, 10.0, 10.0 + d, a_l, 0.0);
        let a_f = safe_accel_bound(&pair).unwrap() - rng.gen_range(0.0..10.0f64);
        let b_dot = barrier_derivative(&pair.with_follower_accel(a_f), &params).unwrap();
        let slack = 1e-12 * (1.0 + g / (d * d) * (a_l.abs() + d * d / g));
        ensure(b_dot >= -slack, || {
            format!("implication fails at g={g} d={d} a_l={a_l} a_f={a_f}: dB/dt={b_dot}")
        })?;
    }

    let elapsed = started.elapsed();
    ensure(elapsed < VERIFY_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "unsat for n=2,5; oracle clean; {IMPLICATION_SAMPLES} samples; {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn open_loop(tmp: &Path) -> Check {
    let started = Instant::now();
    let out = tmp.join("open-2");
    bcv(&out, &["verify", "--mode", "open", "--n", "2"])?;
    let v = read_json(&out.join("verdict.json"))?;
    ensure(v["status"] == "sat", || format!("status {}", v["status"]))?;
    ensure(v["validated"] == true, || "model failed validation".into())?;
    ensure(v["oracle_agreement"] == true, || "oracle disagrees".into())?;

    let mut model = ModelAssignment::default();
    for (k, val) in v["model"].as_object().ok_or("no model")? {
        model.insert(k.clone(), val.as_f64().ok_or("non-numeric model value")?);
    }
    let mut spec = QuerySpec::new(2, QueryMode::Open);
    spec.params.eps = MODEL_TOLERANCE;
    ensure(validate_counterexample(&model, &spec) == Ok(true), || {
        "model does not satisfy the query".into()
    })?;
    let pair = PairState::new(
        VehicleState::kinematic(
            model.get("x_1").unwrap(),
            model.get("v_1").unwrap(),
            model.get("a_1").unwrap(),
            spec.length,
        ),
        VehicleState::kinematic(
            model.get("x_0").unwrap(),
            model.get("v_0").unwrap(),
            model.get("a_0").unwrap(),
            spec.length,
        ),
    );
    let b = barrier_value(&pair, &spec.params)
        .defined()
        .ok_or("barrier undefined at model")?;
    let b_dot = barrier_derivative(&pair, &spec.params).map_err(|e| e.to_string())?;
    ensure(b >= -MODEL_TOLERANCE && b_dot < MODEL_TOLERANCE, || {
        format!("B={b} dB/dt={b_dot}")
    })?;

    let elapsed = started.elapsed();
    ensure(elapsed < VERIFY_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "sat, B={b:.3}, dB/dt={b_dot:.3}; {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn cubic(c: [f64; 4], t: f64) -> (f64, f64, f64) {
    (
        c[0] + t * (c[1] + t * (c[2] + t * c[3])),
        c[1] + t * (2.0 * c[2] + t * 3.0 * c[3]),
        2.0 * c[2] + 6.0 * c[3] * t,
    )
}

fn derivative_correctness() -> Check {
    let params = BarrierParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for _ in 0..FD_TRAJECTORIES {
        let v_l = rng.gen_range(10.0..30.0);
        let lead = [
            rng.gen_range(40.0..80.0),
            v_l,
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.2..0.2),
        ];
        let follow = [
            0.0,
            v_l + rng.gen_range(4.0..12.0),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.2..0.2),
        ];
        let pair_at = |t: f64| {
            let (xl, vl, al) = cubic(lead, t);
            let (xf, vf, af) = cubic(follow, t);
            PairState::new(
                VehicleState::kinematic(xf, vf, af, 4.5),
                VehicleState::kinematic(xl, vl, al, 4.5),
            )
        };
        let b = |t: f64| barrier_value(&pair_at(t), &params).defined().unwrap();
        for k in 1..10 {
            let t = k as f64 / 10.0;
            let analytic = barrier_derivative(&pair_at(t), &params).map_err(|e| e.to_string())?;
            let numeric = (b(t + FD_STEP) - b(t - FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max((analytic - numeric).abs());
            points += 1;
        }
    }
    ensure(worst <= FD_TOLERANCE, || format!("max error {worst:e}"))?;
    Ok(format!(
        "{FD_TRAJECTORIES} trajectories, {points} points, max error {worst:.1e}"
    ))
}

fn forward_invariance() -> Check {
    let started = Instant::now();
    let params = BarrierParams::default();
    let config = RolloutConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let profile = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        let mut segments = vec![(0.0, rng.gen_range(lo..=hi))];
        let mut t: f64 = 0.0;
        loop {
            t += rng.gen_range(0.5..5.0);
            if t >= config.horizon {
                break AccelProfile::piecewise(segments);
            }
            segments.push((t, rng.gen_range(lo..=hi)));
        }
    };
    let (mut accepted, mut rejected, mut worst) = (0, 0, f64::INFINITY);
    while accepted < ROLLOUTS {
        let v_l = rng.gen_range(5.0..35.0);
        let dv = rng.gen_range(-5.0..15.0f64);
        let gap = if dv > 0.0 { dv * (params.t_safe + 0.5) } else { 1.0 } + rng.gen_range(0.0..80.0);
        let initial = PairState::from_relative(gap, v_l, (v_l + dv).max(0.0), 0.0, 0.0);
        if let BarrierValue::Defined(b) = barrier_value(&initial, &params) {
            ensure(b >= 0.5, || format!("initial B {b} below 0.5"))?;
        }
        let leader = profile(&mut rng, -4.0, 2.0);
        let follower = profile(&mut rng, params.a_min, params.a_max);
        let trace = rollout(initial, &leader, &follower, &params, &config).map_err(|e| e.to_string())?;
        if trace.any_infeasible() {
            rejected += 1;
            continue;
        }
        accepted += 1;
        ensure(!trace.ever_violated(), || format!("rollout {accepted} overlapped"))?;
        if let Some(min) = trace.min_barrier() {
            worst = worst.min(min);
        }
    }
    ensure(worst >= -INVARIANCE_TOLERANCE, || format!("min B = {worst}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < ROLLOUT_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{ROLLOUTS} rollouts ({rejected} infeasible draws excluded), min B = {worst:.4}; {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn pipeline_exactness(tmp: &Path) -> Check {
    let data = cli_fixture("closing.csv");
    let data = data.to_str().unwrap();
    let scan = tmp.join("scan");
    bcv(&scan, &["scan", data])?;
    let c = read_json(&scan.join("conflicts.json"))?;
    // gap 50 - 10 t against 10 m/s closing: TTC < 3 s from frame 51 to 100
    ensure(c["counts"]["total"]["conflicts"] == 50, || {
        format!("conflicts {}", c["counts"]["total"]["conflicts"])
    })?;
    ensure(c["counts"]["lanes"]["3"]["conflicts"] == 0, || {
        "separating lane has conflicts".into()
    })?;
    ensure(c["events"].as_array().map(Vec::len) == Some(1), || {
        "expected one event".into()
    })?;
    ensure(
        c["events"][0]["first_frame"] == 51 && c["events"][0]["last_frame"] == 100,
        || format!("event {}", c["events"][0]),
    )?;

    let mut summary = Vec::new();
    for (strategy, full) in [("instantaneous", true), ("decel-limited", false)] {
        let out = tmp.join(strategy);
        bcv(&out, &["adjust", data, "--strategy", strategy])?;
        let r = read_json(&out.join("report.json"))?;
        let (before, after) = (
            r["total"]["before"].as_u64().unwrap(),
            r["total"]["after"].as_u64().unwrap(),
        );
        ensure(before == 50, || format!("{strategy}: before {before}"))?;
        if full {
            ensure(
                after == 0 && r["total"]["reduction_pct"].as_f64() == Some(100.0),
                || format!("{strategy}: after {after}"),
            )?;
        } else {
            ensure(0 < after && after < before, || {
                format!("{strategy}: after {after} not strictly partial")
            })?;
        }
        for (lane, s) in r["lanes"].as_object().unwrap() {
            ensure(s["after"].as_u64() <= s["before"].as_u64(), || {
                format!("{strategy}: lane {lane} increased")
            })?;
        }
        summary.push(format!("{strategy} {before}->{after}"));
    }
    Ok(format!("50 conflicts from frame 51; {}", summary.join(", ")))
}

fn goldens(tmp: &Path) -> Check {
    let cases = [
        (QueryMode::Open, 2, "open_n2.smt2"),
        (QueryMode::Closed, 2, "closed_n2.smt2"),
        (QueryMode::Closed, 5, "closed_n5.smt2"),
    ];
    for (mode, n, name) in cases {
        let golden = std::fs::read_to_string(core_fixture(name)).map_err(|e| format!("{name}: {e}"))?;
        let emitted = emit_smtlib(&build_query(&QuerySpec::new(n, mode)).map_err(|e| e.to_string())?);
        ensure(emitted == golden, || format!("{name}: library emission differs"))?;
        let out = tmp.join(format!("emit-{name}"));
        bcv(
            &out,
            &["verify", "--emit-only", "--mode", mode.as_str(), "--n", &n.to_string()],
        )?;
        let file = std::fs::read_to_string(out.join("query.smt2")).map_err(|e| e.to_string())?;
        let body = file
            .split_once('\n')
            .map(|(first, rest)| (first.starts_with(';'), rest));
        ensure(body == Some((true, golden.as_str())), || {
            format!("{name}: CLI query differs")
        })?;
    }
    let transcript = |name: &str| std::fs::read_to_string(core_fixture(name)).map_err(|e| format!("{name}: {e}"));
    let sat = parse_solver_output(&transcript("transcript_open_n2_sat.txt")?).map_err(|e| e.to_string())?;
    let SolverVerdict::Sat(model) = sat else {
        return Err("sat transcript".into());
    };
    ensure(model.values.values().any(|v| v.fract() != 0.0), || {
        "no rational literal parsed".into()
    })?;
    ensure(
        parse_solver_output(&transcript("transcript_closed_n2_unsat.txt")?) == Ok(SolverVerdict::Unsat),
        || "unsat transcript".into(),
    )?;
    ensure(
        parse_solver_output(&transcript("transcript_unknown.txt")?) == Ok(SolverVerdict::Unknown),
        || "unknown transcript".into(),
    )?;
    Ok("3 goldens byte-identical; sat/unsat/unknown transcripts parsed".into())
}

fn determinism(tmp: &Path) -> Check {
    let data = cli_fixture("closing.csv");
    let mut outputs = Vec::new();
    for run in ["det-a", "det-b"] {
        let out = tmp.join(run);
        bcv(&out, &["adjust", data.to_str().unwrap(), "--strategy", "decel-limited"])?;
        outputs.push(out);
    }
    for name in ["report.json", "report.csv"] {
        let a = std::fs::read(outputs[0].join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(outputs[1].join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok("report.json and report.csv byte-identical".into())
}

fn highd(tmp: &Path) -> Outcome {
    let Some(paths) = std::env::var_os("BCV_HIGHD_TRACKS").filter(|p| !p.is_empty()) else {
        return Outcome::Skip("BCV_HIGHD_TRACKS not set".into());
    };
    let inputs: Vec<String> = std::env::split_paths(&paths).map(|p| p.display().to_string()).collect();
    let check = || -> Check {
        let mut summary = Vec::new();
        for window in ["300", "3000"] {
            let mut args: Vec<&str> = vec!["adjust", "--window", window];
            args.extend(inputs.iter().map(String::as_str));

            let out = tmp.join(format!("highd-decel-{window}"));
            let mut decel = args.clone();
            decel.extend(["--strategy", "decel-limited"]);
            bcv(&out, &decel)?;
            let r = read_json(&out.join("report.json"))?;
            let reduced = r["lanes"]
                .as_object()
                .unwrap()
                .values()
                .any(|s| s["reduction_pct"].as_f64().unwrap_or(0.0) > 0.0);
            ensure(reduced, || {
                format!("window {window}: no lane reduced under decel-limited")
            })?;

            let out = tmp.join(format!("highd-inst-{window}"));
            let mut inst = args.clone();
            inst.extend(["--strategy", "instantaneous"]);
            bcv(&out, &inst)?;
            let r = read_json(&out.join("report.json"))?;
            let total = &r["total"];
            ensure(total["before"].as_u64() > Some(0), || {
                format!("window {window}: no conflicts in recording")
            })?;
            ensure(total["after"] == 0, || {
                format!("window {window}: {} conflicts left under instantaneous", total["after"])
            })?;
            summary.push(format!("{window}: {} conflicts", total["before"]));
        }
        Ok(summary.join(", "))
    };
    match check() {
        Ok(s) => Outcome::Pass(s),
        Err(e) => Outcome::Fail(e),
    }
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let t = tmp.path();
    let criteria: Vec<Criterion> = vec![
        ("closed-loop verification", Box::new(|| closed_loop(t).into())),
        ("open-loop counterexample", Box::new(|| open_loop(t).into())),
        (
            "barrier derivative correctness",
            Box::new(|| derivative_correctness().into()),
        ),
        ("forward invariance", Box::new(|| forward_invariance().into())),
        ("conflict pipeline exactness", Box::new(|| pipeline_exactness(t).into())),
        ("SMT-LIB goldens and transcripts", Box::new(|| goldens(t).into())),
        ("adjust determinism", Box::new(|| determinism(t).into())),
        ("recorded dataset (conditional)", Box::new(|| highd(t))),
    ];
    let mut failed = 0;
    println!();
    for (name, check) in criteria {
        match check() {
            Outcome::Pass(detail) => println!("PASS  {name}: {detail}"),
            Outcome::Skip(detail) => println!("SKIP  {name}: {detail}"),
            Outcome::Fail(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!();
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

impl From<Check> for Outcome {
    fn from(c: Check) -> Self {
        match c {
            Ok(s) => Outcome::Pass(s),
            Err(e) => Outcome::Fail(e),
        }
    }
}
