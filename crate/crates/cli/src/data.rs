use std::collections::BTreeMap;
use std::path::PathBuf;

use bcv_core::conflict::{
    apply_adjustment, scan_pairs, ConflictEvent, ConflictScan, FrameRange, LaneSummary, TtcHistogram, HIST_BIN_WIDTH,
    HIST_UPPER,
};
use bcv_core::ingest::{load_dataset, pair_frames, TrajectoryDataset};
use bcv_core::{PairClass, TtcValue};
use serde_json::{Map, Value};

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::output::{describe_inputs, fixed, number, to_json, Artifacts};

fn load(config: &RunConfig, inputs: &[PathBuf]) -> Result<TrajectoryDataset, CliError> {
    let dataset = load_dataset(inputs, &config.ingest).map_err(|e| CliError::Data(e.to_string()))?;
    for w in dataset.warnings.iter().take(10) {
        eprintln!("warning: vehicle {} frame {}: {}", w.vehicle, w.frame, w.message);
    }
    if dataset.warnings.len() > 10 {
        eprintln!("warning: {} more data-quality warnings", dataset.warnings.len() - 10);
    }
    Ok(dataset)
}

fn window_json(config: &RunConfig, range: FrameRange) -> Value {
    let mut m = Map::new();
    m.insert(
        "spec".into(),
        config.window.clone().unwrap_or_else(|| "all".into()).into(),
    );
    m.insert("start".into(), range.start.into());
    m.insert("end".into(), range.end.into());
    m.insert("frames".into(), range.len().into());
    Value::Object(m)
}

fn events_json(events: &[ConflictEvent]) -> Value {
    Value::Array(events.iter().map(to_json).collect())
}

fn lane_counts(scan: &ConflictScan) -> Value {
    let mut lanes: BTreeMap<i32, [u64; 5]> = BTreeMap::new();
    for inst in &scan.instances {
        let e = lanes.entry(inst.lane).or_default();
        e[0] += 1;
        e[1] += u64::from(inst.class == PairClass::Conflict);
        e[2] += u64::from(inst.class == PairClass::Collision);
    }
    for ev in &scan.events {
        lanes.entry(ev.lane).or_default()[3] += 1;
    }
    for ev in &scan.collisions {
        lanes.entry(ev.lane).or_default()[4] += 1;
    }
    let row = |c: [u64; 5]| {
        let mut m = Map::new();
        for (key, value) in ["pair_frames", "conflicts", "collisions", "events", "collision_events"]
            .into_iter()
            .zip(c)
        {
            m.insert(key.into(), value.into());
        }
        Value::Object(m)
    };
    let mut total = [0; 5];
    for c in lanes.values() {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    let mut m = Map::new();
    m.insert(
        "lanes".into(),
        Value::Object(lanes.into_iter().map(|(l, c)| (l.to_string(), row(c))).collect()),
    );
    m.insert("total".into(), row(total));
    Value::Object(m)
}

fn ttc_cell(ttc: TtcValue) -> String {
    ttc.finite().map(fixed).unwrap_or_default()
}

pub fn scan(config: &RunConfig, artifacts: &Artifacts, inputs: &[PathBuf]) -> Result<(), CliError> {
    let dataset = load(config, inputs)?;
    let range = config
        .frame_window()?
        .resolve(&dataset)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let pairs = pair_frames(&dataset);
    let scan = scan_pairs(&pairs, &config.barrier, range);

    if config.wants(Format::Json) {
        let mut body = Map::new();
        body.insert("inputs".into(), describe_inputs(inputs)?);
        body.insert("window".into(), window_json(config, range));
        body.insert("t_safe".into(), number(config.barrier.t_safe));
        body.insert("counts".into(), lane_counts(&scan));
        body.insert("events".into(), events_json(&scan.events));
        body.insert("collisions".into(), events_json(&scan.collisions));
        let mut diag = Map::new();
        diag.insert(
            "dangling_leaders".into(),
            (pairs.diagnostics.dangling.len() as u64).into(),
        );
        diag.insert(
            "order_contradictions".into(),
            (pairs.diagnostics.order_contradictions as u64).into(),
        );
        diag.insert("data_warnings".into(), (dataset.warnings.len() as u64).into());
        diag.insert(
            "mirrored_lanes".into(),
            dataset.provenance.mirrored_lanes.clone().into(),
        );
        body.insert("diagnostics".into(), Value::Object(diag));
        artifacts.write_json("conflicts.json", body)?;
    }
    if config.wants(Format::Csv) {
        let rows = scan.instances.iter().map(|i| {
            vec![
                i.pair_id(),
                i.frame.to_string(),
                ttc_cell(i.ttc),
                i.class.as_str().to_string(),
            ]
        });
        artifacts.write_csv("ttc_per_frame.csv", &["pair_id", "frame", "ttc", "class"], rows)?;
    }
    eprintln!(
        "window {range}: {} pair-frames, {} conflicts in {} events, {} collision frames",
        scan.instances.len(),
        scan.conflict_count(),
        scan.events.len(),
        scan.count(PairClass::Collision)
    );
    Ok(())
}

fn histogram_json(h: &TtcHistogram) -> Value {
    let mut m = Map::new();
    m.insert("bin_width".into(), number(HIST_BIN_WIDTH));
    m.insert("upper".into(), number(HIST_UPPER));
    m.insert("counts".into(), h.counts.clone().into());
    m.insert("above_range".into(), h.above_range.into());
    Value::Object(m)
}

fn histogram_rows(h: &TtcHistogram) -> impl Iterator<Item = Vec<String>> + '_ {
    h.rows()
        .map(|(lo, hi, c)| vec![fixed(lo), fixed(hi), c.to_string()])
        .chain(std::iter::once(vec![
            fixed(HIST_UPPER),
            String::new(),
            h.above_range.to_string(),
        ]))
}

fn summary_row(lane: String, s: &LaneSummary) -> Vec<String> {
    vec![lane, s.before.to_string(), s.after.to_string(), fixed(s.reduction_pct)]
}

pub fn adjust(config: &RunConfig, artifacts: &Artifacts, inputs: &[PathBuf]) -> Result<(), CliError> {
    let dataset = load(config, inputs)?;
    let strategy = config.adjustment_strategy()?;
    let run = apply_adjustment(
        &dataset,
        &strategy,
        config.mode,
        &config.barrier,
        config.frame_window()?,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    let report = &run.report;

    if config.wants(Format::Json) {
        let mut body = Map::new();
        body.insert("inputs".into(), describe_inputs(inputs)?);
        body.insert("window".into(), window_json(config, report.window));
        body.insert("strategy".into(), to_json(&strategy));
        body.insert("mode".into(), to_json(&config.mode));
        body.insert(
            "lanes".into(),
            Value::Object(report.lanes.iter().map(|(l, s)| (l.to_string(), to_json(s))).collect()),
        );
        body.insert("total".into(), to_json(&report.total));
        body.insert("no_conflicts".into(), report.no_conflicts.into());
        body.insert("hist_before".into(), histogram_json(&report.hist_before));
        body.insert("hist_after".into(), histogram_json(&report.hist_after));
        body.insert("adjusted_samples".into(), (run.adjustments.len() as u64).into());
        artifacts.write_json("report.json", body)?;
    }
    if config.wants(Format::Csv) {
        let rows = report
            .lanes
            .iter()
            .map(|(l, s)| summary_row(l.to_string(), s))
            .chain(std::iter::once(summary_row("total".into(), &report.total)));
        artifacts.write_csv("report.csv", &["lane", "before", "after", "reduction_pct"], rows)?;
        let header = ["bin_lo", "bin_hi", "count"];
        artifacts.write_csv("hist_before.csv", &header, histogram_rows(&report.hist_before))?;
        artifacts.write_csv("hist_after.csv", &header, histogram_rows(&report.hist_after))?;
    }
    eprintln!(
        "window {}: conflicts {} -> {} ({:.1}% reduction){}",
        report.window,
        report.total.before,
        report.total.after,
        report.total.reduction_pct,
        if report.no_conflicts {
            ", no conflicts to reduce"
        } else {
            ""
        }
    );
    Ok(())
}
