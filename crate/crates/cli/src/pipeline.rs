//! ingest → label → estimate → evaluate → report.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use blecte::aoa::{estimate_stream, Algorithm, CalibrationTable, EstimateRecord, EstimatorConfig};
use blecte::dataset_io::{
    parse_conversion_dictionary, parse_gt_file, parse_signal_file, read_packet_store, reassemble, write_packet_store,
    ExperimentEntry, GtRecord, GtSchema, SignalSchema,
};
use blecte::iq::{extract_phases, slot_filter, write_phase_csv};
use blecte::labeling::{label_packets, AnchorConfig, DistanceMode, LabelError, LabelOptions, LabeledPacket};
use blecte::metrics::{write_cdf_csv, write_report_csv, ErrorReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, ExperimentInfo};
use crate::config::{config_enum, pick};
use crate::error::{CliError, Context as _, Result};
use crate::{AlgoArg, Context, DistanceModeArg, EstimateArgs, ExperimentFilter, IngestArgs, LabelArgs, ReportArgs};

/// Experiment names become directory names.
pub fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && !name.contains(['/', '\\'])
        && name != artifacts::RANGE;
    if ok {
        Ok(())
    } else {
        Err(CliError::data("InvalidExperimentName", format!("'{name}' cannot be used as a directory name")))
    }
}

pub fn ingest(ctx: &Context, a: IngestArgs) -> Result<()> {
    let dataset = a
        .dataset
        .or_else(|| ctx.config.dataset.clone())
        .ok_or_else(|| CliError::usage("ingest needs --dataset DIR"))?;
    let dict_path = dataset.join(&a.conversion);
    let mut entries = parse_conversion_dictionary(&artifacts::read(&dict_path)?).at(&dict_path)?;
    let only = &a.filter.experiments;
    if let Some(missing) = only.iter().find(|n| !entries.iter().any(|e| &e.name == *n)) {
        return Err(CliError::data("UnknownExperiment", format!("'{missing}' is not in the dictionary")).at(&dict_path));
    }
    if !only.is_empty() {
        entries.retain(|e| only.contains(&e.name));
    }
    for e in &entries {
        check_name(&e.name).at(&dict_path)?;
    }
    let signal_schema = ctx.config.signal_schema.clone().unwrap_or_default();
    let gt_schema = ctx.config.gt_schema.clone().unwrap_or_default();
    let infos: Vec<ExperimentInfo> = entries
        .par_iter()
        .map(|e| ingest_one(&dataset, e, &ctx.out, &signal_schema, &gt_schema))
        .collect::<Result<_>>()?;
    for i in &infos {
        println!(
            "{}: {} packets ({} incomplete) from {} chunks, {} GT records",
            i.name, i.packets, i.incomplete, i.chunks, i.gt_records
        );
    }
    Ok(())
}

fn ingest_one(
    dataset: &Path,
    e: &ExperimentEntry,
    out: &Path,
    signal_schema: &SignalSchema,
    gt_schema: &GtSchema,
) -> Result<ExperimentInfo> {
    let signal_path = dataset.join(&e.signal);
    let chunks = parse_signal_file(&artifacts::read(&signal_path)?, signal_schema).at(&signal_path)?;
    let packets = reassemble(&chunks).at(&signal_path)?;
    let gt_path = dataset.join(&e.gt);
    let gt = parse_gt_file(&artifacts::read(&gt_path)?, gt_schema).at(&gt_path)?;

    let dir = out.join(&e.name);
    let path = dir.join(artifacts::PACKETS);
    let mut w = artifacts::create(&path)?;
    write_packet_store(&packets, &mut w).at(&path)?;
    artifacts::finish(w, &path)?;
    artifacts::write_jsonl(&dir.join(artifacts::GT), &gt)?;
    let info = ExperimentInfo {
        name: e.name.clone(),
        height_mm: e.height_mm,
        obstacles: e.obstacles,
        scenario: e.scenario.clone(),
        signal: e.signal.clone(),
        gt: e.gt.clone(),
        chunks: chunks.len(),
        packets: packets.len(),
        incomplete: packets.iter().filter(|p| !p.complete).count(),
        gt_records: gt.len(),
    };
    artifacts::write_json(&dir.join(artifacts::EXPERIMENT), &info)?;
    Ok(info)
}

fn label_reason(e: &LabelError) -> &'static str {
    match e {
        LabelError::OutOfRange { .. } => "out_of_range",
        LabelError::DegeneratePosition => "degenerate_position",
        LabelError::EmptyGroundTruth => "empty_ground_truth",
        LabelError::IncompletePacket => "incomplete_packet",
    }
}

#[derive(Serialize)]
struct UnlabeledRow {
    idx: u64,
    timestamp: f64,
    reason: &'static str,
}

#[derive(Serialize)]
struct LabelSummary {
    experiment: String,
    packets: usize,
    labeled: usize,
    unlabeled: usize,
    out_of_range: usize,
    incomplete_packet: usize,
    degenerate_position: usize,
    empty_ground_truth: usize,
}

pub fn label(ctx: &Context, a: LabelArgs) -> Result<()> {
    let s = &ctx.config.label;
    let d = AnchorConfig::default();
    let mode = pick(a.distance_mode, config_enum(&s.distance_mode, "label.distance_mode")?, DistanceModeArg::Spatial);
    let opts = LabelOptions {
        anchor: AnchorConfig {
            x: pick(a.anchor_x, s.anchor_x, d.x),
            y: pick(a.anchor_y, s.anchor_y, d.y),
            height: pick(a.anchor_height, s.anchor_height, d.height),
            misalignment_deg: pick(a.misalignment, s.misalignment, d.misalignment_deg),
        },
        max_gap: pick(a.max_gap, s.max_gap, blecte::labeling::DEFAULT_MAX_GAP),
        distance_mode: match mode {
            DistanceModeArg::Spatial => DistanceMode::Spatial,
            DistanceModeArg::Planar => DistanceMode::Planar,
        },
    };
    if !(opts.max_gap > 0.0) {
        return Err(CliError::usage("--max-gap must be positive"));
    }
    let exps = artifacts::experiments(&ctx.out, &a.filter.experiments)?;
    let summaries: Vec<LabelSummary> = exps
        .par_iter()
        .map(|e| label_one(&ctx.out.join(&e.name), &e.name, &opts))
        .collect::<Result<_>>()?;
    artifacts::write_csv(&ctx.out.join(artifacts::UNLABELED_SUMMARY), &summaries)?;
    for s in &summaries {
        println!("{}: {} of {} packets labeled", s.experiment, s.labeled, s.packets);
    }
    Ok(())
}

fn label_one(dir: &Path, name: &str, opts: &LabelOptions) -> Result<LabelSummary> {
    let path = dir.join(artifacts::PACKETS);
    let file = fs::File::open(&path).at(&path)?;
    let packets = read_packet_store(BufReader::new(file)).at(&path)?;
    let gt: Vec<GtRecord> = artifacts::read_jsonl(&dir.join(artifacts::GT))?;
    let outcome = label_packets(&packets, &gt, opts);
    artifacts::write_jsonl(&dir.join(artifacts::LABELED), &outcome.labeled)?;
    let rows: Vec<UnlabeledRow> = outcome
        .unlabeled
        .iter()
        .map(|u| UnlabeledRow {
            idx: u.idx,
            timestamp: u.timestamp,
            reason: label_reason(&u.reason),
        })
        .collect();
    if rows.is_empty() {
        let path = dir.join(artifacts::UNLABELED);
        let mut w = artifacts::create(&path)?;
        writeln!(w, "idx,timestamp,reason").at(&path)?;
        artifacts::finish(w, &path)?;
    } else {
        artifacts::write_csv(&dir.join(artifacts::UNLABELED), &rows)?;
    }
    let count = |r: &str| rows.iter().filter(|u| u.reason == r).count();
    Ok(LabelSummary {
        experiment: name.to_string(),
        packets: packets.len(),
        labeled: outcome.labeled.len(),
        unlabeled: rows.len(),
        out_of_range: count("out_of_range"),
        incomplete_packet: count("incomplete_packet"),
        degenerate_position: count("degenerate_position"),
        empty_ground_truth: count("empty_ground_truth"),
    })
}

/// Settings an estimate run used, stored next to its output.
#[derive(Debug, Serialize, Deserialize)]
struct EstimateSettings {
    algorithm: String,
    window: usize,
    spacing: f64,
    grid_deg: f64,
    pairing_window: f64,
    calibration: Option<PathBuf>,
}

const ESTIMATE_SETTINGS: &str = "estimate.json";

pub fn estimate(ctx: &Context, a: EstimateArgs) -> Result<()> {
    let s = &ctx.config.estimate;
    let d = EstimatorConfig::default();
    let algo = pick(a.algo, config_enum(&s.algo, "estimate.algo")?, AlgoArg::Ti);
    let mut cfg = EstimatorConfig {
        algorithm: match algo {
            AlgoArg::Pdoa => Algorithm::Pdoa,
            AlgoArg::Ti => Algorithm::Ti,
            AlgoArg::Music => Algorithm::Music,
        },
        window: pick(a.window, s.window, d.window),
        grid_deg: pick(a.grid, s.grid, d.grid_deg),
        pairing_window: pick(a.pairing_window, s.pairing_window, d.pairing_window),
        ..d
    };
    cfg.geometry.spacing = pick(a.spacing, s.spacing, cfg.geometry.spacing);
    let calib = a.calib.or_else(|| s.calib.clone());
    if let Some(path) = &calib {
        let bytes = artifacts::read(path)?;
        cfg.calibration = CalibrationTable::from_json(&bytes, cfg.geometry.elements).at(path)?;
    }
    if !(cfg.grid_deg > 0.0 && cfg.grid_deg <= 10.0) {
        return Err(CliError::usage("--grid must be in (0, 10] degrees"));
    }
    if !(cfg.pairing_window > 0.0) {
        return Err(CliError::usage("--pairing-window must be positive"));
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let settings = EstimateSettings {
        algorithm: cfg.algorithm.to_string(),
        window: cfg.window,
        spacing: cfg.geometry.spacing,
        grid_deg: cfg.grid_deg,
        pairing_window: cfg.pairing_window,
        calibration: calib,
    };

    let exps = artifacts::experiments(&ctx.out, &a.filter.experiments)?;
    let lines: Vec<String> = exps
        .par_iter()
        .map(|e| estimate_one(&ctx.out.join(&e.name), &e.name, &cfg, &settings, a.dump_phases))
        .collect::<Result<_>>()?;
    for l in lines {
        println!("{l}");
    }
    Ok(())
}

fn estimate_one(
    dir: &Path,
    name: &str,
    cfg: &EstimatorConfig,
    settings: &EstimateSettings,
    dump: Option<usize>,
) -> Result<String> {
    let labeled: Vec<LabeledPacket> = artifacts::read_jsonl(&dir.join(artifacts::LABELED))?;
    let records = estimate_stream(&labeled, cfg);
    artifacts::write_csv(&dir.join(artifacts::ESTIMATES), &records)?;
    artifacts::write_json(&dir.join(ESTIMATE_SETTINGS), settings)?;
    if let Some(n) = dump {
        let phases = dir.join(artifacts::PHASES);
        for lp in labeled.iter().take(n) {
            let Ok(series) = slot_filter(&lp.packet, &cfg.layout).map_err(|e| e.to_string()).and_then(|s| extract_phases(&s).map_err(|e| e.to_string())) else {
                continue;
            };
            let path = phases.join(format!("{}.csv", lp.packet.idx));
            let mut w = artifacts::create(&path)?;
            write_phase_csv(&series, &cfg.layout.switch_pattern, &mut w).at(&path)?;
            artifacts::finish(w, &path)?;
        }
    }
    let estimated = records.iter().filter(|r| r.theta_ula.is_some()).count();
    let selected = records.iter().filter(|r| r.selected.is_some()).count();
    Ok(format!(
        "{name}: {} packets, {estimated} estimated, {selected} selected ({})",
        records.len(),
        settings.algorithm
    ))
}

/// `report.json` of one experiment.
#[derive(Debug, Serialize, Deserialize)]
struct Evaluation {
    experiment: String,
    algorithm: Option<String>,
    #[serde(flatten)]
    report: ErrorReport,
}

pub fn evaluate(ctx: &Context, a: ExperimentFilter) -> Result<()> {
    let exps = artifacts::experiments(&ctx.out, &a.experiments)?;
    let evals: Vec<Evaluation> = exps
        .par_iter()
        .map(|e| evaluate_one(&ctx.out.join(&e.name), &e.name))
        .collect::<Result<_>>()?;
    for ev in &evals {
        let r = &ev.report;
        let range = r.range_mae.map_or("n/a".to_string(), |v| format!("{v:.2}°"));
        println!(
            "{}: MAE {:.2}°, range MAE {range}, moving-average MAE {:.2}°, RMSE {:.2}° over {} estimates",
            ev.experiment, r.mae, r.moving_avg_mae, r.rmse, r.count
        );
    }

    // the summary covers every evaluated experiment, not only this run's
    let mut all = Vec::new();
    for e in artifacts::experiments(&ctx.out, &[])? {
        let path = ctx.out.join(&e.name).join(artifacts::REPORT);
        if path.is_file() {
            all.push(artifacts::read_json::<Evaluation>(&path)?);
        }
    }
    let path = ctx.out.join(artifacts::EVALUATION);
    let mut w = artifacts::create(&path)?;
    write_report_csv(all.iter().map(|e| (e.experiment.as_str(), &e.report)), &mut w).at(&path)?;
    artifacts::finish(w, &path)
}

fn evaluate_one(dir: &Path, name: &str) -> Result<Evaluation> {
    let path = dir.join(artifacts::ESTIMATES);
    let records: Vec<EstimateRecord> = artifacts::read_csv(&path)?;
    let (mut gt, mut est, mut smooth) = (Vec::new(), Vec::new(), Vec::new());
    for r in &records {
        if let (Some(s), Some(m), Some(g)) = (r.selected, r.smoothed, r.gt_azimuth) {
            gt.push(g);
            est.push(s);
            smooth.push(m);
        }
    }
    if gt.is_empty() {
        return Err(CliError::data("NoEstimates", "no labeled, selected estimates to evaluate").at(&path));
    }
    let report = ErrorReport::compute(&gt, &est, Some(&smooth), 1).at(&path)?;
    let settings = dir.join(ESTIMATE_SETTINGS);
    let algorithm = if settings.is_file() {
        Some(artifacts::read_json::<EstimateSettings>(&settings)?.algorithm)
    } else {
        None
    };
    let cdf_path = dir.join(artifacts::CDF);
    let mut w = artifacts::create(&cdf_path)?;
    write_cdf_csv(&report.cdf, &mut w).at(&cdf_path)?;
    artifacts::finish(w, &cdf_path)?;
    let ev = Evaluation {
        experiment: name.to_string(),
        algorithm,
        report,
    };
    artifacts::write_json(&dir.join(artifacts::REPORT), &ev)?;
    Ok(ev)
}

#[derive(Default)]
struct Cell {
    mae: Vec<f64>,
    range_mae: Vec<f64>,
    moving_avg_mae: Vec<f64>,
}

fn mean(v: &[f64]) -> String {
    if v.is_empty() {
        String::new()
    } else {
        format!("{:.2}", v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn report(ctx: &Context, a: ReportArgs) -> Result<()> {
    // height in µm as an integer key keeps the ordering total
    let mut table: BTreeMap<i64, [Cell; 2]> = BTreeMap::new();
    let mut skipped = Vec::new();
    for e in artifacts::experiments(&ctx.out, &[])? {
        let path = ctx.out.join(&e.name).join(artifacts::REPORT);
        if !path.is_file() {
            continue;
        }
        let (Some(h), Some(obstacles)) = (e.height_mm, e.obstacles) else {
            skipped.push(e.name);
            continue;
        };
        let ev: Evaluation = artifacts::read_json(&path)?;
        let cell = &mut table.entry((h * 1000.0).round() as i64).or_default()[usize::from(!obstacles)];
        cell.mae.push(ev.report.mae);
        cell.range_mae.extend(ev.report.range_mae);
        cell.moving_avg_mae.push(ev.report.moving_avg_mae);
    }
    if table.is_empty() {
        return Err(CliError::data(
            "NoReports",
            "no evaluated experiments with height and obstacle metadata; run `evaluate` first",
        )
        .at(&ctx.out));
    }
    let path = a.output.unwrap_or_else(|| ctx.out.join(artifacts::TABLE2));
    let mut w = artifacts::create(&path)?;
    writeln!(
        w,
        "height_mm,with_obstacles_mae,with_obstacles_range_mae,with_obstacles_moving_avg_mae,\
         without_obstacles_mae,without_obstacles_range_mae,without_obstacles_moving_avg_mae"
    )
    .at(&path)?;
    for (h, [with, without]) in &table {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            *h as f64 / 1000.0,
            mean(&with.mae),
            mean(&with.range_mae),
            mean(&with.moving_avg_mae),
            mean(&without.mae),
            mean(&without.range_mae),
            mean(&without.moving_avg_mae)
        )
        .at(&path)?;
    }
    artifacts::finish(w, &path)?;
    if !skipped.is_empty() {
        eprintln!("note: skipped experiments without height/obstacle metadata: {}", skipped.join(", "));
    }
    println!("{} heights written to {}", table.len(), path.display());
    Ok(())
}
