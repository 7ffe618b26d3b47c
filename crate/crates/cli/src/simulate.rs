//! `simulate`: synthetic experiments in the on-disk dataset format.

use std::path::Path;

use blecte::simgen::{
    generate_rss_dataset, generate_scenario, write_scenario, PathKind, RssWorldConfig, ScenarioConfig,
    CONVERSION_FILE, GT_FILE, SIGNAL_FILE,
};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::artifacts;
use crate::config::{config_enum, pick};
use crate::error::{CliError, Context as _, Result};
use crate::pipeline::check_name;
use crate::{Context, ScenarioArg, SimulateArgs};

#[derive(Serialize)]
struct Provenance<'a, T> {
    seed: u64,
    config: &'a T,
}

pub fn simulate(ctx: &Context, a: SimulateArgs) -> Result<()> {
    let s = &ctx.config.simulate;
    let scenario = pick(a.scenario, config_enum(&s.scenario, "simulate.scenario")?, ScenarioArg::Stopping);
    let seed = pick(a.seed, ctx.config.seed, 0);
    let path = match scenario {
        ScenarioArg::Stopping => PathKind::Stopping,
        ScenarioArg::Continuous => PathKind::Continuous,
        ScenarioArg::Zigzag => PathKind::Zigzag,
        ScenarioArg::RssWorld => return rss_world(ctx, a.name, seed),
    };
    let defaults = ScenarioConfig::default();
    let cfg = ScenarioConfig {
        path,
        tag_height: pick(a.height, s.height, 1100.0),
        radius: pick(a.distance, s.distance, 2000.0),
        snr_db: pick(a.snr, s.snr, defaults.snr_db),
        cfo_hz: pick(a.cfo, s.cfo, defaults.cfo_hz),
        sweep: pick(a.sweep, s.sweep, defaults.sweep),
        speed_deg_s: pick(a.speed, s.speed, defaults.speed_deg_s),
        obstacles: if a.obstacles.is_empty() {
            s.obstacles.clone().unwrap_or_default()
        } else {
            a.obstacles
        },
        anomaly: a.anomaly.or(s.anomaly),
        rss_noise_db: s.rss_noise.unwrap_or(defaults.rss_noise_db),
        ..defaults
    };
    cfg.validate().map_err(CliError::usage)?;
    let name = a.name.or_else(|| s.name.clone()).unwrap_or_else(|| {
        format!(
            "{}-{}mm-{}",
            cfg.path,
            cfg.tag_height,
            if cfg.obstacles.is_empty() { "clear" } else { "obstacles" }
        )
    });
    check_name(&name)?;

    let generated = generate_scenario(&cfg, seed).map_err(CliError::usage)?;
    let dir = ctx.out.join(&name);
    write_scenario(&dir, &name, &cfg, &generated).at(&dir)?;
    artifacts::write_json(&dir.join("scenario.json"), &Provenance { seed, config: &cfg })?;
    merge_conversion(
        &ctx.out,
        &name,
        serde_json::json!({
            "signal": format!("{name}/{SIGNAL_FILE}"),
            "gt": format!("{name}/{GT_FILE}"),
            "height_mm": cfg.tag_height,
            "obstacles": !cfg.obstacles.is_empty(),
            "scenario": cfg.path.to_string(),
        }),
    )?;
    println!(
        "{name}: {} packets in {} chunks, {} GT records -> {}",
        generated.packets.len(),
        generated.chunks.len(),
        generated.gt.len(),
        dir.display()
    );
    Ok(())
}

/// Adds or replaces one entry of OUT/conversion.json, keeping the rest.
fn merge_conversion(out: &Path, name: &str, entry: Value) -> Result<()> {
    let path = out.join(CONVERSION_FILE);
    let mut dict: Map<String, Value> = if path.is_file() {
        artifacts::read_json(&path)?
    } else {
        Map::new()
    };
    dict.insert(name.to_string(), entry);
    artifacts::write_json(&path, &dict)
}

fn rss_world(ctx: &Context, name: Option<String>, seed: u64) -> Result<()> {
    let s = &ctx.config.simulate;
    let defaults = RssWorldConfig::default();
    let cfg = RssWorldConfig {
        segments: s.segments.unwrap_or(defaults.segments),
        packets_per_segment: s.packets_per_segment.unwrap_or(defaults.packets_per_segment),
        noise_sd: s.rss_noise.unwrap_or(defaults.noise_sd),
        ..defaults
    };
    if cfg.segments == 0 || cfg.packets_per_segment == 0 {
        return Err(CliError::usage("simulate.segments and simulate.packets_per_segment must be at least 1"));
    }
    let name = name.or_else(|| s.name.clone()).unwrap_or_else(|| "rss-world".to_string());
    check_name(&name)?;
    let world = generate_rss_dataset(&cfg, seed);
    let dir = ctx.out.join(&name);
    artifacts::write_jsonl(&dir.join("observations.jsonl"), &world.observations)?;
    artifacts::write_json(&dir.join("channels.json"), &world.channels)?;
    artifacts::write_json(&dir.join("scenario.json"), &Provenance { seed, config: &cfg })?;
    println!(
        "{name}: {} observations over {} segments -> {}",
        world.observations.len(),
        cfg.segments,
        dir.display()
    );
    Ok(())
}
