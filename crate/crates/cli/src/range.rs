//! `range fit` and `range eval`.

use std::path::{Path, PathBuf};

use blecte::dataset_io::NUM_DATA_CHANNELS;
use blecte::labeling::LabeledPacket;
use blecte::metrics::{cdf, write_cdf_csv};
use blecte::ranging::{
    build_feature_rows, chill_fit, logloss_fit, mean_timestep, split_rows, ChillModel, ErrorSummary, FeatureRowStats,
    GprHyper, GprModel, GprOptions, LogLossModel, RangingFeatureRow, RssObservation,
};
use serde::{Deserialize, Serialize};

use crate::artifacts;
use crate::config::{config_enum, pick};
use crate::error::{CliError, Context as _, Result};
use crate::{Context, ModelArg, RangeEvalArgs, RangeFitArgs};

/// Streams whose clocks overlap the previous one are placed this many
/// seconds after it, so the row-clearing threshold separates them.
const STREAM_GAP_S: f64 = 60.0;

const ROWS: &str = "rows.jsonl";
const ROWS_META: &str = "rows.json";

#[derive(Debug, Serialize, Deserialize)]
struct RowsMeta {
    inputs: Vec<PathBuf>,
    packets: usize,
    mean_timestep: f64,
    stats: FeatureRowStats,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum Fitted {
    Ll(LogLossModel),
    Chill(ChillModel),
    Gpr {
        hyper: GprHyper,
        jitter: f64,
        log_marginal_likelihood: f64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    train_size: usize,
    seed: u64,
    rows: usize,
    #[serde(flatten)]
    fitted: Fitted,
}

fn model_path(dir: &Path, m: ModelArg) -> PathBuf {
    dir.join(format!("model_{}.json", m.name()))
}

/// Reads either labeled packets or bare RSS observations.
fn read_observations(path: &Path) -> Result<Vec<RssObservation>> {
    let values: Vec<serde_json::Value> = artifacts::read_jsonl(path)?;
    let labeled = values.first().is_some_and(|v| v.get("packet").is_some());
    values
        .into_iter()
        .enumerate()
        .map(|(n, v)| {
            let parsed = if labeled {
                serde_json::from_value::<LabeledPacket>(v).map(|p| RssObservation::from_labeled(&p))
            } else {
                serde_json::from_value::<RssObservation>(v)
            };
            parsed.map_err(|e| CliError::data("InvalidRecord", format!("record {}: {e}", n + 1)).at(path))
        })
        .collect()
}

fn concatenate(streams: Vec<Vec<RssObservation>>) -> Vec<RssObservation> {
    let mut out: Vec<RssObservation> = Vec::new();
    for mut s in streams {
        if let (Some(last), Some(first)) = (out.last(), s.first()) {
            if first.timestamp <= last.timestamp {
                let shift = last.timestamp + STREAM_GAP_S - first.timestamp;
                s.iter_mut().for_each(|o| o.timestamp += shift);
            }
        }
        out.extend(s);
    }
    out
}

fn train_xy(rows: &[RangingFeatureRow]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        rows.iter().map(|r| r.rss_by_channel.clone()).collect(),
        rows.iter().map(|r| r.distance).collect(),
    )
}

pub fn fit(ctx: &Context, a: RangeFitArgs) -> Result<()> {
    let s = &ctx.config.range;
    let model = pick(a.model, config_enum(&s.model, "range.model")?, ModelArg::Gpr);
    let train_size = pick(a.train_size, s.train_size, 1000);
    let seed = pick(a.seed, ctx.config.seed, 0);
    if train_size == 0 {
        return Err(CliError::usage("--train-size must be at least 1"));
    }
    let inputs = if a.inputs.is_empty() {
        artifacts::experiments(&ctx.out, &[])?
            .iter()
            .map(|e| ctx.out.join(&e.name).join(artifacts::LABELED))
            .filter(|p| p.is_file())
            .collect()
    } else {
        a.inputs
    };
    if inputs.is_empty() {
        return Err(CliError::data("NoInputs", "no labeled experiments; run `label` or pass --input").at(&ctx.out));
    }
    let streams = inputs.iter().map(|p| read_observations(p)).collect::<Result<Vec<_>>>()?;
    let stream = concatenate(streams);
    let mu = match a.mean_timestep.or(s.mean_timestep) {
        Some(v) if v > 0.0 => v,
        Some(_) => return Err(CliError::usage("--mean-timestep must be positive")),
        None => mean_timestep(&stream),
    };
    let (rows, stats) = build_feature_rows(&stream, mu);

    let dir = ctx.out.join(artifacts::RANGE);
    artifacts::write_jsonl(&dir.join(ROWS), &rows)?;
    artifacts::write_json(
        &dir.join(ROWS_META),
        &RowsMeta {
            inputs,
            packets: stream.len(),
            mean_timestep: mu,
            stats,
        },
    )?;

    let (train, test) = split_rows(&rows, train_size, seed)?;
    let fitted = match model {
        ModelArg::Ll => Fitted::Ll(logloss_fit(&train)?),
        ModelArg::Chill => Fitted::Chill(chill_fit(&train)?),
        ModelArg::Gpr => {
            let (x, y) = train_xy(&train);
            let m = GprModel::fit(
                &x,
                &y,
                &GprOptions {
                    seed,
                    ..GprOptions::default()
                },
            )?;
            Fitted::Gpr {
                hyper: m.hyper,
                jitter: m.jitter,
                log_marginal_likelihood: m.log_marginal_likelihood,
            }
        }
    };
    artifacts::write_json(
        &model_path(&dir, model),
        &SavedModel {
            train_size,
            seed,
            rows: rows.len(),
            fitted,
        },
    )?;
    println!(
        "{} rows from {} packets ({:.1} packets/row, {} cleared); {} trained on {}, {} held out",
        rows.len(),
        stream.len(),
        stats.packets_per_row,
        stats.cleared,
        model.name(),
        train.len(),
        test.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct ErrorRow {
    row: usize,
    channel: Option<u8>,
    distance: f64,
    predicted: f64,
    error: f64,
    std: Option<f64>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    model: &'a str,
    mae: f64,
    median: f64,
    variance: f64,
    /// GPR only: mean predictive variance over the test rows.
    mean_predictive_variance: Option<f64>,
    count: usize,
}

fn mean_predictive_variance(errors: &[ErrorRow]) -> Option<f64> {
    let v: Vec<f64> = errors.iter().filter_map(|r| r.std).map(|s| s * s).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn eval(ctx: &Context, a: RangeEvalArgs) -> Result<()> {
    let model = pick(a.model, config_enum(&ctx.config.range.model, "range.model")?, ModelArg::Gpr);
    let dir = ctx.out.join(artifacts::RANGE);
    let path = model_path(&dir, model);
    if !path.is_file() {
        return Err(CliError::data(
            "ModelNotFound",
            format!("no fitted {} model; run `range fit --model {}`", model.name(), model.name()),
        )
        .at(&path));
    }
    let saved: SavedModel = artifacts::read_json(&path)?;
    let rows_path = dir.join(ROWS);
    let rows: Vec<RangingFeatureRow> = artifacts::read_jsonl(&rows_path)?;
    if rows.len() != saved.rows {
        return Err(CliError::data(
            "StaleModel",
            format!("model was fitted on {} rows but {} are present; refit", saved.rows, rows.len()),
        )
        .at(&rows_path));
    }
    let (train, test) = split_rows(&rows, saved.train_size, saved.seed)?;

    let per_packet = |predict: &dyn Fn(usize, f64) -> f64| -> Vec<ErrorRow> {
        test.iter()
            .enumerate()
            .flat_map(|(i, r)| {
                (0..NUM_DATA_CHANNELS).map(move |c| (i, c, r))
            })
            .map(|(i, c, r)| {
                let predicted = predict(c, r.rss_by_channel[c]);
                ErrorRow {
                    row: i,
                    channel: Some(c as u8),
                    distance: r.distance,
                    predicted,
                    error: predicted - r.distance,
                    std: None,
                }
            })
            .collect()
    };
    let errors: Vec<ErrorRow> = match &saved.fitted {
        Fitted::Ll(m) => per_packet(&|_, x| m.predict(x)),
        Fitted::Chill(m) => per_packet(&|c, x| m.predict(c as u8, x).distance),
        Fitted::Gpr { hyper, .. } => {
            let (x, y) = train_xy(&train);
            let m = GprModel::fit_with(&x, &y, *hyper)?;
            let (queries, _) = train_xy(&test);
            m.predict_batch(&queries)?
                .iter()
                .zip(&test)
                .enumerate()
                .map(|(i, (p, r))| ErrorRow {
                    row: i,
                    channel: None,
                    distance: r.distance,
                    predicted: p.mean,
                    error: p.mean - r.distance,
                    std: Some(p.predictive_std),
                })
                .collect()
        }
    };
    let e: Vec<f64> = errors.iter().map(|r| r.error).collect();
    let summary = ErrorSummary::from_errors(&e)?;
    let name = model.name();
    artifacts::write_csv(
        &dir.join(format!("eval_{name}.csv")),
        &[SummaryRow {
            model: name,
            mae: summary.mae,
            median: summary.median,
            variance: summary.variance,
            mean_predictive_variance: mean_predictive_variance(&errors),
            count: summary.count,
        }],
    )?;
    artifacts::write_csv(&dir.join(format!("errors_{name}.csv")), &errors)?;
    let abs: Vec<f64> = e.iter().map(|v| v.abs()).collect();
    let cdf_path = dir.join(format!("cdf_{name}.csv"));
    let mut w = artifacts::create(&cdf_path)?;
    write_cdf_csv(&cdf(&abs)?, &mut w).at(&cdf_path)?;
    artifacts::finish(w, &cdf_path)?;
    println!(
        "{name}: MAE {:.3} m, median {:.3} m, variance {:.3} over {} estimates ({} test rows)",
        summary.mae,
        summary.median,
        summary.variance,
        summary.count,
        test.len()
    );
    Ok(())
}
