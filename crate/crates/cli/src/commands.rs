use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stockops_core::market_data::{parse_unvalidated, validate_series};
use stockops_core::tuning::RankEntry;
use stockops_core::{
    build_feature_matrix, final_eval, label_series, parse_series, rank_stocks, tune_stock,
    PriceSeries, StrategyParams, TuningResult,
};

use crate::{CliError, RunConfig};

/// Contents of `<ticker>.best.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestParams {
    pub ticker: String,
    pub params: StrategyParams,
    pub score: f64,
}

pub fn output_path(cfg: &RunConfig, ticker: &str, suffix: &str) -> PathBuf {
    cfg.out.join(format!("{ticker}.{suffix}"))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::env(format!("cannot open {}: {e}", path.display())))
}

fn write_file<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
{
    let file = File::create(path)
        .map_err(|e| CliError::env(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush()
        .map_err(|e| CliError::env(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)
            .map_err(|e| CliError::env(format!("{}: {e}", path.display())))?;
        writeln!(w).map_err(|e| CliError::env(format!("{}: {e}", path.display())))
    })
}

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::env(format!("cannot create {}: {e}", cfg.out.display())))
}

fn check_ticker(ticker: &str) -> Result<(), CliError> {
    let ok = !ticker.is_empty() && ticker != "." && ticker != ".." && !ticker.contains(['/', '\\']);
    if ok {
        Ok(())
    } else {
        Err(CliError::domain(format!(
            "ticker `{ticker}` cannot name an output file"
        )))
    }
}

/// Keeps the configured tickers, in ticker order.
fn select(cfg: &RunConfig, all: Vec<PriceSeries>) -> Result<Vec<PriceSeries>, CliError> {
    let mut by_ticker = BTreeMap::new();
    for s in all {
        check_ticker(&s.ticker)?;
        if by_ticker.contains_key(&s.ticker) {
            return Err(CliError::domain(format!(
                "ticker {} appears in more than one input",
                s.ticker
            )));
        }
        by_ticker.insert(s.ticker.clone(), s);
    }
    if cfg.tickers.is_empty() {
        return Ok(by_ticker.into_values().collect());
    }
    let mut wanted = cfg.tickers.clone();
    wanted.sort();
    wanted.dedup();
    wanted
        .into_iter()
        .map(|t| {
            by_ticker
                .remove(&t)
                .ok_or_else(|| CliError::domain(format!("ticker {t} not found in the inputs")))
        })
        .collect()
}

pub fn load_series(cfg: &RunConfig) -> Result<Vec<PriceSeries>, CliError> {
    cfg.check_inputs()?;
    let mut all = Vec::new();
    for p in &cfg.inputs {
        let series =
            parse_series(open(p)?, &cfg.columns, cfg.parse_mode).map_err(|e| with_path(p, e))?;
        all.extend(series);
    }
    select(cfg, all)
}

fn with_path(path: &Path, e: stockops_core::Error) -> CliError {
    let mut err = CliError::from(e);
    err.message = format!("{}: {}", path.display(), err.message);
    err
}

/// Exit 0 iff no series has findings; one JSON-lines report per ticker.
pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.check_inputs()?;
    let mut all = Vec::new();
    for p in &cfg.inputs {
        all.extend(parse_unvalidated(open(p)?, &cfg.columns).map_err(|e| with_path(p, e))?);
    }
    let series = select(cfg, all)?;
    prepare_out(cfg)?;
    let mut total = 0;
    for s in &series {
        let report = validate_series(s);
        total += report.findings.len();
        for f in &report.findings {
            let date = f.date.map_or_else(|| "-".to_string(), |d| d.to_string());
            eprintln!("{} {date}: {} ({})", s.ticker, f.rule, f.field);
        }
        write_file(&output_path(cfg, &s.ticker, "validation.jsonl"), |w| {
            Ok(report.write_json_lines(w)?)
        })?;
    }
    if total > 0 {
        return Err(CliError::domain(format!("{total} validation finding(s)")));
    }
    Ok(())
}

pub fn features(cfg: &RunConfig) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    prepare_out(cfg)?;
    for s in &series {
        let fm = build_feature_matrix(s)?;
        write_file(&output_path(cfg, &s.ticker, "features.csv"), |w| {
            Ok(fm.write_csv(w)?)
        })?;
    }
    Ok(())
}

pub fn label(cfg: &RunConfig, gain: f64, loss: f64, duration: usize) -> Result<(), CliError> {
    let params = StrategyParams::new(gain, loss, duration)?;
    cfg.costs.validate()?;
    let series = load_series(cfg)?;
    prepare_out(cfg)?;
    for s in &series {
        let fm = build_feature_matrix(s)?;
        let ds = label_series(s, &params, &cfg.costs, &fm)?;
        write_file(&output_path(cfg, &s.ticker, "labels.csv"), |w| {
            Ok(ds.write_csv(w)?)
        })?;
    }
    Ok(())
}

fn tune_one(cfg: &RunConfig, s: &PriceSeries) -> Result<TuningResult, CliError> {
    let cv = cfg.cv_config()?;
    let result = tune_stock(s, &cfg.grid, &cfg.costs, &cfg.protocol, &cv)?;
    write_file(&output_path(cfg, &s.ticker, "tuning.csv"), |w| {
        Ok(result.write_table(w)?)
    })?;
    write_json(
        &output_path(cfg, &s.ticker, "best.json"),
        &BestParams {
            ticker: s.ticker.clone(),
            params: result.best,
            score: result.best_report.score,
        },
    )?;
    log::info!("{}: best {}", s.ticker, result.best);
    Ok(result)
}

pub fn tune(cfg: &RunConfig) -> Result<Vec<TuningResult>, CliError> {
    cfg.require_seed()?;
    let series = load_series(cfg)?;
    prepare_out(cfg)?;
    series.iter().map(|s| tune_one(cfg, s)).collect()
}

pub fn read_best(dir: &Path, ticker: &str) -> Result<BestParams, CliError> {
    let path = dir.join(format!("{ticker}.best.json"));
    let best: BestParams = serde_json::from_reader(open(&path)?)
        .map_err(|e| CliError::env(format!("{}: {e}", path.display())))?;
    if best.ticker != ticker {
        return Err(CliError::env(format!(
            "{} holds parameters for {}",
            path.display(),
            best.ticker
        )));
    }
    best.params.validate()?;
    Ok(best)
}

/// Final-period evaluation of every ticker plus `ranking.csv`.
pub fn evaluate(cfg: &RunConfig, best_dir: Option<&Path>) -> Result<(), CliError> {
    let cv = cfg.cv_config()?;
    let series = load_series(cfg)?;
    prepare_out(cfg)?;
    let mut summaries = BTreeMap::new();
    for s in &series {
        let params = match best_dir {
            Some(dir) => read_best(dir, &s.ticker)?.params,
            None => tune_one(cfg, s)?.best,
        };
        let report = final_eval(s, &params, &cfg.costs, &cfg.protocol, &cv)?;
        let summary = report.summary();
        write_json(&output_path(cfg, &s.ticker, "report.json"), &summary)?;
        write_file(&output_path(cfg, &s.ticker, "predictions.csv"), |w| {
            Ok(report.write_prediction_log(w)?)
        })?;
        summaries.insert(s.ticker.clone(), summary);
    }
    let mut ranking = rank_stocks(&summaries);
    if let Some(top) = cfg.top {
        ranking.truncate(top);
    }
    write_file(&cfg.out.join("ranking.csv"), |w| {
        write_ranking(w, &ranking, cfg.percent)
    })
}

pub fn write_ranking<W: Write>(w: W, ranking: &[RankEntry], percent: bool) -> Result<(), CliError> {
    let fmt = |v: f64| {
        if percent {
            format!("{:.2}", v * 100.0)
        } else {
            v.to_string()
        }
    };
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| CliError::env(e.to_string());
    wtr.write_record([
        "rank",
        "ticker",
        "seiz_oport",
        "succ_oper",
        "avg_ret_oper",
        "score",
    ])
    .map_err(io)?;
    for e in ranking {
        wtr.write_record([
            e.rank.to_string(),
            e.ticker.clone(),
            fmt(e.seiz_oport),
            fmt(e.succ_oper),
            fmt(e.avg_ret_oper),
            fmt(e.score),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| CliError::env(e.to_string()))
}
