//! Grid search of the strategy parameters (g, l, d) by walk-forward score,
//! and the final out-of-sample evaluation of the chosen triple.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::build_feature_matrix;
use crate::labeling::{label_series, CostModel, StrategyParams};
use crate::market_data::{DateRange, PriceSeries};
use crate::seeding::{fnv1a, mix_seed};
use crate::walk_forward::{walk_forward, CvConfig, PerfReport, ReportSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGrid {
    pub gains: Vec<f64>,
    pub losses: Vec<f64>,
    pub durations: Vec<usize>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            gains: vec![0.10, 0.15, 0.20, 0.25, 0.30, 0.35],
            losses: vec![0.03, 0.06, 0.09, 0.12, 0.15],
            durations: vec![10, 15, 20, 25, 30, 35],
        }
    }
}

impl ParamGrid {
    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() || self.losses.is_empty() || self.durations.is_empty() {
            return Err(Error::invalid("parameter grid has an empty axis"));
        }
        for p in enumerate_grid(self) {
            p.validate()?;
        }
        Ok(())
    }
}

/// All grid triples in lexicographic (g, l, d) order, duplicates removed.
pub fn enumerate_grid(grid: &ParamGrid) -> Vec<StrategyParams> {
    let mut gains = grid.gains.clone();
    let mut losses = grid.losses.clone();
    let mut durations = grid.durations.clone();
    gains.sort_by(f64::total_cmp);
    gains.dedup();
    losses.sort_by(f64::total_cmp);
    losses.dedup();
    durations.sort_unstable();
    durations.dedup();
    let mut out = Vec::with_capacity(gains.len() * losses.len() * durations.len());
    for &gain in &gains {
        for &loss in &losses {
            for &duration in &durations {
                out.push(StrategyParams {
                    gain,
                    loss,
                    duration,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationProtocol {
    pub tuning_train: DateRange,
    pub tuning_test: DateRange,
    pub final_train: DateRange,
    pub final_test: DateRange,
}

impl Default for EvaluationProtocol {
    fn default() -> Self {
        Self {
            tuning_train: DateRange::year(2010),
            tuning_test: DateRange::year(2011),
            final_train: DateRange::year(2011),
            final_test: DateRange::year(2012),
        }
    }
}

impl EvaluationProtocol {
    pub fn validate(&self) -> Result<()> {
        for (name, train, test) in [
            ("tuning", self.tuning_train, self.tuning_test),
            ("final", self.final_train, self.final_test),
        ] {
            if train.from > train.to || test.from > test.to {
                return Err(Error::invalid(format!("{name}: inverted date range")));
            }
            if train.to >= test.from {
                return Err(Error::invalid(format!(
                    "{name}: training range must end before the test range starts"
                )));
            }
        }
        Ok(())
    }
}

/// Forest seed for one (ticker, parameter triple).
pub fn point_seed(master: u64, ticker: &str, params: &StrategyParams) -> u64 {
    let mut key = Vec::with_capacity(24);
    key.extend_from_slice(&params.gain.to_bits().to_le_bytes());
    key.extend_from_slice(&params.loss.to_bits().to_le_bytes());
    key.extend_from_slice(&(params.duration as u64).to_le_bytes());
    mix_seed(mix_seed(master, fnv1a(ticker.as_bytes())), fnv1a(&key))
}

/// Walk-forward run over `train ∪ test` with `k` = number of labeled training
/// rows. Only bars up to `test.to` are visible: later bars are cut before
/// features and labels are computed, so the last `d` test days, whose
/// horizon leaves the period, are not evaluated.
pub fn evaluate_period(
    series: &PriceSeries,
    params: &StrategyParams,
    costs: &CostModel,
    train: DateRange,
    test: DateRange,
    cv: &CvConfig,
) -> Result<PerfReport> {
    if train.to >= test.from {
        return Err(Error::invalid("training range must precede test range"));
    }
    let visible = PriceSeries::new(
        series.ticker.clone(),
        series
            .bars
            .iter()
            .take_while(|b| b.date <= test.to)
            .copied()
            .collect(),
    );
    let fm = build_feature_matrix(&visible)?;
    let labeled = label_series(&visible, params, costs, &fm)?;
    let ds = labeled.filter_dates(|d| train.contains(d) || test.contains(d));
    let k = ds.dates.iter().filter(|&&d| train.contains(d)).count();
    let n_test = ds.len() - k;
    if k == 0 || n_test == 0 {
        return Err(Error::InsufficientData(format!(
            "{} {params}: {k} labeled training rows and {n_test} test rows",
            series.ticker
        )));
    }
    let mut cv = *cv;
    cv.k = k;
    cv.forest.seed = point_seed(cv.forest.seed, &series.ticker, params);
    walk_forward(&ds, &visible, params, costs, &cv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub params: StrategyParams,
    pub seiz_oport: f64,
    pub succ_oper: f64,
    pub avg_ret_oper: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub ticker: String,
    pub best: StrategyParams,
    pub best_report: PerfReport,
    /// One row per feasible grid point, in grid order.
    pub table: Vec<TuningRow>,
}

impl TuningResult {
    /// Writes `ticker,g,l,d,seiz_oport,succ_oper,avg_ret_oper,score,is_best`.
    pub fn write_table<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "ticker",
            "g",
            "l",
            "d",
            "seiz_oport",
            "succ_oper",
            "avg_ret_oper",
            "score",
            "is_best",
        ])?;
        for row in &self.table {
            wtr.write_record([
                self.ticker.clone(),
                row.params.gain.to_string(),
                row.params.loss.to_string(),
                row.params.duration.to_string(),
                row.seiz_oport.to_string(),
                row.succ_oper.to_string(),
                row.avg_ret_oper.to_string(),
                row.score.to_string(),
                (row.params == self.best).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads a tuning table back as `(ticker, row, is_best)` triples.
pub fn read_tuning_table<R: Read>(r: R) -> Result<Vec<(String, TuningRow, bool)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::MalformedRow {
                line,
                message: format!("column {i}: `{}`", &rec[i]),
            })
        };
        let row = TuningRow {
            params: StrategyParams {
                gain: f(1)?,
                loss: f(2)?,
                duration: f(3)? as usize,
            },
            seiz_oport: f(4)?,
            succ_oper: f(5)?,
            avg_ret_oper: f(6)?,
            score: f(7)?,
        };
        out.push((rec[0].to_string(), row, &rec[8] == "true"));
    }
    Ok(out)
}

/// Evaluates every grid point on the tuning period and keeps the one with
/// the highest score; equal scores go to the lexicographically smallest
/// (g, l, d). Grid points without enough labeled history are skipped.
pub fn tune_stock(
    series: &PriceSeries,
    grid: &ParamGrid,
    costs: &CostModel,
    protocol: &EvaluationProtocol,
    cv: &CvConfig,
) -> Result<TuningResult> {
    protocol.validate()?;
    grid.validate()?;
    if protocol.tuning_test.to >= protocol.final_test.from {
        return Err(Error::invalid(
            "tuning period must end before the final test period starts",
        ));
    }
    let points = enumerate_grid(grid);
    let reports = points
        .par_iter()
        .map(|p| {
            match evaluate_period(
                series,
                p,
                costs,
                protocol.tuning_train,
                protocol.tuning_test,
                cv,
            ) {
                Ok(r) => Ok(Some(r)),
                Err(Error::InsufficientData(m) | Error::InsufficientHistory(m)) => {
                    log::debug!("{} {p}: infeasible ({m})", series.ticker);
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<&PerfReport> = None;
    let mut table = Vec::new();
    for r in reports.iter().flatten() {
        table.push(TuningRow {
            params: r.params,
            seiz_oport: r.seiz_oport,
            succ_oper: r.succ_oper,
            avg_ret_oper: r.avg_ret_oper,
            score: r.score,
        });
        let better = match best {
            Some(b) => r.score > b.score,
            None => true,
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| {
        Error::InsufficientData(format!(
            "{}: all {} grid points infeasible",
            series.ticker,
            points.len()
        ))
    })?;
    Ok(TuningResult {
        ticker: series.ticker.clone(),
        best: best.params,
        best_report: best.clone(),
        table,
    })
}

/// Walk-forward evaluation of `best` on the final period.
pub fn final_eval(
    series: &PriceSeries,
    best: &StrategyParams,
    costs: &CostModel,
    protocol: &EvaluationProtocol,
    cv: &CvConfig,
) -> Result<PerfReport> {
    protocol.validate()?;
    evaluate_period(
        series,
        best,
        costs,
        protocol.final_train,
        protocol.final_test,
        cv,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub ticker: String,
    pub seiz_oport: f64,
    pub succ_oper: f64,
    pub avg_ret_oper: f64,
    pub score: f64,
}

/// Tickers by descending score, ties by ticker name.
pub fn rank_stocks(results: &BTreeMap<String, ReportSummary>) -> Vec<RankEntry> {
    let mut entries: Vec<(&String, &ReportSummary)> = results.iter().collect();
    entries.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then_with(|| a.0.cmp(b.0)));
    entries
        .into_iter()
        .enumerate()
        .map(|(i, (ticker, r))| RankEntry {
            rank: i + 1,
            ticker: ticker.clone(),
            seiz_oport: r.seiz_oport,
            succ_oper: r.succ_oper,
            avg_ret_oper: r.avg_ret_oper,
            score: r.score,
        })
        .collect()
}
