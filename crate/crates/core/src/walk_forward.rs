//! Sliding-window walk-forward evaluation and the operation indicators.
//!
//! Fold `f` (0-based) trains on dataset rows `f..f + k` and tests row
//! `f + k`, so a dataset of `T` rows yields `T - k` folds and no model ever
//! sees a row at or after the one it predicts.

use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{train_forest, ForestConfig, TrainingSet};
use crate::labeling::{simulate, ClassLabel, CostModel, LabeledDataset, StrategyParams};
use crate::market_data::{PriceSeries, DATE_FORMAT};
use crate::seeding::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub seiz_oport: f64,
    pub succ_oper: f64,
    pub avg_ret_oper: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            seiz_oport: 0.10,
            succ_oper: 0.85,
            avg_ret_oper: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    /// Training window length in dataset rows.
    pub k: usize,
    pub forest: ForestConfig,
    /// Drop the last `d` rows of every training window, whose labels look
    /// past the window end.
    pub strict_labeling: bool,
    pub weights: ScoreWeights,
}

impl CvConfig {
    pub fn new(k: usize, forest: ForestConfig) -> Self {
        Self {
            k,
            forest,
            strict_labeling: false,
            weights: ScoreWeights::default(),
        }
    }
}

/// Outcome counts; `counts[real][predicted]` indexed in [`ClassLabel::ORDER`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn get(&self, real: ClassLabel, predicted: ClassLabel) -> u64 {
        self.counts[real.index()][predicted.index()]
    }

    pub fn add(&mut self, real: ClassLabel, predicted: ClassLabel) {
        self.counts[real.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, real: ClassLabel) -> u64 {
        self.counts[real.index()].iter().sum()
    }

    pub fn column_total(&self, predicted: ClassLabel) -> u64 {
        self.counts.iter().map(|r| r[predicted.index()]).sum()
    }

    /// Correct non-zero predictions.
    pub fn successful_operations(&self) -> u64 {
        self.get(ClassLabel::SellBuy, ClassLabel::SellBuy)
            + self.get(ClassLabel::BuySell, ClassLabel::BuySell)
    }

    pub fn devised_operations(&self) -> u64 {
        self.column_total(ClassLabel::SellBuy) + self.column_total(ClassLabel::BuySell)
    }

    pub fn opportunities(&self) -> u64 {
        self.row_total(ClassLabel::SellBuy) + self.row_total(ClassLabel::BuySell)
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..3).map(|i| self.counts[i][i]).sum::<u64>() as f64 / total as f64
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Share of real opportunities seized by a correct operation; 0 when there
/// were no opportunities.
pub fn seiz_oport(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.successful_operations(), cm.opportunities())
}

/// Share of devised operations that were correct; 0 when none were devised.
pub fn succ_oper(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.successful_operations(), cm.devised_operations())
}

/// Mean net return per devised operation; 0 for no operations.
pub fn avg_ret_oper(returns: &[f64]) -> f64 {
    if returns.is_empty() {
        0.0
    } else {
        returns.iter().sum::<f64>() / returns.len() as f64
    }
}

pub fn score(seiz: f64, succ: f64, ret: f64, w: &ScoreWeights) -> f64 {
    w.seiz_oport * seiz + w.succ_oper * succ + w.avg_ret_oper * ret
}

/// One walk-forward fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    /// First and last training rows (dataset indices, inclusive).
    pub train_start: usize,
    pub train_end: usize,
    pub test_index: usize,
    pub date: NaiveDate,
    pub real: ClassLabel,
    pub predicted: ClassLabel,
    /// Net return of the devised operation, if any.
    pub net_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfReport {
    pub ticker: String,
    pub params: StrategyParams,
    pub costs: CostModel,
    pub cv: CvConfig,
    pub confusion: ConfusionMatrix,
    pub operation_returns: Vec<f64>,
    pub seiz_oport: f64,
    pub succ_oper: f64,
    pub avg_ret_oper: f64,
    pub score: f64,
    pub predictions: Vec<FoldRecord>,
}

/// JSON form of a report: counts, indicators and the configuration echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub ticker: String,
    pub params: StrategyParams,
    pub costs: CostModel,
    pub cv: CvConfig,
    pub folds: usize,
    pub confusion: ConfusionMatrix,
    pub devised_operations: u64,
    pub seiz_oport: f64,
    pub succ_oper: f64,
    pub avg_ret_oper: f64,
    pub score: f64,
}

impl PerfReport {
    fn from_folds(
        ticker: &str,
        params: &StrategyParams,
        costs: &CostModel,
        cv: &CvConfig,
        predictions: Vec<FoldRecord>,
    ) -> Self {
        let mut confusion = ConfusionMatrix::default();
        let mut operation_returns = Vec::new();
        for r in &predictions {
            confusion.add(r.real, r.predicted);
            if let Some(ret) = r.net_return {
                operation_returns.push(ret);
            }
        }
        let seiz = seiz_oport(&confusion);
        let succ = succ_oper(&confusion);
        let ret = avg_ret_oper(&operation_returns);
        Self {
            ticker: ticker.to_string(),
            params: *params,
            costs: *costs,
            cv: *cv,
            confusion,
            operation_returns,
            seiz_oport: seiz,
            succ_oper: succ,
            avg_ret_oper: ret,
            score: score(seiz, succ, ret, &cv.weights),
            predictions,
        }
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            ticker: self.ticker.clone(),
            params: self.params,
            costs: self.costs,
            cv: self.cv,
            folds: self.predictions.len(),
            confusion: self.confusion,
            devised_operations: self.confusion.devised_operations(),
            seiz_oport: self.seiz_oport,
            succ_oper: self.succ_oper,
            avg_ret_oper: self.avg_ret_oper,
            score: self.score,
        }
    }

    /// Writes the prediction log `fold,date,real,predicted,net_return`.
    pub fn write_prediction_log<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["fold", "date", "real", "predicted", "net_return"])?;
        for r in &self.predictions {
            wtr.write_record([
                r.fold.to_string(),
                r.date.format(DATE_FORMAT).to_string(),
                r.real.to_string(),
                r.predicted.to_string(),
                r.net_return.map_or_else(String::new, |v| v.to_string()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Row of a prediction log read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedPrediction {
    pub fold: usize,
    pub date: NaiveDate,
    pub real: ClassLabel,
    pub predicted: ClassLabel,
    pub net_return: Option<f64>,
}

pub fn read_prediction_log<R: Read>(r: R) -> Result<Vec<LoggedPrediction>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |m: &str| Error::MalformedRow {
            line,
            message: m.to_string(),
        };
        let label = |s: &str| -> Result<ClassLabel> {
            ClassLabel::try_from(s.parse::<i8>().map_err(|_| bad("class"))?)
        };
        out.push(LoggedPrediction {
            fold: rec[0].parse().map_err(|_| bad("fold"))?,
            date: NaiveDate::parse_from_str(&rec[1], DATE_FORMAT).map_err(|_| bad("date"))?,
            real: label(&rec[2])?,
            predicted: label(&rec[3])?,
            net_return: if rec[4].is_empty() {
                None
            } else {
                Some(rec[4].parse().map_err(|_| bad("net_return"))?)
            },
        });
    }
    Ok(out)
}

/// Whatever produces one prediction per fold from that fold's training window.
pub trait WindowClassifier: Sync {
    fn fit_predict(
        &self,
        train: &TrainingSet<'_>,
        x: &[f64],
        test_index: usize,
        fold: usize,
    ) -> Result<ClassLabel>;
}

/// Random forest retrained for every fold with seed `mix(seed, fold)`.
#[derive(Debug, Clone, Copy)]
pub struct ForestClassifier {
    pub config: ForestConfig,
}

impl WindowClassifier for ForestClassifier {
    fn fit_predict(
        &self,
        train: &TrainingSet<'_>,
        x: &[f64],
        _test_index: usize,
        fold: usize,
    ) -> Result<ClassLabel> {
        let cfg = ForestConfig {
            seed: mix_seed(self.config.seed, fold as u64),
            ..self.config
        };
        train_forest(train, &cfg)?.predict(x)
    }
}

pub fn walk_forward(
    dataset: &LabeledDataset,
    series: &PriceSeries,
    params: &StrategyParams,
    costs: &CostModel,
    cv: &CvConfig,
) -> Result<PerfReport> {
    let clf = ForestClassifier { config: cv.forest };
    walk_forward_with(&clf, dataset, series, params, costs, cv)
}

/// Walk-forward evaluation with an arbitrary per-fold classifier. When a
/// fold predicts an operation, that strategy is simulated from the test day
/// on `series` and its net return recorded, successful or not.
pub fn walk_forward_with<C: WindowClassifier>(
    clf: &C,
    dataset: &LabeledDataset,
    series: &PriceSeries,
    params: &StrategyParams,
    costs: &CostModel,
    cv: &CvConfig,
) -> Result<PerfReport> {
    let t_len = dataset.len();
    let k = cv.k;
    if k < 1 {
        return Err(Error::invalid("training window k must be >= 1"));
    }
    if t_len <= k {
        return Err(Error::InsufficientData(format!(
            "{}: {t_len} labeled rows, need more than k = {k}",
            dataset.ticker
        )));
    }
    let drop_tail = if cv.strict_labeling {
        params.duration
    } else {
        0
    };
    if drop_tail >= k {
        return Err(Error::InsufficientData(format!(
            "strict labeling drops {drop_tail} rows from a window of {k}"
        )));
    }
    for (i, &si) in dataset.series_index.iter().enumerate() {
        if series.bars.get(si).map(|b| b.date) != Some(dataset.dates[i]) {
            return Err(Error::invalid(format!(
                "dataset row {i} ({}) is not aligned with series {}",
                dataset.dates[i], series.ticker
            )));
        }
    }
    let close = series.closes();

    let predictions = (0..t_len - k)
        .into_par_iter()
        .map(|fold| {
            let train_start = fold;
            let train_end = fold + k - 1 - drop_tail;
            let test_index = fold + k;
            assert!(
                train_end < test_index,
                "look-ahead: training row {train_end} >= test row {test_index}"
            );
            let train = TrainingSet::new(
                &dataset.features[train_start..=train_end],
                &dataset.labels[train_start..=train_end],
            )?;
            let predicted =
                clf.fit_predict(&train, &dataset.features[test_index], test_index, fold)?;
            let net_return = match predicted.strategy() {
                Some(strategy) => Some(
                    simulate(
                        strategy,
                        &close,
                        dataset.series_index[test_index],
                        params,
                        costs,
                    )?
                    .net_return,
                ),
                None => None,
            };
            Ok(FoldRecord {
                fold,
                train_start,
                train_end,
                test_index,
                date: dataset.dates[test_index],
                real: dataset.labels[test_index],
                predicted,
                net_return,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PerfReport::from_folds(
        &dataset.ticker,
        params,
        costs,
        cv,
        predictions,
    ))
}
