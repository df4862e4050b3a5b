//! Buy-Sell / Sell-Buy simulation with stop-gain, stop-loss and duration
//! exits, and the per-day class labels derived from it.
//!
//! Triggers and fills both use closing prices. A gap through a barrier
//! realizes the actual close, not the barrier level.

use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{feature_names, FeatureMatrix};
use crate::market_data::{PriceSeries, DATE_FORMAT};

/// Stop-gain `gain`, stop-loss `loss` (both fractions) and maximum holding
/// period `duration` in rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub gain: f64,
    pub loss: f64,
    pub duration: usize,
}

impl StrategyParams {
    pub fn new(gain: f64, loss: f64, duration: usize) -> Result<Self> {
        let p = Self {
            gain,
            loss,
            duration,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.loss > 0.0 && self.duration >= 1) {
            return Err(Error::invalid(format!(
                "strategy params need g > 0, l > 0, d >= 1: {self}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for StrategyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(g={}, l={}, d={})", self.gain, self.loss, self.duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    /// Round-trip cost fraction, charged once per operation.
    pub operation_cost: f64,
    /// Stock rental fee per day held, Sell-Buy only.
    pub rental_fee_daily: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            operation_cost: 0.01,
            rental_fee_daily: 0.0005,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.operation_cost >= 0.0 && self.rental_fee_daily >= 0.0) {
            return Err(Error::invalid("costs must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    BuySell,
    SellBuy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitReason {
    StopGain,
    StopLoss,
    Duration,
    SeriesEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeOutcome {
    pub strategy: Strategy,
    pub entry_index: usize,
    pub exit_index: usize,
    pub exit_reason: ExitReason,
    pub gross_move: f64,
    pub net_return: f64,
    pub successful: bool,
}

/// Class assigned to a trading day: -1 Sell-Buy, 0 no action, +1 Buy-Sell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum ClassLabel {
    SellBuy,
    NoAction,
    BuySell,
}

impl ClassLabel {
    /// Fixed class order used by vote vectors and confusion matrices.
    pub const ORDER: [ClassLabel; 3] = [
        ClassLabel::SellBuy,
        ClassLabel::NoAction,
        ClassLabel::BuySell,
    ];

    pub fn value(self) -> i8 {
        match self {
            ClassLabel::SellBuy => -1,
            ClassLabel::NoAction => 0,
            ClassLabel::BuySell => 1,
        }
    }

    /// Position in [`ClassLabel::ORDER`].
    pub fn index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ORDER[i]
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            ClassLabel::SellBuy => Some(Strategy::SellBuy),
            ClassLabel::NoAction => None,
            ClassLabel::BuySell => Some(Strategy::BuySell),
        }
    }
}

impl From<ClassLabel> for i8 {
    fn from(c: ClassLabel) -> i8 {
        c.value()
    }
}

impl TryFrom<i8> for ClassLabel {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(ClassLabel::SellBuy),
            0 => Ok(ClassLabel::NoAction),
            1 => Ok(ClassLabel::BuySell),
            _ => Err(Error::invalid(format!(
                "class label {v} not in {{-1, 0, 1}}"
            ))),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Runs one operation started at row `t` on a close path.
pub fn simulate(
    strategy: Strategy,
    close: &[f64],
    t: usize,
    params: &StrategyParams,
    costs: &CostModel,
) -> Result<TradeOutcome> {
    if t + 1 >= close.len() {
        return Err(Error::invalid(format!(
            "entry day {t} needs a later day (series length {})",
            close.len()
        )));
    }
    let entry = close[t];
    let horizon = t + params.duration;
    let last = horizon.min(close.len() - 1);

    let mut exit = None;
    for (u, &price) in close.iter().enumerate().take(last + 1).skip(t + 1) {
        let change = price / entry - 1.0;
        let reason = match strategy {
            Strategy::BuySell if change >= params.gain => Some(ExitReason::StopGain),
            Strategy::BuySell if change <= -params.loss => Some(ExitReason::StopLoss),
            Strategy::SellBuy if change <= -params.gain => Some(ExitReason::StopGain),
            Strategy::SellBuy if change >= params.loss => Some(ExitReason::StopLoss),
            _ => None,
        };
        if let Some(r) = reason {
            exit = Some((u, r));
            break;
        }
    }
    let (exit_index, exit_reason) = exit.unwrap_or(if last == horizon {
        (horizon, ExitReason::Duration)
    } else {
        (last, ExitReason::SeriesEnd)
    });

    let (gross_move, net_return) = match strategy {
        Strategy::BuySell => {
            let gross = close[exit_index] / entry - 1.0;
            (gross, gross - costs.operation_cost)
        }
        Strategy::SellBuy => {
            let gross = (entry - close[exit_index]) / entry;
            let held = (exit_index - t) as f64;
            (
                gross,
                gross - costs.operation_cost - costs.rental_fee_daily * held,
            )
        }
    };
    Ok(TradeOutcome {
        strategy,
        entry_index: t,
        exit_index,
        exit_reason,
        gross_move,
        net_return,
        successful: net_return > 0.0,
    })
}

pub fn simulate_buy_sell(
    s: &PriceSeries,
    t: usize,
    params: &StrategyParams,
    costs: &CostModel,
) -> Result<TradeOutcome> {
    simulate(Strategy::BuySell, &s.closes(), t, params, costs)
}

pub fn simulate_sell_buy(
    s: &PriceSeries,
    t: usize,
    params: &StrategyParams,
    costs: &CostModel,
) -> Result<TradeOutcome> {
    simulate(Strategy::SellBuy, &s.closes(), t, params, costs)
}

/// Picks the class for day `t` from both simulated operations. When both
/// succeed the higher net return wins, and an exact tie goes to Buy-Sell.
pub fn label_from_close(
    close: &[f64],
    t: usize,
    params: &StrategyParams,
    costs: &CostModel,
) -> Result<(ClassLabel, Option<f64>)> {
    let long = simulate(Strategy::BuySell, close, t, params, costs)?;
    let short = simulate(Strategy::SellBuy, close, t, params, costs)?;
    Ok(match (long.successful, short.successful) {
        (true, false) => (ClassLabel::BuySell, Some(long.net_return)),
        (false, true) => (ClassLabel::SellBuy, Some(short.net_return)),
        (true, true) if long.net_return >= short.net_return => {
            (ClassLabel::BuySell, Some(long.net_return))
        }
        (true, true) => (ClassLabel::SellBuy, Some(short.net_return)),
        (false, false) => (ClassLabel::NoAction, None),
    })
}

pub fn label_day(
    s: &PriceSeries,
    t: usize,
    params: &StrategyParams,
    costs: &CostModel,
) -> Result<(ClassLabel, Option<f64>)> {
    label_from_close(&s.closes(), t, params, costs)
}

/// Feature rows joined with their class labels.
///
/// `series_index[i]` is the row of the source series that row `i` was
/// labeled from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    pub series_index: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<ClassLabel>,
    pub returns: Vec<Option<f64>>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows whose date satisfies `keep`, order preserved.
    pub fn filter_dates(&self, keep: impl Fn(NaiveDate) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.dates[i])).collect();
        Self {
            ticker: self.ticker.clone(),
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            series_index: idx.iter().map(|&i| self.series_index[i]).collect(),
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }

    /// Writes `date,label,net_return,<features>`; `net_return` is empty for
    /// class 0.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string(), "label".into(), "net_return".into()];
        header.extend(feature_names());
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                self.dates[i].format(DATE_FORMAT).to_string(),
                self.labels[i].to_string(),
                self.returns[i].map_or_else(String::new, |r| r.to_string()),
            ];
            rec.extend(self.features[i].iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a file written by [`LabeledDataset::write_csv`]. Series indices
    /// are not stored and come back as row positions.
    pub fn read_csv<R: Read>(ticker: &str, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let n_cols = rdr.headers()?.len();
        if n_cols < 3 {
            return Err(Error::invalid("labeled CSV needs date,label,net_return"));
        }
        let mut out = Self {
            ticker: ticker.to_string(),
            dates: vec![],
            series_index: vec![],
            features: vec![],
            labels: vec![],
            returns: vec![],
        };
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |m: String| Error::MalformedRow { line, message: m };
            out.dates.push(
                NaiveDate::parse_from_str(&rec[0], DATE_FORMAT)
                    .map_err(|e| bad(format!("date: {e}")))?,
            );
            let label: i8 = rec[1]
                .parse()
                .map_err(|_| bad(format!("label `{}`", &rec[1])))?;
            out.labels.push(ClassLabel::try_from(label)?);
            out.returns.push(if rec[2].is_empty() {
                None
            } else {
                Some(
                    rec[2]
                        .parse()
                        .map_err(|_| bad(format!("return `{}`", &rec[2])))?,
                )
            });
            out.features.push(
                rec.iter()
                    .skip(3)
                    .map(|v| v.parse::<f64>().map_err(|_| bad(format!("feature `{v}`"))))
                    .collect::<Result<_>>()?,
            );
            out.series_index.push(out.series_index.len());
        }
        Ok(out)
    }
}

/// Labels every feature-matrix day that has at least `duration` later rows
/// in the series; later days are left out.
pub fn label_series(
    s: &PriceSeries,
    params: &StrategyParams,
    costs: &CostModel,
    fm: &FeatureMatrix,
) -> Result<LabeledDataset> {
    params.validate()?;
    costs.validate()?;
    let close = s.closes();
    let mut out = LabeledDataset {
        ticker: s.ticker.clone(),
        dates: vec![],
        series_index: vec![],
        features: vec![],
        labels: vec![],
        returns: vec![],
    };
    for (i, row) in fm.rows.iter().enumerate() {
        let t = fm.first_index + i;
        if s.bars.get(t).map(|b| b.date) != Some(fm.dates[i]) {
            return Err(Error::invalid(format!(
                "feature row {} ({}) is not aligned with series {}",
                i, fm.dates[i], s.ticker
            )));
        }
        if t + params.duration >= close.len() {
            break;
        }
        let (label, ret) = label_from_close(&close, t, params, costs)?;
        out.dates.push(fm.dates[i]);
        out.series_index.push(t);
        out.features.push(row.clone());
        out.labels.push(label);
        out.returns.push(ret);
    }
    if out.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "{}: no feature day has {} later rows",
            s.ticker, params.duration
        )));
    }
    Ok(out)
}
