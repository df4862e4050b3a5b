//! The 22 technical indicators used as classifier attributes.
//!
//! Every indicator is computed on row counts, so a window of `n` means `n`
//! consecutive bars. Values inside an indicator's warm-up are `None`.
//!
//! Conventions (all kept in this file):
//! - EMA is seeded with the SMA of its first `n` inputs, `alpha = 2 / (n + 1)`.
//! - ROC is a fraction, `(c[t] - c[t-n]) / c[t-n]`.
//! - Stochastic %K uses bar lows and highs; fast %D is the 3-row SMA of %K
//!   and slow %D the 3-row SMA of fast %D. A flat window gives %K = 50.
//! - MACD is `EMA12 - EMA26`; its signal line is a 9-row EMA seeded on the
//!   first nine MACD values; the histogram is `MACD - signal`.
//! - RSI uses Wilder smoothing after an arithmetic-mean seed.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{DailyBar, PriceSeries, DATE_FORMAT};

pub const MACD_SHORT: usize = 12;
pub const MACD_LONG: usize = 26;
pub const MACD_SIGNAL: usize = 9;
pub const STOCH_SMOOTHING: usize = 3;

pub const N_FEATURES: usize = 22;

/// One feature column, identified by kind and window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Indicator {
    Sma(usize),
    Ema(usize),
    Roc(usize),
    StochK(usize),
    FastD(usize),
    SlowD(usize),
    Macd,
    MacdHist,
    Rsi(usize),
}

/// Canonical column order of the feature matrix.
pub const FEATURES: [Indicator; N_FEATURES] = [
    Indicator::Sma(3),
    Indicator::Sma(13),
    Indicator::Sma(21),
    Indicator::Ema(5),
    Indicator::Ema(13),
    Indicator::Ema(21),
    Indicator::Roc(13),
    Indicator::Roc(21),
    Indicator::StochK(7),
    Indicator::StochK(14),
    Indicator::StochK(21),
    Indicator::FastD(7),
    Indicator::FastD(14),
    Indicator::FastD(21),
    Indicator::SlowD(7),
    Indicator::SlowD(14),
    Indicator::SlowD(21),
    Indicator::Macd,
    Indicator::MacdHist,
    Indicator::Rsi(9),
    Indicator::Rsi(14),
    Indicator::Rsi(21),
];

impl Indicator {
    pub fn name(&self) -> String {
        match *self {
            Indicator::Sma(n) => format!("SMA{n}"),
            Indicator::Ema(n) => format!("EMA{n}"),
            Indicator::Roc(n) => format!("ROC{n}"),
            Indicator::StochK(n) => format!("K{n}"),
            Indicator::FastD(n) => format!("FASTD{n}"),
            Indicator::SlowD(n) => format!("SLOWD{n}"),
            Indicator::Macd => "MACD".into(),
            Indicator::MacdHist => "MACD_HIST".into(),
            Indicator::Rsi(n) => format!("RSI{n}"),
        }
    }

    /// Index of the first defined value.
    pub fn defined_from(&self) -> usize {
        match *self {
            Indicator::Sma(n) | Indicator::Ema(n) | Indicator::StochK(n) => n - 1,
            Indicator::Roc(n) | Indicator::Rsi(n) => n,
            Indicator::FastD(n) => n - 1 + (STOCH_SMOOTHING - 1),
            Indicator::SlowD(n) => n - 1 + 2 * (STOCH_SMOOTHING - 1),
            Indicator::Macd => MACD_LONG - 1,
            Indicator::MacdHist => MACD_LONG + MACD_SIGNAL - 2,
        }
    }
}

pub fn feature_names() -> Vec<String> {
    FEATURES.iter().map(Indicator::name).collect()
}

/// Number of leading rows dropped from the feature matrix.
pub fn warm_up() -> usize {
    FEATURES
        .iter()
        .map(Indicator::defined_from)
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub name: String,
    pub values: Vec<Option<f64>>,
    pub defined_from: usize,
}

impl IndicatorSeries {
    fn from_tail(name: String, len: usize, defined_from: usize, tail: Vec<f64>) -> Self {
        debug_assert_eq!(defined_from + tail.len(), len);
        let mut values = vec![None; defined_from];
        values.extend(tail.into_iter().map(Some));
        Self {
            name,
            values,
            defined_from,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        self.values.get(t).copied().flatten()
    }

    /// Defined values only.
    pub fn defined(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }
}

fn check_window(n: usize, len: usize, needed: usize, what: &str) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid(format!("{what}: window must be >= 1")));
    }
    if len < needed {
        return Err(Error::invalid(format!(
            "{what}: needs {needed} values, got {len}"
        )));
    }
    Ok(())
}

fn sma_tail(xs: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len() + 1 - n);
    let mut sum: f64 = xs[..n].iter().sum();
    out.push(sum / n as f64);
    for t in n..xs.len() {
        sum += xs[t] - xs[t - n];
        out.push(sum / n as f64);
    }
    out
}

fn ema_tail(xs: &[f64], n: usize) -> Vec<f64> {
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut out = Vec::with_capacity(xs.len() + 1 - n);
    let mut prev = xs[..n].iter().sum::<f64>() / n as f64;
    out.push(prev);
    for &x in &xs[n..] {
        prev = alpha * x + (1.0 - alpha) * prev;
        out.push(prev);
    }
    out
}

pub fn sma(close: &[f64], n: usize) -> Result<IndicatorSeries> {
    check_window(n, close.len(), n, "SMA")?;
    Ok(IndicatorSeries::from_tail(
        Indicator::Sma(n).name(),
        close.len(),
        n - 1,
        sma_tail(close, n),
    ))
}

pub fn ema(close: &[f64], n: usize) -> Result<IndicatorSeries> {
    check_window(n, close.len(), n, "EMA")?;
    Ok(IndicatorSeries::from_tail(
        Indicator::Ema(n).name(),
        close.len(),
        n - 1,
        ema_tail(close, n),
    ))
}

pub fn roc(close: &[f64], n: usize) -> Result<IndicatorSeries> {
    check_window(n, close.len(), n + 1, "ROC")?;
    let tail = (n..close.len())
        .map(|t| (close[t] - close[t - n]) / close[t - n])
        .collect();
    Ok(IndicatorSeries::from_tail(
        Indicator::Roc(n).name(),
        close.len(),
        n,
        tail,
    ))
}

/// %K, fast %D and slow %D over an `n`-row window.
pub fn stochastic(
    bars: &[DailyBar],
    n: usize,
) -> Result<(IndicatorSeries, IndicatorSeries, IndicatorSeries)> {
    let smooth = STOCH_SMOOTHING - 1;
    check_window(n, bars.len(), n + 2 * smooth, "stochastic")?;
    let k: Vec<f64> = (n - 1..bars.len())
        .map(|t| {
            let window = &bars[t + 1 - n..=t];
            let lowest = window.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
            let highest = window
                .iter()
                .map(|b| b.high)
                .fold(f64::NEG_INFINITY, f64::max);
            if highest == lowest {
                50.0
            } else {
                100.0 * (bars[t].close - lowest) / (highest - lowest)
            }
        })
        .collect();
    let fast = sma_tail(&k, STOCH_SMOOTHING);
    let slow = sma_tail(&fast, STOCH_SMOOTHING);
    let len = bars.len();
    Ok((
        IndicatorSeries::from_tail(Indicator::StochK(n).name(), len, n - 1, k),
        IndicatorSeries::from_tail(Indicator::FastD(n).name(), len, n - 1 + smooth, fast),
        IndicatorSeries::from_tail(Indicator::SlowD(n).name(), len, n - 1 + 2 * smooth, slow),
    ))
}

/// MACD line and histogram.
pub fn macd(
    close: &[f64],
    short: usize,
    long: usize,
    signal: usize,
) -> Result<(IndicatorSeries, IndicatorSeries)> {
    if short < 1 || signal < 1 || short >= long {
        return Err(Error::invalid(format!(
            "MACD: need 1 <= short < long and signal >= 1, got ({short}, {long}, {signal})"
        )));
    }
    check_window(long, close.len(), long + signal - 1, "MACD")?;
    let fast = ema_tail(close, short);
    let slow = ema_tail(close, long);
    let offset = long - short;
    let line: Vec<f64> = slow
        .iter()
        .enumerate()
        .map(|(i, s)| fast[i + offset] - s)
        .collect();
    let signal_line = ema_tail(&line, signal);
    let hist: Vec<f64> = signal_line
        .iter()
        .enumerate()
        .map(|(i, s)| line[i + signal - 1] - s)
        .collect();
    let len = close.len();
    let (line_name, hist_name) = if (short, long, signal) == (MACD_SHORT, MACD_LONG, MACD_SIGNAL) {
        (Indicator::Macd.name(), Indicator::MacdHist.name())
    } else {
        (
            format!("MACD{short}_{long}"),
            format!("MACD_HIST{short}_{long}_{signal}"),
        )
    };
    Ok((
        IndicatorSeries::from_tail(line_name, len, long - 1, line),
        IndicatorSeries::from_tail(hist_name, len, long + signal - 2, hist),
    ))
}

pub fn rsi(close: &[f64], n: usize) -> Result<IndicatorSeries> {
    check_window(n, close.len(), n + 1, "RSI")?;
    let value = |gain: f64, loss: f64| {
        if loss == 0.0 {
            100.0
        } else if gain == 0.0 {
            0.0
        } else {
            100.0 - 100.0 / (1.0 + gain / loss)
        }
    };
    let diffs: Vec<f64> = close.windows(2).map(|w| w[1] - w[0]).collect();
    let nf = n as f64;
    let mut gain = diffs[..n].iter().map(|d| d.max(0.0)).sum::<f64>() / nf;
    let mut loss = diffs[..n].iter().map(|d| (-d).max(0.0)).sum::<f64>() / nf;
    let mut tail = Vec::with_capacity(close.len() - n);
    tail.push(value(gain, loss));
    for &d in &diffs[n..] {
        gain = (gain * (nf - 1.0) + d.max(0.0)) / nf;
        loss = (loss * (nf - 1.0) + (-d).max(0.0)) / nf;
        tail.push(value(gain, loss));
    }
    Ok(IndicatorSeries::from_tail(
        Indicator::Rsi(n).name(),
        close.len(),
        n,
        tail,
    ))
}

/// All 22 columns over the full series, in canonical order.
pub fn compute_indicators(s: &PriceSeries) -> Result<Vec<IndicatorSeries>> {
    let needed = warm_up() + 1;
    if s.len() < needed {
        let binding = FEATURES
            .iter()
            .max_by_key(|f| f.defined_from())
            .expect("non-empty feature table");
        return Err(Error::InsufficientHistory(format!(
            "{}: {} needs {needed} rows, series has {}",
            s.ticker,
            binding.name(),
            s.len()
        )));
    }
    let close = s.closes();
    let (macd_line, macd_hist) = macd(&close, MACD_SHORT, MACD_LONG, MACD_SIGNAL)?;
    let mut stochs = Vec::new();
    for n in [7, 14, 21] {
        stochs.push((n, stochastic(&s.bars, n)?));
    }
    let stoch = |n: usize| &stochs.iter().find(|(m, _)| *m == n).expect("computed").1;

    FEATURES
        .iter()
        .map(|f| {
            Ok(match *f {
                Indicator::Sma(n) => sma(&close, n)?,
                Indicator::Ema(n) => ema(&close, n)?,
                Indicator::Roc(n) => roc(&close, n)?,
                Indicator::StochK(n) => stoch(n).0.clone(),
                Indicator::FastD(n) => stoch(n).1.clone(),
                Indicator::SlowD(n) => stoch(n).2.clone(),
                Indicator::Macd => macd_line.clone(),
                Indicator::MacdHist => macd_hist.clone(),
                Indicator::Rsi(n) => rsi(&close, n)?,
            })
        })
        .collect()
}

/// Per-day attribute vectors with warm-up rows removed.
///
/// Row `i` corresponds to bar `first_index + i` of the source series.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ticker: String,
    pub first_index: usize,
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_names(&self) -> Vec<String> {
        feature_names()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(feature_names());
        wtr.write_record(&header)?;
        for (date, row) in self.dates.iter().zip(&self.rows) {
            let mut rec = vec![date.format(DATE_FORMAT).to_string()];
            rec.extend(row.iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`FeatureMatrix::write_csv`]. The source
    /// offset is not stored in the file and is set to zero.
    pub fn read_csv<R: Read>(ticker: &str, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut expected = vec!["date".to_string()];
        expected.extend(feature_names());
        if header != expected {
            return Err(Error::invalid("feature CSV header does not match"));
        }
        let mut dates = Vec::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |m: String| Error::MalformedRow { line, message: m };
            dates.push(
                NaiveDate::parse_from_str(&rec[0], DATE_FORMAT)
                    .map_err(|e| bad(format!("date: {e}")))?,
            );
            rows.push(
                rec.iter()
                    .skip(1)
                    .map(|v| v.parse::<f64>().map_err(|e| bad(format!("{v}: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self {
            ticker: ticker.to_string(),
            first_index: 0,
            dates,
            rows,
        })
    }
}

pub fn build_feature_matrix(s: &PriceSeries) -> Result<FeatureMatrix> {
    let columns = compute_indicators(s)?;
    let first = columns.iter().map(|c| c.defined_from).max().unwrap_or(0);
    let rows = (first..s.len())
        .map(|t| {
            columns
                .iter()
                .map(|c| c.values[t].expect("defined past warm-up"))
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        ticker: s.ticker.clone(),
        first_index: first,
        dates: s.bars[first..].iter().map(|b| b.date).collect(),
        rows,
    })
}
