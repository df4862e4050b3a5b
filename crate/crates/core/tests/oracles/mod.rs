//! Straight-from-the-definition reference implementations used as test
//! oracles. Nothing here shares code with the library beyond plain data
//! types.
#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

use stockops_core::{ClassLabel, DailyBar, ExitReason, Strategy};

// ---------------------------------------------------------------- indicators

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sma_at(x: &[f64], n: usize, t: usize) -> Option<f64> {
    (t + 1 >= n).then(|| mean(&x[t + 1 - n..=t]))
}

/// EMA recomputed from its seed for every query.
pub fn ema_at(x: &[f64], n: usize, t: usize) -> Option<f64> {
    if t + 1 < n {
        return None;
    }
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut e = mean(&x[..n]);
    for &v in &x[n..=t] {
        e = alpha * v + (1.0 - alpha) * e;
    }
    Some(e)
}

pub fn roc_at(x: &[f64], n: usize, t: usize) -> Option<f64> {
    (t >= n).then(|| x[t] / x[t - n] - 1.0)
}

pub fn stoch_k_at(bars: &[DailyBar], n: usize, t: usize) -> Option<f64> {
    if t + 1 < n {
        return None;
    }
    let w = &bars[t + 1 - n..=t];
    let lo = w.iter().map(|b| b.low).fold(f64::MAX, f64::min);
    let hi = w.iter().map(|b| b.high).fold(f64::MIN, f64::max);
    Some(if hi == lo {
        50.0
    } else {
        100.0 * (bars[t].close - lo) / (hi - lo)
    })
}

pub fn fast_d_at(bars: &[DailyBar], n: usize, t: usize) -> Option<f64> {
    let ks: Option<Vec<f64>> = (0..3)
        .map(|j| t.checked_sub(j).and_then(|u| stoch_k_at(bars, n, u)))
        .collect();
    ks.map(|k| mean(&k))
}

pub fn slow_d_at(bars: &[DailyBar], n: usize, t: usize) -> Option<f64> {
    let ds: Option<Vec<f64>> = (0..3)
        .map(|j| t.checked_sub(j).and_then(|u| fast_d_at(bars, n, u)))
        .collect();
    ds.map(|d| mean(&d))
}

pub fn macd_at(x: &[f64], t: usize) -> Option<f64> {
    Some(ema_at(x, 12, t)? - ema_at(x, 26, t)?)
}

/// Column of MACD histogram values: MACD line minus its 9-period EMA, the
/// EMA seeded on the first 9 line values.
pub fn macd_hist_column(x: &[f64]) -> Vec<Option<f64>> {
    let line: Vec<f64> = (25..x.len()).map(|u| macd_at(x, u).unwrap()).collect();
    (0..x.len())
        .map(|t| {
            let i = t.checked_sub(25)?;
            Some(line[i] - ema_at(&line, 9, i)?)
        })
        .collect()
}

/// Wilder RSI: simple averages over the first `n` changes, then
/// `avg = (avg * (n - 1) + change) / n`.
pub fn rsi_at(x: &[f64], n: usize, t: usize) -> Option<f64> {
    if t < n {
        return None;
    }
    let ups: Vec<f64> = (1..=t).map(|u| (x[u] - x[u - 1]).max(0.0)).collect();
    let downs: Vec<f64> = (1..=t).map(|u| (x[u - 1] - x[u]).max(0.0)).collect();
    let nf = n as f64;
    let mut g = mean(&ups[..n]);
    let mut l = mean(&downs[..n]);
    for i in n..t {
        g = (g * (nf - 1.0) + ups[i]) / nf;
        l = (l * (nf - 1.0) + downs[i]) / nf;
    }
    Some(if l == 0.0 {
        100.0
    } else if g == 0.0 {
        0.0
    } else {
        100.0 - 100.0 / (1.0 + g / l)
    })
}

/// Column names in feature-matrix order.
pub const COLUMN_NAMES: [&str; 22] = [
    "SMA3",
    "SMA13",
    "SMA21",
    "EMA5",
    "EMA13",
    "EMA21",
    "ROC13",
    "ROC21",
    "K7",
    "K14",
    "K21",
    "FASTD7",
    "FASTD14",
    "FASTD21",
    "SLOWD7",
    "SLOWD14",
    "SLOWD21",
    "MACD",
    "MACD_HIST",
    "RSI9",
    "RSI14",
    "RSI21",
];

/// Full-length reference column `j`; `None` during warm-up.
pub fn column(j: usize, bars: &[DailyBar]) -> Vec<Option<f64>> {
    let x: Vec<f64> = bars.iter().map(|b| b.close).collect();
    let name = COLUMN_NAMES[j];
    if name == "MACD_HIST" {
        return macd_hist_column(&x);
    }
    let digits = name.trim_start_matches(|c: char| c.is_ascii_alphabetic() || c == '_');
    let n: usize = digits.parse().unwrap_or(0);
    let kind = &name[..name.len() - digits.len()];
    (0..x.len())
        .map(|t| match kind {
            "SMA" => sma_at(&x, n, t),
            "EMA" => ema_at(&x, n, t),
            "ROC" => roc_at(&x, n, t),
            "K" => stoch_k_at(bars, n, t),
            "FASTD" => fast_d_at(bars, n, t),
            "SLOWD" => slow_d_at(bars, n, t),
            "MACD" => macd_at(&x, t),
            "RSI" => rsi_at(&x, n, t),
            other => panic!("unknown column {other}"),
        })
        .collect()
}

// ---------------------------------------------------------------- strategies

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    pub exit: usize,
    pub reason: ExitReason,
    pub gross: f64,
    pub net: f64,
    pub successful: bool,
}

/// Day-by-day scan of one trade entered at the close of day `t`.
pub fn scan_trade(
    strategy: Strategy,
    close: &[f64],
    t: usize,
    g: f64,
    l: f64,
    d: usize,
    cost: f64,
    rental: f64,
) -> Trade {
    let last = close.len() - 1;
    let mut exit = None;
    for u in t + 1..=(t + d).min(last) {
        let change = close[u] / close[t] - 1.0;
        let reason = match strategy {
            Strategy::BuySell if change >= g => Some(ExitReason::StopGain),
            Strategy::BuySell if change <= -l => Some(ExitReason::StopLoss),
            Strategy::SellBuy if change <= -g => Some(ExitReason::StopGain),
            Strategy::SellBuy if change >= l => Some(ExitReason::StopLoss),
            _ => None,
        };
        if let Some(r) = reason {
            exit = Some((u, r));
            break;
        }
    }
    let (exit, reason) = exit.unwrap_or(if t + d <= last {
        (t + d, ExitReason::Duration)
    } else {
        (last, ExitReason::SeriesEnd)
    });
    let (gross, net) = match strategy {
        Strategy::BuySell => {
            let gross = close[exit] / close[t] - 1.0;
            (gross, gross - cost)
        }
        Strategy::SellBuy => {
            let gross = (close[t] - close[exit]) / close[t];
            (gross, gross - cost - rental * (exit - t) as f64)
        }
    };
    Trade {
        exit,
        reason,
        gross,
        net,
        successful: net > 0.0,
    }
}

/// Class of day `t`: the successful strategy, the more profitable one when
/// both succeed, Buy-Sell on an exact tie.
pub fn label_oracle(buy: &Trade, sell: &Trade) -> (ClassLabel, Option<f64>) {
    match (buy.successful, sell.successful) {
        (true, true) if buy.net >= sell.net => (ClassLabel::BuySell, Some(buy.net)),
        (true, true) => (ClassLabel::SellBuy, Some(sell.net)),
        (true, false) => (ClassLabel::BuySell, Some(buy.net)),
        (false, true) => (ClassLabel::SellBuy, Some(sell.net)),
        (false, false) => (ClassLabel::NoAction, None),
    }
}

// ---------------------------------------------------------------- CART

#[derive(Debug, Clone, PartialEq)]
pub enum RefNode {
    Leaf([u32; 3]),
    Split {
        attribute: usize,
        /// Largest value sent left and smallest sent right.
        left_max: f64,
        right_min: f64,
        left: Box<RefNode>,
        right: Box<RefNode>,
    },
}

fn counts(labels: &[ClassLabel], samples: &[usize]) -> [u32; 3] {
    let mut c = [0u32; 3];
    for &s in samples {
        c[labels[s].index()] += 1;
    }
    c
}

/// Greedy Gini tree over all attributes, exhaustive threshold search,
/// grown until every node is pure or inseparable.
pub fn reference_tree(x: &[Vec<f64>], y: &[ClassLabel], samples: &[usize]) -> RefNode {
    let c = counts(y, samples);
    if c.iter().filter(|&&v| v > 0).count() <= 1 {
        return RefNode::Leaf(c);
    }
    // Score to maximise: sum over children of (sum of squared counts) / size,
    // compared exactly as integer fractions.
    let mut best: Option<(u128, u128, usize, f64, f64)> = None;
    for a in 0..x[0].len() {
        let mut values: Vec<f64> = samples.iter().map(|&s| x[s][a]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let left: Vec<usize> = samples.iter().copied().filter(|&s| x[s][a] <= lo).collect();
            let right: Vec<usize> = samples.iter().copied().filter(|&s| x[s][a] >= hi).collect();
            let (cl, cr) = (counts(y, &left), counts(y, &right));
            let sq = |c: [u32; 3]| c.iter().map(|&v| (v as u128).pow(2)).sum::<u128>();
            let (nl, nr) = (left.len() as u128, right.len() as u128);
            let num = sq(cl) * nr + sq(cr) * nl;
            let den = nl * nr;
            let better = match best {
                None => true,
                Some((bn, bd, ..)) => num * bd > bn * den,
            };
            if better {
                best = Some((num, den, a, lo, hi));
            }
        }
    }
    let Some((_, _, attribute, left_max, right_min)) = best else {
        return RefNode::Leaf(c);
    };
    let left: Vec<usize> = samples
        .iter()
        .copied()
        .filter(|&s| x[s][attribute] <= left_max)
        .collect();
    let right: Vec<usize> = samples
        .iter()
        .copied()
        .filter(|&s| x[s][attribute] > left_max)
        .collect();
    RefNode::Split {
        attribute,
        left_max,
        right_min,
        left: Box::new(reference_tree(x, y, &left)),
        right: Box::new(reference_tree(x, y, &right)),
    }
}

// ---------------------------------------------------------------- metrics

/// Indicators recomputed from a raw `(real, predicted)` log.
pub fn log_metrics(pairs: &[(ClassLabel, ClassLabel)]) -> (f64, f64) {
    let op = |c: ClassLabel| c != ClassLabel::NoAction;
    let hits = pairs.iter().filter(|(r, p)| op(*r) && r == p).count() as f64;
    let opportunities = pairs.iter().filter(|(r, _)| op(*r)).count() as f64;
    let devised = pairs.iter().filter(|(_, p)| op(*p)).count() as f64;
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    (ratio(hits, opportunities), ratio(hits, devised))
}

/// Label every day with `d` future closes, starting at `first`.
pub fn label_days(
    close: &[f64],
    first: usize,
    g: f64,
    l: f64,
    d: usize,
    cost: f64,
    rental: f64,
) -> Vec<(usize, ClassLabel, Option<f64>)> {
    (first..close.len())
        .filter(|&t| t + d < close.len())
        .map(|t| {
            let b = scan_trade(Strategy::BuySell, close, t, g, l, d, cost, rental);
            let s = scan_trade(Strategy::SellBuy, close, t, g, l, d, cost, rental);
            let (c, r) = label_oracle(&b, &s);
            (t, c, r)
        })
        .collect()
}
