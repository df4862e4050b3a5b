//! Seeded synthetic price series for tests, benchmarks and demos.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market_data::{DailyBar, PriceSeries};

/// Half-width of the intraday range around open/close.
const RANGE: f64 = 0.005;

pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date")
}

/// `n` consecutive weekdays starting at `start` (or the next weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut day = start;
    while out.len() < n {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day + Days::new(1);
    }
    out
}

/// Builds valid bars around a close path: open is the previous close, the
/// intraday range brackets both.
pub fn from_closes(ticker: &str, start: NaiveDate, closes: &[f64]) -> PriceSeries {
    let dates = business_days(start, closes.len());
    let bars = closes
        .iter()
        .enumerate()
        .map(|(i, &close)| {
            let open = if i == 0 { close } else { closes[i - 1] };
            let avg = 0.5 * (open + close);
            DailyBar {
                date: dates[i],
                open,
                low: open.min(close) * (1.0 - RANGE),
                avg,
                high: open.max(close) * (1.0 + RANGE),
                close,
                trades: 1000 + (i as u64 % 17) * 10,
                value: avg * 1.0e5,
            }
        })
        .collect();
    PriceSeries::new(ticker, bars)
}

pub fn constant(ticker: &str, len: usize, price: f64) -> PriceSeries {
    let dates = business_days(default_start(), len);
    let bars = dates
        .into_iter()
        .map(|date| DailyBar {
            date,
            open: price,
            low: price,
            avg: price,
            high: price,
            close: price,
            trades: 100,
            value: price * 100.0,
        })
        .collect();
    PriceSeries::new(ticker, bars)
}

/// Driftless multiplicative random walk with uniform daily returns of
/// standard deviation `vol`.
pub fn random_walk(ticker: &str, len: usize, seed: u64, vol: f64) -> PriceSeries {
    random_walk_from(ticker, default_start(), len, seed, vol)
}

pub fn random_walk_from(
    ticker: &str,
    start: NaiveDate,
    len: usize,
    seed: u64,
    vol: f64,
) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_width = vol * 3f64.sqrt();
    let mut price = 20.0 + 80.0 * rng.gen::<f64>();
    let closes: Vec<f64> = (0..len)
        .map(|i| {
            if i > 0 {
                price *= 1.0 + rng.gen_range(-half_width..half_width);
            }
            price
        })
        .collect();
    from_closes(ticker, start, &closes)
}

/// Parameters of [`planted_cycles`].
#[derive(Debug, Clone, Copy)]
pub struct CycleShape {
    /// Rows per leg; a full cycle is two legs.
    pub leg: usize,
    /// Log-price travel of one leg.
    pub amplitude: f64,
    /// Uniform daily log-noise half width.
    pub noise: f64,
}

impl Default for CycleShape {
    fn default() -> Self {
        Self {
            leg: 20,
            amplitude: 0.25,
            noise: 0.002,
        }
    }
}

/// Planted-signal series: log-price follows a triangle wave with a fixed leg
/// length, plus small noise. The forward move from any day is fixed by the
/// cycle phase, which the rate of change and stochastic %K readings identify.
pub fn planted_cycles(
    ticker: &str,
    start: NaiveDate,
    len: usize,
    seed: u64,
    shape: CycleShape,
) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = shape.amplitude / shape.leg as f64;
    let phase0 = rng.gen_range(0..2 * shape.leg);
    let mut log_price = (50.0f64).ln();
    let closes: Vec<f64> = (0..len)
        .map(|i| {
            if i > 0 {
                let phase = (i + phase0) % (2 * shape.leg);
                let dir = if phase < shape.leg { 1.0 } else { -1.0 };
                log_price += dir * step;
                if shape.noise > 0.0 {
                    log_price += rng.gen_range(-shape.noise..shape.noise);
                }
            }
            log_price.exp()
        })
        .collect();
    from_closes(ticker, start, &closes)
}
