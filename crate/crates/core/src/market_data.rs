//! Daily bar ingestion: parsing delimiter-separated exports, validating bar
//! invariants and slicing series by calendar date.
//!
//! Missing trading days are simply absent; every window elsewhere in the
//! crate counts rows, not calendar days.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Canonical header of the daily bar CSV.
pub const CANONICAL_HEADER: [&str; 9] = [
    "date", "ticker", "open", "low", "avg", "high", "close", "trades", "value",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub open: f64,
    pub low: f64,
    pub avg: f64,
    pub high: f64,
    pub close: f64,
    pub trades: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    pub bars: Vec<DailyBar>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, bars: Vec<DailyBar>) -> Self {
        Self {
            ticker: ticker.into(),
            bars,
        }
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    /// Index of the bar dated `date`, if present.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.bars.binary_search_by_key(&date, |b| b.date).ok()
    }
}

/// Inclusive calendar-date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateRange {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Result<Self> {
        if from > to {
            return Err(Error::invalid(format!("date range {from} > {to}")));
        }
        Ok(Self { from, to })
    }

    /// The whole calendar year `year`.
    pub fn year(year: i32) -> Self {
        Self {
            from: NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year"),
            to: NaiveDate::from_ymd_opt(year, 12, 31).expect("valid year"),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.from <= date && date <= self.to
    }
}

/// Maps each canonical field to the header name used by a particular export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub delimiter: char,
    pub date: String,
    pub ticker: String,
    pub open: String,
    pub low: String,
    pub avg: String,
    pub high: String,
    pub close: String,
    pub trades: String,
    pub value: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            delimiter: ',',
            date: "date".into(),
            ticker: "ticker".into(),
            open: "open".into(),
            low: "low".into(),
            avg: "avg".into(),
            high: "high".into(),
            close: "close".into(),
            trades: "trades".into(),
            value: "value".into(),
        }
    }
}

impl ColumnMap {
    fn names(&self) -> [&str; 9] {
        [
            &self.date,
            &self.ticker,
            &self.open,
            &self.low,
            &self.avg,
            &self.high,
            &self.close,
            &self.trades,
            &self.value,
        ]
    }
}

/// What to do with bars that break a validation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// The first finding aborts ingestion.
    #[default]
    Strict,
    /// Offending bars (and later duplicates of a date) are dropped and logged.
    Permissive,
}

pub mod rules {
    pub const POSITIVE: &str = "prices strictly positive";
    pub const LOW_BOUND: &str = "low <= min(open, close, avg)";
    pub const HIGH_BOUND: &str = "high >= max(open, close, avg)";
    pub const AVG_WITHIN: &str = "low <= avg <= high";
    pub const VALUE_NON_NEGATIVE: &str = "value non-negative";
    pub const DATES_INCREASING: &str = "dates strictly increasing";
    pub const NON_EMPTY: &str = "non-empty";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FindingValue {
    Number(f64),
    Text(String),
}

/// One violated invariant. Serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub date: Option<NaiveDate>,
    pub field: String,
    pub rule: String,
    pub value: FindingValue,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub ticker: String,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn write_json_lines<W: Write>(&self, mut w: W) -> Result<()> {
        for f in &self.findings {
            serde_json::to_writer(&mut w, f)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_json_lines<R: Read>(ticker: &str, r: R) -> Result<Self> {
        let findings = serde_json::Deserializer::from_reader(r)
            .into_iter::<Finding>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            ticker: ticker.to_string(),
            findings,
        })
    }
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn bar_findings(bar: &DailyBar) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut push = |field: &str, rule: &str, value: f64| {
        out.push(Finding {
            date: Some(bar.date),
            field: field.to_string(),
            rule: rule.to_string(),
            value: FindingValue::Number(value),
        })
    };
    for (field, v) in [
        ("open", bar.open),
        ("low", bar.low),
        ("avg", bar.avg),
        ("high", bar.high),
        ("close", bar.close),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            push(field, rules::POSITIVE, v);
        }
    }
    if bar.low > bar.open.min(bar.close).min(bar.avg) {
        push("low", rules::LOW_BOUND, bar.low);
    }
    if bar.high < bar.open.max(bar.close).max(bar.avg) {
        push("high", rules::HIGH_BOUND, bar.high);
    }
    if !(bar.low <= bar.avg && bar.avg <= bar.high) {
        push("avg", rules::AVG_WITHIN, bar.avg);
    }
    if !(bar.value >= 0.0) {
        push("value", rules::VALUE_NON_NEGATIVE, bar.value);
    }
    out
}

/// Lists every violated bar or series invariant. The series is acceptable
/// iff the returned report is empty.
pub fn validate_series(s: &PriceSeries) -> ValidationReport {
    let mut findings = Vec::new();
    if s.bars.is_empty() {
        findings.push(Finding {
            date: None,
            field: "bars".into(),
            rule: rules::NON_EMPTY.into(),
            value: FindingValue::Number(0.0),
        });
    }
    for (i, bar) in s.bars.iter().enumerate() {
        findings.extend(bar_findings(bar));
        if i > 0 && s.bars[i - 1].date >= bar.date {
            findings.push(Finding {
                date: Some(bar.date),
                field: "date".into(),
                rule: rules::DATES_INCREASING.into(),
                value: FindingValue::Text(bar.date.format(DATE_FORMAT).to_string()),
            });
        }
    }
    ValidationReport {
        ticker: s.ticker.clone(),
        findings,
    }
}

/// Parses rows into per-ticker series sorted by date without applying any
/// validation. Series are returned in ticker order.
pub fn parse_unvalidated<R: Read>(input: R, schema: &ColumnMap) -> Result<Vec<PriceSeries>> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::invalid("delimiter must be an ASCII character"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput);
    }
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(schema.names()) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut by_ticker: BTreeMap<String, Vec<DailyBar>> = BTreeMap::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| -> Result<&str> {
            record.get(idx[k]).ok_or_else(|| Error::MalformedRow {
                line,
                message: format!("missing field `{}`", CANONICAL_HEADER[k]),
            })
        };
        let num = |k: usize| -> Result<f64> {
            let raw = field(k)?;
            raw.parse::<f64>().map_err(|_| Error::MalformedRow {
                line,
                message: format!("unparsable {} `{raw}`", CANONICAL_HEADER[k]),
            })
        };
        let raw_date = field(0)?;
        let date =
            NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| Error::MalformedRow {
                line,
                message: format!("unparsable date `{raw_date}`"),
            })?;
        let raw_trades = field(7)?;
        let trades = raw_trades.parse::<u64>().map_err(|_| Error::MalformedRow {
            line,
            message: format!("unparsable trades `{raw_trades}`"),
        })?;
        let bar = DailyBar {
            date,
            open: num(2)?,
            low: num(3)?,
            avg: num(4)?,
            high: num(5)?,
            close: num(6)?,
            trades,
            value: num(8)?,
        };
        by_ticker
            .entry(field(1)?.to_string())
            .or_default()
            .push(bar);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyInput);
    }

    Ok(by_ticker
        .into_iter()
        .map(|(ticker, mut bars)| {
            bars.sort_by_key(|b| b.date);
            PriceSeries { ticker, bars }
        })
        .collect())
}

/// Parses and validates daily bars, one series per distinct ticker.
pub fn parse_series<R: Read>(
    input: R,
    schema: &ColumnMap,
    mode: ParseMode,
) -> Result<Vec<PriceSeries>> {
    let raw = parse_unvalidated(input, schema)?;
    let mut out = Vec::with_capacity(raw.len());
    for series in raw {
        match mode {
            ParseMode::Strict => {
                let report = validate_series(&series);
                if let Some(f) = report.findings.into_iter().next() {
                    return Err(Error::Validation {
                        ticker: series.ticker,
                        date: f.date.unwrap_or_default(),
                        field: f.field,
                        rule: f.rule,
                        value: match f.value {
                            FindingValue::Number(v) => v.to_string(),
                            FindingValue::Text(t) => t,
                        },
                    });
                }
                out.push(series);
            }
            ParseMode::Permissive => {
                let mut kept: Vec<DailyBar> = Vec::with_capacity(series.bars.len());
                for bar in series.bars {
                    let findings = bar_findings(&bar);
                    if let Some(f) = findings.first() {
                        log::warn!("{} {}: dropped bar ({})", series.ticker, bar.date, f.rule);
                        continue;
                    }
                    if kept.last().is_some_and(|p| p.date >= bar.date) {
                        log::warn!(
                            "{} {}: dropped bar ({})",
                            series.ticker,
                            bar.date,
                            rules::DATES_INCREASING
                        );
                        continue;
                    }
                    kept.push(bar);
                }
                if kept.is_empty() {
                    log::warn!("{}: no valid bars left, series dropped", series.ticker);
                    continue;
                }
                out.push(PriceSeries::new(series.ticker, kept));
            }
        }
    }
    Ok(out)
}

/// Writes series in the canonical CSV layout.
pub fn write_series<W: Write>(series: &[PriceSeries], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CANONICAL_HEADER)?;
    for s in series {
        for b in &s.bars {
            wtr.write_record([
                b.date.format(DATE_FORMAT).to_string(),
                s.ticker.clone(),
                b.open.to_string(),
                b.low.to_string(),
                b.avg.to_string(),
                b.high.to_string(),
                b.close.to_string(),
                b.trades.to_string(),
                b.value.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Bars dated within `[from, to]`, order preserved. May be empty.
pub fn slice_by_date(s: &PriceSeries, from: NaiveDate, to: NaiveDate) -> Result<PriceSeries> {
    if from > to {
        return Err(Error::invalid(format!("slice range {from} > {to}")));
    }
    Ok(PriceSeries {
        ticker: s.ticker.clone(),
        bars: s
            .bars
            .iter()
            .filter(|b| from <= b.date && b.date <= to)
            .copied()
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    fn bar(date: &str, close: f64) -> DailyBar {
        DailyBar {
            date: d(date),
            open: close,
            low: close * 0.99,
            avg: close,
            high: close * 1.01,
            close,
            trades: 10,
            value: 1000.0,
        }
    }

    const HEADER: &str = "date,ticker,open,low,avg,high,close,trades,value\n";

    #[test]
    fn parses_one_ticker() {
        let text = format!(
            "{HEADER}2010-01-04,PETR4,10,9,10,11,10.5,100,1000\n\
             2010-01-05,PETR4,10.5,10,10.6,11,10.8,120,1200\n\
             2010-01-06,PETR4,10.8,10.1,10.7,11.2,11,90,900\n"
        );
        let series =
            parse_series(text.as_bytes(), &ColumnMap::default(), ParseMode::Strict).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].ticker, "PETR4");
        assert_eq!(series[0].len(), 3);
        assert_eq!(series[0].bars[2].close, 11.0);
    }

    #[test]
    fn partitions_interleaved_tickers_and_sorts() {
        let text = format!(
            "{HEADER}2010-01-05,B,1,1,1,1,1,1,1\n\
             2010-01-05,A,2,2,2,2,2,1,1\n\
             2010-01-04,B,1,1,1,1,1,1,1\n\
             2010-01-04,A,2,2,2,2,2,1,1\n"
        );
        let series =
            parse_series(text.as_bytes(), &ColumnMap::default(), ParseMode::Strict).unwrap();
        assert_eq!(series.len(), 2);
        for s in &series {
            assert_eq!(s.dates(), vec![d("2010-01-04"), d("2010-01-05")]);
        }
    }

    #[test]
    fn high_below_low_names_the_date() {
        let text = format!("{HEADER}2010-01-04,X,10,11,10,9,10,1,1\n");
        let err =
            parse_series(text.as_bytes(), &ColumnMap::default(), ParseMode::Strict).unwrap_err();
        match err {
            Error::Validation { date, .. } => assert_eq!(date, d("2010-01-04")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn permissive_drops_bad_rows() {
        let text = format!(
            "{HEADER}2010-01-04,X,10,11,10,9,10,1,1\n\
             2010-01-05,X,10,9,10,11,10,1,1\n\
             2010-01-05,X,10,9,10,11,10,1,1\n"
        );
        let series = parse_series(
            text.as_bytes(),
            &ColumnMap::default(),
            ParseMode::Permissive,
        )
        .unwrap();
        assert_eq!(series[0].len(), 1);
        assert_eq!(series[0].bars[0].date, d("2010-01-05"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text =
            format!("{HEADER}2010-01-04,X,10,9,10,11,10,1,1\n2010-01-05,X,abc,9,10,11,10,1,1\n");
        match parse_series(text.as_bytes(), &ColumnMap::default(), ParseMode::Strict) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("{HEADER}04/01/2010,X,10,9,10,11,10,1,1\n");
        assert!(matches!(
            parse_series(text.as_bytes(), &ColumnMap::default(), ParseMode::Strict),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn empty_input_is_an_error() {
        for text in ["", HEADER] {
            assert!(matches!(
                parse_series(text.as_bytes(), &ColumnMap::default(), ParseMode::Strict),
                Err(Error::EmptyInput)
            ));
        }
    }

    #[test]
    fn custom_schema_and_extra_columns() {
        let schema = ColumnMap {
            delimiter: ';',
            date: "DATA".into(),
            ticker: "CODNEG".into(),
            open: "PREABE".into(),
            low: "PREMIN".into(),
            avg: "PREMED".into(),
            high: "PREMAX".into(),
            close: "PREULT".into(),
            trades: "TOTNEG".into(),
            value: "VOLTOT".into(),
        };
        let text = "CODBDI;DATA;CODNEG;PREABE;PREMAX;PREMIN;PREMED;PREULT;TOTNEG;VOLTOT\n\
                    02;2010-01-04;VALE5;40;41;39;40.2;40.5;5000;1e7\n";
        let series = parse_series(text.as_bytes(), &schema, ParseMode::Strict).unwrap();
        let b = series[0].bars[0];
        assert_eq!((b.low, b.high, b.close, b.trades), (39.0, 41.0, 40.5, 5000));
    }

    #[test]
    fn validate_reports_each_rule() {
        let ok = PriceSeries::new("X", vec![bar("2010-01-04", 10.0), bar("2010-01-05", 11.0)]);
        assert!(validate_series(&ok).is_empty());

        let dup = PriceSeries::new("X", vec![bar("2010-01-04", 10.0), bar("2010-01-04", 11.0)]);
        let r = validate_series(&dup);
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].rule, rules::DATES_INCREASING);

        let mut zero = bar("2010-01-04", 10.0);
        zero.close = 0.0;
        let r = validate_series(&PriceSeries::new("X", vec![zero]));
        assert!(r
            .findings
            .iter()
            .any(|f| f.rule == rules::POSITIVE && f.field == "close"));

        let r = validate_series(&PriceSeries::new("X", vec![]));
        assert_eq!(r.findings[0].rule, rules::NON_EMPTY);
    }

    #[test]
    fn findings_round_trip_as_json_lines() {
        let mut zero = bar("2010-01-04", 10.0);
        zero.close = 0.0;
        let r = validate_series(&PriceSeries::new("X", vec![zero, zero]));
        let mut buf = Vec::new();
        r.write_json_lines(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), r.findings.len());
        assert!(text
            .lines()
            .next()
            .unwrap()
            .starts_with(r#"{"date":"2010-01-04","field":"#));
        let back = ValidationReport::read_json_lines("X", buf.as_slice()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn slicing() {
        let s = PriceSeries::new(
            "X",
            vec![
                bar("2010-06-01", 1.0),
                bar("2011-03-01", 2.0),
                bar("2011-12-30", 3.0),
                bar("2012-02-01", 4.0),
            ],
        );
        assert_eq!(
            slice_by_date(&s, d("2010-01-01"), d("2012-12-31")).unwrap(),
            s
        );
        let y2011 = slice_by_date(&s, d("2011-01-01"), d("2011-12-31")).unwrap();
        assert_eq!(y2011.closes(), vec![2.0, 3.0]);
        assert!(slice_by_date(&s, d("2013-01-01"), d("2013-12-31"))
            .unwrap()
            .is_empty());
        assert!(matches!(
            slice_by_date(&s, d("2012-01-01"), d("2011-01-01")),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn arb_series() -> impl Strategy<Value = PriceSeries> {
        prop::collection::vec((1.0f64..500.0, 0.0f64..0.05, 0u64..10_000), 1..60).prop_map(|rows| {
            let start = d("2010-01-01");
            let bars = rows
                .into_iter()
                .enumerate()
                .map(|(i, (close, spread, trades))| DailyBar {
                    date: start + chrono::Days::new(i as u64 * 2),
                    open: close,
                    low: close * (1.0 - spread),
                    avg: close,
                    high: close * (1.0 + spread),
                    close,
                    trades,
                    value: close * trades as f64,
                })
                .collect();
            PriceSeries::new("T", bars)
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_stable(s in arb_series()) {
            let mut buf = Vec::new();
            write_series(std::slice::from_ref(&s), &mut buf).unwrap();
            let parsed = parse_series(buf.as_slice(), &ColumnMap::default(), ParseMode::Strict).unwrap();
            prop_assert_eq!(&parsed[0], &s);
            let mut again = Vec::new();
            write_series(&parsed, &mut again).unwrap();
            prop_assert_eq!(buf, again);
        }

        #[test]
        fn slice_is_idempotent(s in arb_series(), a in 0u64..120, len in 0u64..120) {
            let from = d("2010-01-01") + chrono::Days::new(a);
            let to = from + chrono::Days::new(len);
            let once = slice_by_date(&s, from, to).unwrap();
            let twice = slice_by_date(&once, from, to).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
