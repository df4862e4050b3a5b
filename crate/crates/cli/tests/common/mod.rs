#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stockops_core::market_data::write_series;
use stockops_core::PriceSeries;

pub fn write_csv(dir: &Path, name: &str, series: &[PriceSeries]) -> PathBuf {
    let path = dir.join(name);
    let file = std::fs::File::create(&path).unwrap();
    write_series(series, file).unwrap();
    path
}

/// Short protocol over 2010 and a 2 x 2 x 2 grid so a full run takes
/// seconds.
pub const SMALL_CONFIG: &str = r#"
[grid]
gains = [0.05, 0.10]
losses = [0.03, 0.06]
durations = [5, 10]

[forest]
n_trees = 5

[protocol]
tuning_train = { from = "2010-03-01", to = "2010-06-30" }
tuning_test = { from = "2010-07-01", to = "2010-09-30" }
final_train = { from = "2010-07-01", to = "2010-09-30" }
final_test = { from = "2010-10-01", to = "2010-12-31" }
"#;

pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("{extra}\n{SMALL_CONFIG}")).unwrap();
    path
}

pub fn stockops(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stockops"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
