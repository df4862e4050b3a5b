//! Supervised learning of stock-market operations from daily bars.
//!
//! The pipeline: daily bars ([`market_data`]) are turned into 22 technical
//! indicators ([`indicators`]); each day is labeled by simulating Buy-Sell and
//! Sell-Buy operations with stop-gain, stop-loss and duration exits
//! ([`labeling`]); a random forest ([`forest`]) is evaluated by sliding-window
//! walk-forward validation ([`walk_forward`]); and the strategy parameters are
//! chosen by grid search over that evaluation's score ([`tuning`]).

pub mod error;
pub mod forest;
pub mod indicators;
pub mod labeling;
pub mod market_data;
pub mod seeding;
pub mod synthetic;
pub mod tuning;
pub mod walk_forward;

pub use error::{Error, Result};
pub use forest::{train_forest, ForestConfig, ForestModel, TrainingSet, VoteCounts};
pub use indicators::{build_feature_matrix, FeatureMatrix, IndicatorSeries};
pub use labeling::{
    label_series, ClassLabel, CostModel, ExitReason, LabeledDataset, Strategy, StrategyParams,
    TradeOutcome,
};
pub use market_data::{
    parse_series, slice_by_date, validate_series, ColumnMap, DailyBar, DateRange, ParseMode,
    PriceSeries, ValidationReport,
};
pub use tuning::{
    enumerate_grid, final_eval, rank_stocks, tune_stock, EvaluationProtocol, ParamGrid,
    TuningResult,
};
pub use walk_forward::{walk_forward, ConfusionMatrix, CvConfig, PerfReport, ScoreWeights};
