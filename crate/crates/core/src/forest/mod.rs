//! Random-forest classifier over the classes {-1, 0, +1}.
//!
//! Each tree is grown on its own bootstrap resample, with `m_try` randomly
//! drawn attributes considered at each split and no pruning. Prediction counts
//! one vote per tree; a non-zero class must additionally clear
//! `vote_threshold` of all votes.

mod tree;

use tree::{train_tree_on, Columns, MAX_ROWS};

pub use tree::{best_split, majority, train_tree, weighted_gini, DecisionTree, Node, Split};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::ClassLabel;
use crate::seeding::mix_seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Borrowed rows and labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub features: &'a [Vec<f64>],
    pub labels: &'a [ClassLabel],
}

impl<'a> TrainingSet<'a> {
    pub fn new(features: &'a [Vec<f64>], labels: &'a [ClassLabel]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|r| r.len() != first.len()) {
                return Err(Error::invalid("feature rows differ in length"));
            }
            if features.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid("feature values must be finite"));
            }
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Attributes tried per split; `None` means `floor(sqrt(M))`.
    pub m_try: Option<usize>,
    pub min_node_size: usize,
    pub vote_threshold: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            m_try: None,
            min_node_size: 1,
            vote_threshold: 0.0,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolve_m_try(&self, n_features: usize) -> usize {
        self.m_try
            .unwrap_or_else(|| ((n_features as f64).sqrt().floor() as usize).max(1))
            .clamp(1, n_features.max(1))
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::invalid("n_trees must be >= 1"));
        }
        if let Some(m) = self.m_try {
            if m < 1 || m > n_features {
                return Err(Error::invalid(format!(
                    "m_try = {m} outside 1..={n_features}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.vote_threshold) {
            return Err(Error::invalid("vote_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-class vote counts in [`ClassLabel::ORDER`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteCounts {
    pub counts: [usize; 3],
}

impl VoteCounts {
    pub fn new(sell_buy: usize, no_action: usize, buy_sell: usize) -> Self {
        Self {
            counts: [sell_buy, no_action, buy_sell],
        }
    }

    pub fn get(&self, class: ClassLabel) -> usize {
        self.counts[class.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Thresholded decision: the most-voted class, with any tie resolving to
    /// no action, demoted to no action when its vote share is below
    /// `threshold`.
    pub fn decide(&self, threshold: f64) -> ClassLabel {
        let max = *self.counts.iter().max().expect("three classes");
        let winners: Vec<usize> = (0..3).filter(|&i| self.counts[i] == max).collect();
        if winners.len() != 1 {
            return ClassLabel::NoAction;
        }
        let w = ClassLabel::from_index(winners[0]);
        let total = self.total();
        if w != ClassLabel::NoAction && total > 0 && (max as f64) / (total as f64) < threshold {
            return ClassLabel::NoAction;
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub config: ForestConfig,
    pub class_order: [ClassLabel; 3],
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

/// `n` row indices drawn uniformly with replacement.
pub fn bootstrap_sample<R: Rng>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("bootstrap of an empty dataset"));
    }
    Ok((0..n).map(|_| rng.gen_range(0..n)).collect())
}

/// Random stream of tree `i`: its bootstrap is drawn first, then the tree is
/// grown from the same stream.
pub fn tree_rng(seed: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64))
}

pub fn train_forest(data: &TrainingSet<'_>, config: &ForestConfig) -> Result<ForestModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if data.len() > MAX_ROWS {
        return Err(Error::invalid(format!(
            "at most {MAX_ROWS} training rows are supported, got {}",
            data.len()
        )));
    }
    let n_features = data.n_features();
    config.validate(n_features)?;
    let cols = Columns::new(data);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(config.seed, i);
            let sample = bootstrap_sample(data.len(), &mut rng)?;
            Ok(train_tree_on(&cols, &sample, config, &mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        format_version: MODEL_FORMAT_VERSION,
        config: *config,
        class_order: ClassLabel::ORDER,
        n_features,
        trees,
    })
}

impl ForestModel {
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn predict_votes(&self, x: &[f64]) -> Result<VoteCounts> {
        self.check_dim(x)?;
        let mut votes = VoteCounts::default();
        for t in &self.trees {
            votes.counts[t.predict(x).index()] += 1;
        }
        Ok(votes)
    }

    pub fn classify(&self, x: &[f64], vote_threshold: f64) -> Result<ClassLabel> {
        Ok(self.predict_votes(x)?.decide(vote_threshold))
    }

    /// Classification with the configured threshold.
    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        self.classify(x, self.config.vote_threshold)
    }

    /// Out-of-bag error rate on the data the model was trained with. Rows
    /// that appear in every bootstrap are skipped; `None` if no row is
    /// out-of-bag anywhere.
    pub fn oob_error(&self, data: &TrainingSet<'_>) -> Option<f64> {
        let n = data.len();
        let mut votes = vec![VoteCounts::default(); n];
        for (i, tree) in self.trees.iter().enumerate() {
            let mut rng = tree_rng(self.config.seed, i);
            let sample = bootstrap_sample(n, &mut rng).ok()?;
            let mut in_bag = vec![false; n];
            for s in sample {
                in_bag[s] = true;
            }
            for row in (0..n).filter(|&r| !in_bag[r]) {
                votes[row].counts[tree.predict(&data.features[row]).index()] += 1;
            }
        }
        let scored: Vec<usize> = (0..n).filter(|&r| votes[r].total() > 0).collect();
        if scored.is_empty() {
            return None;
        }
        let wrong = scored
            .iter()
            .filter(|&&r| votes[r].decide(0.0) != data.labels[r])
            .count();
        Some(wrong as f64 / scored.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let model = Self::deserialize(&mut de)?;
        de.end()?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}
