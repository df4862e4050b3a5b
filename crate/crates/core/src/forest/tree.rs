//! Unpruned CART classification trees with Gini splits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForestConfig, TrainingSet};
use crate::labeling::ClassLabel;

/// `value <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub attribute: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        /// Training-sample counts in [`ClassLabel::ORDER`].
        counts: [u32; 3],
    },
    Split {
        split: Split,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Majority class of a count vector; any tie resolves to no action.
pub fn majority(counts: &[u32; 3]) -> ClassLabel {
    let max = *counts.iter().max().expect("three classes");
    let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == max);
    let first = winners.next().expect("a maximum exists").0;
    if winners.next().is_some() {
        ClassLabel::NoAction
    } else {
        ClassLabel::from_index(first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: Node,
}

impl DecisionTree {
    fn leaf_node(&self, x: &[f64]) -> (&[u32; 3], usize) {
        let mut node = &self.root;
        let mut id = 0;
        loop {
            match node {
                Node::Leaf { counts } => return (counts, id),
                Node::Split { split, left, right } => {
                    if x[split.attribute] <= split.threshold {
                        node = left;
                        id = 2 * id + 1;
                    } else {
                        node = right;
                        id = 2 * id + 2;
                    }
                }
            }
        }
    }

    /// Leaf class counts reached by `x`.
    pub fn leaf_counts(&self, x: &[f64]) -> [u32; 3] {
        *self.leaf_node(x).0
    }

    /// Heap-style path id of the leaf reached by `x`; distinct leaves get
    /// distinct ids.
    pub fn leaf_id(&self, x: &[f64]) -> usize {
        self.leaf_node(x).1
    }

    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        majority(self.leaf_node(x).0)
    }

    pub fn n_leaves(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }
}

fn sq(x: u32) -> u64 {
    u64::from(x) * u64::from(x)
}

/// Candidate split with its exact score `S_L / n_L + S_R / n_R` kept as a
/// fraction; `S` is the sum of squared class counts. Larger is purer. Both
/// terms stay below `n^3`, so they fit in `u64` for any supported `n`.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    attribute: usize,
    /// Largest value going left and smallest going right.
    below: f64,
    above: f64,
    num: u64,
    den: u64,
}

impl Candidate {
    fn split(&self) -> Split {
        Split {
            attribute: self.attribute,
            threshold: midpoint(self.below, self.above),
        }
    }
}

/// Weighted Gini impurity of a split, for reporting.
pub fn weighted_gini(left: &[u32; 3], right: &[u32; 3]) -> f64 {
    let gini = |c: &[u32; 3]| {
        let n = c.iter().sum::<u32>() as f64;
        if n == 0.0 {
            0.0
        } else {
            1.0 - c.iter().map(|&x| (x as f64 / n).powi(2)).sum::<f64>()
        }
    };
    let nl = left.iter().sum::<u32>() as f64;
    let nr = right.iter().sum::<u32>() as f64;
    (nl * gini(left) + nr * gini(right)) / (nl + nr)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) * 0.5;
    if mid < b {
        mid
    } else {
        a
    }
}

/// Largest supported training set; keeps candidate scores within `u64`.
pub(crate) const MAX_ROWS: usize = 1 << 21;

/// Column-major copy of a training set with class indices and per-column
/// dense value ranks, the layout the split search scans.
pub(crate) struct Columns {
    n_rows: usize,
    n_features: usize,
    values: Vec<f64>,
    ranks: Vec<u32>,
    classes: Vec<u8>,
}

impl Columns {
    pub(crate) fn new(data: &TrainingSet<'_>) -> Self {
        let n_rows = data.len();
        let n_features = data.n_features();
        let mut values = vec![0.0; n_rows * n_features];
        for (r, row) in data.features.iter().enumerate() {
            for (a, &v) in row.iter().enumerate() {
                values[a * n_rows + r] = v;
            }
        }
        let mut ranks = vec![0u32; n_rows * n_features];
        let mut order: Vec<usize> = (0..n_rows).collect();
        for a in 0..n_features {
            let column = &values[a * n_rows..(a + 1) * n_rows];
            order.sort_unstable_by(|&i, &j| column[i].total_cmp(&column[j]));
            let mut rank = 0u32;
            for (pos, &r) in order.iter().enumerate() {
                if pos > 0 && column[r] != column[order[pos - 1]] {
                    rank += 1;
                }
                ranks[a * n_rows + r] = rank;
            }
        }
        Self {
            n_rows,
            n_features,
            values,
            ranks,
            classes: data.labels.iter().map(|c| c.index() as u8).collect(),
        }
    }

    fn column(&self, attr: usize) -> &[f64] {
        &self.values[attr * self.n_rows..(attr + 1) * self.n_rows]
    }

    fn rank_column(&self, attr: usize) -> &[u32] {
        &self.ranks[attr * self.n_rows..(attr + 1) * self.n_rows]
    }
}

/// Scratch buffer reused across nodes.
#[derive(Default)]
struct Scratch {
    keys: Vec<u64>,
}

/// `rows` are distinct row indices, `weights[r]` their multiplicity.
fn best_split_weighted(
    cols: &Columns,
    rows: &[usize],
    weights: &[u32],
    total: &[u32; 3],
    candidate_attrs: &[usize],
    scratch: &mut Scratch,
) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let mut best: Option<Candidate> = None;
    for &attr in candidate_attrs {
        let column = cols.column(attr);
        let ranks = cols.rank_column(attr);
        let keys = &mut scratch.keys;
        keys.clear();
        keys.extend(rows.iter().map(|&r| (u64::from(ranks[r]) << 32) | r as u64));
        keys.sort_unstable();
        let mut left = [0u32; 3];
        let mut n_left = 0u64;
        let n_total = u64::from(total[0] + total[1] + total[2]);
        for i in 0..keys.len() - 1 {
            let (k0, k1) = (keys[i], keys[i + 1]);
            let r = (k0 & 0xffff_ffff) as usize;
            let w = weights[r];
            left[cols.classes[r] as usize] += w;
            n_left += u64::from(w);
            if k0 >> 32 == k1 >> 32 {
                continue;
            }
            let sq_left = sq(left[0]) + sq(left[1]) + sq(left[2]);
            let sq_right = sq(total[0] - left[0]) + sq(total[1] - left[1]) + sq(total[2] - left[2]);
            let n_right = n_total - n_left;
            let num = sq_left * n_right + sq_right * n_left;
            let den = n_left * n_right;
            // Within one attribute the earlier (lower) threshold wins ties.
            let better = match &best {
                None => true,
                Some(b) => {
                    let lhs = u128::from(num) * u128::from(b.den);
                    let rhs = u128::from(b.num) * u128::from(den);
                    lhs > rhs || (lhs == rhs && attr < b.attribute)
                }
            };
            if better {
                let next = (k1 & 0xffff_ffff) as usize;
                best = Some(Candidate {
                    attribute: attr,
                    below: column[r],
                    above: column[next],
                    num,
                    den,
                });
            }
        }
    }
    best.map(|c| c.split())
}

/// Collapses a sample multiset into distinct rows and per-row weights.
fn to_weights(n_rows: usize, sample: &[usize]) -> (Vec<usize>, Vec<u32>) {
    let mut weights = vec![0u32; n_rows];
    for &s in sample {
        weights[s] += 1;
    }
    let rows = (0..n_rows).filter(|&r| weights[r] > 0).collect();
    (rows, weights)
}

/// Best Gini split of the multiset `samples` over `candidate_attrs`, or
/// `None` when no candidate attribute takes two distinct values.
pub fn best_split(
    data: &TrainingSet<'_>,
    samples: &[usize],
    candidate_attrs: &[usize],
) -> Option<Split> {
    let cols = Columns::new(data);
    let (rows, weights) = to_weights(cols.n_rows, samples);
    let mut total = [0u32; 3];
    for &r in &rows {
        total[cols.classes[r] as usize] += weights[r];
    }
    best_split_weighted(
        &cols,
        &rows,
        &weights,
        &total,
        candidate_attrs,
        &mut Scratch::default(),
    )
}

struct Grower<'a, R> {
    cols: &'a Columns,
    weights: Vec<u32>,
    m_try: usize,
    min_node_size: usize,
    rng: &'a mut R,
    attrs: Vec<usize>,
    scratch: Scratch,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: &mut [usize]) -> Node {
        let mut counts = [0u32; 3];
        for &r in rows.iter() {
            counts[self.cols.classes[r] as usize] += self.weights[r];
        }
        let size: u32 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || (size as usize) < self.min_node_size.max(2) {
            return Node::Leaf { counts };
        }

        // Attributes are drawn without replacement by a lazy Fisher-Yates
        // shuffle, m_try at a time. When none of the drawn attributes varies
        // the next batch is drawn, so a node only becomes a leaf when no
        // attribute at all can separate it.
        let m = self.attrs.len();
        let mut drawn = 0;
        let mut split = None;
        while drawn < m && split.is_none() {
            let upto = (drawn + self.m_try).min(m);
            for i in drawn..upto {
                let j = self.rng.gen_range(i..m);
                self.attrs.swap(i, j);
            }
            split = best_split_weighted(
                self.cols,
                rows,
                &self.weights,
                &counts,
                &self.attrs[drawn..upto],
                &mut self.scratch,
            );
            drawn = upto;
        }
        let Some(split) = split else {
            return Node::Leaf { counts };
        };

        let column = self.cols.column(split.attribute);
        let mut mid = 0;
        for i in 0..rows.len() {
            if column[rows[i]] <= split.threshold {
                rows.swap(i, mid);
                mid += 1;
            }
        }
        let (l, r) = rows.split_at_mut(mid);
        let left = self.grow(l);
        let right = self.grow(r);
        Node::Split {
            split,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

pub(crate) fn train_tree_on<R: Rng>(
    cols: &Columns,
    sample: &[usize],
    config: &ForestConfig,
    rng: &mut R,
) -> DecisionTree {
    let (mut rows, weights) = to_weights(cols.n_rows, sample);
    if rows.is_empty() || cols.n_features == 0 {
        let mut counts = [0u32; 3];
        for &r in &rows {
            counts[cols.classes[r] as usize] += weights[r];
        }
        return DecisionTree {
            root: Node::Leaf { counts },
        };
    }
    let mut grower = Grower {
        cols,
        weights,
        m_try: config.resolve_m_try(cols.n_features),
        min_node_size: config.min_node_size,
        rng,
        attrs: (0..cols.n_features).collect(),
        scratch: Scratch::default(),
    };
    DecisionTree {
        root: grower.grow(&mut rows),
    }
}

/// Grows one tree on the multiset `sample` of row indices. Nodes are
/// expanded depth-first, left child before right.
pub fn train_tree<R: Rng>(
    data: &TrainingSet<'_>,
    sample: &[usize],
    config: &ForestConfig,
    rng: &mut R,
) -> DecisionTree {
    train_tree_on(&Columns::new(data), sample, config, rng)
}
