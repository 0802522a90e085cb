//! CART classification trees on pre-binned features, and bagged forests.
//!
//! Each feature is cut at the midpoints between adjacent distinct training
//! values (or between quantiles, when there are more than `max_bins` of
//! them). Splits maximize the weighted Gini decrease; ties go to the lowest
//! feature index, then the lowest threshold.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MaxFeatures, TreeParams};
use crate::synthgen::sub_seed;

/// Gains at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;

/// Column-major bin codes plus the thresholds that define them.
pub struct Binned {
    pub n: usize,
    pub p: usize,
    codes: Vec<u8>,
    /// Per feature, ascending. Bin `b` holds values in `(t[b-1], t[b]]`.
    pub thresholds: Vec<Vec<f64>>,
}

impl Binned {
    pub fn new(raw: &[f64], n: usize, p: usize, max_bins: usize) -> Binned {
        let max_bins = max_bins.clamp(2, 256);
        let mut codes = vec![0u8; n * p];
        let mut thresholds = Vec::with_capacity(p);
        let mut col = vec![0.0; n];
        for j in 0..p {
            for i in 0..n {
                col[i] = raw[i * p + j];
            }
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            let mut uniq = sorted.clone();
            uniq.dedup();
            let cuts: Vec<f64> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| midpoint(w[0], w[1])).collect()
            } else {
                let mut cuts: Vec<f64> = (1..max_bins)
                    .filter_map(|q| {
                        let k = q * n / max_bins;
                        let (a, b) = (sorted[k - 1], sorted[k]);
                        if a < b {
                            Some(midpoint(a, b))
                        } else {
                            // cut just above the tied value
                            let next = sorted[k..].iter().copied().find(|&v| v > a)?;
                            Some(midpoint(a, next))
                        }
                    })
                    .collect();
                cuts.dedup();
                cuts
            };
            for i in 0..n {
                codes[j * n + i] = cuts.partition_point(|&t| t < col[i]) as u8;
            }
            thresholds.push(cuts);
        }
        Binned { n, p, codes, thresholds }
    }

    fn code(&self, row: usize, feature: usize) -> usize {
        self.codes[feature * self.n + row] as usize
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // guard against rounding onto the upper value
    if m >= b { a } else { m }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        weight: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted Gini decrease achieved here.
        gain: f64,
        value: f64,
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn add_importance(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                acc[*feature] += gain;
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Best {
    feature: usize,
    bin: usize,
    gain: f64,
}

/// Sum of squared class weights over total weight; Gini gain is a
/// difference of these terms.
fn purity(w: f64, pos: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        (pos * pos + (w - pos) * (w - pos)) / w
    }
}

struct Grower<'a> {
    data: &'a Binned,
    y: &'a [bool],
    weight: &'a [u32],
    params: &'a TreeParams,
    n_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    hist_w: Vec<u64>,
    hist_p: Vec<u64>,
}

impl Grower<'_> {
    fn totals(&self, rows: &[u32]) -> (u64, u64) {
        rows.iter().fold((0, 0), |(w, p), &r| {
            let wr = self.weight[r as usize] as u64;
            (w + wr, p + if self.y[r as usize] { wr } else { 0 })
        })
    }

    fn best_split(&mut self, rows: &[u32], w: u64, pos: u64) -> Option<Best> {
        let p = self.data.p;
        let features: Vec<usize> = if self.n_features >= p {
            (0..p).collect()
        } else {
            let mut f = sample(&mut self.rng, p, self.n_features).into_vec();
            f.sort_unstable();
            f
        };
        let msl = self.params.min_samples_leaf as u64;
        let parent = purity(w as f64, pos as f64);
        let mut best: Option<Best> = None;
        for &f in &features {
            let nb = self.data.thresholds[f].len() + 1;
            if nb < 2 {
                continue;
            }
            self.hist_w[..nb].iter_mut().for_each(|v| *v = 0);
            self.hist_p[..nb].iter_mut().for_each(|v| *v = 0);
            for &r in rows {
                let r = r as usize;
                let b = self.data.code(r, f);
                let wr = self.weight[r] as u64;
                self.hist_w[b] += wr;
                if self.y[r] {
                    self.hist_p[b] += wr;
                }
            }
            let (mut lw, mut lp) = (0u64, 0u64);
            for b in 0..nb - 1 {
                lw += self.hist_w[b];
                lp += self.hist_p[b];
                if self.hist_w[b] == 0 && b > 0 {
                    // same partition as the previous threshold
                    continue;
                }
                let rw = w - lw;
                if lw < msl.max(1) || rw < msl.max(1) {
                    continue;
                }
                let gain = purity(lw as f64, lp as f64) + purity(rw as f64, (pos - lp) as f64) - parent;
                if gain > MIN_GAIN && best.is_none_or(|bst| gain > bst.gain) {
                    best = Some(Best { feature: f, bin: b, gain });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize) -> usize {
        let (w, pos) = self.totals(rows);
        let value = if w == 0 { 0.0 } else { pos as f64 / w as f64 };
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value, weight: w as f64 });
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let splittable = depth_ok && w >= self.params.min_samples_split as u64 && pos > 0 && pos < w;
        if !splittable {
            return id;
        }
        let Some(best) = self.best_split(rows, w, pos) else { return id };
        let (f, b) = (best.feature, best.bin);
        let mid = partition(rows, |r| self.data.code(r as usize, f) <= b);
        let (l_rows, r_rows) = rows.split_at_mut(mid);
        let left = self.grow(l_rows, depth + 1);
        let right = self.grow(r_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: f,
            threshold: self.data.thresholds[f][b],
            left,
            right,
            gain: best.gain,
            value,
            weight: w as f64,
        };
        id
    }
}

/// Stable in-place partition; returns the count of rows satisfying `pred`.
fn partition(rows: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let (yes, no): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| pred(r));
    let k = yes.len();
    rows[..k].copy_from_slice(&yes);
    rows[k..].copy_from_slice(&no);
    k
}

pub fn n_features(max: MaxFeatures, p: usize) -> usize {
    match max {
        MaxFeatures::All => p,
        MaxFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).max(1),
        MaxFeatures::Count(k) => k.clamp(1, p.max(1)),
    }
}

/// Grows one tree on rows with multiplicities `weight` (zero = left out).
pub fn grow_tree(data: &Binned, y: &[bool], weight: &[u32], params: &TreeParams, seed: u64) -> Tree {
    let mut rows: Vec<u32> = (0..data.n as u32).filter(|&r| weight[r as usize] > 0).collect();
    let mut g = Grower {
        data,
        y,
        weight,
        params,
        n_features: n_features(params.max_features, data.p),
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
        hist_w: vec![0; 257],
        hist_p: vec![0; 257],
    };
    g.grow(&mut rows, 0);
    Tree { nodes: g.nodes }
}

/// Per-tree seeds are derived from `seed` and the tree index, so the forest
/// does not depend on how trees are scheduled across threads.
pub fn grow_forest(data: &Binned, y: &[bool], params: &TreeParams, n_trees: usize, bootstrap: bool, seed: u64) -> (Vec<Tree>, Vec<u64>) {
    let seeds: Vec<u64> = (0..n_trees as u64).map(|t| sub_seed(seed, t)).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let weight = if bootstrap {
                let mut w = vec![0u32; data.n];
                for _ in 0..data.n {
                    w[rng.random_range(0..data.n)] += 1;
                }
                w
            } else {
                vec![1u32; data.n]
            };
            grow_tree(data, y, &weight, params, rng.random())
        })
        .collect();
    (trees, seeds)
}
