use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{
    gini2, hoeffding_bound, laplace, n_candidate_features, tree_rng, ForestError,
    IncHyperparameters, Matrix,
};
use crate::par::{self, Execution};

/// Candidate thresholds tried per numeric feature at a split attempt.
const NUMERIC_CANDIDATES: usize = 10;

thread_local! {
    static ONLINE_BAGGING: Poisson<f64> = Poisson::new(1.0).expect("λ=1 is valid");
}

/// Per-class statistics of one feature at one leaf. Only non-zero values are
/// recorded; the zero mass is the leaf's observed weight minus `nz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureStats {
    nz: [f64; 2],
    /// Only maintained once `binary` is false; until then both equal `nz`.
    sum: [f64; 2],
    sum_sq: [f64; 2],
    min: f64,
    max: f64,
    /// Every non-zero value seen so far was exactly 1.
    binary: bool,
}

impl FeatureStats {
    fn new(x: f64) -> Self {
        FeatureStats {
            nz: [0.0; 2],
            sum: [0.0; 2],
            sum_sq: [0.0; 2],
            min: x,
            max: x,
            binary: true,
        }
    }

    #[inline]
    fn add(&mut self, x: f64, class: usize, w: f64) {
        if self.binary {
            if x == 1.0 {
                self.nz[class] += w;
                return;
            }
            self.binary = false;
            self.sum = self.nz;
            self.sum_sq = self.nz;
        }
        self.nz[class] += w;
        self.sum[class] += w * x;
        self.sum_sq[class] += w * x * x;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    fn sums(&self, class: usize) -> (f64, f64) {
        if self.binary {
            (self.nz[class], self.nz[class])
        } else {
            (self.sum[class], self.sum_sq[class])
        }
    }

    /// Estimated weight per class with value <= t: the zero point mass plus a
    /// Gaussian fitted to the non-zero values.
    fn left_weight(&self, observed: &[f64; 2], t: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for c in 0..2 {
            let zeros = (observed[c] - self.nz[c]).max(0.0);
            let mut left = if t >= 0.0 { zeros } else { 0.0 };
            if self.nz[c] > 0.0 {
                let (sum, sum_sq) = self.sums(c);
                let mean = sum / self.nz[c];
                let var = (sum_sq / self.nz[c] - mean * mean).max(0.0);
                let sd = var.sqrt();
                let frac = if sd <= 1e-12 * mean.abs().max(1.0) {
                    if mean <= t {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    Normal::new(mean, sd).map_or(0.5, |d| d.cdf(t))
                };
                left += self.nz[c] * frac;
            }
            out[c] = left;
        }
        out
    }

    fn candidates(&self, has_zeros: bool) -> Vec<f64> {
        if self.binary && has_zeros {
            return vec![0.5];
        }
        let (lo, hi) = if has_zeros {
            (self.min.min(0.0), self.max.max(0.0))
        } else {
            (self.min, self.max)
        };
        if !(hi > lo) {
            return Vec::new();
        }
        (1..=NUMERIC_CANDIDATES)
            .map(|k| lo + (hi - lo) * k as f64 / (NUMERIC_CANDIDATES + 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Leaf {
    /// Prior weight inherited from the parent's split estimate plus observed weight.
    class_w: [f64; 2],
    observed: [f64; 2],
    since_attempt: f64,
    depth: u32,
    /// Indexed by position in the tree's subspace; empty until a non-zero
    /// value arrives.
    stats: Vec<Option<FeatureStats>>,
}

impl Leaf {
    fn new(prior: [f64; 2], depth: u32) -> Self {
        Leaf {
            class_w: prior,
            observed: [0.0; 2],
            since_attempt: 0.0,
            depth,
            stats: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(Box<Leaf>),
}

/// A Hoeffding tree restricted to a random feature subspace, with the RNG
/// that drives its online-bagging weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingTree {
    subspace: Vec<u32>,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Candidate {
    gain: f64,
    feature: u32,
    threshold: f64,
    left: [f64; 2],
    right: [f64; 2],
}

impl HoeffdingTree {
    fn new(width: usize, fraction: f64, mut rng: ChaCha8Rng) -> Self {
        let m = n_candidate_features(fraction, width);
        let mut subspace: Vec<u32> = index::sample(&mut rng, width, m)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        subspace.sort_unstable();
        HoeffdingTree {
            subspace,
            rng,
            nodes: vec![Node::Leaf(Box::new(Leaf::new([0.0; 2], 0)))],
        }
    }

    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
            }
        }
    }

    /// Same routing as [`Self::leaf_index`] over a row given as its sorted
    /// non-zero entries. Keeps the dense matrix out of the learning loop.
    fn leaf_index_sparse(&self, nonzero: &[(u32, f64)]) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let x = nonzero
                        .binary_search_by_key(feature, |e| e.0)
                        .map_or(0.0, |j| nonzero[j].1);
                    i = if x <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf(l) => laplace(l.class_w[1], l.class_w[0] + l.class_w[1]),
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }

    pub fn subspace(&self) -> &[u32] {
        &self.subspace
    }

    /// Structural sanity for a deserialized tree.
    pub(super) fn check(&self, width: usize) -> Result<(), String> {
        if self.subspace.is_empty()
            || self.subspace.windows(2).any(|w| w[0] >= w[1])
            || self.subspace.last().is_some_and(|&f| f as usize >= width)
        {
            return Err("bad feature subspace".into());
        }
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        let len = self.nodes.len();
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                left,
                right,
                ..
            } = n
            {
                let (l, r) = (*left as usize, *right as usize);
                if *feature as usize >= width || l <= i || r <= i || l >= len || r >= len {
                    return Err(format!("bad split node {i}"));
                }
            }
        }
        Ok(())
    }

    /// Position of each feature in the subspace, `u32::MAX` if absent.
    fn slots(&self, width: usize) -> Vec<u32> {
        let mut slots = vec![u32::MAX; width];
        for (pos, &f) in self.subspace.iter().enumerate() {
            slots[f as usize] = pos as u32;
        }
        slots
    }

    fn learn(
        &mut self,
        nonzero: &[(u32, f64)],
        slots: &[u32],
        label: bool,
        hp: &IncHyperparameters,
    ) {
        let k = ONLINE_BAGGING.with(|d| d.sample(&mut self.rng)) as u64;
        if k == 0 {
            return;
        }
        let w = k as f64;
        let c = usize::from(label);
        let li = self.leaf_index_sparse(nonzero);
        let Node::Leaf(leaf) = &mut self.nodes[li] else {
            unreachable!()
        };
        leaf.class_w[c] += w;
        leaf.observed[c] += w;
        leaf.since_attempt += w;
        if leaf.stats.is_empty() && !nonzero.is_empty() {
            leaf.stats.resize(self.subspace.len(), None);
        }
        for &(f, v) in nonzero {
            let pos = slots[f as usize];
            if pos != u32::MAX {
                leaf.stats[pos as usize]
                    .get_or_insert_with(|| FeatureStats::new(v))
                    .add(v, c, w);
            }
        }
        if leaf.since_attempt >= hp.grace_period as f64 {
            leaf.since_attempt = 0.0;
            if leaf.observed[0] > 0.0 && leaf.observed[1] > 0.0 {
                self.attempt_split(li, hp);
            }
        }
    }

    fn attempt_split(&mut self, li: usize, hp: &IncHyperparameters) {
        let Node::Leaf(leaf) = &self.nodes[li] else {
            return;
        };
        let n = leaf.observed[0] + leaf.observed[1];
        let parent = gini2(leaf.observed[1], n);
        let mut best: Option<Candidate> = None;
        let mut second_gain = 0.0f64;
        let observed = leaf
            .stats
            .iter()
            .zip(&self.subspace)
            .filter_map(|(st, &f)| st.as_ref().map(|st| (f, st)));
        for (f, st) in observed {
            let has_zeros = st.nz[0] + st.nz[1] < n;
            let mut feature_best: Option<Candidate> = None;
            for t in st.candidates(has_zeros) {
                let l = st.left_weight(&leaf.observed, t);
                let r = [
                    (leaf.observed[0] - l[0]).max(0.0),
                    (leaf.observed[1] - l[1]).max(0.0),
                ];
                let (ln, rn) = (l[0] + l[1], r[0] + r[1]);
                if ln <= 0.0 || rn <= 0.0 {
                    continue;
                }
                let child = (ln * gini2(l[1], ln) + rn * gini2(r[1], rn)) / n;
                let gain = parent - child;
                if feature_best.as_ref().is_none_or(|b| gain > b.gain) {
                    feature_best = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: t,
                        left: l,
                        right: r,
                    });
                }
            }
            if let Some(fb) = feature_best {
                match &best {
                    Some(b) if fb.gain <= b.gain => second_gain = second_gain.max(fb.gain),
                    _ => {
                        if let Some(b) = best.take() {
                            second_gain = second_gain.max(b.gain);
                        }
                        best = Some(fb);
                    }
                }
            }
        }
        let Some(best) = best else {
            return;
        };
        if best.gain <= 0.0 {
            return;
        }
        let eps = hoeffding_bound(1.0, hp.split_confidence, n).unwrap_or(f64::INFINITY);
        if best.gain - second_gain > eps || eps < hp.tie_threshold {
            let depth = leaf.depth + 1;
            let left = self.nodes.len() as u32;
            self.nodes
                .push(Node::Leaf(Box::new(Leaf::new(best.left, depth))));
            self.nodes
                .push(Node::Leaf(Box::new(Leaf::new(best.right, depth))));
            self.nodes[li] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right: left + 1,
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalForest {
    pub(super) hp: IncHyperparameters,
    pub(super) width: usize,
    pub(super) seed: u64,
    pub(super) trees: Vec<HoeffdingTree>,
    pub(super) execution: Execution,
}

impl IncrementalForest {
    /// Empty trees; every prediction is 0.5 until data arrives.
    pub fn init(width: usize, hp: &IncHyperparameters, seed: u64) -> Result<Self, ForestError> {
        hp.validate()?;
        if width == 0 {
            return Err(ForestError::Hyperparameter("width must be >= 1".into()));
        }
        let trees = (0..hp.n_trees)
            .map(|t| HoeffdingTree::new(width, hp.max_features_fraction, tree_rng(seed, t)))
            .collect();
        Ok(IncrementalForest {
            hp: *hp,
            width,
            seed,
            trees,
            execution: Execution::default(),
        })
    }

    pub fn fit(data: &Matrix, hp: &IncHyperparameters, seed: u64) -> Result<Self, ForestError> {
        if data.is_empty() {
            return Err(ForestError::EmptyDataset);
        }
        let mut f = Self::init(data.width(), hp, seed)?;
        f.update(data)?;
        Ok(f)
    }

    /// Trees are independent, so they can learn in parallel; results do not
    /// depend on this setting.
    pub fn set_execution(&mut self, exec: Execution) {
        self.execution = exec;
    }

    pub fn hyperparameters(&self) -> &IncHyperparameters {
        &self.hp
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trees(&self) -> &[HoeffdingTree] {
        &self.trees
    }

    pub fn update(&mut self, data: &Matrix) -> Result<(), ForestError> {
        if data.is_empty() {
            return Ok(());
        }
        if data.width() != self.width {
            return Err(ForestError::WidthMismatch {
                expected: self.width,
                got: data.width(),
            });
        }
        let mut offsets = Vec::with_capacity(data.n_rows() + 1);
        let mut entries: Vec<(u32, f64)> = Vec::new();
        offsets.push(0);
        for r in data.rows() {
            for (i, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    entries.push((i as u32, v));
                }
            }
            offsets.push(entries.len());
        }
        let (hp, width) = (self.hp, self.width);
        par::for_each_mut(self.execution, &mut self.trees, |tree| {
            let slots = tree.slots(width);
            for (i, w) in offsets.windows(2).enumerate() {
                tree.learn(&entries[w[0]..w[1]], &slots, data.label(i), &hp);
            }
        });
        Ok(())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.width {
            return Err(ForestError::WidthMismatch {
                expected: self.width,
                got: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict_proba(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}
