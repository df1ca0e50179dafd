use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    gini2, laplace, n_candidate_features, tree_rng, BatchHyperparameters, BinnedMatrix,
    ForestError, Matrix,
};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CartNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Bootstrap-weighted class counts.
    Leaf { pos: u32, n: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    pub nodes: Vec<CartNode>,
}

impl CartTree {
    fn leaf(&self, x: &[f64]) -> (u32, u32) {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                CartNode::Leaf { pos, n } => return (pos, n),
                CartNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    }
                }
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let (pos, n) = self.leaf(x);
        laplace(pos as f64, n as f64)
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[CartNode], i: usize) -> usize {
            match nodes[i] {
                CartNode::Leaf { .. } => 0,
                CartNode::Split { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            CartNode::Leaf { pos, n } => Some((pos, n)),
            CartNode::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    /// Off only for the plain-CART test hook.
    pub bootstrap: bool,
    pub execution: Execution,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            bootstrap: true,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchForest {
    pub(super) hp: BatchHyperparameters,
    pub(super) width: usize,
    pub(super) seed: u64,
    pub(super) trees: Vec<CartTree>,
}

impl BatchForest {
    pub fn fit(data: &Matrix, hp: &BatchHyperparameters, seed: u64) -> Result<Self, ForestError> {
        if data.is_empty() {
            return Err(ForestError::EmptyDataset);
        }
        Self::fit_binned(&BinnedMatrix::new(data), hp, seed, BatchOptions::default())
    }

    /// Trains on pre-binned data, so repeated fits (hyperparameter search)
    /// bin only once.
    pub fn fit_binned(
        data: &BinnedMatrix,
        hp: &BatchHyperparameters,
        seed: u64,
        opts: BatchOptions,
    ) -> Result<Self, ForestError> {
        hp.validate()?;
        if data.n_rows() == 0 {
            return Err(ForestError::EmptyDataset);
        }
        let trees = par::map_range(opts.execution, hp.n_trees, |t| {
            Builder::new(data, hp, tree_rng(seed, t)).run(opts.bootstrap)
        });
        Ok(BatchForest {
            hp: *hp,
            width: data.width(),
            seed,
            trees,
        })
    }

    pub fn hyperparameters(&self) -> &BatchHyperparameters {
        &self.hp
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trees(&self) -> &[CartTree] {
        &self.trees
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

struct Builder<'a> {
    data: &'a BinnedMatrix,
    hp: &'a BatchHyperparameters,
    rng: ChaCha8Rng,
    weight: Vec<u32>,
    features: Vec<u32>,
    m_try: usize,
    hist_n: Vec<u64>,
    hist_p: Vec<u64>,
    nodes: Vec<CartNode>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    bin: usize,
}

impl<'a> Builder<'a> {
    fn new(data: &'a BinnedMatrix, hp: &'a BatchHyperparameters, rng: ChaCha8Rng) -> Self {
        let w = data.width();
        Builder {
            data,
            hp,
            rng,
            weight: Vec::new(),
            features: (0..w as u32).collect(),
            m_try: n_candidate_features(hp.max_features_fraction, w),
            hist_n: vec![0; super::binning::MAX_BINS],
            hist_p: vec![0; super::binning::MAX_BINS],
            nodes: Vec::new(),
        }
    }

    fn run(mut self, bootstrap: bool) -> CartTree {
        let n = self.data.n_rows();
        if bootstrap {
            let group_of = self.data.group_of();
            self.weight = vec![0; self.data.n_groups()];
            for _ in 0..n {
                let i = self.rng.random_range(0..n);
                self.weight[group_of[i] as usize] += 1;
            }
        } else {
            self.weight = self.data.multiplicity().to_vec();
        }
        let mut rows: Vec<u32> = (0..self.data.n_groups() as u32)
            .filter(|&i| self.weight[i as usize] > 0)
            .collect();
        self.grow(&mut rows, 0);
        CartTree { nodes: self.nodes }
    }

    fn counts(&self, rows: &[u32]) -> (u64, u64) {
        let labels = self.data.labels();
        rows.iter().fold((0, 0), |(p, n), &r| {
            let w = self.weight[r as usize] as u64;
            (p + if labels[r as usize] { w } else { 0 }, n + w)
        })
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let (pos, n) = self.counts(rows);
        self.nodes.push(CartNode::Leaf {
            pos: pos as u32,
            n: n as u32,
        });
        let msl = self.hp.min_samples_leaf as u64;
        if depth >= self.hp.max_depth || pos == 0 || pos == n || n < 2 * msl {
            return id;
        }
        let Some(best) = self.best_split(rows, pos, n) else {
            return id;
        };
        let col = self.data.column(best.feature);
        let mut split = 0;
        for i in 0..rows.len() {
            if usize::from(col[rows[i] as usize]) <= best.bin {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id as usize] = CartNode::Split {
            feature: best.feature as u32,
            threshold: self.data.threshold(best.feature, best.bin),
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[u32], pos: u64, n: u64) -> Option<BestSplit> {
        let width = self.features.len();
        let parent = gini2(pos as f64, n as f64);
        let msl = self.hp.min_samples_leaf as u64;
        let labels = self.data.labels();
        let mut best: Option<BestSplit> = None;
        let mut tried = 0;
        let mut k = 0;
        while tried < self.m_try && k < width {
            let j = self.rng.random_range(k..width);
            self.features.swap(k, j);
            let f = self.features[k] as usize;
            k += 1;
            let nb = self.data.n_bins(f);
            if nb < 2 {
                continue;
            }
            let col = self.data.column(f);
            let (hn, hp) = (&mut self.hist_n[..nb], &mut self.hist_p[..nb]);
            hn.fill(0);
            hp.fill(0);
            for &r in rows {
                let b = col[r as usize] as usize;
                let w = self.weight[r as usize] as u64;
                hn[b] += w;
                if labels[r as usize] {
                    hp[b] += w;
                }
            }
            if hn.iter().filter(|&&c| c > 0).count() < 2 {
                continue;
            }
            tried += 1;
            let (mut ln, mut lp) = (0u64, 0u64);
            for b in 0..nb - 1 {
                ln += hn[b];
                lp += hp[b];
                if hn[b] == 0 {
                    continue;
                }
                let rn = n - ln;
                if ln < msl || rn < msl || rn == 0 {
                    continue;
                }
                let rp = pos - lp;
                let child = (ln as f64 * gini2(lp as f64, ln as f64)
                    + rn as f64 * gini2(rp as f64, rn as f64))
                    / n as f64;
                let gain = parent - child;
                if best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        bin: b,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auc;
    use rand::SeedableRng;

    fn toy(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let r: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            labels.push(r[0] > 0.0);
            rows.push(r);
        }
        Matrix::from_rows(&rows, labels).unwrap()
    }

    fn hp(n_trees: usize, depth: usize) -> BatchHyperparameters {
        BatchHyperparameters {
            n_trees,
            max_depth: depth,
            min_samples_leaf: 1,
            max_features_fraction: 1.0,
        }
    }

    #[test]
    fn separable_training_auc_is_one() {
        let m = toy(400, 1);
        let f = BatchForest::fit(&m, &hp(20, 3), 7).unwrap();
        let scores: Vec<f64> = m.rows().map(|r| f.predict_proba(r).unwrap()).collect();
        assert_eq!(auc(&scores, m.labels()).unwrap(), 1.0);
    }

    #[test]
    fn single_class_leaves_are_pure() {
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![true; 3]).unwrap();
        let f = BatchForest::fit(&m, &hp(5, 4), 0).unwrap();
        for t in f.trees() {
            for (pos, n) in t.leaves() {
                assert_eq!(pos, n);
            }
        }
        assert!(f.predict_proba(&[0.0]).unwrap() > 0.5);
    }

    #[test]
    fn deterministic_and_execution_independent() {
        let m = toy(300, 2);
        let h = BatchHyperparameters {
            max_features_fraction: 0.5,
            ..hp(10, 6)
        };
        let b = BinnedMatrix::new(&m);
        let seq = BatchOptions {
            bootstrap: true,
            execution: Execution::Sequential,
        };
        let a = BatchForest::fit_binned(&b, &h, 11, seq).unwrap();
        let c = BatchForest::fit_binned(&b, &h, 11, BatchOptions::default()).unwrap();
        assert_eq!(a, c);
        let d = BatchForest::fit_binned(&b, &h, 12, seq).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn plain_cart_fits_consistent_xor() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..64 {
            let (a, b) = ((i & 1) as f64, ((i >> 1) & 1) as f64);
            rows.push(vec![a, b, (i % 7) as f64]);
            labels.push((a > 0.5) ^ (b > 0.5));
        }
        let m = Matrix::from_rows(&rows, labels).unwrap();
        let b = BinnedMatrix::new(&m);
        let opts = BatchOptions {
            bootstrap: false,
            execution: Execution::Sequential,
        };
        let f = BatchForest::fit_binned(&b, &hp(1, usize::MAX), 3, opts).unwrap();
        for (i, r) in m.rows().enumerate() {
            assert_eq!(f.predict_proba(r).unwrap() > 0.5, m.label(i));
        }
    }

    #[test]
    fn depth_and_leaf_size_limits() {
        let m = toy(500, 3);
        let h = BatchHyperparameters {
            min_samples_leaf: 20,
            ..hp(3, 2)
        };
        let f = BatchForest::fit(&m, &h, 5).unwrap();
        for t in f.trees() {
            assert!(t.depth() <= 2);
            assert!(t.leaves().all(|(_, n)| n >= 20));
        }
    }

    #[test]
    fn width_mismatch_and_empty() {
        let m = toy(10, 4);
        let f = BatchForest::fit(&m, &hp(1, 2), 0).unwrap();
        assert!(f.predict_proba(&[0.0]).is_err());
        let empty = Matrix::new(4, vec![], vec![]).unwrap();
        assert_eq!(
            BatchForest::fit(&empty, &hp(1, 2), 0),
            Err(ForestError::EmptyDataset)
        );
    }
}
