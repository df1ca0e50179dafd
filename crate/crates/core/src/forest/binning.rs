use std::collections::HashMap;

use super::Matrix;

/// Most distinct bins a feature may use; codes fit in a `u8`.
pub const MAX_BINS: usize = 256;

/// Column-major, per-feature bin codes for split search.
///
/// Identical rows with identical labels are stored once with a multiplicity;
/// trees see them through integer weights, so results match the expanded data.
///
/// A feature with at most [`MAX_BINS`] distinct values gets one bin per value,
/// so split search over it is exact. Features with more values get
/// quantile cut points. A row falls in bin `b` of feature `f` iff
/// `cuts[f][b-1] < x <= cuts[f][b]`; cuts sit halfway between neighbouring
/// observed values.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    group_of: Vec<u32>,
    multiplicity: Vec<u32>,
    codes: Vec<Vec<u8>>,
    cuts: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

/// `values` holds (value, count) pairs in any order.
fn cut_points(values: &mut [(f64, u32)]) -> Vec<f64> {
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &(v, c) in values.iter() {
        match distinct.last_mut() {
            Some((last, count)) if *last == v => *count += c as usize,
            _ => distinct.push((v, c as usize)),
        }
    }
    let mid = |a: f64, b: f64| a + (b - a) / 2.0;
    if distinct.len() <= MAX_BINS {
        return distinct.windows(2).map(|w| mid(w[0].0, w[1].0)).collect();
    }
    let n: usize = distinct.iter().map(|d| d.1).sum();
    let mut cuts = Vec::with_capacity(MAX_BINS - 1);
    let mut cumulative = 0usize;
    let mut next_target = 1usize;
    for w in distinct.windows(2) {
        cumulative += w[0].1;
        if cumulative * MAX_BINS >= next_target * n {
            cuts.push(mid(w[0].0, w[1].0));
            while next_target * n <= cumulative * MAX_BINS {
                next_target += 1;
            }
            if cuts.len() == MAX_BINS - 1 {
                break;
            }
        }
    }
    cuts
}

impl BinnedMatrix {
    pub fn new(data: &Matrix) -> Self {
        let n = data.n_rows();
        let mut index: HashMap<(bool, Vec<u64>), u32> = HashMap::new();
        let mut group_of = Vec::with_capacity(n);
        let mut representative = Vec::new();
        let mut multiplicity: Vec<u32> = Vec::new();
        for i in 0..n {
            let key = (
                data.label(i),
                data.row(i).iter().map(|v| v.to_bits()).collect(),
            );
            let next = representative.len() as u32;
            let g = *index.entry(key).or_insert(next);
            if g == next {
                representative.push(i);
                multiplicity.push(0);
            }
            multiplicity[g as usize] += 1;
            group_of.push(g);
        }
        let columns: Vec<usize> = (0..data.width()).collect();
        let per_feature = crate::par::map(&columns, |&f| {
            let mut col: Vec<(f64, u32)> = representative
                .iter()
                .zip(&multiplicity)
                .map(|(&r, &m)| (data.row(r)[f], m))
                .collect();
            let cuts = cut_points(&mut col);
            let codes = representative
                .iter()
                .map(|&r| bin_of(&cuts, data.row(r)[f]) as u8)
                .collect();
            (codes, cuts)
        });
        let (codes, cuts) = per_feature.into_iter().unzip();
        BinnedMatrix {
            n_rows: n,
            group_of,
            multiplicity,
            codes,
            cuts,
            labels: representative.iter().map(|&r| data.label(r)).collect(),
        }
    }

    /// Rows before de-duplication.
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Distinct (row, label) pairs.
    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }

    /// Group of each original row.
    pub fn group_of(&self) -> &[u32] {
        &self.group_of
    }

    pub fn multiplicity(&self) -> &[u32] {
        &self.multiplicity
    }

    pub fn width(&self) -> usize {
        self.codes.len()
    }

    /// Label per group.
    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Bin codes per group.
    #[inline]
    pub fn column(&self, feature: usize) -> &[u8] {
        &self.codes[feature]
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    /// Raw-value threshold equivalent to "bin <= b".
    pub fn threshold(&self, feature: usize, bin: usize) -> f64 {
        self.cuts[feature][bin]
    }
}

#[inline]
fn bin_of(cuts: &[f64], x: f64) -> usize {
    cuts.partition_point(|&c| c < x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_bins_for_few_values() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![0.0], vec![5.0]], vec![true; 4])
            .unwrap();
        let b = BinnedMatrix::new(&m);
        assert_eq!(b.n_bins(0), 3);
        assert_eq!(b.n_groups(), 3);
        assert_eq!(b.group_of(), [0, 1, 0, 2]);
        assert_eq!(b.multiplicity(), [2, 1, 1]);
        assert_eq!(b.column(0), [0, 1, 2]);
        assert_eq!(b.threshold(0, 0), 0.5);
        assert_eq!(b.threshold(0, 1), 3.0);
    }

    #[test]
    fn thresholds_agree_with_codes() {
        let rows: Vec<Vec<f64>> = (0..5000)
            .map(|i| vec![((i * 7919) % 1000) as f64 * 0.37])
            .collect();
        let m = Matrix::from_rows(&rows, vec![false; rows.len()]).unwrap();
        let b = BinnedMatrix::new(&m);
        assert!(b.n_bins(0) <= MAX_BINS);
        assert!(b.n_bins(0) > 200);
        for bin in 0..b.n_bins(0) - 1 {
            let t = b.threshold(0, bin);
            for (i, r) in rows.iter().enumerate() {
                let g = b.group_of()[i] as usize;
                assert_eq!(usize::from(b.column(0)[g]) <= bin, r[0] <= t);
            }
        }
    }
}
