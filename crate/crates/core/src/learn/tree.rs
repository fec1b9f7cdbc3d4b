//! CART regression tree with exact split search.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature within the node. The split with the largest squared-error
//! reduction wins; ties go to the lowest feature index, then the lowest
//! threshold. A row goes left when `x <= threshold`.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LearnError, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per split; `None` tries all of them.
    pub mtry: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: 6, min_leaf: 5, mtry: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub config: TreeConfig,
}

impl RegressionTree {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Index of the leaf reached by row `i` of `x`.
    pub fn leaf_index(&self, x: &Matrix, i: usize) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split { feature, threshold, left, right } => {
                    at = if x.get(i, *feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_row(&self, x: &Matrix, i: usize) -> f64 {
        match &self.nodes[self.leaf_index(x, i)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        if x.n_cols() != self.n_features {
            return Err(LearnError::SchemaMismatch { expected: self.n_features, found: x.n_cols() });
        }
        Ok((0..x.n_rows()).map(|i| self.predict_row(x, i)).collect())
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

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

pub fn fit_regression_tree(x: &Matrix, y: &[f64], config: &TreeConfig) -> Result<RegressionTree, LearnError> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let presorted = Presorted::new(x, &rows)?;
    if y.len() != x.n_rows() {
        return Err(LearnError::LengthMismatch(x.n_rows(), y.len()));
    }
    Ok(presorted.grow(x, y, config, None))
}

/// Per-feature orderings of a row sample (rows may repeat), reusable across
/// fits that share the sample but not the targets.
#[derive(Debug, Clone)]
pub(crate) struct Presorted {
    /// Sample slot -> row index.
    rows: Vec<usize>,
    /// For each feature, sample slots ascending by value (ties by slot).
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub(crate) fn new(x: &Matrix, rows: &[usize]) -> Result<Self, LearnError> {
        if rows.is_empty() {
            return Err(LearnError::EmptyInput);
        }
        let order = (0..x.n_cols())
            .map(|f| {
                let col = x.col(f);
                let mut slots: Vec<u32> = (0..rows.len() as u32).collect();
                slots.sort_by(|&a, &b| {
                    col[rows[a as usize]].total_cmp(&col[rows[b as usize]]).then(a.cmp(&b))
                });
                slots
            })
            .collect();
        Ok(Self { rows: rows.to_vec(), order })
    }

    /// Grows a tree on `y[rows[slot]]`.
    pub(crate) fn grow(
        mut self,
        x: &Matrix,
        y: &[f64],
        config: &TreeConfig,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> RegressionTree {
        let m = self.rows.len();
        let targets: Vec<f64> = self.rows.iter().map(|&r| y[r]).collect();
        let mut go_left = vec![false; m];
        let mut scratch: Vec<u32> = Vec::with_capacity(m);
        let mut nodes: Vec<Node> = Vec::new();
        let min_leaf = config.min_leaf.max(1);
        let p = x.n_cols();

        // (node index, lo, hi, depth)
        let mut stack = vec![(0usize, 0usize, m, 0usize)];
        nodes.push(Node::Leaf { value: 0.0, n: 0 });
        while let Some((id, lo, hi, depth)) = stack.pop() {
            let n = hi - lo;
            let (sum, sum_sq) = match self.order.first() {
                Some(o) => o[lo..hi].iter().fold((0.0, 0.0), |(s, q), &slot| {
                    let t = targets[slot as usize];
                    (s + t, q + t * t)
                }),
                None => (lo..hi).fold((0.0, 0.0), |(s, q), slot| {
                    let t = targets[slot];
                    (s + t, q + t * t)
                }),
            };
            let mean = sum / n as f64;
            let leaf = Node::Leaf { value: mean, n };

            if depth >= config.max_depth || n < 2 * min_leaf || p == 0 {
                nodes[id] = leaf;
                continue;
            }

            let features: Vec<usize> = match (config.mtry, rng.as_deref_mut()) {
                (Some(k), Some(r)) if k < p => {
                    let mut f = sample(r, p, k.max(1)).into_vec();
                    f.sort_unstable();
                    f
                }
                _ => (0..p).collect(),
            };

            let base = sum * sum / n as f64;
            let min_gain = 1e-12 * sum_sq.max(f64::MIN_POSITIVE);
            let mut best: Option<(f64, usize, f64, usize)> = None; // gain, feature, threshold, left count
            for &f in &features {
                let col = x.col(f);
                let seg = &self.order[f][lo..hi];
                let mut left_sum = 0.0;
                for k in 0..n - 1 {
                    let slot = seg[k] as usize;
                    left_sum += targets[slot];
                    let n_left = k + 1;
                    if n_left < min_leaf {
                        continue;
                    }
                    if n - n_left < min_leaf {
                        break;
                    }
                    let v = col[self.rows[slot]];
                    let next = col[self.rows[seg[k + 1] as usize]];
                    if v == next {
                        continue;
                    }
                    let right_sum = sum - left_sum;
                    let gain = left_sum * left_sum / n_left as f64
                        + right_sum * right_sum / (n - n_left) as f64
                        - base;
                    let better = match best {
                        None => gain > min_gain,
                        Some((g, ..)) => gain > g + 1e-12 * g.abs().max(1.0),
                    };
                    if better {
                        let mut threshold = v + (next - v) / 2.0;
                        if threshold >= next {
                            threshold = v;
                        }
                        best = Some((gain, f, threshold, n_left));
                    }
                }
            }

            let Some((_, feature, threshold, n_left)) = best else {
                nodes[id] = leaf;
                continue;
            };

            // Partition every feature's segment, stably, into left then right.
            let col = x.col(feature);
            for &slot in &self.order[feature][lo..hi] {
                go_left[slot as usize] = col[self.rows[slot as usize]] <= threshold;
            }
            for f in 0..p {
                let seg = &mut self.order[f][lo..hi];
                scratch.clear();
                scratch.extend(seg.iter().filter(|&&s| go_left[s as usize]));
                scratch.extend(seg.iter().filter(|&&s| !go_left[s as usize]));
                seg.copy_from_slice(&scratch);
            }

            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { value: 0.0, n: 0 });
            nodes.push(Node::Leaf { value: 0.0, n: 0 });
            nodes[id] = Node::Split { feature, threshold, left, right };
            // Right is pushed first so the left subtree is grown first.
            stack.push((right, lo + n_left, hi, depth + 1));
            stack.push((left, lo, lo + n_left, depth + 1));
        }

        RegressionTree { nodes, n_features: p, config: *config }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn matrix(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let x = matrix(&[vec![1.0], vec![2.0], vec![3.0]]);
        let t = fit_regression_tree(&x, &[4.0, 4.0, 4.0], &TreeConfig { max_depth: 5, min_leaf: 1, mtry: None }).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 4.0, n: 3 }]);
    }

    #[test]
    fn step_function_split_at_midpoint() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0 + 0.05]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] < 0.5 { 1.0 } else { 3.0 }).collect();
        let x = matrix(&rows);
        let t = fit_regression_tree(&x, &y, &TreeConfig { max_depth: 1, min_leaf: 1, mtry: None }).unwrap();
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            n => panic!("{n:?}"),
        }
        let pred = t.predict(&x).unwrap();
        let mse: f64 = pred.iter().zip(&y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / 10.0;
        assert_eq!(mse, 0.0);
    }

    #[test]
    fn min_leaf_equal_to_n_gives_mean_leaf() {
        let x = matrix(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let y = [1.0, 2.0, 3.0, 10.0];
        let t = fit_regression_tree(&x, &y, &TreeConfig { max_depth: 5, min_leaf: 4, mtry: None }).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 4.0, n: 4 }]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let x = Matrix::empty(0);
        assert_eq!(fit_regression_tree(&x, &[], &TreeConfig::default()), Err(LearnError::EmptyInput));
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Two identical columns: the split must use feature 0.
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let t = fit_regression_tree(&matrix(&rows), &y, &TreeConfig { max_depth: 1, min_leaf: 1, mtry: None }).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn leaves_hold_means_of_their_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.gen_range(0..20) as f64).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 2.0 + r[2] + rng.gen_range(0.0..3.0)).collect();
        let x = matrix(&rows);
        let t = fit_regression_tree(&x, &y, &TreeConfig { max_depth: 6, min_leaf: 3, mtry: None }).unwrap();
        assert!(t.depth() <= 6);
        let mut sums = vec![(0.0, 0usize); t.nodes.len()];
        for i in 0..300 {
            let leaf = t.leaf_index(&x, i);
            sums[leaf].0 += y[i];
            sums[leaf].1 += 1;
        }
        for (id, node) in t.nodes.iter().enumerate() {
            if let Node::Leaf { value, n } = node {
                assert_eq!(*n, sums[id].1);
                assert!(*n >= 3);
                assert!((value - sums[id].0 / *n as f64).abs() < 1e-9);
            }
        }
    }

    fn sse(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|y| (y - m).powi(2)).sum()
    }

    /// Lowest SSE over every single split that leaves `min_leaf` rows per side.
    fn best_stump_sse(x: &Matrix, y: &[f64], min_leaf: usize) -> f64 {
        let mut best = sse(y);
        for j in 0..x.n_cols() {
            let mut values: Vec<f64> = x.col(j).to_vec();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let thr = (w[0] + w[1]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| x.get(i, j) <= thr);
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let side = |rows: &[usize]| sse(&rows.iter().map(|&i| y[i]).collect::<Vec<_>>());
                best = best.min(side(&l) + side(&r));
            }
        }
        best
    }

    proptest::proptest! {
        #[test]
        fn root_split_matches_exhaustive_search(
            rows in proptest::collection::vec(proptest::collection::vec(0u8..5, 3), 2..=10),
            ys in proptest::collection::vec(-10.0f64..10.0, 10),
            min_leaf in 1usize..4,
        ) {
            let x = matrix(&rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect::<Vec<_>>());
            let y = &ys[..rows.len()];
            let t = fit_regression_tree(&x, y, &TreeConfig { max_depth: 1, min_leaf, mtry: None }).unwrap();
            let got: f64 = t.predict(&x).unwrap().iter().zip(y).map(|(p, y)| (p - y).powi(2)).sum();
            let want = best_stump_sse(&x, y, min_leaf);
            proptest::prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want), "{} vs {}", got, want);
        }
    }
}
