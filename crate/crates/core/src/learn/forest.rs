use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::Presorted;
use super::{LearnError, Matrix, RegressionTree, TreeConfig};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; defaults to `max(1, p / 3)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 8, min_leaf: 5, mtry: None, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub config: ForestConfig,
    pub n_features: usize,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        if x.n_cols() != self.n_features {
            return Err(LearnError::SchemaMismatch { expected: self.n_features, found: x.n_cols() });
        }
        let mut out = vec![0.0; x.n_rows()];
        for t in &self.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += t.predict_row(x, i);
            }
        }
        let k = self.trees.len().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= k);
        Ok(out)
    }
}

pub fn fit_random_forest(x: &Matrix, y: &[f64], config: &ForestConfig) -> Result<ForestModel, LearnError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(LearnError::EmptyInput);
    }
    if y.len() != n {
        return Err(LearnError::LengthMismatch(n, y.len()));
    }
    if config.n_trees == 0 {
        return Err(LearnError::ConfigInvalid("n_trees must be >= 1".into()));
    }
    let p = x.n_cols();
    let mtry = config.mtry.unwrap_or((p / 3).max(1)).clamp(1, p.max(1));
    let tree_config = TreeConfig { max_depth: config.max_depth, min_leaf: config.min_leaf, mtry: Some(mtry) };

    let trees = par::map_range(config.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(par::mix_seed(config.seed, t as u64));
        let rows: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let presorted = Presorted::new(x, &rows).expect("non-empty sample");
        presorted.grow(x, y, &tree_config, Some(&mut rng))
    });
    Ok(ForestModel { trees, config: *config, n_features: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::fit_regression_tree;

    fn data(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let y = rows
            .iter()
            .map(|r| (r[0] * 0.8).sin() * 4.0 + r[1] + if r[2] > 5.0 { 3.0 } else { 0.0 } + rng.gen_range(-6.0..6.0))
            .collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    fn mae(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn degenerate_forest_equals_tree() {
        let (x, y) = data(200, 1);
        let cfg = ForestConfig { n_trees: 1, max_depth: 5, min_leaf: 3, mtry: Some(5), bootstrap: false, seed: 9 };
        let f = fit_random_forest(&x, &y, &cfg).unwrap();
        let t = fit_regression_tree(&x, &y, &TreeConfig { max_depth: 5, min_leaf: 3, mtry: None }).unwrap();
        assert_eq!(f.predict(&x).unwrap(), t.predict(&x).unwrap());
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = data(150, 2);
        let cfg = ForestConfig { n_trees: 20, seed: 4, ..ForestConfig::default() };
        let a = fit_random_forest(&x, &y, &cfg).unwrap();
        let b = fit_random_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trees.len(), 20);
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let (x, y) = data(150, 3);
        let f = fit_random_forest(&x, &y, &ForestConfig { n_trees: 7, ..ForestConfig::default() }).unwrap();
        let pred = f.predict(&x).unwrap();
        for i in 0..x.n_rows() {
            let mean = f.trees.iter().map(|t| t.predict_row(&x, i)).sum::<f64>() / 7.0;
            assert!((pred[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_beats_single_tree_on_validation() {
        let (x, y) = data(1500, 4);
        let (xv, yv) = data(500, 5);
        let f = fit_random_forest(&x, &y, &ForestConfig { n_trees: 200, max_depth: 8, min_leaf: 5, mtry: None, bootstrap: true, seed: 1 })
            .unwrap();
        let t = fit_regression_tree(&x, &y, &TreeConfig { max_depth: 8, min_leaf: 5, mtry: None }).unwrap();
        let (fm, tm) = (mae(&f.predict(&xv).unwrap(), &yv), mae(&t.predict(&xv).unwrap(), &yv));
        assert!(fm <= tm, "{fm} {tm}");
    }

    #[test]
    fn errors() {
        assert_eq!(fit_random_forest(&Matrix::empty(0), &[], &ForestConfig::default()), Err(LearnError::EmptyInput));
        let (x, y) = data(10, 6);
        assert!(matches!(
            fit_random_forest(&x, &y, &ForestConfig { n_trees: 0, ..ForestConfig::default() }),
            Err(LearnError::ConfigInvalid(_))
        ));
        let f = fit_random_forest(&x, &y, &ForestConfig { n_trees: 2, ..ForestConfig::default() }).unwrap();
        assert_eq!(f.predict(&Matrix::empty(3)), Err(LearnError::SchemaMismatch { expected: 5, found: 0 }));
    }
}
