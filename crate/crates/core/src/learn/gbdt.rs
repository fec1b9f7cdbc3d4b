//! Squared-loss gradient boosting with target-encoded categorical columns.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::Presorted;
use super::{EncodeMode, LearnError, Matrix, RegressionTree, TargetEncoder, TreeConfig};
use crate::par::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of rows drawn without replacement each round.
    pub subsample: f64,
    pub seed: u64,
    /// Smoothing weight of the target encoder.
    pub prior_weight: f64,
    pub encoder_folds: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 6,
            min_leaf: 5,
            subsample: 1.0,
            seed: 0,
            prior_weight: 10.0,
            encoder_folds: 5,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(LearnError::ConfigInvalid(format!("learning rate must be in (0, 1], got {}", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(LearnError::ConfigInvalid(format!("subsample must be in (0, 1], got {}", self.subsample)));
        }
        if self.encoder_folds < 2 {
            return Err(LearnError::ConfigInvalid("encoder folds must be >= 2".into()));
        }
        if !(self.prior_weight >= 0.0) {
            return Err(LearnError::ConfigInvalid("prior weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub base: f64,
    pub trees: Vec<RegressionTree>,
    pub config: GbdtConfig,
    pub n_features: usize,
    /// Column indices treated as categorical, ascending.
    pub categorical: Vec<usize>,
    /// One inference-mode encoder per categorical column.
    pub encoders: Vec<TargetEncoder>,
    /// Training MSE after each round, starting with the base prediction.
    pub train_mse: Vec<f64>,
}

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Replaces categorical columns by their inference-mode encodings.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix, LearnError> {
        if x.n_cols() != self.n_features {
            return Err(LearnError::SchemaMismatch { expected: self.n_features, found: x.n_cols() });
        }
        let mut out = x.clone();
        for (&j, enc) in self.categorical.iter().zip(&self.encoders) {
            let cats: Vec<i64> = x.col(j).iter().map(|&v| v as i64).collect();
            *out.col_mut(j) = enc.apply(&cats, EncodeMode::Infer)?;
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        let z = self.encode(x)?;
        let eta = self.config.learning_rate;
        Ok((0..z.n_rows())
            .map(|i| self.base + eta * self.trees.iter().map(|t| t.predict_row(&z, i)).sum::<f64>())
            .collect())
    }
}

pub fn fit_gbdt(x: &Matrix, categorical: &[usize], y: &[f64], config: &GbdtConfig) -> Result<GbdtModel, LearnError> {
    config.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(LearnError::EmptyInput);
    }
    if y.len() != n {
        return Err(LearnError::LengthMismatch(n, y.len()));
    }
    let mut categorical = categorical.to_vec();
    categorical.sort_unstable();
    categorical.dedup();
    if let Some(&j) = categorical.iter().find(|&&j| j >= x.n_cols()) {
        return Err(LearnError::ConfigInvalid(format!("categorical column {j} out of range")));
    }

    let mut z = x.clone();
    let mut encoders = Vec::with_capacity(categorical.len());
    for (k, &j) in categorical.iter().enumerate() {
        let cats: Vec<i64> = x.col(j).iter().map(|&v| v as i64).collect();
        let enc = TargetEncoder::fit(&cats, y, config.prior_weight, config.encoder_folds, mix_seed(config.seed, k as u64))?;
        *z.col_mut(j) = enc.apply(&cats, EncodeMode::Train)?;
        encoders.push(enc.into_inference());
    }

    let base = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let mse = |f: &[f64]| f.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    let mut train_mse = vec![mse(&fitted)];
    let tree_config = TreeConfig { max_depth: config.max_depth, min_leaf: config.min_leaf, mtry: None };
    let all_rows: Vec<usize> = (0..n).collect();
    let full_sort = if config.subsample < 1.0 { None } else { Some(Presorted::new(&z, &all_rows)?) };
    let m = ((n as f64 * config.subsample).floor() as usize).max(1);

    let mut trees = Vec::with_capacity(config.n_rounds);
    let mut residual = vec![0.0; n];
    for round in 0..config.n_rounds {
        for i in 0..n {
            residual[i] = y[i] - fitted[i];
        }
        let presorted = match &full_sort {
            Some(p) => p.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, round as u64));
                let mut rows = sample(&mut rng, n, m).into_vec();
                rows.sort_unstable();
                Presorted::new(&z, &rows)?
            }
        };
        let tree = presorted.grow(&z, &residual, &tree_config, None);
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += config.learning_rate * tree.predict_row(&z, i);
        }
        train_mse.push(mse(&fitted));
        trees.push(tree);
    }

    Ok(GbdtModel { base, trees, config: *config, n_features: x.n_cols(), categorical, encoders, train_mse })
}
