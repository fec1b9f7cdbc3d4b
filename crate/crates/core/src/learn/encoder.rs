use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::par::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeMode {
    /// Out-of-fold values for the rows the encoder was fitted on, by ordinal.
    Train,
    /// Full-training-data statistics for new rows.
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
struct Stat {
    sum: f64,
    count: u64,
}

/// Fold-based smoothed target encoder.
///
/// A category `c` is encoded as `(sum_y + a * prior) / (n + a)`. In training
/// mode row `i` only sees the rows outside its own fold, including for the
/// prior, so no row's encoding depends on its own target. In inference mode
/// the statistics and the prior come from the full training data, and a
/// category never seen in training falls back to the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEncoder {
    pub prior_weight: f64,
    pub folds: usize,
    pub seed: u64,
    pub global_mean: f64,
    full: BTreeMap<i64, Stat>,
    #[serde(skip)]
    train: Option<TrainState>,
}

#[derive(Debug, Clone, PartialEq)]
struct TrainState {
    fold_of_row: Vec<usize>,
    fold_stats: Vec<BTreeMap<i64, Stat>>,
    fold_totals: Vec<Stat>,
}

/// Fold of a training row; a pure function of `(seed, ordinal)`.
pub fn fold_of(seed: u64, ordinal: usize, folds: usize) -> usize {
    (mix_seed(seed, ordinal as u64) % folds as u64) as usize
}

impl TargetEncoder {
    pub fn fit(
        categories: &[i64],
        targets: &[f64],
        prior_weight: f64,
        folds: usize,
        seed: u64,
    ) -> Result<Self, LearnError> {
        Self::fit_with_folds(categories, targets, prior_weight, folds, seed, |i| fold_of(seed, i, folds))
    }

    /// Like [`TargetEncoder::fit`] with an explicit fold assignment.
    pub fn fit_with_folds(
        categories: &[i64],
        targets: &[f64],
        prior_weight: f64,
        folds: usize,
        seed: u64,
        assign: impl Fn(usize) -> usize,
    ) -> Result<Self, LearnError> {
        if categories.len() != targets.len() {
            return Err(LearnError::LengthMismatch(categories.len(), targets.len()));
        }
        if folds < 2 {
            return Err(LearnError::ConfigInvalid(format!("folds must be >= 2, got {folds}")));
        }
        if !(prior_weight >= 0.0) {
            return Err(LearnError::ConfigInvalid(format!("prior weight must be >= 0, got {prior_weight}")));
        }
        if categories.is_empty() {
            return Err(LearnError::EmptyInput);
        }
        let mut full: BTreeMap<i64, Stat> = BTreeMap::new();
        let mut fold_stats = vec![BTreeMap::<i64, Stat>::new(); folds];
        let mut fold_totals = vec![Stat::default(); folds];
        let mut fold_of_row = Vec::with_capacity(categories.len());
        let mut total = Stat::default();
        for (i, (&c, &y)) in categories.iter().zip(targets).enumerate() {
            let f = assign(i);
            if f >= folds {
                return Err(LearnError::ConfigInvalid(format!("fold {f} out of range")));
            }
            fold_of_row.push(f);
            for s in [full.entry(c).or_default(), fold_stats[f].entry(c).or_default()] {
                s.sum += y;
                s.count += 1;
            }
            fold_totals[f].sum += y;
            fold_totals[f].count += 1;
            total.sum += y;
            total.count += 1;
        }
        Ok(Self {
            prior_weight,
            folds,
            seed,
            global_mean: total.sum / total.count as f64,
            full,
            train: Some(TrainState { fold_of_row, fold_stats, fold_totals }),
        })
    }

    fn smooth(&self, stat: Stat, prior: f64) -> f64 {
        let denom = stat.count as f64 + self.prior_weight;
        if denom == 0.0 {
            prior
        } else {
            (stat.sum + self.prior_weight * prior) / denom
        }
    }

    pub fn encode_one(&self, category: i64) -> f64 {
        self.smooth(self.full.get(&category).copied().unwrap_or_default(), self.global_mean)
    }

    pub fn apply(&self, categories: &[i64], mode: EncodeMode) -> Result<Vec<f64>, LearnError> {
        match mode {
            EncodeMode::Infer => Ok(categories.iter().map(|&c| self.encode_one(c)).collect()),
            EncodeMode::Train => {
                let state = self.train.as_ref().ok_or_else(|| {
                    LearnError::ConfigInvalid("training-mode encoding needs the fitting state".into())
                })?;
                if categories.len() != state.fold_of_row.len() {
                    return Err(LearnError::LengthMismatch(state.fold_of_row.len(), categories.len()));
                }
                let grand = Stat {
                    sum: state.fold_totals.iter().map(|s| s.sum).sum(),
                    count: state.fold_totals.iter().map(|s| s.count).sum(),
                };
                Ok(categories
                    .iter()
                    .zip(&state.fold_of_row)
                    .map(|(&c, &f)| {
                        let out_total = Stat {
                            sum: grand.sum - state.fold_totals[f].sum,
                            count: grand.count - state.fold_totals[f].count,
                        };
                        let prior = if out_total.count > 0 {
                            out_total.sum / out_total.count as f64
                        } else {
                            self.global_mean
                        };
                        let all = self.full.get(&c).copied().unwrap_or_default();
                        let inside = state.fold_stats[f].get(&c).copied().unwrap_or_default();
                        let outside = Stat { sum: all.sum - inside.sum, count: all.count - inside.count };
                        self.smooth(outside, prior)
                    })
                    .collect())
            }
        }
    }

    pub fn n_categories(&self) -> usize {
        self.full.len()
    }

    /// `(category, sum, count)` rows of the full-data statistics.
    pub fn stats(&self) -> impl Iterator<Item = (i64, f64, u64)> + '_ {
        self.full.iter().map(|(c, s)| (*c, s.sum, s.count))
    }

    /// Rebuilds an inference-only encoder from stored statistics.
    pub fn from_stats(
        prior_weight: f64,
        folds: usize,
        seed: u64,
        global_mean: f64,
        stats: impl IntoIterator<Item = (i64, f64, u64)>,
    ) -> Self {
        Self {
            prior_weight,
            folds,
            seed,
            global_mean,
            full: stats.into_iter().map(|(c, sum, count)| (c, Stat { sum, count })).collect(),
            train: None,
        }
    }

    /// Drops the per-fold state; the encoder keeps working in inference mode.
    pub fn into_inference(mut self) -> Self {
        self.train = None;
        self
    }
}
