use serde::{Deserialize, Serialize};

use super::{
    fit_gbdt, fit_random_forest, fit_regression_tree, ForestConfig, GbdtConfig, LearnError, Matrix, Model, TreeConfig,
};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tree,
    Forest,
    Gbdt,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Tree, Family::Forest, Family::Gbdt];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tree => "tree",
            Family::Forest => "forest",
            Family::Gbdt => "gbdt",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tree" | "cart" => Ok(Family::Tree),
            "forest" | "rf" | "random_forest" => Ok(Family::Forest),
            "gbdt" | "boosting" => Ok(Family::Gbdt),
            other => Err(format!("unknown model family {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Rmse,
}

impl Metric {
    pub fn score(self, truth: &[f64], pred: &[f64]) -> f64 {
        let n = truth.len().max(1) as f64;
        match self {
            Metric::Mae => truth.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
            Metric::Rmse => (truth.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(Metric::Mae),
            "rmse" => Ok(Metric::Rmse),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// Configuration of one model of any family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    Tree(TreeConfig),
    Forest(ForestConfig),
    Gbdt(GbdtConfig),
}

impl ModelConfig {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Tree => ModelConfig::Tree(TreeConfig::default()),
            Family::Forest => ModelConfig::Forest(ForestConfig::default()),
            Family::Gbdt => ModelConfig::Gbdt(GbdtConfig::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelConfig::Tree(_) => Family::Tree,
            ModelConfig::Forest(_) => Family::Forest,
            ModelConfig::Gbdt(_) => Family::Gbdt,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelConfig::Tree(_) => {}
            ModelConfig::Forest(c) => c.seed = seed,
            ModelConfig::Gbdt(c) => c.seed = seed,
        }
        self
    }

    /// Sets one named hyperparameter.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), LearnError> {
        let count = || -> Result<usize, LearnError> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(LearnError::ConfigInvalid(format!("{name} must be a non-negative integer, got {value}")))
            }
        };
        let family = self.family().as_str();
        let unknown = || LearnError::ConfigInvalid(format!("{name} does not apply to {family}"));
        match (&mut *self, name) {
            (ModelConfig::Tree(c), "max_depth") => c.max_depth = count()?,
            (ModelConfig::Tree(c), "min_leaf") => c.min_leaf = count()?,
            (ModelConfig::Forest(c), "n_trees") => c.n_trees = count()?,
            (ModelConfig::Forest(c), "max_depth") => c.max_depth = count()?,
            (ModelConfig::Forest(c), "min_leaf") => c.min_leaf = count()?,
            (ModelConfig::Forest(c), "mtry") => c.mtry = Some(count()?),
            (ModelConfig::Gbdt(c), "n_rounds") => c.n_rounds = count()?,
            (ModelConfig::Gbdt(c), "max_depth") => c.max_depth = count()?,
            (ModelConfig::Gbdt(c), "min_leaf") => c.min_leaf = count()?,
            (ModelConfig::Gbdt(c), "learning_rate") => c.learning_rate = value,
            (ModelConfig::Gbdt(c), "subsample") => c.subsample = value,
            (ModelConfig::Gbdt(c), "prior_weight") => c.prior_weight = value,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Ensemble size used for tie-breaking; zero for a single tree.
    fn size(&self) -> usize {
        match self {
            ModelConfig::Tree(_) => 0,
            ModelConfig::Forest(c) => c.n_trees,
            ModelConfig::Gbdt(c) => c.n_rounds,
        }
    }

    fn depth(&self) -> usize {
        match self {
            ModelConfig::Tree(c) => c.max_depth,
            ModelConfig::Forest(c) => c.max_depth,
            ModelConfig::Gbdt(c) => c.max_depth,
        }
    }

    /// Fits the model; `categorical` is only used by boosting.
    pub fn fit(&self, x: &Matrix, categorical: &[usize], y: &[f64]) -> Result<Model, LearnError> {
        match self {
            ModelConfig::Tree(c) => fit_regression_tree(x, y, c).map(Model::Tree),
            ModelConfig::Forest(c) => fit_random_forest(x, y, c).map(Model::Forest),
            ModelConfig::Gbdt(c) => fit_gbdt(x, categorical, y, c).map(Model::Gbdt),
        }
    }
}

/// Named parameter lists; the first parameter varies slowest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperGrid {
    pub params: Vec<(String, Vec<f64>)>,
}

impl HyperGrid {
    pub fn new(params: Vec<(String, Vec<f64>)>) -> Self {
        Self { params }
    }

    pub fn default_for(family: Family) -> Self {
        let p = |name: &str, v: &[f64]| (name.to_string(), v.to_vec());
        let params = match family {
            Family::Tree => vec![p("max_depth", &[4.0, 6.0, 8.0]), p("min_leaf", &[5.0, 20.0])],
            Family::Forest => vec![
                p("n_trees", &[100.0, 300.0]),
                p("max_depth", &[4.0, 6.0, 8.0]),
                p("min_leaf", &[5.0, 20.0]),
            ],
            Family::Gbdt => vec![
                p("n_rounds", &[100.0, 300.0]),
                p("max_depth", &[4.0, 6.0, 8.0]),
                p("min_leaf", &[5.0, 20.0]),
                p("learning_rate", &[0.05, 0.1]),
            ],
        };
        Self { params }
    }

    pub fn cardinality(&self) -> usize {
        self.params.iter().map(|(_, v)| v.len()).product()
    }

    pub fn combinations(&self) -> Vec<Vec<(String, f64)>> {
        let mut out: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for (name, values) in &self.params {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push((name.clone(), v));
                        c
                    })
                })
                .collect();
        }
        if self.cardinality() == 0 {
            out.clear();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardRow {
    pub index: usize,
    pub params: Vec<(String, f64)>,
    pub config: Option<ModelConfig>,
    pub train_score: Option<f64>,
    pub val_score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_index: usize,
    pub best_config: ModelConfig,
    pub best_model: Model,
    pub leaderboard: Vec<LeaderboardRow>,
}

/// Fits every grid combination on `train`, scores on `val`.
///
/// Failed combinations stay on the leaderboard with their error; the search
/// only fails when the grid is empty or every combination failed.
pub fn grid_search(
    base: ModelConfig,
    grid: &HyperGrid,
    categorical: &[usize],
    train: (&Matrix, &[f64]),
    val: (&Matrix, &[f64]),
    metric: Metric,
) -> Result<GridOutcome, LearnError> {
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(LearnError::ConfigInvalid("hyperparameter grid is empty".into()));
    }
    let results = par::map(&combos, |params| {
        let mut cfg = base;
        for (name, v) in params {
            if let Err(e) = cfg.set(name, *v) {
                return (None, Err(e));
            }
        }
        let fitted = cfg.fit(train.0, categorical, train.1).and_then(|m| {
            let tr = m.predict(train.0)?;
            let va = m.predict(val.0)?;
            Ok((m, metric.score(train.1, &tr), metric.score(val.1, &va)))
        });
        (Some(cfg), fitted)
    });

    let mut leaderboard = Vec::with_capacity(combos.len());
    let mut best: Option<(usize, ModelConfig, Model, f64)> = None;
    for (index, (params, (cfg, res))) in combos.into_iter().zip(results).enumerate() {
        let mut row = LeaderboardRow { index, params, config: cfg, train_score: None, val_score: None, error: None };
        match res {
            Err(e) => row.error = Some(e.to_string()),
            Ok((model, tr, va)) => {
                row.train_score = Some(tr);
                row.val_score = Some(va);
                let cfg = cfg.expect("fitted combination has a config");
                let better = match &best {
                    None => va.is_finite(),
                    Some((_, bc, _, bs)) => {
                        if va < *bs {
                            true
                        } else if va == *bs {
                            (cfg.size(), cfg.depth()) < (bc.size(), bc.depth())
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best = Some((index, cfg, model, va));
                }
            }
        }
        leaderboard.push(row);
    }
    let (best_index, best_config, best_model, _) = best.ok_or_else(|| {
        let first = leaderboard.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        LearnError::ConfigInvalid(format!("every grid combination failed; first error: {first}"))
    })?;
    Ok(GridOutcome { best_index, best_config, best_model, leaderboard })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]).collect();
        let y = rows.iter().map(|r| 3.0 * r[0] + rng.gen_range(-1.0..1.0)).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn enumeration_order_first_param_slowest() {
        let g = HyperGrid::new(vec![("a".into(), vec![1.0, 2.0]), ("b".into(), vec![10.0, 20.0, 30.0])]);
        let c = g.combinations();
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], vec![("a".to_string(), 1.0), ("b".to_string(), 10.0)]);
        assert_eq!(c[1], vec![("a".to_string(), 1.0), ("b".to_string(), 20.0)]);
        assert_eq!(c[3], vec![("a".to_string(), 2.0), ("b".to_string(), 10.0)]);
        assert_eq!(HyperGrid::default_for(Family::Gbdt).cardinality(), 24);
    }

    #[test]
    fn single_point_grid_wins() {
        let (x, y) = data(100, 1);
        let (xv, yv) = data(50, 2);
        let g = HyperGrid::new(vec![("max_depth".into(), vec![3.0])]);
        let out = grid_search(ModelConfig::default_for(Family::Tree), &g, &[], (&x, &y), (&xv, &yv), Metric::Mae).unwrap();
        assert_eq!(out.best_index, 0);
        assert_eq!(out.leaderboard.len(), 1);
        assert!(matches!(out.best_config, ModelConfig::Tree(TreeConfig { max_depth: 3, .. })));
    }

    #[test]
    fn degenerate_config_loses() {
        let (x, y) = data(200, 3);
        let (xv, yv) = data(100, 4);
        let g = HyperGrid::new(vec![("min_leaf".into(), vec![200.0, 5.0])]);
        let out = grid_search(ModelConfig::default_for(Family::Tree), &g, &[], (&x, &y), (&xv, &yv), Metric::Rmse).unwrap();
        assert_eq!(out.best_index, 1);
        assert_eq!(out.leaderboard.len(), g.cardinality());
    }

    #[test]
    fn ties_prefer_smaller_ensembles_then_shallower() {
        // A constant target makes every combination score zero.
        let (x, _) = data(60, 5);
        let y = vec![2.0; 60];
        let g = HyperGrid::new(vec![("n_rounds".into(), vec![20.0, 5.0]), ("max_depth".into(), vec![6.0, 2.0])]);
        let base = ModelConfig::Gbdt(GbdtConfig { learning_rate: 0.5, ..GbdtConfig::default() });
        let out = grid_search(base, &g, &[], (&x, &y), (&x, &y), Metric::Mae).unwrap();
        assert_eq!(out.best_index, 3);
    }

    #[test]
    fn errors_are_recorded_per_combination() {
        let (x, y) = data(50, 6);
        let g = HyperGrid::new(vec![("learning_rate".into(), vec![2.0, 0.1]), ("n_rounds".into(), vec![3.0])]);
        let out = grid_search(ModelConfig::default_for(Family::Gbdt), &g, &[], (&x, &y), (&x, &y), Metric::Mae).unwrap();
        assert!(out.leaderboard[0].error.is_some());
        assert_eq!(out.best_index, 1);

        let bad = HyperGrid::new(vec![("learning_rate".into(), vec![2.0])]);
        assert!(grid_search(ModelConfig::default_for(Family::Gbdt), &bad, &[], (&x, &y), (&x, &y), Metric::Mae).is_err());
        let empty = HyperGrid::new(vec![("max_depth".into(), vec![])]);
        assert!(grid_search(ModelConfig::default_for(Family::Tree), &empty, &[], (&x, &y), (&x, &y), Metric::Mae).is_err());
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let mut c = ModelConfig::default_for(Family::Tree);
        assert!(c.set("learning_rate", 0.1).is_err());
        assert!(c.set("max_depth", 2.5).is_err());
        c.set("max_depth", 2.0).unwrap();
    }
}
