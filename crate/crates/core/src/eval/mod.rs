//! Year-based splits, metrics, permutation importance, residual summaries and
//! the feature-ablation experiment.

use std::fmt;
use std::str::FromStr;

use chrono::Datelike;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codemaps::CodeMapSet;
use crate::features::{compute_base_features, encode_features, BaseRow, Encoding, Feature, FeatureConfig, FeatureError, Role};
use crate::learn::{grid_search, Family, HyperGrid, LearnError, Matrix, Metric, Model, ModelConfig};
use crate::model::{Dataset, HistoryIndex};
use crate::par;
use crate::stats::quantile_type7;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no {} records under scenario {scenario}", role.as_str())]
    EmptyRole { scenario: SplitScenario, role: Role },
    #[error("length mismatch: {0} targets, {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("targets have zero variance; R² is undefined")]
    DegenerateVariance,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("features: {0}")]
    Feature(String),
}

impl From<FeatureError> for EvalError {
    fn from(e: FeatureError) -> Self {
        EvalError::Feature(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SplitScenario {
    A,
    B,
}

impl SplitScenario {
    pub const ALL: [SplitScenario; 2] = [SplitScenario::A, SplitScenario::B];

    pub fn train_years(self) -> &'static [i32] {
        match self {
            SplitScenario::A => &[2021],
            SplitScenario::B => &[2020, 2021],
        }
    }

    pub fn val_years(self) -> &'static [i32] {
        &[2022]
    }

    pub fn test_years(self) -> &'static [i32] {
        &[2023]
    }

    pub fn role_of(self, year: i32) -> Option<Role> {
        if self.train_years().contains(&year) {
            Some(Role::Train)
        } else if self.val_years().contains(&year) {
            Some(Role::Validation)
        } else if self.test_years().contains(&year) {
            Some(Role::Test)
        } else {
            None
        }
    }
}

impl fmt::Display for SplitScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitScenario::A => "A",
            SplitScenario::B => "B",
        })
    }
}

impl FromStr for SplitScenario {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "A" | "a" => Ok(SplitScenario::A),
            "B" | "b" => Ok(SplitScenario::B),
            other => Err(EvalError::ConfigInvalid(format!("unknown split scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub scenario: SplitScenario,
    pub roles: Vec<Option<Role>>,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub n_excluded: usize,
}

/// Assigns each record a role by admission year.
pub fn temporal_split(dataset: &Dataset, scenario: SplitScenario) -> Result<SplitAssignment, EvalError> {
    let roles: Vec<Option<Role>> = dataset.records().iter().map(|r| scenario.role_of(r.admission_date.year())).collect();
    let count = |role| roles.iter().filter(|r| **r == Some(role)).count();
    let out = SplitAssignment {
        scenario,
        n_train: count(Role::Train),
        n_validation: count(Role::Validation),
        n_test: count(Role::Test),
        n_excluded: roles.iter().filter(|r| r.is_none()).count(),
        roles,
    };
    for (role, n) in [(Role::Train, out.n_train), (Role::Validation, out.n_validation), (Role::Test, out.n_test)] {
        if n == 0 {
            return Err(EvalError::EmptyRole { scenario, role });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    /// `None` unless `n > p + 1`.
    pub adj_r2: Option<f64>,
    pub n: usize,
    pub p: usize,
}

pub fn adjusted_r2(r2: f64, n: usize, p: usize) -> Option<f64> {
    (n > p + 1).then(|| 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0))
}

pub fn compute_metrics(y: &[f64], y_hat: &[f64], p: usize) -> Result<MetricSet, EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(EvalError::DegenerateVariance);
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let mae = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
    let r2 = 1.0 - sse / sst;
    Ok(MetricSet { mae, rmse: (sse / n as f64).sqrt(), r2, adj_r2: adjusted_r2(r2, n, p), n, p })
}

fn mae(y: &[f64], y_hat: &[f64]) -> f64 {
    Metric::Mae.score(y, y_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub name: String,
    /// Mean increase in MAE over the repeats.
    pub delta_mae: f64,
    pub std: f64,
}

/// Shuffles each column group within `x`, jointly, and measures the MAE
/// increase. Sorted by descending Δ; ties keep group order.
pub fn permutation_importance(
    model: &Model,
    x: &Matrix,
    y: &[f64],
    groups: &[(String, Vec<usize>)],
    repeats: usize,
    seed: u64,
) -> Result<Vec<Importance>, EvalError> {
    if repeats == 0 {
        return Err(EvalError::ConfigInvalid("repeats must be >= 1".into()));
    }
    if x.n_cols() != model.n_features() {
        return Err(LearnError::SchemaMismatch { expected: model.n_features(), found: x.n_cols() }.into());
    }
    if y.len() != x.n_rows() {
        return Err(EvalError::LengthMismatch(y.len(), x.n_rows()));
    }
    if let Some(j) = groups.iter().flat_map(|g| &g.1).find(|&&j| j >= x.n_cols()) {
        return Err(EvalError::ConfigInvalid(format!("column {j} out of range")));
    }
    let base = mae(y, &model.predict(x)?);
    let mut out = par::map_range(groups.len(), |g| -> Result<Importance, EvalError> {
        let (name, cols) = &groups[g];
        let deltas = (0..repeats)
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(par::mix_seed(par::mix_seed(seed, g as u64), rep as u64));
                let mut perm: Vec<usize> = (0..x.n_rows()).collect();
                perm.shuffle(&mut rng);
                let mut shuffled = x.clone();
                for &j in cols {
                    let col = x.col(j);
                    *shuffled.col_mut(j) = perm.iter().map(|&i| col[i]).collect();
                }
                Ok(mae(y, &model.predict(&shuffled)?) - base)
            })
            .collect::<Result<Vec<f64>, EvalError>>()?;
        let mean = deltas.iter().sum::<f64>() / repeats as f64;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / repeats as f64;
        Ok(Importance { name: name.clone(), delta_mae: mean, std: var.sqrt() })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| b.delta_mae.total_cmp(&a.delta_mae));
    Ok(out)
}

pub const RESIDUAL_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub p2: f64,
    pub p98: f64,
    /// Residuals inside `[p2, p98]`.
    pub clipped_n: usize,
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

/// Histogram of `y − ŷ` between the 2nd and 98th percentiles, plus a summary
/// of all residuals.
pub fn residual_report(y: &[f64], y_hat: &[f64]) -> Result<ResidualReport, EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut e: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    e.sort_by(f64::total_cmp);
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let std = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (p2, p98) = (quantile_type7(&e, 0.02), quantile_type7(&e, 0.98));
    let kept: Vec<f64> = e.iter().copied().filter(|v| *v >= p2 && *v <= p98).collect();
    let width = (p98 - p2) / RESIDUAL_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..RESIDUAL_BINS)
        .map(|b| HistogramBin { lo: p2 + width * b as f64, hi: p2 + width * (b + 1) as f64, count: 0 })
        .collect();
    for v in &kept {
        let b = if width > 0.0 { (((v - p2) / width) as usize).min(RESIDUAL_BINS - 1) } else { 0 };
        bins[b].count += 1;
    }
    Ok(ResidualReport { p2, p98, clipped_n: kept.len(), bins, mean, median: quantile_type7(&e, 0.5), std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub name: String,
    pub features: Vec<Feature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetLadder {
    pub rungs: Vec<Rung>,
}

impl FeatureSetLadder {
    /// Patient features plus diagnosis, then one more feature per rung.
    pub fn standard() -> Self {
        let steps = [
            ("patient+diagnosis", vec![Feature::AgeGroup, Feature::Comorbidities, Feature::ElixhauserIndex, Feature::Diagnosis]),
            ("+procedure", vec![Feature::Procedure]),
            ("+type", vec![Feature::AdmissionType]),
            ("+month", vec![Feature::AdmissionMonth]),
            ("+patient_volume", vec![Feature::PatientVolume]),
            ("+historical_los", vec![Feature::HistoricalLos]),
        ];
        let mut acc = Vec::new();
        let rungs = steps
            .into_iter()
            .map(|(name, add)| {
                acc.extend(add);
                Rung { name: name.to_string(), features: acc.clone() }
            })
            .collect();
        Self { rungs }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.rungs.is_empty() {
            return Err(EvalError::ConfigInvalid("ladder has no rungs".into()));
        }
        for w in self.rungs.windows(2) {
            let strict = w[0].features.iter().all(|f| w[1].features.contains(f)) && w[1].features.len() > w[0].features.len();
            if !strict {
                return Err(EvalError::ConfigInvalid(format!("rung {:?} does not extend {:?}", w[1].name, w[0].name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenarios: Vec<SplitScenario>,
    pub families: Vec<Family>,
    /// Per-family grids; families without one use [`HyperGrid::default_for`].
    pub grids: Vec<(Family, HyperGrid)>,
    pub metric: Metric,
    pub features: FeatureConfig,
    pub ladder: FeatureSetLadder,
    pub importance_repeats: usize,
    /// Refit the winning configuration on train + validation before testing.
    pub refit_on_train_val: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            scenarios: SplitScenario::ALL.to_vec(),
            families: vec![Family::Forest, Family::Gbdt],
            grids: Vec::new(),
            metric: Metric::Mae,
            features: FeatureConfig::default(),
            ladder: FeatureSetLadder::standard(),
            importance_repeats: 3,
            refit_on_train_val: false,
        }
    }
}

impl ExperimentConfig {
    pub fn grid_for(&self, family: Family) -> HyperGrid {
        self.grids.iter().find(|(f, _)| *f == family).map(|(_, g)| g.clone()).unwrap_or_else(|| HyperGrid::default_for(family))
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        self.ladder.validate()?;
        self.features.validate()?;
        if self.scenarios.is_empty() || self.families.is_empty() {
            return Err(EvalError::ConfigInvalid("need at least one scenario and one family".into()));
        }
        if self.importance_repeats == 0 {
            return Err(EvalError::ConfigInvalid("importance_repeats must be >= 1".into()));
        }
        Ok(())
    }

    /// Tree and forest learners have no categorical handling of their own, so
    /// raw category ids are target-encoded for them.
    pub fn features_for(&self, family: Family) -> FeatureConfig {
        let mut fc = self.features.clone();
        if family != Family::Gbdt {
            for e in [&mut fc.diagnosis_encoding, &mut fc.procedure_encoding, &mut fc.admission_type_encoding] {
                if *e == Encoding::Raw {
                    *e = Encoding::Target;
                }
            }
        }
        fc.seed = self.seed;
        fc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub best_config: ModelConfig,
    pub best_params: Vec<(String, f64)>,
    pub n_columns: usize,
    pub train: MetricSet,
    pub validation: MetricSet,
    pub test_mae: f64,
    pub test_rmse: f64,
    pub importances: Vec<Importance>,
    pub residuals: ResidualReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: SplitScenario,
    pub rung: usize,
    pub rung_name: String,
    pub family: Family,
    pub outcome: Result<CellResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub splits: Vec<SplitSummary>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub scenario: SplitScenario,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub n_excluded: usize,
}

/// Runs every scenario × rung × family cell. A failing cell is recorded in
/// its row; only an invalid configuration or an empty split role aborts.
pub fn run_experiment(dataset: &Dataset, maps: &CodeMapSet, cfg: &ExperimentConfig) -> Result<EvaluationReport, EvalError> {
    cfg.validate()?;
    let splits = cfg.scenarios.iter().map(|&s| temporal_split(dataset, s)).collect::<Result<Vec<_>, _>>()?;
    let index = HistoryIndex::build(dataset);
    let base = compute_base_features(dataset, &index, maps, &cfg.features)?;

    let cells: Vec<(usize, usize, Family)> = (0..splits.len())
        .flat_map(|s| (0..cfg.ladder.rungs.len()).flat_map(move |r| cfg.families.iter().map(move |&f| (s, r, f))))
        .collect();
    let rows = par::map(&cells, |&(s, r, family)| ReportRow {
        scenario: splits[s].scenario,
        rung: r + 1,
        rung_name: cfg.ladder.rungs[r].name.clone(),
        family,
        outcome: run_cell(dataset, &base, maps, cfg, &splits[s], &cfg.ladder.rungs[r], family).map_err(|e| e.to_string()),
    });
    Ok(EvaluationReport {
        seed: cfg.seed,
        splits: splits
            .iter()
            .map(|s| SplitSummary {
                scenario: s.scenario,
                n_train: s.n_train,
                n_validation: s.n_validation,
                n_test: s.n_test,
                n_excluded: s.n_excluded,
            })
            .collect(),
        rows,
    })
}

fn run_cell(
    dataset: &Dataset,
    base: &[BaseRow],
    maps: &CodeMapSet,
    cfg: &ExperimentConfig,
    split: &SplitAssignment,
    rung: &Rung,
    family: Family,
) -> Result<CellResult, EvalError> {
    let fm = encode_features(dataset, base, maps, &cfg.features_for(family), &split.roles, &rung.features)?;
    let (train_rows, val_rows, test_rows) =
        (fm.rows_with_role(Role::Train), fm.rows_with_role(Role::Validation), fm.rows_with_role(Role::Test));
    let (xt, yt) = fm.subset(&train_rows);
    let (xv, yv) = fm.subset(&val_rows);
    let (xs, ys) = fm.subset(&test_rows);
    let categorical = fm.schema.categorical_columns();
    let seed = par::mix_seed(cfg.seed, family as u64);
    let outcome = grid_search(
        ModelConfig::default_for(family).with_seed(seed),
        &cfg.grid_for(family),
        &categorical,
        (&xt, &yt),
        (&xv, &yv),
        cfg.metric,
    )?;
    let p = xt.n_cols();
    let train = compute_metrics(&yt, &outcome.best_model.predict(&xt)?, p)?;
    let validation = compute_metrics(&yv, &outcome.best_model.predict(&xv)?, p)?;
    let groups: Vec<(String, Vec<usize>)> =
        fm.schema.feature_groups().into_iter().map(|(f, cols)| (f.as_str().to_string(), cols)).collect();
    let importances = permutation_importance(&outcome.best_model, &xv, &yv, &groups, cfg.importance_repeats, seed)?;

    let tested = if cfg.refit_on_train_val {
        let rows: Vec<usize> = train_rows.iter().chain(&val_rows).copied().collect();
        let (xa, ya) = fm.subset(&rows);
        outcome.best_config.fit(&xa, &categorical, &ya)?
    } else {
        outcome.best_model
    };
    let test_pred = tested.predict(&xs)?;
    Ok(CellResult {
        best_params: outcome.leaderboard[outcome.best_index].params.clone(),
        best_config: outcome.best_config,
        n_columns: p,
        train,
        validation,
        test_mae: Metric::Mae.score(&ys, &test_pred),
        test_rmse: Metric::Rmse.score(&ys, &test_pred),
        importances,
        residuals: residual_report(&ys, &test_pred)?,
    })
}

impl EvaluationReport {
    fn cell(&self, scenario: SplitScenario, rung: usize, family: Family) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.rung == rung && r.family == family)
    }

    fn scenarios(&self) -> Vec<SplitScenario> {
        self.splits.iter().map(|s| s.scenario).collect()
    }

    fn row_keys(&self) -> Vec<(usize, String, Family)> {
        let mut keys: Vec<(usize, String, Family)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|k| k.0 == r.rung && k.2 == r.family) {
                keys.push((r.rung, r.rung_name.clone(), r.family));
            }
        }
        keys.sort_by_key(|k| (k.0, k.2 as usize));
        keys
    }

    /// One CSV per metric: a row per (rung, family), a column per scenario.
    pub fn metric_tables(&self) -> Vec<(&'static str, String)> {
        type Getter = fn(&CellResult) -> Option<f64>;
        let metrics: [(&str, Getter); 7] = [
            ("train_mae", |c| Some(c.train.mae)),
            ("train_r2", |c| Some(c.train.r2)),
            ("val_mae", |c| Some(c.validation.mae)),
            ("val_r2", |c| Some(c.validation.r2)),
            ("val_adj_r2", |c| c.validation.adj_r2),
            ("test_mae", |c| Some(c.test_mae)),
            ("test_rmse", |c| Some(c.test_rmse)),
        ];
        let scenarios = self.scenarios();
        metrics
            .iter()
            .map(|(name, get)| {
                let mut out = String::from("rung,feature_set,family");
                for s in &scenarios {
                    out.push_str(&format!(",scenario_{s}"));
                }
                out.push('\n');
                for (rung, rung_name, family) in self.row_keys() {
                    out.push_str(&format!("{rung},{rung_name},{}", family.as_str()));
                    for &s in &scenarios {
                        let v = self.cell(s, rung, family).and_then(|r| r.outcome.as_ref().ok()).and_then(get);
                        out.push(',');
                        if let Some(v) = v {
                            out.push_str(&format!("{v:.4}"));
                        }
                    }
                    out.push('\n');
                }
                (*name, out)
            })
            .collect()
    }

    /// Wide results table: a row per rung and family, a column group per scenario.
    pub fn table6_csv(&self) -> String {
        let scenarios = self.scenarios();
        let mut out = String::from("rung,feature_set,family");
        for s in &scenarios {
            for m in ["train_mae", "train_r2", "val_mae", "val_r2", "test_mae", "test_rmse"] {
                out.push_str(&format!(",{s}_{m}"));
            }
        }
        out.push('\n');
        for (rung, rung_name, family) in self.row_keys() {
            out.push_str(&format!("{rung},{rung_name},{}", family.as_str()));
            for &s in &scenarios {
                match self.cell(s, rung, family).map(|r| &r.outcome) {
                    Some(Ok(c)) => {
                        let v = [c.train.mae, c.train.r2, c.validation.mae, c.validation.r2, c.test_mae, c.test_rmse];
                        for x in v {
                            out.push_str(&format!(",{x:.4}"));
                        }
                    }
                    _ => out.push_str(",,,,,,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.splits {
            out.push_str(&format!(
                "scenario {}: train {} / validation {} / test {} records ({} excluded)\n",
                s.scenario, s.n_train, s.n_validation, s.n_test, s.n_excluded
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:<4} {:<18} {:<7} {:<3} {:>9} {:>8} {:>9} {:>8} {:>9} {:>9}\n",
            "rung", "feature set", "family", "sc", "train_mae", "train_r2", "val_mae", "val_r2", "test_mae", "test_rmse"
        ));
        for r in &self.rows {
            match &r.outcome {
                Ok(c) => out.push_str(&format!(
                    "{:<4} {:<18} {:<7} {:<3} {:>9.3} {:>8.3} {:>9.3} {:>8.3} {:>9.3} {:>9.3}\n",
                    r.rung,
                    r.rung_name,
                    r.family.as_str(),
                    r.scenario,
                    c.train.mae,
                    c.train.r2,
                    c.validation.mae,
                    c.validation.r2,
                    c.test_mae,
                    c.test_rmse
                )),
                Err(e) => out.push_str(&format!(
                    "{:<4} {:<18} {:<7} {:<3} failed: {e}\n",
                    r.rung,
                    r.rung_name,
                    r.family.as_str(),
                    r.scenario
                )),
            }
        }
        if let Some((row, best)) = self.best_cell() {
            out.push_str(&format!(
                "\nbest validation R²: {:.3} ({}, rung {}, scenario {})\npermutation importance (ΔMAE on validation):\n",
                best.validation.r2,
                row.family.as_str(),
                row.rung,
                row.scenario
            ));
            for imp in &best.importances {
                out.push_str(&format!("  {:<18} {:>8.4} ± {:.4}\n", imp.name, imp.delta_mae, imp.std));
            }
            let r = &best.residuals;
            out.push_str(&format!(
                "test residuals: mean {:.3}, median {:.3}, std {:.3}; histogram over [{:.3}, {:.3}] holds {} values\n",
                r.mean, r.median, r.std, r.p2, r.p98, r.clipped_n
            ));
        }
        out
    }

    /// The successful cell with the highest validation R².
    pub fn best_cell(&self) -> Option<(&ReportRow, &CellResult)> {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|c| (r, c)))
            .max_by(|a, b| a.1.validation.r2.total_cmp(&b.1.validation.r2))
    }

    /// `bin_lo,bin_hi,count` rows of the best cell's residual histogram.
    pub fn histogram_csv(&self) -> Option<String> {
        let (_, best) = self.best_cell()?;
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for b in &best.residuals.bins {
            out.push_str(&format!("{:?},{:?},{}\n", b.lo, b.hi, b.count));
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{fit_gbdt, GbdtConfig};
    use crate::model::{AdmissionType, AgeGroup, CodeKind, HospitalizationRecord, Icd9Code};
    use chrono::NaiveDate;
    use rand::Rng;

    fn record(date: &str) -> HospitalizationRecord {
        let d: NaiveDate = date.parse().unwrap();
        HospitalizationRecord::new(
            "P1",
            AgeGroup::from_index(3).unwrap(),
            Icd9Code::parse("486", CodeKind::Diagnosis).unwrap(),
            None,
            "F",
            "D",
            AdmissionType::Medical,
            d,
            d + chrono::Duration::days(3),
        )
        .unwrap()
    }

    #[test]
    fn scenario_roles() {
        assert_eq!(SplitScenario::A.role_of(2021), Some(Role::Train));
        assert_eq!(SplitScenario::B.role_of(2020), Some(Role::Train));
        assert_eq!(SplitScenario::A.role_of(2020), None);
        assert_eq!(SplitScenario::A.role_of(2019), None);
        assert_eq!(SplitScenario::B.role_of(2019), None);
        assert_eq!(SplitScenario::B.role_of(2022), Some(Role::Validation));
        assert_eq!(SplitScenario::A.role_of(2023), Some(Role::Test));

        let ds = Dataset::from_records(["2019-12-31", "2020-03-01", "2021-07-22", "2022-01-05", "2023-06-01"].map(record).to_vec());
        let a = temporal_split(&ds, SplitScenario::A).unwrap();
        assert_eq!(a.roles, vec![None, None, Some(Role::Train), Some(Role::Validation), Some(Role::Test)]);
        assert_eq!((a.n_train, a.n_validation, a.n_test, a.n_excluded), (1, 1, 1, 2));
        assert_eq!(temporal_split(&ds, SplitScenario::B).unwrap().n_train, 2);

        let short = Dataset::from_records(["2021-01-01", "2022-01-01"].map(record).to_vec());
        assert_eq!(
            temporal_split(&short, SplitScenario::A),
            Err(EvalError::EmptyRole { scenario: SplitScenario::A, role: Role::Test })
        );
    }

    #[test]
    fn metric_examples() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let m = compute_metrics(&y, &y, 1).unwrap();
        assert_eq!((m.mae, m.rmse, m.r2), (0.0, 0.0, 1.0));
        let m = compute_metrics(&y, &[2.5; 4], 1).unwrap();
        assert_eq!(m.r2, 0.0);
        assert!((adjusted_r2(0.5, 101, 10).unwrap() - (1.0 - 0.5 * 100.0 / 90.0)).abs() < 1e-12);
        assert_eq!(adjusted_r2(0.5, 11, 10), None);
        assert_eq!(compute_metrics(&[1.0, 1.0], &[1.0, 2.0], 0), Err(EvalError::DegenerateVariance));
        assert_eq!(compute_metrics(&y, &[1.0], 0), Err(EvalError::LengthMismatch(4, 1)));
    }

    proptest::proptest! {
        #[test]
        fn metric_invariants(pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..60), p in 1usize..3) {
            let (y, yh): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(m) = compute_metrics(&y, &yh, p) {
                proptest::prop_assert!(m.rmse >= m.mae - 1e-12 && m.mae >= 0.0);
                if let Some(a) = m.adj_r2 {
                    proptest::prop_assert!(a <= m.r2 + 1e-12);
                }
            }
        }

        #[test]
        fn histogram_counts_match_recount(e in proptest::collection::vec(-100.0f64..100.0, 1..300)) {
            let zeros = vec![0.0; e.len()];
            let r = residual_report(&e, &zeros).unwrap();
            let recount = e.iter().filter(|v| **v >= r.p2 && **v <= r.p98).count();
            proptest::prop_assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), recount);
            proptest::prop_assert_eq!(r.clipped_n, recount);
            proptest::prop_assert_eq!(r.bins.len(), RESIDUAL_BINS);
        }
    }

    #[test]
    fn residual_examples() {
        let y = [1.0, 5.0, 9.0];
        let r = residual_report(&y, &y).unwrap();
        assert_eq!(r.bins.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!((r.mean, r.median, r.std), (0.0, 0.0, 0.0));
        let r = residual_report(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.mean, 0.0);
    }

    fn planted(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let y = rows.iter().map(|r| 3.0 * r[0] + 0.5 * r[1] + rng.gen_range(-1.0..1.0)).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn importance_ranks_planted_signal_and_ignores_noise() {
        let (x, y) = planted(800, 1);
        let (xv, yv) = planted(400, 2);
        let model = Model::Gbdt(fit_gbdt(&x, &[], &y, &GbdtConfig { n_rounds: 60, max_depth: 4, ..GbdtConfig::default() }).unwrap());
        let groups: Vec<(String, Vec<usize>)> = ["strong", "weak", "noise"].iter().enumerate().map(|(j, n)| (n.to_string(), vec![j])).collect();
        let imp = permutation_importance(&model, &xv, &yv, &groups, 5, 7).unwrap();
        assert_eq!(imp.iter().map(|i| i.name.as_str()).collect::<Vec<_>>(), ["strong", "weak", "noise"]);
        let base = mae(&yv, &model.predict(&xv).unwrap());
        assert!(imp[2].delta_mae.abs() < 0.05 * base, "{imp:?}");
        assert_eq!(imp, permutation_importance(&model, &xv, &yv, &groups, 5, 7).unwrap());
        assert!(permutation_importance(&model, &Matrix::empty(400), &yv, &groups, 1, 7).is_err());
    }

    #[test]
    fn joint_group_shuffle_keeps_rows_together() {
        // y depends on x0 - x1 with x0 == x1 + c: shuffling both together
        // preserves the difference only if one permutation serves both.
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64, i as f64 - (i % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] - r[1]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let model = Model::Gbdt(fit_gbdt(&x, &[], &y, &GbdtConfig { n_rounds: 1, learning_rate: 1.0, max_depth: 1, ..GbdtConfig::default() }).unwrap());
        let imp = permutation_importance(&model, &x, &y, &[("both".into(), vec![0, 1])], 2, 3).unwrap();
        assert_eq!(imp.len(), 1);
        assert!(imp[0].delta_mae.is_finite());
    }

    #[test]
    fn ladder_is_nested() {
        let l = FeatureSetLadder::standard();
        l.validate().unwrap();
        assert_eq!(l.rungs.len(), 6);
        assert_eq!(l.rungs[5].features.len(), 9);
        let mut bad = l.clone();
        bad.rungs.swap(1, 2);
        assert!(bad.validate().is_err());
    }

    fn small_experiment(n: usize) -> (Dataset, CodeMapSet) {
        let g = crate::synth::GeneratorConfig { n_records: n, ..Default::default() };
        (crate::synth::generate_dataset(&g).unwrap(), crate::synth::synthetic_code_maps(&g).unwrap())
    }

    fn tiny_grid(family: Family) -> HyperGrid {
        let mut g = HyperGrid::default();
        match family {
            Family::Gbdt => g.params.push(("n_rounds".into(), vec![20.0])),
            Family::Forest => g.params.push(("n_trees".into(), vec![10.0])),
            Family::Tree => g.params.push(("max_depth".into(), vec![4.0])),
        }
        g
    }

    #[test]
    fn single_cell_report() {
        let (ds, maps) = small_experiment(1500);
        let mut ladder = FeatureSetLadder::standard();
        ladder.rungs.truncate(1);
        let cfg = ExperimentConfig {
            scenarios: vec![SplitScenario::A],
            families: vec![Family::Gbdt],
            grids: vec![(Family::Gbdt, tiny_grid(Family::Gbdt))],
            ladder,
            importance_repeats: 1,
            ..ExperimentConfig::default()
        };
        let rep = run_experiment(&ds, &maps, &cfg).unwrap();
        assert_eq!(rep.rows.len(), 1);
        let c = rep.rows[0].outcome.as_ref().unwrap();
        assert!(c.train.rmse >= c.train.mae && c.test_rmse >= c.test_mae);
        assert_eq!(rep.table6_csv().lines().count(), 2);
    }

    #[test]
    fn full_report_shape_and_determinism() {
        let (ds, maps) = small_experiment(2000);
        let families = vec![Family::Tree, Family::Gbdt];
        let cfg = ExperimentConfig {
            families: families.clone(),
            grids: families.iter().map(|&f| (f, tiny_grid(f))).collect(),
            importance_repeats: 1,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&ds, &maps, &cfg).unwrap();
        assert_eq!(a.rows.len(), 2 * 6 * 2);
        for r in &a.rows {
            let c = r.outcome.as_ref().unwrap();
            assert!(c.validation.rmse >= c.validation.mae);
        }
        assert_eq!(a, run_experiment(&ds, &maps, &cfg).unwrap());
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<EvaluationReport>(&json).unwrap().rows.len(), 24);
        assert_eq!(a.metric_tables().len(), 7);
    }

    #[test]
    fn test_targets_do_not_reach_fitted_models() {
        let (ds, maps) = small_experiment(1500);
        let perturbed = Dataset::from_records(
            ds.records()
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    if r.admission_date.year() == 2023 {
                        r = HospitalizationRecord::new(
                            r.patient_id,
                            r.age_group,
                            r.diagnosis,
                            r.procedure,
                            r.facility,
                            r.department,
                            r.admission_type,
                            r.admission_date,
                            r.discharge_date + chrono::Duration::days(11),
                        )
                        .unwrap();
                    }
                    r
                })
                .collect(),
        );
        let cfg = ExperimentConfig {
            scenarios: vec![SplitScenario::A],
            families: vec![Family::Gbdt],
            grids: vec![(Family::Gbdt, tiny_grid(Family::Gbdt))],
            importance_repeats: 1,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&ds, &maps, &cfg).unwrap();
        let b = run_experiment(&perturbed, &maps, &cfg).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let (ca, cb) = (ra.outcome.as_ref().unwrap(), rb.outcome.as_ref().unwrap());
            assert_eq!(ca.train, cb.train);
            assert_eq!(ca.validation, cb.validation);
            assert_ne!(ca.test_mae, cb.test_mae);
        }
    }
}
