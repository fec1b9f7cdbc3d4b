use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::StatsError;

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One row of a descriptive table: count, share and LoS summary of a group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveRow<G> {
    pub group: G,
    pub n: usize,
    pub percent: f64,
    pub median: f64,
    pub std: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-group summaries, rows ordered by group key.
pub fn group_descriptives<G: Ord + Clone>(
    values: &[f64],
    groups: &[G],
) -> Result<Vec<DescriptiveRow<G>>, StatsError> {
    if values.len() != groups.len() {
        return Err(StatsError::LengthMismatch(values.len(), groups.len()));
    }
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut by_group: BTreeMap<&G, Vec<f64>> = BTreeMap::new();
    for (v, g) in values.iter().zip(groups) {
        by_group.entry(g).or_default().push(*v);
    }
    let total = values.len() as f64;
    Ok(by_group
        .into_iter()
        .map(|(g, mut vs)| {
            vs.sort_by(f64::total_cmp);
            let n = vs.len();
            let mean = vs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            DescriptiveRow {
                group: g.clone(),
                n,
                percent: 100.0 * n as f64 / total,
                median: quantile_type7(&vs, 0.5),
                std,
                q25: quantile_type7(&vs, 0.25),
                q75: quantile_type7(&vs, 0.75),
                min: vs[0],
                max: vs[n - 1],
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ComorbidityBin {
    Zero,
    One,
    Two,
    ThreePlus,
}

impl fmt::Display for ComorbidityBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComorbidityBin::Zero => "0",
            ComorbidityBin::One => "1",
            ComorbidityBin::Two => "2",
            ComorbidityBin::ThreePlus => "3+",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ElixhauserBin {
    Low,
    Moderate,
    High,
    VeryHigh,
}

impl fmt::Display for ElixhauserBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElixhauserBin::Low => "Low (,2]",
            ElixhauserBin::Moderate => "Moderate [3,5]",
            ElixhauserBin::High => "High [6,10]",
            ElixhauserBin::VeryHigh => "Very High [11,)",
        })
    }
}

pub fn discretize_comorbidity(count: u32) -> ComorbidityBin {
    match count {
        0 => ComorbidityBin::Zero,
        1 => ComorbidityBin::One,
        2 => ComorbidityBin::Two,
        _ => ComorbidityBin::ThreePlus,
    }
}

pub fn discretize_elixhauser(score: i32) -> ElixhauserBin {
    match score {
        i32::MIN..=2 => ElixhauserBin::Low,
        3..=5 => ElixhauserBin::Moderate,
        6..=10 => ElixhauserBin::High,
        _ => ElixhauserBin::VeryHigh,
    }
}
