use serde::Serialize;

use super::gamma::chi_square_sf;
use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KwResult {
    /// Statistic before tie correction.
    pub h: f64,
    pub h_corrected: f64,
    pub df: usize,
    pub p: f64,
    /// All observations identical; `h = 0` and `p = 1`.
    pub degenerate: bool,
}

/// Kruskal-Wallis H test with mid-ranks and tie correction.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KwResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::DomainError("non-finite observation".into()));
    }

    let mut pooled: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, vs)| vs.iter().map(move |&v| (v, g)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let nf = n as f64;

    let mut rank_sums = vec![0.0; groups.len()];
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        for &(_, g) in &pooled[i..j] {
            rank_sums[g] += mid_rank;
        }
        let t = (j - i) as f64;
        tie_sum += t * t * t - t;
        i = j;
    }

    let df = groups.len() - 1;
    let tie_term = tie_sum / (nf * nf * nf - nf);
    if n < 2 || tie_term >= 1.0 - 1e-12 {
        return Ok(KwResult { h: 0.0, h_corrected: 0.0, df, p: 1.0, degenerate: true });
    }

    let center = (nf + 1.0) / 2.0;
    let h = 12.0 / (nf * (nf + 1.0))
        * groups
            .iter()
            .zip(&rank_sums)
            .map(|(g, r)| {
                let ni = g.len() as f64;
                ni * (r / ni - center).powi(2)
            })
            .sum::<f64>();
    let h_corrected = h / (1.0 - tie_term);
    let p = chi_square_sf(h_corrected, df as f64)?;
    Ok(KwResult { h, h_corrected, df, p, degenerate: false })
}
