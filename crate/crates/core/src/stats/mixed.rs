//! Linear model with a Gaussian random intercept per group, fitted by EM on
//! the marginal likelihood:
//!
//! ```text
//! y = X b + u[g] + e,   u[g] ~ N(0, s_u2),   e ~ N(0, s_e2)
//! ```
//!
//! The E-step uses the closed-form posterior of each intercept; the M-step
//! updates `b` by least squares on `y - E[u]` and then both variances.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::gamma::normal_two_sided_p;
use super::StatsError;

const MAX_ITERATIONS: usize = 500;
const TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MixedModelInput {
    pub y: Vec<f64>,
    /// Row-per-observation design, including the intercept column.
    pub x: DMatrix<f64>,
    pub groups: Vec<i64>,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixedModelFit {
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma_u2: f64,
    pub sigma_e2: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood before the first and after every EM step.
    pub log_likelihood_trace: Vec<f64>,
    /// Only one group was present; fitted by ordinary least squares.
    pub single_group_fallback: bool,
    pub n_obs: usize,
    pub n_groups: usize,
}

impl MixedModelFit {
    /// Terms significant at the 0.05 level.
    pub fn significant_terms(&self) -> Vec<&str> {
        self.terms
            .iter()
            .zip(&self.p)
            .filter(|(_, p)| **p < 0.05)
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

/// Design with intercept, predictor, year dummies and predictor-by-year
/// interactions. The earliest year present is the reference level.
pub fn year_interaction_design(
    name: &str,
    predictor: &[f64],
    years: &[i32],
) -> (DMatrix<f64>, Vec<String>) {
    let mut levels: Vec<i32> = years.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let others = if levels.is_empty() { &levels[..] } else { &levels[1..] };

    let mut terms = vec!["(intercept)".to_string(), name.to_string()];
    terms.extend(others.iter().map(|y| format!("year{y}")));
    terms.extend(others.iter().map(|y| format!("{name}:year{y}")));

    let n = predictor.len();
    let k = others.len();
    let x = DMatrix::from_fn(n, 2 + 2 * k, |i, j| match j {
        0 => 1.0,
        1 => predictor[i],
        j if j < 2 + k => (years[i] == others[j - 2]) as u8 as f64,
        j => {
            let y = others[j - 2 - k];
            if years[i] == y {
                predictor[i]
            } else {
                0.0
            }
        }
    });
    (x, terms)
}

struct Group {
    rows: Vec<usize>,
}

pub fn fit_random_intercept(input: &MixedModelInput) -> Result<MixedModelFit, StatsError> {
    let n = input.y.len();
    let p = input.x.ncols();
    if n == 0 {
        return Err(StatsError::EmptyInput);
    }
    if input.x.nrows() != n {
        return Err(StatsError::LengthMismatch(n, input.x.nrows()));
    }
    if input.groups.len() != n {
        return Err(StatsError::LengthMismatch(n, input.groups.len()));
    }
    if input.terms.len() != p {
        return Err(StatsError::LengthMismatch(p, input.terms.len()));
    }

    let xtx = input.x.transpose() * &input.x;
    let svd = xtx.clone().svd(false, false);
    let max_sv = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > max_sv * 1e-12 * p as f64).count();
    if rank < p || max_sv == 0.0 {
        return Err(StatsError::RankDeficientDesign { rank, cols: p });
    }
    let xtx_chol = xtx.clone().cholesky().ok_or(StatsError::RankDeficientDesign { rank, cols: p })?;

    let y = DVector::from_column_slice(&input.y);
    let ols = |target: &DVector<f64>| xtx_chol.solve(&(input.x.transpose() * target));

    let mut by_key: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, g) in input.groups.iter().enumerate() {
        by_key.entry(*g).or_default().push(i);
    }
    let groups: Vec<Group> = by_key.into_values().map(|rows| Group { rows }).collect();

    let mut beta = ols(&y);
    let resid = &y - &input.x * &beta;
    let total_var = resid.norm_squared() / n as f64;

    if groups.len() < 2 {
        let sigma_e2 = total_var.max(f64::MIN_POSITIVE);
        let cov = xtx_chol.inverse() * sigma_e2;
        let ll = log_likelihood(&groups, &resid, 0.0, sigma_e2);
        return Ok(finish(input, beta, cov, 0.0, sigma_e2, ll, true, 0, vec![ll], true, groups.len()));
    }

    let mut sigma_e2 = (total_var / 2.0).max(1e-12);
    let mut sigma_u2 = total_var / 2.0;
    let mut resid = resid;
    let mut ll = log_likelihood(&groups, &resid, sigma_u2, sigma_e2);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    let mut post_mean = vec![0.0; groups.len()];
    let mut post_var = vec![0.0; groups.len()];
    let mut shifted = DVector::zeros(n);
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // E-step.
        for (gi, g) in groups.iter().enumerate() {
            let ng = g.rows.len() as f64;
            let denom = sigma_e2 + ng * sigma_u2;
            let sum_r: f64 = g.rows.iter().map(|&i| resid[i]).sum();
            post_mean[gi] = sigma_u2 / denom * sum_r;
            post_var[gi] = sigma_u2 * sigma_e2 / denom;
        }
        // M-step.
        for (gi, g) in groups.iter().enumerate() {
            for &i in &g.rows {
                shifted[i] = y[i] - post_mean[gi];
            }
        }
        beta = ols(&shifted);
        resid = &y - &input.x * &beta;
        sigma_u2 = post_mean.iter().zip(&post_var).map(|(m, v)| m * m + v).sum::<f64>()
            / groups.len() as f64;
        let mut sse = 0.0;
        for (gi, g) in groups.iter().enumerate() {
            for &i in &g.rows {
                let e = resid[i] - post_mean[gi];
                sse += e * e + post_var[gi];
            }
        }
        sigma_e2 = (sse / n as f64).max(1e-300);

        let new_ll = log_likelihood(&groups, &resid, sigma_u2, sigma_e2);
        trace.push(new_ll);
        let change = new_ll - ll;
        ll = new_ll;
        if change.abs() < TOLERANCE {
            converged = true;
            break;
        }
    }

    // Wald covariance (X' V^-1 X)^-1, assembled group by group.
    let mut info = DMatrix::<f64>::zeros(p, p);
    for g in &groups {
        let ng = g.rows.len() as f64;
        let c = sigma_u2 / (sigma_e2 + ng * sigma_u2);
        let mut s = DVector::<f64>::zeros(p);
        for &i in &g.rows {
            let row = input.x.row(i);
            s += row.transpose();
            info += row.transpose() * row;
        }
        info -= &s * s.transpose() * c;
    }
    info /= sigma_e2;
    let cov = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| info.try_inverse())
        .ok_or(StatsError::RankDeficientDesign { rank, cols: p })?;

    Ok(finish(input, beta, cov, sigma_u2, sigma_e2, ll, converged, iterations, trace, false, groups.len()))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    input: &MixedModelInput,
    beta: DVector<f64>,
    cov: DMatrix<f64>,
    sigma_u2: f64,
    sigma_e2: f64,
    ll: f64,
    converged: bool,
    iterations: usize,
    trace: Vec<f64>,
    single_group_fallback: bool,
    n_groups: usize,
) -> MixedModelFit {
    let std_errors: Vec<f64> = (0..beta.len()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let z: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p = z.iter().map(|&z| normal_two_sided_p(z)).collect();
    MixedModelFit {
        terms: input.terms.clone(),
        beta: beta.iter().copied().collect(),
        std_errors,
        z,
        p,
        sigma_u2,
        sigma_e2,
        log_likelihood: ll,
        converged,
        iterations,
        log_likelihood_trace: trace,
        single_group_fallback,
        n_obs: input.y.len(),
        n_groups,
    }
}

/// Marginal log-likelihood given fixed-effect residuals `r = y - X b`.
fn log_likelihood(groups: &[Group], resid: &DVector<f64>, sigma_u2: f64, sigma_e2: f64) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    groups
        .iter()
        .map(|g| {
            let ng = g.rows.len() as f64;
            let denom = sigma_e2 + ng * sigma_u2;
            let (sum, sum_sq) =
                g.rows.iter().fold((0.0, 0.0), |(s, q), &i| (s + resid[i], q + resid[i] * resid[i]));
            let quad = (sum_sq - sigma_u2 / denom * sum * sum) / sigma_e2;
            -0.5 * (ng * ln2pi + (ng - 1.0) * sigma_e2.ln() + denom.ln() + quad)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn planted(groups: usize, per: usize, beta: (f64, f64), su: f64, se: f64, seed: u64) -> MixedModelInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        let mut y = Vec::new();
        let mut xs = Vec::new();
        let mut g = Vec::new();
        for gi in 0..groups {
            let u = su * std.sample(&mut rng);
            for _ in 0..per {
                let x = std.sample(&mut rng);
                y.push(beta.0 + beta.1 * x + u + se * std.sample(&mut rng));
                xs.push(x);
                g.push(gi as i64);
            }
        }
        let n = y.len();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        MixedModelInput { y, x, groups: g, terms: vec!["(intercept)".into(), "x".into()] }
    }

    #[test]
    fn recovers_planted_parameters() {
        let input = planted(100, 50, (1.0, 2.0), 2.0, 1.0, 17);
        let fit = fit_random_intercept(&input).unwrap();
        assert!(fit.converged);
        assert!((fit.beta[1] - 2.0).abs() / 2.0 < 0.10, "beta1 {}", fit.beta[1]);
        assert!((fit.sigma_u2 - 4.0).abs() / 4.0 < 0.25, "sigma_u2 {}", fit.sigma_u2);
        assert!((fit.sigma_e2 - 1.0).abs() < 0.1);
        for w in fit.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        assert!(fit.significant_terms().contains(&"x"));
    }

    #[test]
    fn zero_group_effect_matches_ols() {
        // Noise with exactly zero between-group signal: centered within each
        // group and orthogonal to the within-group predictor.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let std = Normal::new(0.0, 1.0).unwrap();
        let (mut y, mut xs, mut g) = (Vec::new(), Vec::new(), Vec::new());
        for gi in 0..40 {
            let x: Vec<f64> = (0..25).map(|_| std.sample(&mut rng)).collect();
            let mut e: Vec<f64> = (0..25).map(|_| std.sample(&mut rng)).collect();
            let xm = x.iter().sum::<f64>() / 25.0;
            let xc: Vec<f64> = x.iter().map(|v| v - xm).collect();
            let em = e.iter().sum::<f64>() / 25.0;
            e.iter_mut().for_each(|v| *v -= em);
            let proj = e.iter().zip(&xc).map(|(a, b)| a * b).sum::<f64>()
                / xc.iter().map(|b| b * b).sum::<f64>();
            e.iter_mut().zip(&xc).for_each(|(v, c)| *v -= proj * c);
            for i in 0..25 {
                y.push(0.5 - 1.5 * x[i] + e[i]);
                xs.push(x[i]);
                g.push(gi as i64);
            }
        }
        let n = y.len();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let input = MixedModelInput { y, x, groups: g, terms: vec!["(intercept)".into(), "x".into()] };
        let fit = fit_random_intercept(&input).unwrap();
        let xtx = input.x.transpose() * &input.x;
        let ols = xtx.cholesky().unwrap().solve(&(input.x.transpose() * DVector::from_column_slice(&input.y)));
        assert!(fit.sigma_u2 < 0.01);
        for j in 0..2 {
            assert!((fit.beta[j] - ols[j]).abs() < 1e-4, "{} vs {}", fit.beta[j], ols[j]);
        }
    }

    #[test]
    fn single_group_falls_back_to_ols() {
        let mut input = planted(1, 30, (1.0, 2.0), 0.0, 1.0, 5);
        input.groups = vec![9; 30];
        let fit = fit_random_intercept(&input).unwrap();
        assert!(fit.single_group_fallback);
        assert_eq!(fit.sigma_u2, 0.0);
        assert!(fit.sigma_e2 > 0.0);
        assert_eq!(fit.beta.len(), 2);
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let mut input = planted(5, 5, (1.0, 2.0), 1.0, 1.0, 5);
        input.x = DMatrix::from_fn(25, 2, |_, _| 1.0);
        assert!(matches!(
            fit_random_intercept(&input),
            Err(StatsError::RankDeficientDesign { rank: 1, cols: 2 })
        ));
    }

    #[test]
    fn year_design_layout() {
        let (x, terms) = year_interaction_design("volume", &[1.0, 2.0, 3.0], &[2020, 2021, 2022]);
        assert_eq!(
            terms,
            vec!["(intercept)", "volume", "year2021", "year2022", "volume:year2021", "volume:year2022"]
        );
        assert_eq!(x.ncols(), 6);
        assert_eq!(x.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 1.0, 0.0, 2.0, 0.0]);
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
