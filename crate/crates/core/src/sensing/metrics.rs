//! Chart quality: continuity, trustworthiness, Kruskal stress and
//! localization error.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartMetrics {
    pub ct: f64,
    pub tw: f64,
    pub ks: f64,
    pub mean_err: f64,
    pub p95_err: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// rank[i][j]: position of j among i's neighbours by distance, 1-based,
/// ties broken by index.
fn ranks(p: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = p.len();
    (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| dist(p[i], p[a]).total_cmp(&dist(p[i], p[b])).then(a.cmp(&b)));
            let mut r = vec![0; n];
            for (k, &j) in order.iter().enumerate() {
                r[j] = k + 1;
            }
            r
        })
        .collect()
}

/// 1 − 2/(nk(2n−3k−1)) Σ_i Σ_{j ∈ N_k^low(i) \ N_k^high(i)} (r_high(i,j) − k)
fn neighbourhood_score(high: &[Vec<usize>], low: &[Vec<usize>], k: usize) -> f64 {
    let n = high.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j != i && low[i][j] <= k && high[i][j] > k {
                s += (high[i][j] - k) as f64;
            }
        }
    }
    1.0 - 2.0 / (n as f64 * k as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0)) * s
}

/// Neighbourhood size ⌈5% · n⌉.
pub fn neighbourhood_size(n: usize) -> usize {
    (n * 5).div_ceil(100).max(1)
}

pub fn trustworthiness(truth: &[[f64; 2]], est: &[[f64; 2]], k: usize) -> f64 {
    neighbourhood_score(&ranks(truth), &ranks(est), k)
}

pub fn continuity(truth: &[[f64; 2]], est: &[[f64; 2]], k: usize) -> f64 {
    neighbourhood_score(&ranks(est), &ranks(truth), k)
}

/// sqrt(Σ (d_ij − β d̂_ij)² / Σ d_ij²) with the least-squares scale β.
pub fn kruskal_stress(truth: &[[f64; 2]], est: &[[f64; 2]]) -> f64 {
    let n = truth.len();
    let (mut dd, mut hh, mut dh) = (0.0, 0.0, 0.0);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(truth[i], truth[j]);
            let h = dist(est[i], est[j]);
            dd += d * d;
            hh += h * h;
            dh += d * h;
            pairs.push((d, h));
        }
    }
    if dd == 0.0 {
        return 0.0;
    }
    let beta = if hh > 0.0 { dh / hh } else { 0.0 };
    let num: f64 = pairs.iter().map(|(d, h)| (d - beta * h).powi(2)).sum();
    (num / dd).sqrt()
}

/// Nearest-rank percentile of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn chart_metrics(est: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<ChartMetrics> {
    if est.len() != truth.len() || est.len() < 10 {
        return Err(Error::Invalid(format!("metrics need equal lengths ≥ 10, got {} and {}", est.len(), truth.len())));
    }
    let k = neighbourhood_size(est.len());
    let errs: Vec<f64> = est.iter().zip(truth).map(|(a, b)| dist(*a, *b)).collect();
    Ok(ChartMetrics {
        ct: continuity(truth, est, k),
        tw: trustworthiness(truth, est, k),
        ks: kruskal_stress(truth, est),
        mean_err: errs.iter().sum::<f64>() / errs.len() as f64,
        p95_err: percentile(&errs, 95.0),
    })
}
