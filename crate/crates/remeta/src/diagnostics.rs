//! Posterior summaries, credible intervals, and rank-normalized split R-hat.

use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::config::{ChainSet, Param};
use crate::error::{Error, Result};

/// Draws of one scalar parameter, laid out as chains x iterations.
#[derive(Clone, Debug)]
pub struct ScalarTraceMatrix {
    chains: Vec<Vec<f64>>,
}

impl ScalarTraceMatrix {
    pub fn new(chains: Vec<Vec<f64>>) -> Result<Self> {
        if chains.is_empty() || chains[0].is_empty() {
            return Err(Error::EmptySample);
        }
        let len = chains[0].len();
        for c in &chains {
            if c.len() != len {
                return Err(Error::DimensionMismatch(
                    "chains must have equal lengths".into(),
                ));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "trace contains a non-finite value".into(),
                ));
            }
        }
        Ok(ScalarTraceMatrix { chains })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn len(&self) -> usize {
        self.chains[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chains(&self) -> &[Vec<f64>] {
        &self.chains
    }

    /// All draws concatenated chain by chain.
    pub fn pooled(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_chains() * self.len());
        for c in &self.chains {
            out.extend_from_slice(c);
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        ScalarTraceMatrix::new(
            self.chains
                .iter()
                .map(|c| c.iter().map(|&v| f(v)).collect())
                .collect(),
        )
    }
}

/// Extract one scalar parameter from a chain set.
pub fn extract_trace(set: &ChainSet, param: Param) -> Result<ScalarTraceMatrix> {
    ScalarTraceMatrix::new(
        set.chains
            .iter()
            .map(|c| c.draws.iter().map(|d| param.extract(d)).collect())
            .collect(),
    )
}

/// Linear-interpolation (type 7) sample quantile.
pub fn quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "quantile level must lie in [0,1], got {q}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let s = sorted.len();
    let h = q * (s - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= s {
        sorted[s - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Credible interval `[q_beta, q_{1-alpha+beta}]`; `beta = alpha/2` gives the
/// probability-symmetric interval.
pub fn credible_interval(samples: &[f64], alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if !(0.0..=alpha).contains(&beta) {
        return Err(Error::InvalidBeta(format!(
            "beta must lie in [0, alpha={alpha}], got {beta}"
        )));
    }
    let mut sorted = samples.to_vec();
    if sorted.is_empty() {
        return Err(Error::EmptySample);
    }
    sorted.sort_by(f64::total_cmp);
    Ok((
        quantile_sorted(&sorted, beta),
        quantile_sorted(&sorted, 1.0 - alpha + beta),
    ))
}

/// Ranks 1..S with ties receiving the average of their covered ranks.
pub fn ranks_average_ties(values: &[f64]) -> Vec<f64> {
    let s = values.len();
    let mut idx: Vec<usize> = (0..s).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // positions i..=j share the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Normal scores of the pooled ranks: `z = Phi^-1((r - 3/8) / (S + 1/4))`.
pub fn rank_normalize(traces: &ScalarTraceMatrix) -> Result<ScalarTraceMatrix> {
    let s = traces.n_chains() * traces.len();
    if s < 4 {
        return Err(Error::InvalidParameter(format!(
            "rank normalization needs at least 4 draws, got {s}"
        )));
    }
    let pooled = traces.pooled();
    let ranks = ranks_average_ties(&pooled);
    let normal = NormalDist::new(0.0, 1.0).expect("standard normal");
    let len = traces.len();
    let z: Vec<Vec<f64>> = (0..traces.n_chains())
        .map(|c| {
            (0..len)
                .map(|i| {
                    let r = ranks[c * len + i];
                    normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25))
                })
                .collect()
        })
        .collect();
    ScalarTraceMatrix::new(z)
}

/// Split R-hat: each chain is halved, and the between- and within-sequence
/// variances of the 2M half-chains are compared. Odd-length chains drop
/// their final draw. Constant collections return exactly 1.
pub fn split_rhat(traces: &ScalarTraceMatrix) -> Result<f64> {
    let keep = traces.len() - traces.len() % 2;
    if keep < 4 {
        return Err(Error::InvalidParameter(format!(
            "split R-hat needs chains of length >= 4, got {}",
            traces.len()
        )));
    }
    let half = keep / 2;
    let mut means = Vec::with_capacity(2 * traces.n_chains());
    let mut vars = Vec::with_capacity(2 * traces.n_chains());
    for chain in traces.chains() {
        for seq in [&chain[..half], &chain[half..keep]] {
            let m = seq.iter().sum::<f64>() / half as f64;
            let v = seq.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (half - 1) as f64;
            means.push(m);
            vars.push(v);
        }
    }
    let k = means.len() as f64;
    let grand = means.iter().sum::<f64>() / k;
    let b = half as f64 * means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (k - 1.0);
    let w = vars.iter().sum::<f64>() / k;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let lp = half as f64;
    let var_plus = (lp - 1.0) / lp * w + b / lp;
    Ok((var_plus / w).sqrt())
}

/// Rank-normalized split R-hat: the larger of the bulk statistic (normal
/// scores of the draws) and the folded statistic (normal scores of absolute
/// deviations from the pooled median).
pub fn rank_rhat(traces: &ScalarTraceMatrix) -> Result<f64> {
    let bulk = split_rhat(&rank_normalize(traces)?)?;
    let med = quantile(&traces.pooled(), 0.5)?;
    let folded = traces.map(|v| (v - med).abs())?;
    let fold = split_rhat(&rank_normalize(&folded)?)?;
    Ok(bulk.max(fold))
}

/// Per-parameter posterior summary.
#[derive(Clone, Copy, Debug)]
pub struct SummaryRow {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rhat: f64,
}

/// Pooled moments, `[q_beta, q_{1-alpha+beta}]` interval, and rank R-hat.
pub fn summarize(traces: &ScalarTraceMatrix, alpha: f64, beta: f64) -> Result<SummaryRow> {
    let pooled = traces.pooled();
    let s = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / s;
    let sd = if pooled.len() > 1 {
        (pooled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (s - 1.0)).sqrt()
    } else {
        0.0
    };
    let median = quantile(&pooled, 0.5)?;
    let (ci_low, ci_high) = credible_interval(&pooled, alpha, beta)?;
    let rhat = rank_rhat(traces)?;
    Ok(SummaryRow {
        mean,
        median,
        sd,
        ci_low,
        ci_high,
        rhat,
    })
}

/// Per-chain histogram of pooled ranks; near-uniform bins indicate mixing.
pub fn rank_histogram(traces: &ScalarTraceMatrix, bins: usize) -> Result<Vec<Vec<usize>>> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "rank histogram needs at least 2 bins, got {bins}"
        )));
    }
    let pooled = traces.pooled();
    let ranks = ranks_average_ties(&pooled);
    let s = pooled.len();
    let len = traces.len();
    let mut out = vec![vec![0usize; bins]; traces.n_chains()];
    for c in 0..traces.n_chains() {
        for i in 0..len {
            let r = ranks[c * len + i];
            let bin = (((r - 1.0) * bins as f64 / s as f64).floor() as usize).min(bins - 1);
            out[c][bin] += 1;
        }
    }
    Ok(out)
}
