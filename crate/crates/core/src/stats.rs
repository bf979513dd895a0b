//! Paired significance testing and multi-seed aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::EvalReport;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("{reports} reports for {seeds} seeds")]
    ReportCount { seeds: usize, reports: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    /// Chi-square approximation with one degree of freedom.
    #[default]
    ChiSquare,
    /// Exact binomial mid-p; preferable when `b + c < 25`.
    MidP,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// First model right, second wrong.
    pub b: usize,
    /// First model wrong, second right.
    pub c: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub correction: bool,
    pub method: McNemarMethod,
}

impl McNemarResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

pub fn discordant(correct1: &[bool], correct2: &[bool]) -> Result<(usize, usize), StatsError> {
    if correct1.len() != correct2.len() {
        return Err(StatsError::LengthMismatch(correct1.len(), correct2.len()));
    }
    let mut b = 0;
    let mut c = 0;
    for (x, y) in correct1.iter().zip(correct2) {
        match (x, y) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok((b, c))
}

/// `(|b - c| - 1)^2 / (b + c)` with continuity correction, `(b - c)^2 / (b + c)`
/// without. The corrected form does not clamp `|b - c| - 1` at zero, so
/// `b = c` gives `1 / (b + c)`.
pub fn mcnemar_statistic(b: usize, c: usize, correction: bool) -> f64 {
    let n = (b + c) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let diff = (b as f64 - c as f64).abs();
    let d = if correction { diff - 1.0 } else { diff };
    d * d / n
}

pub fn mcnemar(
    correct1: &[bool],
    correct2: &[bool],
    correction: bool,
) -> Result<McNemarResult, StatsError> {
    let (b, c) = discordant(correct1, correct2)?;
    Ok(mcnemar_from_counts(
        b,
        c,
        correction,
        McNemarMethod::ChiSquare,
    ))
}

pub fn mcnemar_from_counts(
    b: usize,
    c: usize,
    correction: bool,
    method: McNemarMethod,
) -> McNemarResult {
    let statistic = mcnemar_statistic(b, c, correction);
    let p_value = if b + c == 0 {
        1.0
    } else {
        match method {
            McNemarMethod::ChiSquare => chi_square_sf_1df(statistic),
            McNemarMethod::MidP => binomial_mid_p(b, c),
        }
    };
    McNemarResult {
        b,
        c,
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        correction,
        method,
    }
}

/// Two-sided mid-p value of `min(b, c)` under `Binomial(b + c, 1/2)`.
pub fn binomial_mid_p(b: usize, c: usize) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    let ln_half_n = n as f64 * 0.5f64.ln();
    let pmf = |i: usize| (ln_choose(n, i) + ln_half_n).exp();
    let cdf: f64 = (0..=k).map(pmf).sum();
    (2.0 * cdf - pmf(k)).min(1.0)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Survival function of the chi-square distribution with one degree of
/// freedom, `Q(1/2, x/2)`.
pub fn chi_square_sf_1df(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(0.5, x / 2.0)
}

/// Lanczos approximation (g = 7, 9 coefficients), reflection below 1/2.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`: power series for `P` when
/// `x < a + 1`, otherwise a modified-Lentz continued fraction for `Q`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;
    let log_prefix = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        1.0 - sum * log_prefix.exp()
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        log_prefix.exp() * h
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSweepSummary {
    pub seeds: Vec<u64>,
    pub reports: Vec<EvalReport>,
    pub mean: MetricSummary,
    /// Population standard deviation.
    pub std: MetricSummary,
}

impl SeedSweepSummary {
    pub fn from_reports(seeds: Vec<u64>, reports: Vec<EvalReport>) -> Result<Self, StatsError> {
        if seeds.is_empty() {
            return Err(StatsError::NoSeeds);
        }
        if seeds.len() != reports.len() {
            return Err(StatsError::ReportCount {
                seeds: seeds.len(),
                reports: reports.len(),
            });
        }
        let n = reports.len() as f64;
        let pick: [fn(&EvalReport) -> f64; 4] =
            [|r| r.accuracy, |r| r.f1, |r| r.precision, |r| r.recall];
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        for (k, f) in pick.iter().enumerate() {
            let m = reports.iter().map(f).sum::<f64>() / n;
            mean[k] = m;
            std[k] = (reports.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / n).sqrt();
        }
        let summary = |v: [f64; 4]| MetricSummary {
            accuracy: v[0],
            f1: v[1],
            precision: v[2],
            recall: v[3],
        };
        Ok(SeedSweepSummary {
            seeds,
            reports,
            mean: summary(mean),
            std: summary(std),
        })
    }
}

#[derive(Debug, Error)]
pub enum SweepError<E: std::error::Error + 'static> {
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("seed {seed}: {source}")]
    Failed {
        seed: u64,
        #[source]
        source: E,
    },
}

/// Runs `run` once per seed (in parallel) and aggregates the reports in seed
/// list order. The first failing seed in list order is reported.
pub fn seed_sweep<F, E>(seeds: &[u64], run: F) -> Result<SeedSweepSummary, SweepError<E>>
where
    F: Fn(u64) -> Result<EvalReport, E> + Sync,
    E: std::error::Error + Send + 'static,
{
    if seeds.is_empty() {
        return Err(SweepError::NoSeeds);
    }
    let results: Vec<Result<EvalReport, E>> = seeds.par_iter().map(|&s| run(s)).collect();
    let mut reports = Vec::with_capacity(seeds.len());
    for (seed, r) in seeds.iter().zip(results) {
        reports.push(r.map_err(|source| SweepError::Failed {
            seed: *seed,
            source,
        })?);
    }
    Ok(SeedSweepSummary::from_reports(seeds.to_vec(), reports).expect("lengths checked above"))
}
