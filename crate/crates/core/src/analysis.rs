//! Estimators for delivery processes and the inter-delivery distribution
//! comparison against the inverse Gaussian model.

use std::io::Write;

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::GapHistogram;
use crate::scalar::Scalar;

/// Default batch length for temporal-variance estimates.
pub const DEFAULT_BLOCK_LEN: u64 = 10_000;

/// Streaming batch-means accumulator. Values are summed into consecutive
/// blocks of `block_len`; a trailing partial block is ignored.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    block_len: u64,
    filled: u64,
    current: f64,
    blocks: Vec<f64>,
}

impl BatchMeans {
    pub fn new(block_len: u64) -> Self {
        assert!(block_len > 0, "block length must be positive");
        Self {
            block_len,
            filled: 0,
            current: 0.0,
            blocks: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.current += x;
        self.filled += 1;
        if self.filled == self.block_len {
            self.blocks.push(self.current);
            self.current = 0.0;
            self.filled = 0;
        }
    }

    pub fn block_len(&self) -> u64 {
        self.block_len
    }

    /// Complete block sums seen so far.
    pub fn block_sums(&self) -> &[f64] {
        &self.blocks
    }

    /// `(1/K) sum_k ((S_k - L mean) / sqrt(L))^2`; needs at least ten blocks.
    pub fn variance(&self, mean: f64) -> Result<f64> {
        let k = self.blocks.len();
        if k < 10 {
            return Err(Error::SeriesTooShort {
                len: k * self.block_len as usize + self.filled as usize,
                block_len: self.block_len as usize,
            });
        }
        let l = self.block_len as f64;
        let sum: f64 = self
            .blocks
            .iter()
            .map(|&s| {
                let z = s - l * mean;
                z * z / l
            })
            .sum();
        Ok(sum / k as f64)
    }
}

/// Batch-means estimate of the temporal variance of `series` around the
/// per-step mean `mu_hat`.
pub fn estimate_temporal_variance<S: Scalar>(series: &[S], mu_hat: S, block_len: usize) -> Result<S> {
    if block_len == 0 || series.len() < 10 * block_len {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            block_len,
        });
    }
    let mut acc = BatchMeans::new(block_len as u64);
    for &x in series {
        acc.push(x.as_f64());
    }
    Ok(S::lit(acc.variance(mu_hat.as_f64())?))
}

/// Right-continuous empirical distribution function of integer samples.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    /// `(value, number of samples <= value)`, ascending by value.
    steps: Vec<(u64, u64)>,
    n: u64,
}

impl EmpiricalCdf {
    pub fn from_samples<I: IntoIterator<Item = u64>>(samples: I) -> Result<Self> {
        let mut h = GapHistogram::default();
        for s in samples {
            h.record(s);
        }
        Self::from_histogram(&h)
    }

    pub fn from_histogram(h: &GapHistogram) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut cum = 0;
        let steps = h
            .counts
            .iter()
            .map(|(&v, &c)| {
                cum += c;
                (v, cum)
            })
            .collect();
        Ok(Self { steps, n: cum })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Fraction of samples `<= x`.
    pub fn eval<S: Scalar>(&self, x: S) -> S {
        let idx = self.steps.partition_point(|&(v, _)| S::from_count(v) <= x);
        if idx == 0 {
            S::zero()
        } else {
            S::from_count(self.steps[idx - 1].1) / S::from_count(self.n)
        }
    }
}

/// Convenience wrapper for [`EmpiricalCdf::from_samples`].
pub fn empirical_cdf(samples: &[u64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::from_samples(samples.iter().copied())
}

/// Standard normal distribution function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Scaled complementary error function `exp(y^2) erfc(y)` for `y >= 0`.
fn erfcx(y: f64) -> f64 {
    if y < 25.0 {
        (y * y).exp() * erfc(y)
    } else {
        let inv2 = 1.0 / (y * y);
        let series = 1.0 - 0.5 * inv2 + 0.75 * inv2 * inv2 - 1.875 * inv2.powi(3)
            + 6.5625 * inv2.powi(4);
        series / (y * std::f64::consts::PI.sqrt())
    }
}

/// Inverse Gaussian distribution with mean `mean` and shape `shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct InverseGaussian<S: Scalar> {
    pub mean: S,
    pub shape: S,
}

impl<S: Scalar> InverseGaussian<S> {
    pub fn new(mean: S, shape: S) -> Result<Self> {
        if !(mean > S::zero() && mean.is_finite()) {
            return Err(Error::Domain(format!("inverse Gaussian mean must be positive, got {mean}")));
        }
        if !(shape > S::zero() && shape.is_finite()) {
            return Err(Error::Domain(format!("inverse Gaussian shape must be positive, got {shape}")));
        }
        Ok(Self { mean, shape })
    }

    /// Inter-delivery model of a process with throughput `mu` and temporal
    /// variance `sigma2`: mean `1/mu`, variance `sigma2 / mu^3`.
    pub fn from_second_order(mu: S, sigma2: S) -> Result<Self> {
        if !(mu > S::zero()) || !(sigma2 > S::zero()) {
            return Err(Error::Domain(format!(
                "inverse Gaussian fit needs mu > 0 and sigma2 > 0, got mu = {mu}, sigma2 = {sigma2}"
            )));
        }
        Self::new(mu.recip(), sigma2.recip())
    }

    pub fn variance(&self) -> S {
        self.mean.powi(3) / self.shape
    }

    pub fn cdf(&self, x: S) -> Result<S> {
        inverse_gaussian_cdf(x, self.mean, self.shape)
    }
}

/// `Phi(sqrt(l/x)(x/m - 1)) + exp(2l/m) Phi(-sqrt(l/x)(x/m + 1))`, evaluated
/// in a form that stays finite for large `l/m`.
pub fn inverse_gaussian_cdf<S: Scalar>(x: S, mean: S, shape: S) -> Result<S> {
    if !(x > S::zero()) {
        return Err(Error::Domain(format!("inverse Gaussian cdf needs x > 0, got {x}")));
    }
    InverseGaussian::new(mean, shape)?;
    let (x, m, l) = (x.as_f64(), mean.as_f64(), shape.as_f64());
    if x.is_infinite() {
        return Ok(S::one());
    }
    let r = (l / x).sqrt();
    let a = r * (x / m - 1.0);
    let b = r * (x / m + 1.0);
    // exp(2l/m) Phi(-b) = exp(-a^2/2) erfcx(b/sqrt2) / 2 since b^2 - a^2 = 4l/m.
    let tail = 0.5 * (-0.5 * a * a).exp() * erfcx(b / std::f64::consts::SQRT_2);
    Ok(S::lit((std_normal_cdf(a) + tail).clamp(0.0, 1.0)))
}

/// `max_{k = 1..=x_max} |empirical(k) - model(k)|`.
pub fn cdf_max_gap<S, E, F>(empirical: E, model: F, x_max: u64) -> S
where
    S: Scalar,
    E: Fn(S) -> S,
    F: Fn(S) -> S,
{
    (1..=x_max)
        .map(|k| {
            let x = S::from_count(k);
            (empirical(x) - model(x)).abs()
        })
        .fold(S::zero(), S::max)
}

/// One row of a CDF comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfRow {
    pub k: u64,
    pub empirical: f64,
    pub model: f64,
}

/// Empirical versus inverse Gaussian CDF at `k = 1..=x_max`.
pub fn cdf_comparison(emp: &EmpiricalCdf, model: &InverseGaussian<f64>, x_max: u64) -> Result<Vec<CdfRow>> {
    (1..=x_max)
        .map(|k| {
            let x = k as f64;
            Ok(CdfRow {
                k,
                empirical: emp.eval(x),
                model: model.cdf(x)?,
            })
        })
        .collect()
}

pub fn write_cdf_csv<W: Write>(rows: &[CdfRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "empirical_cdf", "inverse_gaussian_cdf"])?;
    for r in rows {
        w.write_record([r.k.to_string(), r.empirical.to_string(), r.model.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
