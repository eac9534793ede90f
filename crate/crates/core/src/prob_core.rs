//! Finite probability spaces, real random variables and the query ledger.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the input weight sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Sums closer to 1 than this are left untouched, which makes
/// renormalization idempotent.
const RENORM_SKIP: f64 = 1e-13;

/// Outcomes `0..D` with strictly positive weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteProbSpace {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl FiniteProbSpace {
    /// Builds a space from weights that must already be strictly positive.
    fn from_positive(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::WeightSum(sum));
        }
        if (sum - 1.0).abs() > RENORM_SKIP {
            for w in weights.iter_mut() {
                *w /= sum;
            }
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(FiniteProbSpace { weights, cumulative })
    }

    /// Validates `weights`, prunes zeros and renormalizes.
    pub fn new(weights: &[f64]) -> Result<Self> {
        let kept = validate_weights(weights)?;
        Self::from_positive(kept.into_iter().map(|i| weights[i]).collect())
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws an outcome index with probability `p(ℓ)`.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.weights.len() - 1)
    }

    /// Weighted expectation of `f(ℓ)`.
    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * f(i)).sum()
    }
}

/// Returns the indices of positive weights, after checking sign and finiteness.
fn validate_weights(weights: &[f64]) -> Result<Vec<usize>> {
    let mut kept = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite(format!("weight at index {i}")));
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight { index: i, weight: w });
        }
        if w > 0.0 {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty);
    }
    Ok(kept)
}

/// Pointwise rewrites of a random variable. They cost no queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Shift(f64),
    Scale(f64),
    /// Clamp to `[-B, B]`.
    Truncate(f64),
    Square,
    Abs,
}

/// A real random variable `y` on a finite probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct RandVar {
    space: FiniteProbSpace,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RandVarJson {
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl RandVar {
    pub fn new(weights: &[f64], values: &[f64]) -> Result<Self> {
        if weights.len() != values.len() {
            return Err(Error::LengthMismatch { weights: weights.len(), values: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("value at index {i}")));
        }
        let kept = validate_weights(weights)?;
        let space = FiniteProbSpace::from_positive(kept.iter().map(|&i| weights[i]).collect())?;
        let values = kept.iter().map(|&i| values[i]).collect();
        Ok(RandVar { space, values })
    }

    /// Constant variable on a single outcome.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(&[1.0], &[c])
    }

    pub fn space(&self) -> &FiniteProbSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        self.space.weights()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// μ = E[y].
    pub fn mean(&self) -> f64 {
        self.space.expect(|i| self.values[i])
    }

    /// s² = E[y²].
    pub fn second_moment(&self) -> f64 {
        self.space.expect(|i| self.values[i] * self.values[i])
    }

    /// s = √E[y²].
    pub fn rms(&self) -> f64 {
        self.second_moment().sqrt()
    }

    /// σ² = E[(y − μ)²], computed by the centered sum for accuracy.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.space.expect(|i| (self.values[i] - mu).powi(2)).max(0.0)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Applies a pointwise transformation over the same space.
    pub fn transform(&self, kind: Transform) -> Result<RandVar> {
        let f: Box<dyn Fn(f64) -> f64> = match kind {
            Transform::Shift(c) => {
                check_param(c, "shift")?;
                Box::new(move |y| y + c)
            }
            Transform::Scale(c) => {
                check_param(c, "scale")?;
                Box::new(move |y| y * c)
            }
            Transform::Truncate(b) => {
                check_param(b, "truncation bound")?;
                if b < 0.0 {
                    return Err(Error::OutOfRange { what: "truncation bound", value: b });
                }
                Box::new(move |y: f64| y.clamp(-b, b))
            }
            Transform::Square => Box::new(|y| y * y),
            Transform::Abs => Box::new(f64::abs),
        };
        self.map(f)
    }

    /// Applies an arbitrary pointwise map; the result must be finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<RandVar> {
        let values: Vec<f64> = self.values.iter().map(|&y| f(y)).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("transformed value at index {i}")));
        }
        Ok(RandVar { space: self.space.clone(), values })
    }

    /// Expands a `[0,1]`-valued variable into an exact `{0,1}`-valued one on
    /// the doubled space with the same mean.
    pub fn bernoullize(&self) -> Result<RandVar> {
        let mut weights = Vec::with_capacity(2 * self.dim());
        let mut values = Vec::with_capacity(2 * self.dim());
        for (&p, &y) in self.weights().iter().zip(&self.values) {
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::OutOfRange { what: "bernoullize value", value: y });
            }
            weights.push(p * (1.0 - y));
            values.push(0.0);
            weights.push(p * y);
            values.push(1.0);
        }
        RandVar::new(&weights, &values)
    }

    /// The distribution of `y` itself: outcomes with equal values merged,
    /// sorted by value.
    pub fn collapsed(&self) -> RandVar {
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        let (mut weights, mut values): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        for i in order {
            let (p, y) = (self.weights()[i], self.values[i]);
            if values.last() == Some(&y) {
                *weights.last_mut().expect("nonempty") += p;
            } else {
                weights.push(p);
                values.push(y);
            }
        }
        RandVar::new(&weights, &values).expect("merging preserves validity")
    }

    /// Pr[y > x].
    pub fn tail_above(&self, x: f64) -> f64 {
        self.space.expect(|i| if self.values[i] > x { 1.0 } else { 0.0 })
    }

    /// Pr[y ≥ x].
    pub fn tail_at_least(&self, x: f64) -> f64 {
        self.space.expect(|i| if self.values[i] >= x { 1.0 } else { 0.0 })
    }

    /// One classical sample: a single use of the code.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, ledger: &mut QueryLedger) -> Result<f64> {
        ledger.charge(1)?;
        Ok(self.values[self.space.sample_index(rng)])
    }

    pub fn from_json(text: &str) -> Result<RandVar> {
        let raw: RandVarJson =
            serde_json::from_str(text).map_err(|e| Error::Instance(format!("malformed JSON: {e}")))?;
        RandVar::new(&raw.weights, &raw.values)
    }

    pub fn to_json(&self) -> String {
        let raw = RandVarJson { weights: self.weights().to_vec(), values: self.values.clone() };
        serde_json::to_string(&raw).expect("plain numeric vectors serialize")
    }

    /// CSV rows `(l, p, y)` with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "l,p,y")?;
        for (i, (p, y)) in self.weights().iter().zip(&self.values).enumerate() {
            writeln!(out, "{i},{p},{y}")?;
        }
        Ok(())
    }
}

fn check_param(c: f64, what: &str) -> Result<()> {
    if c.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Counts uses of the code: the synthesizer, the value oracle, their
/// inverses and controlled versions each cost one unit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryLedger {
    count: u64,
    budget: Option<u64>,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_budget(budget: u64) -> Self {
        QueryLedger { count: 0, budget: Some(budget) }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    /// Remaining units before the budget, if any.
    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.count))
    }

    /// Records `units` uses, refusing (without recording) if that would
    /// exceed the budget.
    pub fn charge(&mut self, units: u64) -> Result<()> {
        let next = self.count.saturating_add(units);
        if let Some(budget) = self.budget {
            if next > budget {
                return Err(Error::BudgetExhausted { count: self.count, budget, requested: units });
            }
        }
        self.count = next;
        Ok(())
    }
}
