//! Regret, quantiles and cross-instance aggregation.
//!
//! Quantiles interpolate linearly between order statistics (the "type 7"
//! rule): with sorted values `x_0..x_{n-1}` and `h = (n-1)q`, the result is
//! `x_⌊h⌋ + (h - ⌊h⌋)(x_⌊h⌋+1 - x_⌊h⌋)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Everything needed to score one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// `R_t` per round.
    pub realized: Vec<f64>,
    /// `Ȳ_t(a)`, row `t - 1` per round; usually shared by all runs of an instance.
    pub counterfactual: Arc<Vec<Vec<f64>>>,
    /// Share of units on each arm, per round.
    pub arm_shares: Vec<Vec<f64>>,
    /// Arm of each round when the policy played one arm everywhere.
    pub arms: Option<Vec<usize>>,
    pub seeds: BTreeMap<String, u64>,
}

impl RunRecord {
    pub fn validate(&self) -> Result<()> {
        let horizon = self.counterfactual.len();
        if horizon == 0 {
            return Err(Error::InvalidArgument("empty run record".into()));
        }
        let k = self.counterfactual[0].len();
        if self.realized.len() != horizon
            || self.arm_shares.len() != horizon
            || self.arms.as_ref().is_some_and(|a| a.len() != horizon)
        {
            return Err(Error::InvalidArgument(format!(
                "incomplete run record: {} realised rounds for a horizon of {horizon}",
                self.realized.len()
            )));
        }
        if k == 0 || self.counterfactual.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidArgument("ragged counterfactual table".into()));
        }
        let in_range = |v: &f64| (0.0..=1.0).contains(v);
        if !self.realized.iter().all(in_range) || !self.counterfactual.iter().flatten().all(in_range) {
            return Err(Error::InvalidArgument("reward outside [0, 1] in run record".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretSummary {
    /// `Reg(Z, a) = R_a - R`.
    pub per_arm: Vec<f64>,
    /// `Reg(Z) = max_a Reg(Z, a)`.
    pub regret: f64,
    /// Lowest-index arm attaining the max.
    pub best_arm: usize,
}

pub fn regret(record: &RunRecord) -> Result<RegretSummary> {
    record.validate()?;
    let k = record.counterfactual[0].len();
    let realized: f64 = record.realized.iter().sum();
    let per_arm: Vec<f64> = (0..k)
        .map(|a| record.counterfactual.iter().map(|row| row[a]).sum::<f64>() - realized)
        .collect();
    let (best_arm, regret) = per_arm
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (a, r)| if r > best.1 { (a, r) } else { best });
    Ok(RegretSummary { per_arm, regret, best_arm })
}

/// Type-7 empirical quantile; `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty list".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level must lie in [0, 1], got {q}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("quantile of a list containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Per-instance statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceStats {
    pub runs: usize,
    pub mean: f64,
    pub q95: f64,
    /// `δ`-VaR, the `(1 - δ)`-quantile.
    pub var: f64,
}

/// Statistics averaged over instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub instances: usize,
    /// Runs per instance; the minimum when batches differ in size.
    pub runs: usize,
    pub mean_regret: f64,
    pub q95_regret: f64,
    pub var_level: f64,
    pub var_value: f64,
    pub per_instance: Vec<InstanceStats>,
}

pub fn instance_stats(regrets: &[f64], var_level: f64) -> Result<InstanceStats> {
    if !(var_level > 0.0 && var_level < 1.0) {
        return Err(Error::InvalidArgument(format!("VaR level must lie in (0, 1), got {var_level}")));
    }
    Ok(InstanceStats {
        runs: regrets.len(),
        mean: regrets.iter().sum::<f64>() / regrets.len().max(1) as f64,
        q95: quantile(regrets, 0.95)?,
        var: quantile(regrets, 1.0 - var_level)?,
    })
}

/// Mean, 95th percentile and `δ`-VaR of each instance's regrets, then the
/// average of each statistic over instances, in that order.
pub fn aggregate(batches: &[Vec<f64>], var_level: f64) -> Result<Aggregate> {
    if batches.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    let per_instance = batches
        .iter()
        .map(|b| instance_stats(b, var_level))
        .collect::<Result<Vec<_>>>()?;
    let n = per_instance.len() as f64;
    let avg = |f: fn(&InstanceStats) -> f64| per_instance.iter().map(f).sum::<f64>() / n;
    Ok(Aggregate {
        instances: per_instance.len(),
        runs: per_instance.iter().map(|s| s.runs).min().unwrap_or(0),
        mean_regret: avg(|s| s.mean),
        q95_regret: avg(|s| s.q95),
        var_level,
        var_value: avg(|s| s.var),
        per_instance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(realized: Vec<f64>, table: Vec<Vec<f64>>) -> RunRecord {
        let k = table[0].len();
        RunRecord {
            arm_shares: vec![vec![1.0 / k as f64; k]; realized.len()],
            realized,
            counterfactual: Arc::new(table),
            arms: None,
            seeds: BTreeMap::new(),
        }
    }

    fn kahan(values: impl Iterator<Item = f64>) -> f64 {
        let (mut sum, mut c) = (0.0, 0.0);
        for v in values {
            let y = v - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn regret_examples() {
        let r = regret(&record(vec![0.3], vec![vec![0.8, 0.3]])).unwrap();
        assert!((r.regret - 0.5).abs() < 1e-15);
        assert_eq!(r.best_arm, 0);
        assert_eq!(r.per_arm[1], 0.0);

        let table = vec![vec![0.2, 0.7], vec![0.4, 0.1], vec![0.9, 0.5]];
        let own: Vec<f64> = table.iter().map(|row| row[1]).collect();
        let r = regret(&record(own, table)).unwrap();
        assert_eq!(r.per_arm[1], 0.0);
        assert!(r.regret >= r.per_arm.iter().sum::<f64>() / 2.0);
    }

    #[test]
    fn incomplete_records_are_rejected() {
        assert!(regret(&record(vec![0.3], vec![vec![0.8, 0.3], vec![0.1, 0.1]])).is_err());
        assert!(regret(&record(vec![1.3], vec![vec![0.8, 0.3]])).is_err());
    }

    #[test]
    fn regret_matches_kahan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let horizon = rng.gen_range(1..2000);
            let k = rng.gen_range(1..5);
            let table: Vec<Vec<f64>> = (0..horizon).map(|_| (0..k).map(|_| rng.gen()).collect()).collect();
            let realized: Vec<f64> = (0..horizon).map(|_| rng.gen()).collect();
            let rec = record(realized.clone(), table.clone());
            let r = regret(&rec).unwrap();
            let total = kahan(realized.iter().rev().copied());
            for a in 0..k {
                let oracle = kahan(table.iter().rev().map(|row| row[a])) - total;
                assert!((r.per_arm[a] - oracle).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[3.0; 7], 0.3).unwrap(), 3.0);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile(&v, 0.95).unwrap() - 95.05).abs() < 1e-12);
        assert_eq!(quantile(&v, 1.0).unwrap(), 100.0);
        assert!((quantile(&v, 1.0 - 1e-12).unwrap() - 100.0).abs() < 1e-6);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.5).is_err());
    }

    proptest! {
        #[test]
        fn quantile_is_monotone_and_bounded(values in prop::collection::vec(-1e6f64..1e6, 1..60), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ql = quantile(&values, lo).unwrap();
            let qh = quantile(&values, hi).unwrap();
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(ql <= qh + 1e-9);
            prop_assert!(min <= ql && qh <= max);
        }
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate(&[vec![2.5]], 0.05).unwrap();
        assert_eq!((one.mean_regret, one.q95_regret), (2.5, 2.5));
        let two = aggregate(&[vec![2.0], vec![4.0]], 0.05).unwrap();
        assert_eq!(two.q95_regret, 3.0);
        assert!(aggregate(&[], 0.05).is_err());
        assert!(aggregate(&[vec![]], 0.05).is_err());
    }

    #[test]
    fn per_instance_order_differs_from_pooling() {
        // Instance A is tight around 0, instance B tight around 10.
        let batches = vec![vec![0.0; 20], vec![10.0; 20]];
        let per_instance = aggregate(&batches, 0.05).unwrap().q95_regret;
        let pooled: Vec<f64> = batches.concat();
        let pooled_q95 = quantile(&pooled, 0.95).unwrap();
        assert_eq!(per_instance, 5.0);
        assert_eq!(pooled_q95, 10.0);
    }
}
