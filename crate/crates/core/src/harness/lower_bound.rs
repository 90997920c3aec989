//! Lower-bound demonstrations: switchback regret on fresh hard instances and
//! the coin-flip anti-concentration event behind the `√T` lower bound.

use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{build_lower_bound_instance, InterferenceKernel, RewardModel};
use crate::error::{Error, Result};
use crate::metrics::{quantile, regret, RunRecord};
use crate::policy::{learning_rates, run_episode, PolicyConfig, PolicyKind};
use crate::rng::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundConfig {
    /// Interior size `m²`; the grid has `(4m+1)²` units.
    pub n: usize,
    pub horizons: Vec<usize>,
    pub runs: usize,
    pub kernel: InterferenceKernel,
    pub seed: u64,
    pub delta: f64,
    /// Samples for the anti-concentration estimate.
    pub coin_samples: usize,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        Self {
            n: 1,
            horizons: vec![256, 1024, 4096],
            runs: 1000,
            kernel: InterferenceKernel::KappaNeighborhood { kappa: 1.0 },
            seed: 1,
            delta: 0.05,
            coin_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundRow {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub units: usize,
    pub runs: usize,
    /// Regret normalised by all units.
    pub mean_regret: f64,
    /// Regret normalised by interior units only.
    pub mean_regret_interior: f64,
    pub q95_regret: f64,
    /// Frequency of `{best-arm total >= T/2 + √T/4}`.
    pub exceedance_frequency: f64,
    pub exceedance_se: f64,
    /// `(1/15) e^{-16 s²/T}` at `s = √T/4`.
    pub exceedance_floor: f64,
}

/// Share of units in the interior.
pub fn interior_fraction(env: &RewardModel) -> Result<f64> {
    let mask = env
        .interior_mask()
        .ok_or_else(|| Error::InvalidArgument("not a lower-bound instance".into()))?;
    Ok(mask.iter().filter(|&&i| i).count() as f64 / mask.len() as f64)
}

/// Switchback EXP3-IX regrets, normalised by all units and by interior units,
/// one fresh instance per run.
pub fn switchback_regrets(config: &LowerBoundConfig, horizon: usize) -> Result<Vec<(f64, f64)>> {
    let seeds = SeedTree::new(config.seed);
    let (eta, beta) = learning_rates(2, horizon, 1, 1.0, config.delta)?;
    let policy = PolicyConfig {
        kind: PolicyKind::SwitchbackExp3ix,
        eta,
        beta,
        q_mode: Default::default(),
        fixed_partition: false,
    };
    (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let coords = [horizon as u64, run as u64];
            let mut env_rng = seeds.stream("lower-bound/environment", &coords);
            let env = build_lower_bound_instance(config.n, horizon, config.kernel.clone(), &mut env_rng)?;
            let table = std::sync::Arc::new(env.counterfactual_table());
            let mut unused = seeds.stream("lower-bound/partition", &coords);
            let mut arm_rng = seeds.stream("lower-bound/arms", &coords);
            let episode = run_episode(&policy, &env, None, &mut unused, &mut arm_rng)?;
            let record = RunRecord {
                realized: episode.realized,
                counterfactual: table,
                arm_shares: episode.arm_shares,
                arms: episode.arms,
                seeds: Default::default(),
            };
            let r = regret(&record)?.regret;
            Ok((r, r / interior_fraction(&env)?))
        })
        .collect()
}

/// Frequency over fresh instances of the best fixed arm's interior-normalised
/// total reaching `T/2 + √T/4`, with its binomial standard error.
pub fn anti_concentration(config: &LowerBoundConfig, horizon: usize) -> Result<(f64, f64)> {
    if config.coin_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let seeds = SeedTree::new(config.seed);
    let threshold = horizon as f64 / 2.0 + (horizon as f64).sqrt() / 4.0;
    let hits: usize = (0..config.coin_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeds.stream("lower-bound/coins", &[horizon as u64, s as u64]);
            let env = build_lower_bound_instance(config.n, horizon, config.kernel.clone(), &mut rng)?;
            let scale = 1.0 / interior_fraction(&env)?;
            let table = env.counterfactual_table();
            let best = (0..2)
                .map(|a| table.iter().map(|row| row[a]).sum::<f64>() * scale)
                .fold(f64::NEG_INFINITY, f64::max);
            // Interior-normalised totals are half-integers; allow rounding slack.
            Ok(usize::from(best >= threshold - 1e-9))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let p = hits as f64 / config.coin_samples as f64;
    Ok((p, (p * (1.0 - p) / config.coin_samples as f64).sqrt()))
}

pub fn exceedance_floor(horizon: usize) -> f64 {
    let s = (horizon as f64).sqrt() / 4.0;
    (-16.0 * s * s / horizon as f64).exp() / 15.0
}

pub fn lower_bound_demo(config: &LowerBoundConfig) -> Result<Vec<LowerBoundRow>> {
    if config.runs == 0 || config.horizons.is_empty() {
        return Err(Error::Config("lower-bound demo needs runs >= 1 and at least one horizon".into()));
    }
    config.horizons.iter().map(|&horizon| {
        let regrets = switchback_regrets(config, horizon)?;
        let def1: Vec<f64> = regrets.iter().map(|r| r.0).collect();
        let runs = def1.len() as f64;
        let (freq, se) = anti_concentration(config, horizon)?;
        let m = crate::geometry::exact_sqrt(config.n).unwrap_or(0);
        Ok(LowerBoundRow {
            horizon,
            units: (4 * m + 1) * (4 * m + 1),
            runs: config.runs,
            mean_regret: def1.iter().sum::<f64>() / runs,
            mean_regret_interior: regrets.iter().map(|r| r.1).sum::<f64>() / runs,
            q95_regret: quantile(&def1, 0.95)?,
            exceedance_frequency: freq,
            exceedance_se: se,
            exceedance_floor: exceedance_floor(horizon),
        })
    }).collect()
}
