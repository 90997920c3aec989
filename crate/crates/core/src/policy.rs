//! Online policies: EXP3 weights, the switchback EXP3-IX baseline, EXP3-HT-IX
//! on robust randomized partitions, and fixed arms.
//!
//! Weights are kept as log-weights re-centred to a maximum of zero after each
//! update, and estimates are shifted by their own maximum before being
//! applied. An update by a constant vector is therefore an exact no-op and
//! long horizons never overflow. The update is reward-based:
//! `W_a <- exp(η Ŷ(a)) W_a`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{AssignmentVector, InterferenceKernel, RewardModel};
use crate::error::{Error, Result};
use crate::estimator::{check_beta, ht_ix_estimates, ArmDistribution, ExposureModel, QMode};
use crate::partition::{sample_partition, ClusteringMode, Partition, PartitionSpec};

/// EXP3 weight state.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3State {
    log_weights: Vec<f64>,
    eta: f64,
    beta: f64,
    round: usize,
}

impl Exp3State {
    /// All weights 1. Requires `k >= 1`, `η ∈ (0, 1)`, `β ∈ [0, 1/2)`.
    pub fn new(k: usize, eta: f64, beta: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one arm".into()));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidArgument(format!("η must lie in (0, 1), got {eta}")));
        }
        check_beta(beta)?;
        Ok(Self { log_weights: vec![0.0; k], eta, beta, round: 0 })
    }

    /// Starts from explicit positive weights.
    pub fn with_weights(weights: &[f64], eta: f64, beta: f64) -> Result<Self> {
        let mut state = Self::new(weights.len(), eta, beta)?;
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument(format!("weights must be positive, got {weights:?}")));
        }
        state.log_weights = weights.iter().map(|w| w.ln()).collect();
        state.recenter();
        Ok(state)
    }

    pub fn arms(&self) -> usize {
        self.log_weights.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of updates applied so far.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Weights scaled so the largest is 1.
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn probs(&self) -> ArmDistribution {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        ArmDistribution::from_normalized(w.into_iter().map(|x| x / total).collect())
    }

    pub fn update(&mut self, estimates: &[f64]) -> Result<()> {
        if estimates.len() != self.arms() {
            return Err(Error::InvalidArgument(format!(
                "{} estimates for {} arms",
                estimates.len(),
                self.arms()
            )));
        }
        if estimates.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite estimate in {estimates:?}")));
        }
        let top = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (lw, e) in self.log_weights.iter_mut().zip(estimates) {
            *lw += self.eta * (e - top);
        }
        self.recenter();
        self.round += 1;
        Ok(())
    }

    fn recenter(&mut self) {
        let top = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for lw in &mut self.log_weights {
            *lw -= top;
        }
    }
}

pub fn exp3_probs(state: &Exp3State) -> ArmDistribution {
    state.probs()
}

pub fn exp3_update(state: &Exp3State, estimates: &[f64]) -> Result<Exp3State> {
    let mut next = state.clone();
    next.update(estimates)?;
    Ok(next)
}

/// Outcome of one policy round.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub assignment: AssignmentVector,
    /// `(1/N) Σ_u Y_ut(Z_t)`.
    pub mean_reward: f64,
    /// The arm played by every unit, for switchback and fixed-arm rounds.
    pub arm: Option<usize>,
    pub estimates: Vec<f64>,
}

fn check_round(env: &RewardModel, t: usize) -> Result<()> {
    if t == 0 || t > env.horizon() {
        return Err(Error::RoundOutOfRange { t, horizon: env.horizon() });
    }
    Ok(())
}

/// Single-arm IX estimate: `1(A = a)/(P_a + β) · y`.
fn single_arm_estimates(p: &ArmDistribution, arm: usize, y: f64, beta: f64) -> Vec<f64> {
    let mut est = vec![0.0; p.arms()];
    est[arm] = y / (p.prob(arm) + beta);
    est
}

/// One switchback round: draw `A_t`, give it to every unit, observe the mean
/// reward, update with the single-arm IX estimate.
pub fn switchback_step<R: Rng + ?Sized>(
    state: &mut Exp3State,
    env: &RewardModel,
    t: usize,
    rng: &mut R,
) -> Result<Step> {
    check_round(env, t)?;
    if state.arms() != env.arms() {
        return Err(Error::InvalidArgument("policy and environment disagree on k".into()));
    }
    let p = state.probs();
    let arm = p.sample(rng);
    let z = vec![arm; env.units()];
    let y = env.mean_unchecked(t, &z);
    let estimates = single_arm_estimates(&p, arm, y, state.beta());
    state.update(&estimates)?;
    Ok(Step {
        assignment: AssignmentVector::from_raw(z, env.arms()),
        mean_reward: y,
        arm: Some(arm),
        estimates,
    })
}

/// Plain EXP3-IX on a `T × k` reward table, one uniform per round. Returns
/// the arms played and the rewards collected.
pub fn exp3ix_on_table<R: Rng + ?Sized>(
    table: &[Vec<f64>],
    eta: f64,
    beta: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let k = table.first().map_or(0, Vec::len);
    let mut state = Exp3State::new(k, eta, beta)?;
    let mut arms = Vec::with_capacity(table.len());
    let mut rewards = Vec::with_capacity(table.len());
    for row in table {
        if row.len() != k {
            return Err(Error::InvalidArgument("ragged reward table".into()));
        }
        let p = state.probs();
        let arm = p.sample(rng);
        let y = row[arm];
        state.update(&single_arm_estimates(&p, arm, y, beta))?;
        arms.push(arm);
        rewards.push(y);
    }
    Ok((arms, rewards))
}

/// Draws one arm per cluster in cluster-id order and broadcasts it.
pub fn cluster_assignment<R: Rng + ?Sized>(
    model: &ExposureModel,
    partition: &Partition,
    p: &ArmDistribution,
    rng: &mut R,
) -> AssignmentVector {
    let spec = partition.spec();
    let per_axis = spec.cells_per_axis();
    let cluster_arms: Vec<usize> = (0..spec.cluster_count()).map(|_| p.sample(rng)).collect();
    let layout = model.layout();
    let z = (0..model.universe().len())
        .map(|u| cluster_arms[layout.cluster_of_unit(partition, u).linear(per_axis)])
        .collect();
    AssignmentVector::from_raw(z, p.arms())
}

/// One round of EXP3-HT-IX. A fresh partition is drawn from `partition_rng`
/// unless `fixed` supplies one.
#[allow(clippy::too_many_arguments)]
pub fn exp3_ht_ix_step<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    state: &mut Exp3State,
    env: &RewardModel,
    model: &ExposureModel,
    mode: QMode,
    t: usize,
    fixed: Option<&Partition>,
    partition_rng: &mut R1,
    arm_rng: &mut R2,
) -> Result<Step> {
    check_round(env, t)?;
    if state.arms() != env.arms() {
        return Err(Error::InvalidArgument("policy and environment disagree on k".into()));
    }
    if model.universe().len() != env.units() {
        return Err(Error::InvalidArgument("exposure model and environment disagree on N".into()));
    }
    let fresh;
    let partition = match fixed {
        Some(p) => p,
        None => {
            fresh = sample_partition(model.layout().spec(), partition_rng);
            &fresh
        }
    };
    let p = state.probs();
    let z = cluster_assignment(model, partition, &p, arm_rng);
    let rewards: Vec<f64> = (0..env.units()).map(|u| env.reward(u, t, z.arms())).collect();
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let report = model.report(&z, &p, mode, Some(partition))?;
    let estimates = ht_ix_estimates(&rewards, &report, state.beta())?;
    state.update(&estimates)?;
    Ok(Step { assignment: z, mean_reward, arm: None, estimates })
}

/// Which policy to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    FixedArm { arm: usize },
    SwitchbackExp3ix,
    Exp3HtIx {
        cell_side: f64,
        radius: f64,
        #[serde(default)]
        clustering: ClusteringMode,
    },
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::FixedArm { .. } => "fixed-arm",
            PolicyKind::SwitchbackExp3ix => "switchback-exp3ix",
            PolicyKind::Exp3HtIx { .. } => "exp3-ht-ix",
        }
    }
}

/// A policy with its tuning; serialises into run manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub eta: f64,
    pub beta: f64,
    #[serde(default)]
    pub q_mode: QMode,
    /// Draw one partition per episode instead of one per round.
    #[serde(default)]
    pub fixed_partition: bool,
}

impl PolicyConfig {
    pub fn validate(&self, arms: usize) -> Result<()> {
        match self.kind {
            PolicyKind::FixedArm { arm } if arm >= arms => {
                return Err(Error::InvalidArgument(format!("fixed arm {arm} out of range for k = {arms}")))
            }
            PolicyKind::Exp3HtIx { cell_side, radius, .. } if !(radius >= 0.0 && 2.0 * radius < cell_side) => {
                return Err(Error::Precondition(format!(
                    "EXP3-HT-IX needs 0 <= 2r < ℓ, got r = {radius}, ℓ = {cell_side}"
                )))
            }
            _ => {}
        }
        Exp3State::new(arms, self.eta, self.beta).map(|_| ())
    }

    /// Partition spec over the environment's bounding box, for EXP3-HT-IX.
    pub fn partition_spec(&self, env: &RewardModel) -> Result<Option<PartitionSpec>> {
        match self.kind {
            PolicyKind::Exp3HtIx { cell_side, radius, clustering } => Ok(Some(
                PartitionSpec::for_universe(env.universe(), cell_side, radius)?.with_mode(clustering),
            )),
            _ => Ok(None),
        }
    }

    pub fn exposure_model(&self, env: &RewardModel) -> Result<Option<ExposureModel>> {
        match (self.partition_spec(env)?, self.kind) {
            (Some(spec), PolicyKind::Exp3HtIx { radius, .. }) => {
                Ok(Some(ExposureModel::new(&spec, Arc::clone(env.universe()), radius)?))
            }
            _ => Ok(None),
        }
    }
}

/// One policy run over rounds `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// `R_t`, the realised mean reward of each round.
    pub realized: Vec<f64>,
    /// Share of units on each arm, per round.
    pub arm_shares: Vec<Vec<f64>>,
    /// The arm of each round when every unit shares it.
    pub arms: Option<Vec<usize>>,
}

/// Runs `config` on `env`. `model` may be shared across episodes with the
/// same geometry; it is built on the fly when absent.
pub fn run_episode<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    config: &PolicyConfig,
    env: &RewardModel,
    model: Option<&ExposureModel>,
    partition_rng: &mut R1,
    arm_rng: &mut R2,
) -> Result<Episode> {
    config.validate(env.arms())?;
    let horizon = env.horizon();
    let k = env.arms();
    let mut realized = Vec::with_capacity(horizon);
    let mut arm_shares = Vec::with_capacity(horizon);
    let mut arms = Vec::with_capacity(horizon);
    let mut state = Exp3State::new(k, config.eta, config.beta)?;
    match config.kind {
        PolicyKind::FixedArm { arm } => {
            let z = vec![arm; env.units()];
            let mut share = vec![0.0; k];
            share[arm] = 1.0;
            for t in 1..=horizon {
                realized.push(env.mean_unchecked(t, &z));
                arm_shares.push(share.clone());
                arms.push(arm);
            }
        }
        PolicyKind::SwitchbackExp3ix => {
            for t in 1..=horizon {
                let step = switchback_step(&mut state, env, t, arm_rng)?;
                let arm = step.arm.expect("switchback plays one arm");
                let mut share = vec![0.0; k];
                share[arm] = 1.0;
                realized.push(step.mean_reward);
                arm_shares.push(share);
                arms.push(arm);
            }
        }
        PolicyKind::Exp3HtIx { .. } => {
            let built;
            let model = match model {
                Some(m) => m,
                None => {
                    built = config.exposure_model(env)?.expect("EXP3-HT-IX has a model");
                    &built
                }
            };
            let fixed = config
                .fixed_partition
                .then(|| sample_partition(model.layout().spec(), partition_rng));
            let mut uniform = true;
            for t in 1..=horizon {
                let step =
                    exp3_ht_ix_step(&mut state, env, model, config.q_mode, t, fixed.as_ref(), partition_rng, arm_rng)?;
                let share = step.assignment.arm_shares();
                match share.iter().position(|&s| s == 1.0) {
                    Some(a) => arms.push(a),
                    None => uniform = false,
                }
                realized.push(step.mean_reward);
                arm_shares.push(share);
            }
            if !uniform {
                return Ok(Episode { realized, arm_shares, arms: None });
            }
        }
    }
    Ok(Episode { realized, arm_shares, arms: Some(arms) })
}

/// Parameters prescribed by the regret analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultParameters {
    pub eta: f64,
    pub beta: f64,
    pub cell_side: f64,
    pub radius: f64,
}

const PARAM_FLOOR: f64 = 1e-12;

/// `η = √(ln k/(kT))`, `β = √(ℓ²/(kNT) ln(1/δ))` and the kernel's suggested
/// `(ℓ, r)`:
///
/// * SUTVA: singleton clustering on a unit lattice, `ℓ = 1`, `r = 1/4`;
/// * `κ`-neighbourhood (or any kernel vanishing from `κ` on): `r = κ`, `ℓ = κ√T`;
/// * power law `r^-c`: `m = min((N/T)^((2+c)/(3+c)), N^(2c/(2c+1)) T^(-(2c-1)/(2c+1)))`,
///   `ℓ = √(N/m)`, `r = ℓ/√T`.
///
/// `cell_side` overrides the suggested `ℓ` in `β`. `η` and `β` are clamped
/// into `(0, 1)` and `(0, 1/2)`; a suggested `r` with `2r >= ℓ` is an error.
pub fn default_parameters(
    k: usize,
    horizon: usize,
    n: usize,
    cell_side: Option<f64>,
    delta: f64,
    kernel: &InterferenceKernel,
) -> Result<DefaultParameters> {
    if k == 0 || horizon == 0 || n == 0 {
        return Err(Error::InvalidArgument("k, T and N must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ must lie in (0, 1), got {delta}")));
    }
    kernel.validate()?;
    let (ell, r) = suggested_geometry(kernel, horizon as f64, n as f64)?;
    if !(2.0 * r < ell) {
        return Err(Error::Precondition(format!(
            "prescribed radius r = {r} violates 2r < ℓ = {ell}; use a longer horizon or set ℓ, r explicitly"
        )));
    }
    let (eta, beta) = learning_rates(k, horizon, n, cell_side.unwrap_or(ell), delta)?;
    Ok(DefaultParameters { eta, beta, cell_side: ell, radius: r })
}

/// `η = √(ln k/(kT))` and `β = √(ℓ²/(kNT) ln(1/δ))`, clamped into `(0, 1)`
/// and `(0, 1/2)`. Switchback uses `N = 1`, `ℓ = 1`.
pub fn learning_rates(k: usize, horizon: usize, n: usize, cell_side: f64, delta: f64) -> Result<(f64, f64)> {
    if k == 0 || horizon == 0 || n == 0 || !(cell_side > 0.0) {
        return Err(Error::InvalidArgument("k, T, N and ℓ must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ must lie in (0, 1), got {delta}")));
    }
    let (kf, tf, nf) = (k as f64, horizon as f64, n as f64);
    let eta = (kf.ln() / (kf * tf)).sqrt().clamp(PARAM_FLOOR, 1.0 - PARAM_FLOOR);
    let beta = (cell_side * cell_side / (kf * nf * tf) * (1.0 / delta).ln())
        .sqrt()
        .clamp(PARAM_FLOOR, 0.5 - PARAM_FLOOR);
    Ok((eta, beta))
}

fn suggested_geometry(kernel: &InterferenceKernel, t: f64, n: f64) -> Result<(f64, f64)> {
    match kernel {
        InterferenceKernel::Sutva => Ok((1.0, 0.25)),
        InterferenceKernel::KappaNeighborhood { kappa } => Ok((kappa * t.sqrt(), *kappa)),
        InterferenceKernel::PowerLaw { exponent: c } => {
            let a = (n / t).powf((2.0 + c) / (3.0 + c));
            let b = n.powf(2.0 * c / (2.0 * c + 1.0)) * t.powf(-(2.0 * c - 1.0) / (2.0 * c + 1.0));
            let m = a.min(b).max(1.0);
            let ell = (n / m).sqrt();
            Ok((ell, ell / t.sqrt()))
        }
        other => {
            // Compactly supported kernels behave like a κ-neighbourhood with
            // κ the first integer radius where ψ vanishes.
            let support = (0..=1_000_000)
                .find(|&r| other.psi(r as f64) == 0.0)
                .ok_or_else(|| Error::Unsupported(format!("no default geometry for kernel {other:?}")))?;
            if support == 0 {
                return Ok((1.0, 0.25));
            }
            let kappa = support as f64;
            Ok((kappa * t.sqrt(), kappa))
        }
    }
}
