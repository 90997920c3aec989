//! Reward models `Y_ut : [k]^U -> [0, 1]` with decaying interference.
//!
//! Three families are provided:
//!
//! * **lattice-neighbor**: units on a square lattice; the reward of `u` at
//!   round `t` is `(1 + (2ρ - 1) c)/2`, where `ρ` is the share of `u`'s
//!   von Neumann neighbourhood (including `u`) on arm 1 and `c` is the value
//!   of `u`'s piecewise-constant drift at `t`. The neighbourhood is clipped
//!   to the open ball `B(u, κ)`, so `κ <= 1` gives a SUTVA model and any
//!   `κ > 1` the full five-unit stencil.
//! * **lower-bound**: the hard instance on a `(4m+1)`-sided grid: interior
//!   units earn `1/2 + (ξ_t - 1/2) f_u(z)` with `f_u` the hypercube extension
//!   around `u`, exterior units earn 0, and `ξ_t` are fair coin flips.
//! * **uniform-constant**: every reward equals one constant.
//!
//! All randomness is drawn at construction, so evaluation is pure.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exact_sqrt, sup_distance, LatticeShape, UnitUniverse};

/// Non-increasing interference kernel `ψ : [0, ∞) -> [0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "kebab-case")]
pub enum InterferenceKernel {
    /// `ψ(r) = 1(r = 0)`.
    Sutva,
    /// `ψ(r) = 1(κ > r)`.
    KappaNeighborhood { kappa: f64 },
    /// `ψ(r) = min(1, r^-c)`.
    PowerLaw { exponent: f64 },
    /// `ψ(r) = values[floor(r)]`, extended by the last value.
    Tabulated { values: Vec<f64> },
    /// `ψ(r)` of the inner kernel below `support`, zero from there on.
    Truncated {
        inner: Box<InterferenceKernel>,
        support: f64,
    },
}

impl InterferenceKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            InterferenceKernel::Sutva => Ok(()),
            InterferenceKernel::KappaNeighborhood { kappa } if kappa.is_finite() && *kappa > 0.0 => Ok(()),
            InterferenceKernel::PowerLaw { exponent } if exponent.is_finite() && *exponent >= 1.0 => Ok(()),
            InterferenceKernel::Tabulated { values }
                if !values.is_empty()
                    && values.iter().all(|v| v.is_finite() && *v >= 0.0)
                    && values.windows(2).all(|w| w[1] <= w[0]) =>
            {
                Ok(())
            }
            InterferenceKernel::Truncated { inner, support } if *support >= 0.0 => inner.validate(),
            other => Err(Error::InvalidArgument(format!("invalid interference kernel {other:?}"))),
        }
    }

    pub fn psi(&self, r: f64) -> f64 {
        match self {
            InterferenceKernel::Sutva => {
                if r == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            InterferenceKernel::KappaNeighborhood { kappa } => {
                if *kappa > r {
                    1.0
                } else {
                    0.0
                }
            }
            InterferenceKernel::PowerLaw { exponent } => {
                if r <= 1.0 {
                    1.0
                } else {
                    r.powf(-exponent)
                }
            }
            InterferenceKernel::Tabulated { values } => {
                let idx = (r.max(0.0).floor() as usize).min(values.len() - 1);
                values[idx]
            }
            InterferenceKernel::Truncated { inner, support } => {
                if r < *support {
                    inner.psi(r)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn truncated(self, support: f64) -> Self {
        InterferenceKernel::Truncated { inner: Box::new(self), support }
    }
}

/// An arm for every unit, `z ∈ [k]^U`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssignmentVector {
    arms: Vec<usize>,
    arm_count: usize,
}

impl AssignmentVector {
    pub fn new(arms: Vec<usize>, arm_count: usize) -> Result<Self> {
        if let Some(bad) = arms.iter().find(|&&a| a >= arm_count) {
            return Err(Error::InvalidArgument(format!("arm {bad} out of range for k = {arm_count}")));
        }
        Ok(Self { arms, arm_count })
    }

    /// `a · 1^U`.
    pub fn constant(arm: usize, units: usize, arm_count: usize) -> Self {
        assert!(arm < arm_count, "arm {arm} out of range for k = {arm_count}");
        Self { arms: vec![arm; units], arm_count }
    }

    pub(crate) fn from_raw(arms: Vec<usize>, arm_count: usize) -> Self {
        debug_assert!(arms.iter().all(|&a| a < arm_count));
        Self { arms, arm_count }
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn arm_count(&self) -> usize {
        self.arm_count
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn arm(&self, u: usize) -> usize {
        self.arms[u]
    }

    /// Share of units on each arm.
    pub fn arm_shares(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.arm_count];
        for &a in &self.arms {
            counts[a] += 1;
        }
        let n = self.arms.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Number of pieces in a drift profile.
pub const DRIFT_PIECES: usize = 8;

/// Piecewise-constant drift over rounds `1..=T`: pieces are `ceil(T/8)` long
/// except possibly the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    horizon: usize,
    values: [f64; DRIFT_PIECES],
}

impl DriftProfile {
    pub fn new(horizon: usize, values: [f64; DRIFT_PIECES]) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(Self { horizon, values })
    }

    pub fn sample<R: Rng + ?Sized>(horizon: usize, rng: &mut R) -> Self {
        let mut values = [0.0; DRIFT_PIECES];
        for v in &mut values {
            *v = rng.gen::<f64>();
        }
        Self { horizon: horizon.max(1), values }
    }

    pub fn piece_len(&self) -> usize {
        self.horizon.div_ceil(DRIFT_PIECES)
    }

    pub fn values(&self) -> &[f64; DRIFT_PIECES] {
        &self.values
    }

    /// Drift at round `t` (1-based).
    pub fn value_at(&self, t: usize) -> f64 {
        let piece = ((t.max(1) - 1) / self.piece_len()).min(DRIFT_PIECES - 1);
        self.values[piece]
    }
}

/// Largest `r <= m` such that every window cell strictly within sup-distance
/// `r` of the centre is set. `window` is the row-major `(2m+1)^2` block.
pub fn r_star(window: &[bool], m: usize) -> Result<usize> {
    let side = 2 * m + 1;
    if window.len() != side * side {
        return Err(Error::InvalidArgument(format!(
            "window has {} cells, expected {}",
            window.len(),
            side * side
        )));
    }
    let nearest_unset = window
        .iter()
        .enumerate()
        .filter(|(_, &set)| !set)
        .map(|(idx, _)| (idx / side).abs_diff(m).max((idx % side).abs_diff(m)))
        .min();
    Ok(nearest_unset.map_or(m, |d| d.min(m)))
}

/// The extension `f(z) = ψ(0) - ψ(r⋆(z))` of the corner values
/// `f(0) = 0`, `f(1) = ψ(0) - ψ(m)` to the whole hypercube, restricted to
/// the `(2m+1)`-sided window around `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypercubeExtension {
    pub center: usize,
    pub half_width: usize,
    pub kernel: InterferenceKernel,
}

impl HypercubeExtension {
    pub fn new(center: usize, half_width: usize, kernel: InterferenceKernel) -> Result<Self> {
        kernel.validate()?;
        Ok(Self { center, half_width, kernel })
    }

    /// `r⋆` of `z` restricted to the window. Window cells missing from the
    /// universe do not constrain it.
    pub fn r_star(&self, universe: &UnitUniverse, z: &AssignmentVector) -> Result<usize> {
        if z.len() != universe.len() {
            return Err(Error::InvalidArgument(format!(
                "assignment has {} entries, universe has {}",
                z.len(),
                universe.len()
            )));
        }
        let m = self.half_width;
        let center = universe.point(self.center)?;
        if let Some(shape) = universe.lattice_shape() {
            return Ok(lattice_r_star(shape, self.center, m, z.arms()));
        }
        let nearest = universe
            .units()
            .iter()
            .zip(z.arms())
            .filter(|(_, &a)| a != 1)
            .map(|(&p, _)| sup_distance(center, p))
            .filter(|&d| d <= m as f64)
            .fold(f64::INFINITY, f64::min);
        Ok(if nearest.is_finite() { (nearest.floor() as usize).min(m) } else { m })
    }

    pub fn value(&self, universe: &UnitUniverse, z: &AssignmentVector) -> Result<f64> {
        if z.arm_count() != 2 {
            return Err(Error::Unsupported(format!(
                "hypercube extension needs k = 2, got k = {}",
                z.arm_count()
            )));
        }
        let r = self.r_star(universe, z)?;
        Ok(self.value_at_radius(r))
    }

    pub fn value_at_radius(&self, r: usize) -> f64 {
        self.kernel.psi(0.0) - self.kernel.psi(r as f64)
    }
}

pub fn extension_value(ext: &HypercubeExtension, universe: &UnitUniverse, z: &AssignmentVector) -> Result<f64> {
    ext.value(universe, z)
}

/// Ring-by-ring scan outward from `center`; stops at the first unit not on arm 1.
fn lattice_r_star(shape: LatticeShape, center: usize, m: usize, arms: &[usize]) -> usize {
    let (c, w) = shape.col_row(center);
    if arms[center] != 1 {
        return 0;
    }
    for d in 1..m as isize {
        for k in -d..=d {
            let ring = [(c + k, w - d), (c + k, w + d), (c - d, w + k), (c + d, w + k)];
            for (x, y) in ring {
                if let Some(v) = shape.id(x, y) {
                    if arms[v] != 1 {
                        return d as usize;
                    }
                }
            }
        }
    }
    m
}

/// Serializable description of a reward model; together with the
/// environment seed it reproduces the model exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum ModelDescriptor {
    LatticeNeighbor { side: usize, kappa: f64 },
    LowerBound { n: usize, kernel: InterferenceKernel },
    UniformConstant { side: usize, value: f64 },
}

#[derive(Debug, Clone)]
enum Variant {
    LatticeNeighbor {
        neighbor_start: Vec<usize>,
        neighbors: Vec<usize>,
        drifts: Vec<DriftProfile>,
    },
    LowerBound {
        window: usize,
        interior: Vec<bool>,
        xi: Vec<bool>,
    },
    UniformConstant {
        value: f64,
    },
}

/// A fully specified MABI reward environment.
#[derive(Debug, Clone)]
pub struct RewardModel {
    universe: Arc<UnitUniverse>,
    kernel: InterferenceKernel,
    arms: usize,
    horizon: usize,
    descriptor: ModelDescriptor,
    variant: Variant,
}

impl RewardModel {
    pub fn build<R: Rng + ?Sized>(
        descriptor: &ModelDescriptor,
        arms: usize,
        horizon: usize,
        rng: &mut R,
    ) -> Result<Self> {
        match descriptor {
            ModelDescriptor::LatticeNeighbor { side, kappa } => {
                let universe = Arc::new(UnitUniverse::lattice_with_side(*side));
                Self::lattice_neighbor(universe, arms, horizon, *kappa, rng)
            }
            ModelDescriptor::LowerBound { n, kernel } => {
                if arms != 2 {
                    return Err(Error::Unsupported(format!("lower-bound instance needs k = 2, got {arms}")));
                }
                build_lower_bound_instance(*n, horizon, kernel.clone(), rng)
            }
            ModelDescriptor::UniformConstant { side, value } => {
                let universe = Arc::new(UnitUniverse::lattice_with_side(*side));
                Self::uniform_constant(universe, arms, horizon, *value)
            }
        }
    }

    /// Lattice model with per-unit drifts drawn from `rng` in unit order.
    pub fn lattice_neighbor<R: Rng + ?Sized>(
        universe: Arc<UnitUniverse>,
        arms: usize,
        horizon: usize,
        kappa: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_dims(arms, horizon)?;
        let shape = universe.lattice_shape().ok_or_else(|| {
            Error::Unsupported("lattice-neighbor model needs a lattice universe".into())
        })?;
        let kernel = InterferenceKernel::KappaNeighborhood { kappa };
        kernel.validate()?;
        let mut neighbor_start = Vec::with_capacity(universe.len() + 1);
        let mut neighbors = Vec::with_capacity(universe.len() * 5);
        for u in 0..universe.len() {
            neighbor_start.push(neighbors.len());
            let (c, w) = shape.col_row(u);
            for (dc, dr) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)] {
                if let Some(v) = shape.id(c + dc, w + dr) {
                    if sup_distance(universe.units()[u], universe.units()[v]) < kappa {
                        neighbors.push(v);
                    }
                }
            }
        }
        neighbor_start.push(neighbors.len());
        let drifts = (0..universe.len()).map(|_| DriftProfile::sample(horizon, rng)).collect();
        Ok(Self {
            descriptor: ModelDescriptor::LatticeNeighbor { side: shape.side, kappa },
            universe,
            kernel,
            arms,
            horizon,
            variant: Variant::LatticeNeighbor { neighbor_start, neighbors, drifts },
        })
    }

    pub fn uniform_constant(universe: Arc<UnitUniverse>, arms: usize, horizon: usize, value: f64) -> Result<Self> {
        check_dims(arms, horizon)?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!("constant reward {value} outside [0, 1]")));
        }
        let side = universe.lattice_shape().map_or(0, |s| s.side);
        Ok(Self {
            descriptor: ModelDescriptor::UniformConstant { side, value },
            universe,
            kernel: InterferenceKernel::Sutva,
            arms,
            horizon,
            variant: Variant::UniformConstant { value },
        })
    }

    pub fn universe(&self) -> &Arc<UnitUniverse> {
        &self.universe
    }

    pub fn kernel(&self) -> &InterferenceKernel {
        &self.kernel
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn units(&self) -> usize {
        self.universe.len()
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    /// Interior flags of a lower-bound instance.
    pub fn interior_mask(&self) -> Option<&[bool]> {
        match &self.variant {
            Variant::LowerBound { interior, .. } => Some(interior),
            _ => None,
        }
    }

    /// The coin flips `ξ_t` of a lower-bound instance.
    pub fn coin_flips(&self) -> Option<&[bool]> {
        match &self.variant {
            Variant::LowerBound { xi, .. } => Some(xi),
            _ => None,
        }
    }

    pub fn drift(&self, u: usize) -> Option<&DriftProfile> {
        match &self.variant {
            Variant::LatticeNeighbor { drifts, .. } => drifts.get(u),
            _ => None,
        }
    }

    fn check_round(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::RoundOutOfRange { t, horizon: self.horizon });
        }
        Ok(())
    }

    fn check_assignment(&self, z: &AssignmentVector) -> Result<()> {
        if z.len() != self.universe.len() || z.arm_count() != self.arms {
            return Err(Error::InvalidArgument(format!(
                "assignment of {} units over {} arms does not fit a model of {} units over {} arms",
                z.len(),
                z.arm_count(),
                self.universe.len(),
                self.arms
            )));
        }
        Ok(())
    }

    /// `Y_ut(z)` for round `t` in `1..=T`.
    pub fn eval_reward(&self, u: usize, t: usize, z: &AssignmentVector) -> Result<f64> {
        self.check_round(t)?;
        self.check_assignment(z)?;
        self.universe.check_unit(u)?;
        Ok(self.reward(u, t, z.arms()))
    }

    /// Rewards of every unit, in unit order.
    pub fn eval_all(&self, t: usize, z: &AssignmentVector) -> Result<Vec<f64>> {
        self.check_round(t)?;
        self.check_assignment(z)?;
        Ok((0..self.universe.len()).map(|u| self.reward(u, t, z.arms())).collect())
    }

    /// `(1/N) Σ_u Y_ut(z)`, summed in unit order.
    pub fn mean_reward(&self, t: usize, z: &AssignmentVector) -> Result<f64> {
        self.check_round(t)?;
        self.check_assignment(z)?;
        Ok(self.mean_unchecked(t, z.arms()))
    }

    /// `Ȳ_t(a) = (1/N) Σ_u Y_ut(a · 1^U)`.
    pub fn counterfactual_mean(&self, t: usize, a: usize) -> Result<f64> {
        self.check_round(t)?;
        if a >= self.arms {
            return Err(Error::InvalidArgument(format!("arm {a} out of range for k = {}", self.arms)));
        }
        let z = vec![a; self.universe.len()];
        Ok(self.mean_unchecked(t, &z))
    }

    /// `T × k` table of counterfactual means; row `t - 1` holds round `t`.
    pub fn counterfactual_table(&self) -> Vec<Vec<f64>> {
        let mut constants: Vec<Vec<usize>> = (0..self.arms).map(|a| vec![a; self.universe.len()]).collect();
        (1..=self.horizon)
            .map(|t| constants.iter_mut().map(|z| self.mean_unchecked(t, z)).collect())
            .collect()
    }

    pub(crate) fn mean_unchecked(&self, t: usize, z: &[usize]) -> f64 {
        let n = self.universe.len();
        (0..n).map(|u| self.reward(u, t, z)).sum::<f64>() / n as f64
    }

    pub(crate) fn reward(&self, u: usize, t: usize, z: &[usize]) -> f64 {
        match &self.variant {
            Variant::LatticeNeighbor { neighbor_start, neighbors, drifts } => {
                let hood = &neighbors[neighbor_start[u]..neighbor_start[u + 1]];
                let on_one = hood.iter().filter(|&&v| z[v] == 1).count();
                let rho = on_one as f64 / hood.len() as f64;
                let c = drifts[u].value_at(t);
                (1.0 + (2.0 * rho - 1.0) * c) / 2.0
            }
            Variant::LowerBound { window, interior, xi } => {
                if !interior[u] {
                    return 0.0;
                }
                let shape = self.universe.lattice_shape().expect("lower-bound universe is a lattice");
                let r = lattice_r_star(shape, u, *window, z);
                let f = self.kernel.psi(0.0) - self.kernel.psi(r as f64);
                let coin = if xi[t - 1] { 1.0 } else { 0.0 };
                0.5 + (coin - 0.5) * f
            }
            Variant::UniformConstant { value } => *value,
        }
    }
}

fn check_dims(arms: usize, horizon: usize) -> Result<()> {
    if arms < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 arms, got {arms}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    Ok(())
}

/// The hard instance behind the `Ω(√(kT))` lower bound, for `k = 2`.
///
/// `n` must be a perfect square, `m = √n`. The universe is the integer grid of
/// side `4m + 1`; the interior is the centred subgrid of side `2m + 1`. The
/// kernel must satisfy `ψ(0) = 1`; when `ψ(m) > 0` it is truncated to zero
/// from `m` on so that the all-ones window pays `ξ_t` exactly.
pub fn build_lower_bound_instance<R: Rng + ?Sized>(
    n: usize,
    horizon: usize,
    kernel: InterferenceKernel,
    rng: &mut R,
) -> Result<RewardModel> {
    check_dims(2, horizon)?;
    kernel.validate()?;
    let m = exact_sqrt(n)
        .ok_or_else(|| Error::InvalidArgument(format!("lower-bound size {n} is not a positive perfect square")))?;
    if kernel.psi(0.0) != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "lower-bound kernel needs ψ(0) = 1, got {}",
            kernel.psi(0.0)
        )));
    }
    let effective = if kernel.psi(m as f64) == 0.0 {
        kernel.clone()
    } else {
        kernel.clone().truncated(m as f64)
    };
    let side = 4 * m + 1;
    let universe = Arc::new(UnitUniverse::lattice_with_side(side));
    let interior: Vec<bool> = universe
        .units()
        .iter()
        .map(|p| p.x.abs() <= m as f64 && p.y.abs() <= m as f64)
        .collect();
    // Every interior window stays inside the grid.
    debug_assert!(universe
        .units()
        .iter()
        .zip(&interior)
        .filter(|(_, &i)| i)
        .all(|(p, _)| p.x.abs() + m as f64 <= 2.0 * m as f64 && p.y.abs() + m as f64 <= 2.0 * m as f64));
    let xi = (0..horizon).map(|_| rng.gen::<bool>()).collect();
    Ok(RewardModel {
        universe,
        kernel: effective,
        arms: 2,
        horizon,
        descriptor: ModelDescriptor::LowerBound { n, kernel },
        variant: Variant::LowerBound { window: m, interior, xi },
    })
}

/// Outcome of [`verify_dip`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DipReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `|Y(z) - Y(z')| - ψ(r)` seen; negative when every pair had slack.
    pub max_excess: f64,
}

const DIP_TOLERANCE: f64 = 1e-12;

/// Samples `(u, t, r, z, z')` with `z` and `z'` equal on `B(u, r)` and counts
/// pairs whose reward gap exceeds `ψ(r)`.
pub fn verify_dip<R: Rng + ?Sized>(model: &RewardModel, samples: usize, rng: &mut R) -> DipReport {
    let n = model.units();
    let k = model.arms();
    let reach = (2.0 * model.universe().half_width()).min(12.0);
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..samples {
        let u = rng.gen_range(0..n);
        let t = rng.gen_range(1..=model.horizon());
        let r = if rng.gen_bool(0.5) {
            rng.gen_range(0..=reach.ceil() as usize) as f64
        } else {
            rng.gen_range(0.0..reach)
        };
        let z = structured_assignment(n, k, rng);
        let mut other = structured_assignment(n, k, rng);
        for v in model.universe().ball(u, r).expect("valid unit") {
            other[v] = z[v];
        }
        let gap = (model.reward(u, t, &z) - model.reward(u, t, &other)).abs();
        let excess = gap - model.kernel().psi(r);
        max_excess = max_excess.max(excess);
        if excess > DIP_TOLERANCE {
            violations += 1;
        }
    }
    DipReport { samples, violations, max_excess }
}

/// Either uniform noise or a constant vector with sparse flips, so that both
/// small and large agreement radii get exercised.
fn structured_assignment<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if rng.gen_bool(0.3) {
        return (0..n).map(|_| rng.gen_range(0..k)).collect();
    }
    let base = rng.gen_range(0..k);
    let flip = [0.0, 0.01, 0.05, 0.2][rng.gen_range(0..4)];
    (0..n)
        .map(|_| if rng.gen_bool(flip) { rng.gen_range(0..k) } else { base })
        .collect()
}
