//! Exposure mappings, exposure probabilities under RRP cluster randomization,
//! and the HT-IX estimator.
//!
//! `Q` defaults to the marginal convention: the probability of exposure over
//! both the partition draw and the per-cluster arm draws. For a ball whose
//! cover meets exactly `j` distinct clusters with probability `h(j)`,
//! `Q(a) = Σ_j h(j) P_a^j`. The distribution `h` depends only on geometry, so
//! [`ExposureModel`] computes it once per equivalence class of covers and
//! reuses it for every round's `P`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::AssignmentVector;
use crate::error::{Error, Result};
use crate::geometry::UnitUniverse;
use crate::partition::{
    ball_cluster_count_distribution, ball_cluster_set, sample_partition, Partition, PartitionSpec, UnitLayout,
};

const SUM_TOLERANCE: f64 = 1e-12;

/// A probability vector over `k` arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDistribution {
    probs: Vec<f64>,
}

impl ArmDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("arm distribution needs at least one arm".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(format!("negative or non-finite probability in {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "need at least one arm");
        Self { probs: vec![1.0 / k as f64; k] }
    }

    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn arms(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, a: usize) -> f64 {
        self.probs[a]
    }

    /// Inverse-CDF draw from a single uniform; the last arm absorbs rounding.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // u landed in the rounding gap; return the last arm with positive mass.
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(self.probs.len() - 1)
    }
}

/// `X^r_{uta}(z)`: whether every unit of `B(u, r)` is assigned `a`.
pub fn exposure(universe: &UnitUniverse, z: &AssignmentVector, u: usize, a: usize, r: f64) -> Result<bool> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::InvalidArgument(format!("radius must be non-negative, got {r}")));
    }
    if z.len() != universe.len() {
        return Err(Error::InvalidArgument(format!(
            "assignment has {} entries, universe has {}",
            z.len(),
            universe.len()
        )));
    }
    Ok(universe.ball(u, r)?.into_iter().all(|v| z.arm(v) == a))
}

/// Exact marginal `Q^r_{uta}` under the RRP design with arm law `P`.
pub fn exposure_prob_analytic(
    spec: &PartitionSpec,
    universe: &UnitUniverse,
    u: usize,
    a: usize,
    r: f64,
    p: &ArmDistribution,
) -> Result<f64> {
    check_arm(a, p)?;
    let dist = ball_cluster_count_distribution(spec, universe, u, r)?;
    Ok(mix(&dist, p.prob(a)))
}

/// Empirical exposure frequency over fresh partition and arm draws. Arms are
/// drawn only for the clusters the ball meets, in cluster-id order.
#[allow(clippy::too_many_arguments)]
pub fn exposure_prob_mc<R: Rng + ?Sized>(
    spec: &PartitionSpec,
    universe: &UnitUniverse,
    u: usize,
    a: usize,
    r: f64,
    p: &ArmDistribution,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    check_arm(a, p)?;
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut hits = 0usize;
    for _ in 0..samples {
        let partition = sample_partition(spec, rng);
        let clusters = ball_cluster_set(&partition, universe, u, r)?;
        let mut exposed = true;
        for _ in &clusters {
            exposed &= p.sample(rng) == a;
        }
        hits += usize::from(exposed);
    }
    Ok(hits as f64 / samples as f64)
}

fn check_arm(a: usize, p: &ArmDistribution) -> Result<()> {
    if a >= p.arms() {
        return Err(Error::InvalidArgument(format!("arm {a} out of range for k = {}", p.arms())));
    }
    Ok(())
}

/// `Σ_j h[j] p^j`.
fn mix(dist: &[f64], p: f64) -> f64 {
    let mut pow = 1.0;
    let mut acc = 0.0;
    for &h in dist {
        acc += h * pow;
        pow *= p;
    }
    acc
}

/// How exposure probabilities are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QMode {
    /// Over both partition and arm draws.
    #[default]
    Marginal,
    /// Over arm draws only, given the realised partition.
    Conditional,
}

/// Which arm, if any, a unit is exposed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exposed {
    /// Empty ball: exposed to every arm.
    All,
    Arm(usize),
    None,
}

/// Per-unit, per-arm exposure indicators and probabilities for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureReport {
    arms: usize,
    exposed: Vec<Exposed>,
    /// Row-major `N × k`.
    q: Vec<f64>,
}

impl ExposureReport {
    pub fn new(arms: usize, exposed: Vec<Exposed>, q: Vec<f64>) -> Result<Self> {
        if q.len() != exposed.len() * arms {
            return Err(Error::InvalidArgument(format!(
                "{} probabilities for {} units over {arms} arms",
                q.len(),
                exposed.len()
            )));
        }
        if q.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("exposure probability outside [0, 1]".into()));
        }
        Ok(Self { arms, exposed, q })
    }

    pub fn units(&self) -> usize {
        self.exposed.len()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn indicator(&self, u: usize, a: usize) -> bool {
        match self.exposed[u] {
            Exposed::All => true,
            Exposed::Arm(b) => a == b,
            Exposed::None => false,
        }
    }

    pub fn q(&self, u: usize, a: usize) -> f64 {
        self.q[u * self.arms + a]
    }

    pub fn exposed(&self) -> &[Exposed] {
        &self.exposed
    }

    /// Columns `unit, arm, X, Q`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit", "arm", "X", "Q"])?;
        for u in 0..self.units() {
            for a in 0..self.arms {
                w.write_record([
                    u.to_string(),
                    a.to_string(),
                    u8::from(self.indicator(u, a)).to_string(),
                    self.q(u, a).to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// `Ŷ_t(a) = (1/N) Σ_u X_uta / (Q_uta + β) · Y_ut`.
pub fn ht_ix_estimate(rewards: &[f64], report: &ExposureReport, a: usize, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if rewards.len() != report.units() {
        return Err(Error::InvalidArgument(format!(
            "{} rewards for {} units",
            rewards.len(),
            report.units()
        )));
    }
    if a >= report.arms() {
        return Err(Error::InvalidArgument(format!("arm {a} out of range for k = {}", report.arms())));
    }
    let mut acc = 0.0;
    for (u, &y) in rewards.iter().enumerate() {
        if report.indicator(u, a) {
            let denom = report.q(u, a) + beta;
            if denom <= 0.0 {
                return Err(Error::Precondition(format!("unit {u} exposed to arm {a} with Q + β = 0")));
            }
            acc += y / denom;
        }
    }
    Ok(acc / rewards.len() as f64)
}

/// Estimates for every arm in one pass over the units.
pub fn ht_ix_estimates(rewards: &[f64], report: &ExposureReport, beta: f64) -> Result<Vec<f64>> {
    (0..report.arms()).map(|a| ht_ix_estimate(rewards, report, a, beta)).collect()
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..0.5).contains(&beta) {
        return Err(Error::InvalidArgument(format!("β must lie in [0, 1/2), got {beta}")));
    }
    Ok(())
}

/// Precomputed balls and cover classes for a fixed `(spec, universe, r)`.
#[derive(Debug, Clone)]
pub struct ExposureModel {
    universe: Arc<UnitUniverse>,
    layout: UnitLayout,
    radius: f64,
    ball_start: Vec<usize>,
    ball_units: Vec<usize>,
    unit_class: Vec<usize>,
    class_dist: Vec<Vec<f64>>,
}

impl ExposureModel {
    pub fn new(spec: &PartitionSpec, universe: Arc<UnitUniverse>, r: f64) -> Result<Self> {
        if !(r >= 0.0 && 2.0 * r < spec.cell_side()) {
            return Err(Error::Precondition(format!(
                "need 0 <= 2r < ℓ, got r = {r}, ℓ = {}",
                spec.cell_side()
            )));
        }
        let layout = UnitLayout::new(spec, &universe)?;
        let mut ball_start = Vec::with_capacity(universe.len() + 1);
        let mut ball_units = Vec::new();
        let mut unit_class = Vec::with_capacity(universe.len());
        let mut class_dist = Vec::new();
        let mut classes: HashMap<Vec<Vec<(usize, usize)>>, usize> = HashMap::new();
        for u in 0..universe.len() {
            let ball = universe.ball(u, r)?;
            let cover = layout.cover(&ball);
            let next = classes.len();
            let class = *classes.entry(cover.canonical_key()).or_insert_with(|| {
                class_dist.push(cover.cluster_count_distribution());
                next
            });
            unit_class.push(class);
            ball_start.push(ball_units.len());
            ball_units.extend(ball);
        }
        ball_start.push(ball_units.len());
        Ok(Self { universe, layout, radius: r, ball_start, ball_units, unit_class, class_dist })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn layout(&self) -> &UnitLayout {
        &self.layout
    }

    pub fn universe(&self) -> &Arc<UnitUniverse> {
        &self.universe
    }

    /// Number of distinct cover classes, i.e. distinct `Q` computations per arm.
    pub fn class_count(&self) -> usize {
        self.class_dist.len()
    }

    pub fn ball(&self, u: usize) -> &[usize] {
        &self.ball_units[self.ball_start[u]..self.ball_start[u + 1]]
    }

    /// Marginal `Q^r_{uta}` for every unit and arm, row-major `N × k`.
    pub fn marginal_q(&self, p: &ArmDistribution) -> Vec<f64> {
        let k = p.arms();
        let per_class: Vec<f64> = self
            .class_dist
            .iter()
            .flat_map(|dist| p.probs().iter().map(move |&pa| mix(dist, pa).min(1.0)))
            .collect();
        let mut q = Vec::with_capacity(self.unit_class.len() * k);
        for &c in &self.unit_class {
            q.extend_from_slice(&per_class[c * k..(c + 1) * k]);
        }
        q
    }

    /// `Q` given the realised partition: `P_a^j` with `j` the number of
    /// clusters the ball meets.
    pub fn conditional_q(&self, partition: &Partition, p: &ArmDistribution) -> Vec<f64> {
        let k = p.arms();
        let mut q = Vec::with_capacity(self.unit_class.len() * k);
        let mut clusters = Vec::new();
        for u in 0..self.unit_class.len() {
            clusters.clear();
            clusters.extend(self.ball(u).iter().map(|&v| self.layout.cluster_of_unit(partition, v)));
            clusters.sort_unstable();
            clusters.dedup();
            let j = clusters.len() as i32;
            q.extend(p.probs().iter().map(|&pa| pa.powi(j)));
        }
        q
    }

    pub fn exposed(&self, z: &[usize]) -> Vec<Exposed> {
        (0..self.unit_class.len())
            .map(|u| match self.ball(u) {
                [] => Exposed::All,
                [first, rest @ ..] => {
                    let a = z[*first];
                    if rest.iter().all(|&v| z[v] == a) {
                        Exposed::Arm(a)
                    } else {
                        Exposed::None
                    }
                }
            })
            .collect()
    }

    pub fn report(
        &self,
        z: &AssignmentVector,
        p: &ArmDistribution,
        mode: QMode,
        partition: Option<&Partition>,
    ) -> Result<ExposureReport> {
        if z.len() != self.unit_class.len() || z.arm_count() != p.arms() {
            return Err(Error::InvalidArgument("assignment does not match the exposure model".into()));
        }
        let q = match (mode, partition) {
            (QMode::Marginal, _) => self.marginal_q(p),
            (QMode::Conditional, Some(part)) => self.conditional_q(part, p),
            (QMode::Conditional, None) => {
                return Err(Error::InvalidArgument("conditional Q needs the realised partition".into()))
            }
        };
        Ok(ExposureReport { arms: p.arms(), exposed: self.exposed(z.arms()), q })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LatticeShape;
    use crate::partition::ClusteringMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn arm_distribution_validation() {
        assert!(ArmDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(ArmDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ArmDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ArmDistribution::new(vec![]).is_err());
        assert_eq!(ArmDistribution::uniform(4).prob(3), 0.25);
    }

    #[test]
    fn inverse_cdf_sampling() {
        let p = ArmDistribution::new(vec![0.2, 0.0, 0.8]).unwrap();
        let mut r = rng(1);
        let mut counts = [0usize; 3];
        for _ in 0..50_000 {
            counts[p.sample(&mut r)] += 1;
        }
        assert_eq!(counts[1], 0);
        let f = counts[0] as f64 / 50_000.0;
        assert!((f - 0.2).abs() < 4.0 * (0.16f64 / 50_000.0).sqrt());
        let point = ArmDistribution::new(vec![0.0, 1.0]).unwrap();
        assert!((0..100).all(|_| point.sample(&mut r) == 1));
    }

    #[test]
    fn exposure_examples() {
        let uni = UnitUniverse::lattice(25).unwrap();
        let shape = LatticeShape { side: 5 };
        let center = shape.id(2, 2).unwrap();
        let mut z = vec![1; 25];
        let zv = AssignmentVector::new(z.clone(), 2).unwrap();
        assert!(exposure(&uni, &zv, center, 0, 0.0).unwrap());
        assert!(exposure(&uni, &zv, center, 1, 1.0).unwrap());
        assert!(!exposure(&uni, &zv, center, 0, 1.0).unwrap());
        assert!(exposure(&uni, &zv, center, 1, 1.5).unwrap());
        z[shape.id(3, 3).unwrap()] = 0;
        let zv = AssignmentVector::new(z, 2).unwrap();
        assert!(exposure(&uni, &zv, center, 1, 1.0).unwrap());
        assert!(!exposure(&uni, &zv, center, 1, 1.5).unwrap());
        assert!(exposure(&uni, &zv, center, 1, -1.0).is_err());
    }

    // 10x10 lattice, ℓ = 5, margin 1: bands at s ∈ [-1,1], [4,6], [9,11].
    fn lattice_spec() -> (UnitUniverse, PartitionSpec) {
        let uni = UnitUniverse::lattice(100).unwrap();
        let spec = PartitionSpec::for_universe(&uni, 5.0, 1.0).unwrap();
        (uni, spec)
    }

    #[test]
    fn analytic_examples() {
        let (uni, spec) = lattice_spec();
        let shape = LatticeShape { side: 10 };
        let p = ArmDistribution::new(vec![0.3, 0.7]).unwrap();
        // Singleton ball.
        for u in 0..100 {
            assert!((exposure_prob_analytic(&spec, &uni, u, 1, 1.0, &p).unwrap() - 0.7).abs() < 1e-15);
        }
        // Ball inside an interior.
        let q = exposure_prob_analytic(&spec, &uni, shape.id(2, 2).unwrap(), 0, 1.5, &p).unwrap();
        assert!((q - 0.3).abs() < 1e-15);
        // Interior plus one strip: column 3 sits at s = 3.5, so its ball reaches s = 4.5 in band [4, 6].
        let u = shape.id(3, 2).unwrap();
        let q = exposure_prob_analytic(&spec, &uni, u, 0, 1.5, &p).unwrap();
        assert!((q - (0.5 * 0.3 + 0.5 * 0.09)).abs() < 1e-15, "q = {q}");
        assert!(exposure_prob_analytic(&spec, &uni, u, 0, 2.5, &p).is_err());
        assert!(exposure_prob_analytic(&spec, &uni, u, 2, 1.5, &p).is_err());
    }

    #[test]
    fn analytic_sandwich() {
        let (uni, spec) = lattice_spec();
        for &pa in &[0.01, 0.1, 0.5, 0.9] {
            let p = ArmDistribution::new(vec![pa, 1.0 - pa]).unwrap();
            for u in 0..100 {
                for &r in &[1.0, 1.5, 2.0] {
                    let q = exposure_prob_analytic(&spec, &uni, u, 0, r, &p).unwrap();
                    assert!(q <= pa + 1e-15 && q >= pa / 16.0 - 1e-15, "u={u} r={r} q={q}");
                }
            }
        }
    }

    #[test]
    fn mc_trivial_cases() {
        let (uni, spec) = lattice_spec();
        let sure = ArmDistribution::new(vec![0.0, 1.0]).unwrap();
        let mut r = rng(2);
        assert_eq!(exposure_prob_mc(&spec, &uni, 34, 1, 2.0, &sure, 500, &mut r).unwrap(), 1.0);
        assert_eq!(exposure_prob_mc(&spec, &uni, 34, 0, 2.0, &sure, 500, &mut r).unwrap(), 0.0);
        assert!(exposure_prob_mc(&spec, &uni, 34, 0, 2.0, &sure, 0, &mut r).is_err());
    }

    #[test]
    fn model_matches_direct_analytic() {
        let (uni, spec) = lattice_spec();
        let uni = Arc::new(uni);
        let p = ArmDistribution::new(vec![0.15, 0.25, 0.6]).unwrap();
        for &r in &[0.0, 1.0, 1.5, 2.0, 2.4] {
            let model = ExposureModel::new(&spec, uni.clone(), r).unwrap();
            let q = model.marginal_q(&p);
            for u in 0..100 {
                for a in 0..3 {
                    let direct = exposure_prob_analytic(&spec, &uni, u, a, r, &p).unwrap();
                    assert!((q[u * 3 + a] - direct).abs() < 1e-15);
                }
            }
            assert!(model.class_count() <= 100);
        }
    }

    #[test]
    fn conditional_q_averages_to_marginal() {
        let (uni, spec) = lattice_spec();
        let uni = Arc::new(uni);
        let model = ExposureModel::new(&spec, uni, 2.0).unwrap();
        let p = ArmDistribution::new(vec![0.4, 0.6]).unwrap();
        let marginal = model.marginal_q(&p);
        let mut acc = vec![0.0; marginal.len()];
        let mut r = rng(3);
        let draws = 20_000;
        for _ in 0..draws {
            let part = sample_partition(&spec, &mut r);
            for (a, q) in acc.iter_mut().zip(model.conditional_q(&part, &p)) {
                *a += q;
            }
        }
        for (m, a) in marginal.iter().zip(&acc) {
            assert!((a / draws as f64 - m).abs() < 0.01);
        }
    }

    #[test]
    fn ht_ix_examples() {
        // Nobody exposed.
        let report = ExposureReport::new(2, vec![Exposed::None; 3], vec![0.5; 6]).unwrap();
        assert_eq!(ht_ix_estimate(&[1.0, 1.0, 1.0], &report, 0, 0.1).unwrap(), 0.0);
        // Q ≡ 1, β = 0: plain mean.
        let report = ExposureReport::new(2, vec![Exposed::All; 4], vec![1.0; 8]).unwrap();
        assert_eq!(ht_ix_estimate(&[0.5; 4], &report, 1, 0.0).unwrap(), 0.5);
        // N = 1: single-arm IX.
        let report = ExposureReport::new(2, vec![Exposed::Arm(1)], vec![0.3, 0.7]).unwrap();
        let y = ht_ix_estimate(&[0.9], &report, 1, 0.1).unwrap();
        assert!((y - 0.9 / 0.8).abs() < 1e-15);
        assert_eq!(ht_ix_estimate(&[0.9], &report, 0, 0.1).unwrap(), 0.0);
        assert!(ht_ix_estimate(&[0.9], &report, 0, 0.5).is_err());
        let zero = ExposureReport::new(1, vec![Exposed::Arm(0)], vec![0.0]).unwrap();
        assert!(ht_ix_estimate(&[0.9], &zero, 0, 0.0).is_err());
    }

    #[test]
    fn ht_ix_truncation_and_monotonicity() {
        let mut r = rng(4);
        for _ in 0..200 {
            let n = 20;
            let exposed: Vec<Exposed> = (0..n).map(|_| Exposed::Arm(r.gen_range(0..2))).collect();
            let q: Vec<f64> = (0..2 * n).map(|_| r.gen_range(0.001..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| r.gen()).collect();
            let report = ExposureReport::new(2, exposed, q).unwrap();
            let mut prev = 0.0;
            for &beta in &[0.4, 0.2, 0.1, 0.01] {
                let est = ht_ix_estimate(&y, &report, 0, beta).unwrap();
                assert!(est >= prev && est <= 1.0 / beta);
                prev = est;
            }
        }
    }

    #[test]
    fn report_csv() {
        let report = ExposureReport::new(2, vec![Exposed::Arm(0), Exposed::None], vec![0.5, 0.25, 0.5, 0.25]).unwrap();
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "unit,arm,X,Q\n0,0,1,0.5\n0,1,0,0.25\n1,0,0,0.5\n1,1,0,0.25\n");
    }

    #[test]
    fn simplified_mode_q_is_power_of_clusters() {
        let uni = Arc::new(UnitUniverse::lattice(100).unwrap());
        let spec = PartitionSpec::for_universe(&uni, 5.0, 1.0).unwrap().with_mode(ClusteringMode::Simplified);
        let model = ExposureModel::new(&spec, uni, 1.5).unwrap();
        let p = ArmDistribution::new(vec![0.5, 0.5]).unwrap();
        let q = model.marginal_q(&p);
        // Deterministic clusters: Q is always an exact power of 1/2.
        assert!(q.iter().all(|&v| [0.5, 0.25, 0.125, 0.0625].contains(&v)));
    }
}
