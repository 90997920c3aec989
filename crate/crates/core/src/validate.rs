//! Invariant suites with fixed seeds, reporting measured vs tolerated values.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::environment::{
    build_lower_bound_instance, verify_dip, AssignmentVector, HypercubeExtension, InterferenceKernel, RewardModel,
};
use crate::error::{Error, Result};
use crate::estimator::{exposure_prob_analytic, exposure_prob_mc, ht_ix_estimate, ArmDistribution, ExposureModel, QMode};
use crate::geometry::{sup_distance, LatticeShape, Point, UnitUniverse};
use crate::harness::lower_bound::{anti_concentration, exceedance_floor, switchback_regrets, LowerBoundConfig};
use crate::partition::{containment_probability, sample_partition, ball_cluster_set, PartitionSpec};
use crate::policy::{cluster_assignment, exp3_update, exp3ix_on_table, switchback_step, Exp3State};
use crate::rng::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Geometry,
    Partition,
    Environment,
    Estimator,
    Policy,
    LowerBound,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Geometry,
        Suite::Partition,
        Suite::Environment,
        Suite::Estimator,
        Suite::Policy,
        Suite::LowerBound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Geometry => "geometry",
            Suite::Partition => "partition",
            Suite::Environment => "environment",
            Suite::Estimator => "estimator",
            Suite::Policy => "policy",
            Suite::LowerBound => "lower-bound",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

/// One measured property.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// `"<="`, `">="` or `"=="`.
    pub relation: &'static str,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, relation: "<=", bound, passed: measured <= bound }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, relation: ">=", bound, passed: measured >= bound }
    }

    pub fn equals(name: impl Into<String>, measured: f64, expected: f64) -> Self {
        Self { name: name.into(), measured, relation: "==", bound: expected, passed: measured == expected }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: measured {} {} {}",
            if self.passed { "pass" } else { "FAIL" },
            self.name,
            self.measured,
            self.relation,
            self.bound
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}: {}", self.suite, if self.passed() { "pass" } else { "FAIL" })?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

pub fn validate(suite: Suite) -> Result<ValidationReport> {
    let seeds = SeedTree::new(20_240_601);
    let checks = match suite {
        Suite::Geometry => geometry_suite(&seeds)?,
        Suite::Partition => partition_suite(&seeds)?,
        Suite::Environment => environment_suite(&seeds)?,
        Suite::Estimator => estimator_suite(&seeds)?,
        Suite::Policy => policy_suite(&seeds)?,
        Suite::LowerBound => lower_bound_suite()?,
    };
    Ok(ValidationReport { suite: suite.to_string(), checks })
}

/// A configuration realising one of the four robustness cases.
#[derive(Debug, Clone)]
pub struct RobustnessCase {
    pub name: &'static str,
    pub universe: UnitUniverse,
    pub spec: PartitionSpec,
    pub unit: usize,
    pub radius: f64,
    /// Exact containment probability.
    pub expected: f64,
}

/// Cases 1-4: interior + 2 strips + quad (1/16), inside one quad (1),
/// one strip + quad (1/4), two strips + quad and no interior (1/16).
///
/// All cases use ℓ = 8 and ball radius = margin = 2 on a 16×16 unit lattice,
/// where column `c` sits at `s = c + 1/2` from the box corner. The last case removes the interior units near a corner so
/// the ball meets both strips without meeting the interior.
pub fn robustness_cases() -> Result<Vec<RobustnessCase>> {
    // 16×16, ℓ = 8, r = 2: bands at s ∈ [6, 10] cover columns 6..=9.
    let wide = UnitUniverse::lattice(256)?;
    let wide_spec = PartitionSpec::for_universe(&wide, 8.0, 2.0)?;
    let wide_shape = LatticeShape { side: 16 };
    let id = |shape: LatticeShape, c: isize, r: isize| shape.id(c, r).expect("inside lattice");

    // Drop the interior units diagonally adjacent to the quad at (6..=9)².
    let holed_points: Vec<Point> = wide
        .units()
        .iter()
        .copied()
        .filter(|p| !(p.x + 8.0 < 6.0 && p.y + 8.0 < 6.0 && p.x + 8.0 > 4.0 && p.y + 8.0 > 4.0))
        .collect();
    let holed = UnitUniverse::new(holed_points, wide.half_width())?;
    let corner = holed
        .units()
        .iter()
        .position(|p| p.x + 8.0 == 6.5 && p.y + 8.0 == 6.5)
        .expect("corner unit present");

    Ok(vec![
        RobustnessCase {
            name: "case 1: interior, two strips, quad",
            unit: id(wide_shape, 5, 5),
            universe: wide.clone(),
            spec: wide_spec,
            radius: 2.0,
            expected: 1.0 / 16.0,
        },
        RobustnessCase {
            name: "case 2: inside one quad",
            unit: id(wide_shape, 7, 7),
            universe: wide.clone(),
            spec: wide_spec,
            radius: 2.0,
            expected: 1.0,
        },
        RobustnessCase {
            name: "case 3: one strip and a quad",
            unit: id(wide_shape, 7, 6),
            universe: wide,
            spec: wide_spec,
            radius: 2.0,
            expected: 0.25,
        },
        RobustnessCase {
            name: "case 4: two strips and a quad, no interior",
            unit: corner,
            universe: holed,
            spec: wide_spec,
            radius: 2.0,
            expected: 1.0 / 16.0,
        },
    ])
}

/// Frequency of `B(u, r) ⊆ C[u]` over fresh partitions.
pub fn containment_mc<R: Rng + ?Sized>(case: &RobustnessCase, samples: usize, rng: &mut R) -> Result<f64> {
    let mut hits = 0usize;
    for _ in 0..samples {
        let partition = sample_partition(&case.spec, rng);
        hits += usize::from(ball_cluster_set(&partition, &case.universe, case.unit, case.radius)?.len() <= 1);
    }
    Ok(hits as f64 / samples as f64)
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn geometry_suite(seeds: &SeedTree) -> Result<Vec<Check>> {
    let uni = UnitUniverse::lattice(400)?;
    let generic = UnitUniverse::new(uni.units().to_vec(), uni.half_width())?;
    let mut edge_violations = 0;
    let mut mismatches = 0;
    let mut rng = seeds.stream("validate/geometry", &[]);
    for u in 0..uni.len() {
        edge_violations += usize::from(!uni.ball(u, 0.0)?.is_empty());
        edge_violations += usize::from(uni.ball(u, 1.0)? != vec![u]);
        let r = rng.gen_range(0.0..6.0);
        mismatches += usize::from(uni.ball(u, r)? != generic.ball(u, r)?);
    }
    let mut triangle = 0;
    for _ in 0..100_000 {
        let mut p = || Point::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
        let (a, b, c) = (p(), p(), p());
        triangle += usize::from(sup_distance(a, c) > sup_distance(a, b) + sup_distance(b, c) + 1e-12);
    }
    Ok(vec![
        Check::equals("B(u,0) empty and B(u,1) = {u}: violations", edge_violations as f64, 0.0),
        Check::equals("lattice vs generic ball: mismatches", mismatches as f64, 0.0),
        Check::equals("triangle inequality: violations in 1e5 triples", triangle as f64, 0.0),
    ])
}

fn partition_suite(seeds: &SeedTree) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (i, case) in robustness_cases()?.iter().enumerate() {
        let exact = containment_probability(&case.spec, &case.universe, case.unit, case.radius)?;
        checks.push(Check::equals(format!("{} exact", case.name), exact, case.expected));
        let samples = 100_000;
        let mc = containment_mc(case, samples, &mut seeds.stream("validate/partition", &[i as u64]))?;
        let tol = 4.0 * binomial_se(case.expected, samples);
        checks.push(Check::at_most(format!("{} |MC - exact| (4 SE)", case.name), (mc - exact).abs(), tol));
    }
    // Robustness floor over a whole lattice with ℓ >= 4r.
    let uni = UnitUniverse::lattice(24 * 24)?;
    let spec = PartitionSpec::for_universe(&uni, 6.0, 1.5)?;
    let mut floor = f64::INFINITY;
    for u in 0..uni.len() {
        floor = floor.min(containment_probability(&spec, &uni, u, 1.5)?);
    }
    checks.push(Check::at_least("min containment probability, 24x24, ℓ = 6, r = 1.5", floor, 1.0 / 16.0));
    Ok(checks)
}

/// All `2^9 × 2^9` window pairs at `m = 1`, `r ∈ {1, 2}`. Returns violations.
pub fn extension_dip_exhaustive(kernel: &InterferenceKernel) -> Result<usize> {
    let uni = UnitUniverse::lattice(9)?;
    let ext = HypercubeExtension::new(4, 1, kernel.clone())?;
    let values: Vec<f64> = (0u32..512)
        .map(|bits| {
            let z: Vec<usize> = (0..9).map(|v| ((bits >> v) & 1) as usize).collect();
            ext.value(&uni, &AssignmentVector::new(z, 2)?)
        })
        .collect::<Result<_>>()?;
    let mut violations = 0;
    for r in [1.0, 2.0] {
        let mask: u32 = uni.ball(4, r)?.iter().map(|&v| 1u32 << v).sum();
        let slack = kernel.psi(r);
        for a in 0u32..512 {
            for b in 0u32..512 {
                if (a ^ b) & mask == 0 && (values[a as usize] - values[b as usize]).abs() > slack + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    Ok(violations)
}

/// Random pairs agreeing on `B(O, r)` in the `m = 3` window. Returns violations.
pub fn extension_dip_sampled<R: Rng + ?Sized>(kernel: &InterferenceKernel, pairs: usize, rng: &mut R) -> Result<usize> {
    let uni = UnitUniverse::lattice(49)?;
    let ext = HypercubeExtension::new(24, 3, kernel.clone())?;
    let balls: Vec<Vec<usize>> = (0..=4).map(|r| uni.ball(24, r as f64)).collect::<Result<_>>()?;
    let mut violations = 0;
    for _ in 0..pairs {
        let r = rng.gen_range(0..=4);
        let density = [0.5, 0.8, 0.95, 0.99][rng.gen_range(0..4)];
        let z: Vec<usize> = (0..49).map(|_| usize::from(rng.gen_bool(density))).collect();
        let mut other: Vec<usize> = (0..49).map(|_| usize::from(rng.gen_bool(density))).collect();
        for &v in &balls[r] {
            other[v] = z[v];
        }
        let f = ext.value(&uni, &AssignmentVector::new(z, 2)?)?;
        let g = ext.value(&uni, &AssignmentVector::new(other, 2)?)?;
        violations += usize::from((f - g).abs() > kernel.psi(r as f64) + 1e-12);
    }
    Ok(violations)
}

fn environment_suite(seeds: &SeedTree) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let tab = InterferenceKernel::Tabulated { values: vec![1.0, 0.5, 0.0] };
    checks.push(Check::equals("extension DIP, exhaustive m = 1", extension_dip_exhaustive(&tab)? as f64, 0.0));
    let pl = InterferenceKernel::PowerLaw { exponent: 1.0 };
    let mut rng = seeds.stream("validate/environment", &[0]);
    checks.push(Check::equals(
        "extension DIP, 2e5 sampled pairs at m = 3",
        extension_dip_sampled(&pl, 200_000, &mut rng)? as f64,
        0.0,
    ));
    let models = [
        RewardModel::lattice_neighbor(Arc::new(UnitUniverse::lattice(64)?), 2, 16, 2.0, &mut rng)?,
        RewardModel::lattice_neighbor(Arc::new(UnitUniverse::lattice(64)?), 3, 16, 1.0, &mut rng)?,
        build_lower_bound_instance(9, 16, pl.clone(), &mut rng)?,
    ];
    for model in &models {
        let report = verify_dip(model, 20_000, &mut rng);
        checks.push(Check::equals(
            format!("model DIP violations, {:?}", model.descriptor()),
            report.violations as f64,
            0.0,
        ));
    }
    let mut out_of_range = 0;
    for model in &models {
        for _ in 0..20_000 {
            let z: Vec<usize> = (0..model.units()).map(|_| rng.gen_range(0..model.arms())).collect();
            let y = model.reward(rng.gen_range(0..model.units()), rng.gen_range(1..=16), &z);
            out_of_range += usize::from(!(0.0..=1.0).contains(&y));
        }
    }
    checks.push(Check::equals("rewards outside [0, 1]", out_of_range as f64, 0.0));
    Ok(checks)
}

#[allow(clippy::too_many_arguments)]
/// Mean of `Ŷ_t(a)` over `draws` fresh (partition, arms) draws with `P` fixed,
/// and its standard error.
pub fn ht_ix_mc_mean<R: Rng + ?Sized>(
    env: &RewardModel,
    model: &ExposureModel,
    p: &ArmDistribution,
    t: usize,
    a: usize,
    beta: f64,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let partition = sample_partition(model.layout().spec(), rng);
        let z = cluster_assignment(model, &partition, p, rng);
        let rewards: Vec<f64> = (0..env.units()).map(|u| env.reward(u, t, z.arms())).collect();
        let report = model.report(&z, p, QMode::Marginal, Some(&partition))?;
        let y = ht_ix_estimate(&rewards, &report, a, beta)?;
        sum += y;
        sum_sq += y * y;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

fn estimator_suite(seeds: &SeedTree) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let uni = UnitUniverse::lattice(144)?;
    let mut rng = seeds.stream("validate/estimator", &[0]);
    for (i, &pa) in [0.01, 0.1, 0.5].iter().enumerate() {
        let ell = rng.gen_range(3.0..6.0);
        let r = rng.gen_range(1.0..ell / 2.0);
        let spec = PartitionSpec::for_universe(&uni, ell, r)?;
        let u = rng.gen_range(0..uni.len());
        let p = ArmDistribution::new(vec![pa, 1.0 - pa])?;
        let q = exposure_prob_analytic(&spec, &uni, u, 0, r, &p)?;
        let samples = 100_000;
        let mc = exposure_prob_mc(&spec, &uni, u, 0, r, &p, samples, &mut seeds.stream("validate/estimator", &[1, i as u64]))?;
        checks.push(Check::at_most(
            format!("|analytic - MC| for P_a = {pa}, ℓ = {ell:.2}, r = {r:.2}"),
            (q - mc).abs(),
            4.0 * binomial_se(q, samples),
        ));
        checks.push(Check::at_least(format!("Q / P_a for P_a = {pa}"), q / pa, 1.0 / 16.0));
        checks.push(Check::at_most(format!("Q - P_a for P_a = {pa}"), q - pa, 1e-15));
    }
    let universe = Arc::new(UnitUniverse::lattice(100)?);
    let env = RewardModel::lattice_neighbor(universe.clone(), 2, 4, 1.0, &mut rng)?;
    let spec = PartitionSpec::for_universe(&universe, 4.0, 1.0)?;
    let model = ExposureModel::new(&spec, universe, 1.0)?;
    let p = ArmDistribution::new(vec![0.4, 0.6])?;
    for a in 0..2 {
        let (mean, se) = ht_ix_mc_mean(&env, &model, &p, 2, a, 0.0, 10_000, &mut rng)?;
        let truth = env.counterfactual_mean(2, a)?;
        checks.push(Check::at_most(format!("HT-IX |MC mean - Ȳ(a)|, a = {a} (3 SE)"), (mean - truth).abs(), 3.0 * se));
    }
    Ok(checks)
}

fn policy_suite(seeds: &SeedTree) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut rng = seeds.stream("validate/policy", &[0]);
    let mut shift_gap: f64 = 0.0;
    let mut invalid = 0;
    for _ in 0..1_000 {
        let k = rng.gen_range(2..6);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..10.0)).collect();
        let state = Exp3State::with_weights(&weights, rng.gen_range(0.01..0.9), 0.1)?;
        let est: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..5.0)).collect();
        let c = rng.gen_range(0.0..100.0);
        let shifted: Vec<f64> = est.iter().map(|e| e + c).collect();
        let a = exp3_update(&state, &est)?.probs();
        let b = exp3_update(&state, &shifted)?.probs();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            shift_gap = shift_gap.max((x - y).abs());
        }
        let total: f64 = a.probs().iter().sum();
        invalid += usize::from((total - 1.0).abs() > 1e-12 || a.probs().iter().any(|&x| x <= 0.0));
    }
    checks.push(Check::at_most("shift invariance: max |ΔP|", shift_gap, 1e-12));
    checks.push(Check::equals("invalid probability vectors", invalid as f64, 0.0));

    let mut mismatches = 0;
    for i in 0..10u64 {
        let mut env_rng = seeds.stream("validate/policy-env", &[i]);
        let env = RewardModel::lattice_neighbor(Arc::new(UnitUniverse::lattice(25)?), 3, 50, 2.0, &mut env_rng)?;
        let table = env.counterfactual_table();
        let (arms, _) = exp3ix_on_table(&table, 0.2, 0.05, &mut seeds.stream("validate/policy-arms", &[i]))?;
        let mut state = Exp3State::new(3, 0.2, 0.05)?;
        let mut arm_rng = seeds.stream("validate/policy-arms", &[i]);
        for (t, &expected) in arms.iter().enumerate() {
            let step = switchback_step(&mut state, &env, t + 1, &mut arm_rng)?;
            mismatches += usize::from(step.arm != Some(expected));
        }
    }
    checks.push(Check::equals("switchback vs table EXP3-IX: arm mismatches", mismatches as f64, 0.0));
    Ok(checks)
}

fn lower_bound_suite() -> Result<Vec<Check>> {
    let config = LowerBoundConfig { runs: 400, coin_samples: 10_000, ..Default::default() };
    let (freq, se) = anti_concentration(&config, 100)?;
    let floor = 1.0 / 15.0;
    let mut checks = vec![Check::at_least("exceedance frequency at T = 100 (+3 SE)", freq + 3.0 * se, floor)];
    checks.push(Check::at_least("exceedance floor e^{-1}/15 at s = √T/4", freq, exceedance_floor(100)));
    let mean = |t| -> Result<f64> {
        let r = switchback_regrets(&config, t)?;
        Ok(r.iter().map(|x| x.0).sum::<f64>() / r.len() as f64)
    };
    let ratio = mean(1024)? / mean(256)?;
    checks.push(Check::at_least("mean regret ratio T = 1024 vs 256", ratio, 1.5));
    checks.push(Check::at_most("mean regret ratio T = 1024 vs 256", ratio, 2.7));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_hit_the_intended_regions() {
        use crate::partition::{RegionKind, UnitLayout};
        let kinds = |case: &RobustnessCase| {
            let layout = UnitLayout::new(&case.spec, &case.universe).unwrap();
            let ball = case.universe.ball(case.unit, case.radius).unwrap();
            let mut k: Vec<RegionKind> = layout.region_ids(&ball).into_iter().map(|r| r.kind).collect();
            k.sort_by_key(|k| k.as_str());
            k
        };
        let cases = robustness_cases().unwrap();
        use RegionKind::*;
        assert_eq!(kinds(&cases[0]), vec![HorizontalStrip, Interior, Quad, VerticalStrip]);
        assert_eq!(kinds(&cases[1]), vec![Quad]);
        assert_eq!(kinds(&cases[2]), vec![Quad, VerticalStrip]);
        assert_eq!(kinds(&cases[3]), vec![HorizontalStrip, Quad, VerticalStrip]);
        for case in &cases {
            let exact = containment_probability(&case.spec, &case.universe, case.unit, case.radius).unwrap();
            assert_eq!(exact, case.expected, "{}", case.name);
        }
    }

    #[test]
    fn geometry_and_policy_suites_pass() {
        for suite in [Suite::Geometry, Suite::Policy] {
            let report = validate(suite).unwrap();
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn suite_names() {
        assert_eq!("lower-bound".parse::<Suite>().unwrap(), Suite::LowerBound);
        assert!("nope".parse::<Suite>().is_err());
    }
}
