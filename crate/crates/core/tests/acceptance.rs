//! Acceptance suite. Runs as a plain binary so every criterion prints one
//! `criterion N: pass|FAIL` line regardless of output capture; exits non-zero
//! if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use mabi::environment::{InterferenceKernel, RewardModel};
use mabi::estimator::{exposure_prob_analytic, exposure_prob_mc, ArmDistribution, ExposureModel};
use mabi::geometry::UnitUniverse;
use mabi::harness::config::{NRule, PolicyName, RunConfig};
use mabi::harness::experiment::simulate;
use mabi::harness::lower_bound::{anti_concentration, switchback_regrets, LowerBoundConfig};
use mabi::metrics::{regret, RunRecord};
use mabi::partition::{containment_probability, PartitionSpec};
use mabi::policy::{exp3ix_on_table, learning_rates, switchback_step, Exp3State};
use mabi::rng::SeedTree;
use mabi::validate::{
    containment_mc, extension_dip_exhaustive, extension_dip_sampled, ht_ix_mc_mean, robustness_cases,
};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn c1(seeds: &SeedTree) -> Outcome {
    let samples = 100_000;
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, case) in robustness_cases()?.iter().enumerate() {
        let exact = containment_probability(&case.spec, &case.universe, case.unit, case.radius)?;
        let mc = containment_mc(case, samples, &mut seeds.stream("acceptance/1", &[i as u64]))?;
        ok &= exact == case.expected && (mc - exact).abs() <= 4.0 * se(exact, samples);
        notes.push(format!("{exact} (mc {mc:.4})"));
    }
    Ok((ok, format!("containment = [{}]", notes.join(", "))))
}

fn c2(seeds: &SeedTree) -> Outcome {
    let uni = UnitUniverse::lattice(144)?;
    let samples = 100_000;
    let mut rng = seeds.stream("acceptance/2", &[]);
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let pa = [0.01, 0.1, 0.5][i as usize % 3];
        let ell = rng.gen_range(2.5..7.0);
        let r = rng.gen_range(0.5..ell / 2.0);
        let spec = PartitionSpec::for_universe(&uni, ell, r)?;
        let u = rng.gen_range(0..uni.len());
        let a = rng.gen_range(0..2);
        let probs = if a == 0 { vec![pa, 1.0 - pa] } else { vec![1.0 - pa, pa] };
        let p = ArmDistribution::new(probs)?;
        let q = exposure_prob_analytic(&spec, &uni, u, a, r, &p)?;
        let mc = exposure_prob_mc(&spec, &uni, u, a, r, &p, samples, &mut seeds.stream("acceptance/2", &[i]))?;
        let tol = 4.0 * se(q, samples);
        worst = worst.max(if tol > 0.0 { (q - mc).abs() / tol } else if q == mc { 0.0 } else { f64::INFINITY });
    }
    Ok((worst <= 1.0, format!("max |analytic - MC| / 4SE = {worst:.3} over 20 configs")))
}

fn c3(seeds: &SeedTree) -> Outcome {
    let kernels = [
        InterferenceKernel::Tabulated { values: vec![1.0, 0.5, 0.0] },
        InterferenceKernel::KappaNeighborhood { kappa: 1.0 },
        InterferenceKernel::PowerLaw { exponent: 1.0 },
    ];
    let mut exhaustive = 0;
    for k in &kernels {
        exhaustive += extension_dip_exhaustive(k)?;
    }
    let sampled = extension_dip_sampled(&kernels[2], 1_000_000, &mut seeds.stream("acceptance/3", &[]))?;
    Ok((
        exhaustive == 0 && sampled == 0,
        format!("violations: {exhaustive} exhaustive (3 kernels), {sampled} in 1e6 sampled pairs"),
    ))
}

fn c4(seeds: &SeedTree) -> Outcome {
    let mut rng = seeds.stream("acceptance/4", &[]);
    let universe = Arc::new(UnitUniverse::lattice(100)?);
    let env = RewardModel::lattice_neighbor(universe.clone(), 2, 8, 1.0, &mut rng)?;
    let spec = PartitionSpec::for_universe(&universe, 4.0, 1.0)?;
    let model = ExposureModel::new(&spec, universe, 1.0)?;
    let p = ArmDistribution::new(vec![0.35, 0.65])?;
    let t = 5;
    let mut ok = true;
    let mut notes = Vec::new();
    for a in 0..2 {
        let (mean, se) = ht_ix_mc_mean(&env, &model, &p, t, a, 0.0, 10_000, &mut rng)?;
        let truth = env.counterfactual_mean(t, a)?;
        ok &= (mean - truth).abs() <= 3.0 * se;
        notes.push(format!("a={a}: {mean:.4} vs {truth:.4} ({:.2} SE)", (mean - truth).abs() / se));
    }
    Ok((ok, notes.join("; ")))
}

fn c5(seeds: &SeedTree) -> Outcome {
    let mut mismatches = 0;
    for i in 0..10u64 {
        let mut env_rng = seeds.stream("acceptance/5-env", &[i]);
        let k = 2 + i as usize % 3;
        let horizon = 40 + 10 * i as usize;
        let env = RewardModel::lattice_neighbor(Arc::new(UnitUniverse::lattice(36)?), k, horizon, 2.0, &mut env_rng)?;
        let (eta, beta) = learning_rates(k, horizon, 1, 1.0, 0.05)?;
        let table = Arc::new(env.counterfactual_table());
        let (arms, rewards) = exp3ix_on_table(&table, eta, beta, &mut seeds.stream("acceptance/5-arms", &[i]))?;

        let mut state = Exp3State::new(k, eta, beta)?;
        let mut rng = seeds.stream("acceptance/5-arms", &[i]);
        let mut sb_arms = Vec::new();
        let mut realized = Vec::new();
        let mut shares = Vec::new();
        for t in 1..=horizon {
            let step = switchback_step(&mut state, &env, t, &mut rng)?;
            sb_arms.push(step.arm.expect("switchback plays one arm"));
            realized.push(step.mean_reward);
            shares.push(step.assignment.arm_shares());
        }
        let record = |realized: Vec<f64>, played: &[usize]| RunRecord {
            realized,
            counterfactual: table.clone(),
            arm_shares: played.iter().map(|&a| (0..k).map(|b| f64::from(u8::from(a == b))).collect()).collect(),
            arms: Some(played.to_vec()),
            seeds: Default::default(),
        };
        let sb_regret = regret(&RunRecord { arm_shares: shares, ..record(realized.clone(), &sb_arms) })?.regret;
        let table_regret = regret(&record(rewards.clone(), &arms))?.regret;
        mismatches += usize::from(sb_arms != arms || realized != rewards || sb_regret != table_regret);
    }
    Ok((mismatches == 0, format!("{mismatches} of 10 instances differ in arms or regret")))
}

fn c6() -> Outcome {
    let config = LowerBoundConfig { runs: 600, ..Default::default() };
    let means: Vec<f64> = [256, 1024, 4096]
        .iter()
        .map(|&t| {
            let r = switchback_regrets(&config, t)?;
            Ok(r.iter().map(|x| x.0).sum::<f64>() / r.len() as f64)
        })
        .collect::<mabi::Result<_>>()?;
    let ratios = [means[1] / means[0], means[2] / means[1]];
    let ok = ratios.iter().all(|r| (1.5..=2.7).contains(r));
    Ok((
        ok,
        format!(
            "mean regret {:.3} / {:.3} / {:.3}; ratios {:.3}, {:.3} (600 runs)",
            means[0], means[1], means[2], ratios[0], ratios[1]
        ),
    ))
}

fn c7() -> Outcome {
    let config = LowerBoundConfig { coin_samples: 10_000, ..Default::default() };
    let (freq, se) = anti_concentration(&config, 100)?;
    let floor = 1.0 / 15.0 - 3.0 * se;
    Ok((freq >= floor, format!("frequency {freq:.4} ± {se:.4} vs 1/15 - 3 SE = {floor:.4}")))
}

fn c8() -> Outcome {
    let config = RunConfig::default();
    let output = simulate(&config)?;
    let row = |p: PolicyName, t: usize| {
        output.rows.iter().find(|r| r.policy == p.as_str() && r.horizon == t).expect("row present")
    };
    let mut q95_wins = 0;
    let mut mean_ok = true;
    let mut notes = Vec::new();
    for &t in &config.horizons {
        let (sb, cr) = (row(PolicyName::SwitchbackExp3ix, t), row(PolicyName::Exp3HtIx, t));
        q95_wins += usize::from(cr.q95_regret < sb.q95_regret);
        mean_ok &= (cr.mean_regret - sb.mean_regret).abs() <= 0.25 * sb.mean_regret;
        notes.push(format!(
            "T={t}: q95 CR {:.2} vs SB {:.2}, mean CR {:.2} vs SB {:.2}",
            cr.q95_regret, sb.q95_regret, cr.mean_regret, sb.mean_regret
        ));
    }
    Ok((q95_wins >= 2 && mean_ok, notes.join("; ")))
}

fn c9() -> Outcome {
    let gap = |rule: NRule| -> mabi::Result<(usize, f64)> {
        let config = RunConfig {
            horizons: vec![10],
            n_rule: rule,
            instances: 30,
            policies: vec![PolicyName::Exp3HtIx],
            ..RunConfig::default()
        };
        let row = simulate(&config)?.rows.remove(0);
        Ok((row.units, row.q95_regret - row.mean_regret))
    };
    let (n3, g3) = gap(NRule::CUBE)?;
    let (n2, g2) = gap(NRule::SQUARE)?;
    Ok((g3 < g2, format!("CR q95 - mean gap: {g3:.4} at N={n3} vs {g2:.4} at N={n2}")))
}

fn c10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_mabi");
    let dir = tempfile::tempdir()?;
    let run = |threads: usize, rep: usize| -> Result<Vec<u8>, Box<dyn std::error::Error>> {
        let out = dir.path().join(format!("t{threads}-{rep}"));
        let status = Command::new(bin)
            .args(["simulate", "--T", "10,20", "--instances", "6", "--reps", "20", "--seed", "11"])
            .arg("--threads")
            .arg(threads.to_string())
            .arg("--out")
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()?;
        if !status.success() {
            return Err(format!("simulate exited with {status}").into());
        }
        let mut bytes = std::fs::read(out.join("results.csv"))?;
        bytes.extend(std::fs::read(Path::new(&out).join("runs.csv"))?);
        Ok(bytes)
    };
    let reference = run(1, 0)?;
    let mut identical = 0;
    for (threads, rep) in [(1, 1), (4, 0), (4, 1)] {
        identical += usize::from(run(threads, rep)? == reference);
    }
    Ok((identical == 3, format!("{identical} of 3 reruns byte-identical (threads 1 and 4, results.csv + runs.csv)")))
}

fn main() -> ExitCode {
    let seeds = SeedTree::new(20_240_601);
    let criteria: Vec<(u32, Duration, Box<dyn Fn() -> Outcome>)> = vec![
        (1, Duration::from_secs(10), Box::new(move || c1(&seeds))),
        (2, Duration::from_secs(60), Box::new(move || c2(&seeds))),
        (3, Duration::from_secs(120), Box::new(move || c3(&seeds))),
        (4, Duration::from_secs(60), Box::new(move || c4(&seeds))),
        (5, Duration::from_secs(10), Box::new(move || c5(&seeds))),
        (6, Duration::from_secs(300), Box::new(c6)),
        (7, Duration::from_secs(30), Box::new(c7)),
        (8, Duration::from_secs(900), Box::new(c8)),
        (9, Duration::from_secs(600), Box::new(c9)),
        (10, Duration::from_secs(120), Box::new(c10)),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, budget, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok && elapsed <= budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {id}: {} {detail} [{:.1}s, budget {}s]",
            if ok { "pass" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
