//! Replication engine.
//!
//! Instance `i` at horizon `T` draws its environment from the stream
//! `environment[T, i]`; replication `j` of policy `p` draws partitions and arms
//! from `partition/p[T, i, j]` and `arms/p[T, i, j]`. Work runs on a rayon
//! pool and is reduced in `(i, j)` order, so output never depends on the
//! number of threads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{PolicyName, RunConfig};
use crate::environment::{ModelDescriptor, RewardModel};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, regret, Aggregate, RunRecord};
use crate::policy::{run_episode, PolicyConfig};
use crate::rng::SeedTree;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One line of the aggregated table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub policy: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub units: usize,
    pub instances: usize,
    pub runs: usize,
    pub mean_regret: f64,
    pub q95_regret: f64,
    pub var_level: f64,
    pub var_value: f64,
    pub seed_manifest_hash: String,
}

/// Regret of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub policy: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub units: usize,
    pub instance: usize,
    pub rep: usize,
    pub regret: f64,
    pub best_arm: usize,
}

/// Everything needed to reproduce a run. `wall_clock_seconds` is excluded
/// from the hash.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub library_version: String,
    pub config: RunConfig,
    pub stream_scheme: String,
    /// Environment seed summaries keyed by `T` then instance.
    pub environment_seeds: BTreeMap<usize, Vec<u64>>,
    /// Resolved policy descriptors keyed by `T`.
    pub policies: BTreeMap<usize, Vec<PolicyConfig>>,
    pub environments: BTreeMap<usize, ModelDescriptor>,
    pub seed_manifest_hash: String,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunRow>,
    /// Per-instance regret batches keyed by `(policy, T)`, in instance order.
    pub batches: BTreeMap<(PolicyName, usize), Vec<Vec<f64>>>,
    pub aggregates: BTreeMap<(PolicyName, usize), Aggregate>,
    pub manifest: RunManifest,
}

const STREAM_SCHEME: &str = "ChaCha8 keyed by SHA-256(\"mabi-stream-v1\", master, name, coords); \
environment[T, i], partition/<policy>[T, i, j], arms/<policy>[T, i, j]";

/// Hash of everything that determines the numbers: resolved config minus
/// output location and thread count, plus the library version.
pub fn manifest_hash(config: &RunConfig) -> Result<String> {
    let mut canonical = config.clone();
    canonical.threads = 0;
    canonical.out = PathBuf::new();
    let json = serde_json::to_string(&(LIBRARY_VERSION, &canonical))?;
    Ok(hex::encode(&Sha256::digest(json.as_bytes())[..8]))
}

/// An environment with its `T × k` counterfactual table.
pub type Instance = (RewardModel, Arc<Vec<Vec<f64>>>);

/// Builds `config.instances` environments for one horizon, in parallel.
pub fn build_instances(config: &RunConfig, horizon: usize) -> Result<Vec<Instance>> {
    let resolved = config.resolve(horizon)?;
    let seeds = SeedTree::new(config.seed);
    (0..config.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream("environment", &[horizon as u64, i as u64]);
            let env = RewardModel::build(&resolved.descriptor, config.arms, horizon, &mut rng)?;
            let table = Arc::new(env.counterfactual_table());
            Ok((env, table))
        })
        .collect()
}

/// Runs one replication and scores it.
pub fn run_replication(
    policy: &PolicyConfig,
    name: PolicyName,
    env: &RewardModel,
    table: &Arc<Vec<Vec<f64>>>,
    model: Option<&crate::estimator::ExposureModel>,
    seeds: &SeedTree,
    coords: &[u64],
) -> Result<RunRecord> {
    let partition_name = format!("partition/{name}");
    let arms_name = format!("arms/{name}");
    let mut partition_rng = seeds.stream(&partition_name, coords);
    let mut arm_rng = seeds.stream(&arms_name, coords);
    let episode = run_episode(policy, env, model, &mut partition_rng, &mut arm_rng)?;
    let mut stream_seeds = BTreeMap::new();
    stream_seeds.insert(partition_name.clone(), seeds.seed(&partition_name, coords));
    stream_seeds.insert(arms_name.clone(), seeds.seed(&arms_name, coords));
    Ok(RunRecord {
        realized: episode.realized,
        counterfactual: Arc::clone(table),
        arm_shares: episode.arm_shares,
        arms: episode.arms,
        seeds: stream_seeds,
    })
}

/// Runs the whole protocol in memory.
pub fn simulate(config: &RunConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let hash = manifest_hash(config)?;
    let seeds = SeedTree::new(config.seed);

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut batches = BTreeMap::new();
    let mut aggregates = BTreeMap::new();
    let mut environment_seeds = BTreeMap::new();
    let mut policies = BTreeMap::new();
    let mut environments = BTreeMap::new();

    for &horizon in &config.horizons {
        let resolved = config.resolve(horizon)?;
        let instances = pool.install(|| build_instances(config, horizon))?;
        let units = instances[0].0.units();
        environment_seeds.insert(
            horizon,
            (0..config.instances)
                .map(|i| seeds.seed("environment", &[horizon as u64, i as u64]))
                .collect(),
        );
        environments.insert(horizon, resolved.descriptor.clone());
        let mut resolved_policies = Vec::new();

        for &name in &config.policies {
            let policy = resolved.policy(name)?;
            resolved_policies.push(policy);
            // Every instance at this horizon shares one universe.
            let model = policy.exposure_model(&instances[0].0)?;
            let reps = config.reps;
            let regrets: Vec<(f64, usize)> = pool.install(|| {
                (0..config.instances * reps)
                    .into_par_iter()
                    .map(|idx| {
                        let (i, j) = (idx / reps, idx % reps);
                        let (env, table) = &instances[i];
                        let coords = [horizon as u64, i as u64, j as u64];
                        let record = run_replication(&policy, name, env, table, model.as_ref(), &seeds, &coords)?;
                        let summary = regret(&record)?;
                        Ok((summary.regret, summary.best_arm))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let batch: Vec<Vec<f64>> = regrets
                .chunks(reps)
                .map(|chunk| chunk.iter().map(|(r, _)| *r).collect())
                .collect();
            for (idx, (r, best)) in regrets.iter().enumerate() {
                runs.push(RunRow {
                    policy: name.to_string(),
                    horizon,
                    units,
                    instance: idx / reps,
                    rep: idx % reps,
                    regret: *r,
                    best_arm: *best,
                });
            }
            let agg = aggregate(&batch, config.var_level)?;
            rows.push(ResultRow {
                policy: name.to_string(),
                horizon,
                units,
                instances: agg.instances,
                runs: agg.runs,
                mean_regret: agg.mean_regret,
                q95_regret: agg.q95_regret,
                var_level: agg.var_level,
                var_value: agg.var_value,
                seed_manifest_hash: hash.clone(),
            });
            batches.insert((name, horizon), batch);
            aggregates.insert((name, horizon), agg);
        }
        policies.insert(horizon, resolved_policies);
    }

    let manifest = RunManifest {
        library_version: LIBRARY_VERSION.into(),
        config: config.clone(),
        stream_scheme: STREAM_SCHEME.into(),
        environment_seeds,
        policies,
        environments,
        seed_manifest_hash: hash,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(ExperimentOutput { rows, runs, batches, aggregates, manifest })
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct WrittenFiles {
    pub results: PathBuf,
    pub runs: PathBuf,
    pub manifest: PathBuf,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `results.csv`, `runs.csv` and `manifest.json` under the output
/// directory.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<WrittenFiles> {
    ensure_dir(dir)?;
    let files = WrittenFiles {
        results: dir.join("results.csv"),
        runs: dir.join("runs.csv"),
        manifest: dir.join("manifest.json"),
    };
    write_rows(&files.results, &output.rows)?;
    write_rows(&files.runs, &output.runs)?;
    write_json(&files.manifest, &output.manifest)?;
    Ok(files)
}

/// Simulates and writes every output file.
pub fn run_experiment(config: &RunConfig) -> Result<(ExperimentOutput, WrittenFiles)> {
    let output = simulate(config)?;
    let files = write_outputs(&output, &config.out)?;
    Ok((output, files))
}
