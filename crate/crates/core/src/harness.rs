//! Experiment entry points shared by the command-line tool: training with
//! artifact export, evaluation rollouts, scalability timing, plot data and
//! scenario pool export.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{FleetConfig, RunConfig};
use crate::error::{Error, Result};
use crate::marl::train::{scenario_pool, Policy};
use crate::marl::{EpisodeRecord, Trainer, TrainingLog};
use crate::mdp::{Env, EnvParams};
use crate::nn::Checkpoint;
use crate::seed::{self, stream};
use crate::world::{generate_scenario, Scenario};

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Column order of the metrics file.
pub const METRICS_COLUMNS: [&str; 13] = [
    "episode",
    "step",
    "group",
    "reward_mean",
    "reward_c",
    "reward_m",
    "reward_d",
    "aoi_mean",
    "vdf_mean",
    "energy_j",
    "sr_events",
    "act_events",
    "eia_event",
];

/// One metrics line. Episode rows leave `step` empty and use group `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub step: Option<usize>,
    pub group: String,
    pub reward_mean: f64,
    pub reward_c: f64,
    pub reward_m: f64,
    pub reward_d: f64,
    pub aoi_mean: f64,
    pub vdf_mean: f64,
    pub energy_j: f64,
    pub sr_events: usize,
    pub act_events: usize,
    pub eia_event: u8,
}

impl From<&EpisodeRecord> for MetricsRow {
    fn from(r: &EpisodeRecord) -> Self {
        Self {
            episode: r.episode,
            step: None,
            group: "all".into(),
            reward_mean: r.reward,
            reward_c: r.group_reward[0],
            reward_m: r.group_reward[1],
            reward_d: r.group_reward[2],
            aoi_mean: r.aoi,
            vdf_mean: r.vdf,
            energy_j: r.energy_j,
            sr_events: r.sr_events,
            act_events: r.act_events,
            eia_event: u8::from(r.eia_event),
        }
    }
}

/// Streams metrics rows to a CSV file that opens with a schema comment.
pub struct MetricsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "# agriswarm metrics schema {METRICS_SCHEMA_VERSION}")?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        inner.write_record(METRICS_COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        for (name, v) in [("reward", row.reward_mean), ("aoi", row.aoi_mean), ("vdf", row.vdf_mean), ("energy", row.energy_j)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} in metrics row of episode {}", row.episode)));
            }
        }
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn metrics_reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    let headers = rdr.headers().map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    if headers.iter().ne(METRICS_COLUMNS) {
        return Err(Error::Malformed(format!("{}: unexpected header {:?}", path.display(), headers)));
    }
    Ok(rdr)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    metrics_reader(path)?
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Malformed(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub episodes: usize,
    pub total_ms: f64,
    pub mean_episode_ms: f64,
    pub artifacts: Vec<String>,
}

fn write_manifest(out: &Path, m: &Manifest) -> Result<()> {
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(m)? + "\n")?;
    Ok(())
}

/// Trains with `cfg`, writing the effective configuration, per-episode
/// metrics, wall-clock timings, the final checkpoint and a manifest to `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, mut progress: impl FnMut(&EpisodeRecord)) -> Result<TrainingLog> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_flat_toml())?;
    let started = Instant::now();
    let mut trainer = Trainer::new(cfg)?;
    let mut metrics = MetricsWriter::create(&out.join(METRICS_FILE))?;
    let mut timing = csv::Writer::from_path(out.join(TIMING_FILE))?;
    timing.write_record(["episode", "wallclock_ms"])?;
    let mut log = TrainingLog::default();
    let mut failure = None;
    for _ in 0..cfg.train.episodes {
        match trainer.train_episode() {
            Ok(rec) => {
                metrics.write(&MetricsRow::from(&rec))?;
                timing.write_record([rec.episode.to_string(), format!("{:.3}", rec.wallclock_ms)])?;
                progress(&rec);
                log.records.push(rec);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    metrics.flush()?;
    timing.flush()?;
    if let Some(e) = failure {
        return Err(e);
    }
    trainer.checkpoint().save(&out.join(CHECKPOINT_FILE))?;
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    write_manifest(
        out,
        &Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: "train".into(),
            master_seed: cfg.run.master_seed,
            episodes: log.records.len(),
            total_ms,
            mean_episode_ms: log.records.iter().fold(0.0, |acc, r| acc + r.wallclock_ms) / log.records.len().max(1) as f64,
            artifacts: [CONFIG_FILE, METRICS_FILE, TIMING_FILE, CHECKPOINT_FILE].map(String::from).to_vec(),
        },
    )?;
    Ok(log)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalEpisode {
    pub episode: usize,
    /// Mean per-agent episode return.
    pub reward: f64,
    pub aoi_mean: f64,
    pub vdf_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_uav: usize,
    pub steps: usize,
    pub episodes: Vec<EvalEpisode>,
    /// Mean wall time of one joint policy evaluation, microseconds.
    pub inference_us_per_step: f64,
    pub inference_us_per_agent: f64,
}

/// Evaluation scenario: a file if given, otherwise one drawn from the
/// evaluation stream (outside the training pool).
pub fn eval_scenario(cfg: &RunConfig, scenario: Option<&Path>) -> Result<Scenario> {
    match scenario {
        Some(p) => {
            let s = Scenario::load(p)?;
            s.validate()?;
            Ok(s)
        }
        None => generate_scenario(&cfg.env, seed::derive(cfg.run.master_seed, stream::EVAL, 0)),
    }
}

/// Noise-free rollouts of `policy`. Writes `trajectory.csv`
/// (`episode,t,uav,role,x,y,z`, one line per UAV per step),
/// `eval_summary.csv` and `eval_report.json` to `out`.
pub fn cmd_eval_policy(cfg: &RunConfig, policy: &Policy, scenario: Scenario, episodes: usize, out: &Path) -> Result<EvalReport> {
    fs::create_dir_all(out)?;
    let params = EnvParams::from_config(cfg);
    if policy.actors.len() != params.fleet.total() {
        return Err(Error::Dimension(format!("{} actors for a fleet of {}", policy.actors.len(), params.fleet.total())));
    }
    let scenario = Arc::new(scenario);
    let mut env = Env::new(params.clone(), scenario.clone(), cfg.run.master_seed)?;
    let mut traj = csv::Writer::from_path(out.join("trajectory.csv"))?;
    traj.write_record(["episode", "t", "uav", "role", "x", "y", "z"])?;
    let mut summary = csv::Writer::from_path(out.join("eval_summary.csv"))?;
    summary.write_record(["episode", "reward", "aoi_mean", "vdf_mean"])?;
    let mut rows = Vec::new();
    let mut infer_s = 0.0;
    let mut infer_n = 0usize;
    for e in 1..=episodes {
        let mut obs = env.reset(None, seed::derive(cfg.run.master_seed, stream::EVAL, e as u64));
        let mut total = 0.0;
        let (mut aoi, mut vdf) = (0.0, 0.0);
        while !env.is_done() {
            let t0 = Instant::now();
            let actions = policy.act(&obs)?;
            infer_s += t0.elapsed().as_secs_f64();
            infer_n += 1;
            let r = env.step(&actions)?;
            total += r.rewards.iter().sum::<f64>();
            aoi += r.info.mean_aoi;
            vdf += r.info.mean_vdf;
            write_positions(&mut traj, e, &env)?;
            obs = r.observations;
        }
        let steps = params.steps as f64;
        let row = EvalEpisode {
            episode: e,
            reward: total / env.uavs().len() as f64,
            aoi_mean: aoi / steps,
            vdf_mean: vdf / steps,
        };
        summary.serialize((row.episode, row.reward, row.aoi_mean, row.vdf_mean))?;
        rows.push(row);
    }
    traj.flush()?;
    summary.flush()?;
    let per_step = infer_s * 1e6 / infer_n.max(1) as f64;
    let report = EvalReport {
        n_uav: params.fleet.total(),
        steps: params.steps,
        episodes: rows,
        inference_us_per_step: per_step,
        inference_us_per_agent: per_step / params.fleet.total() as f64,
    };
    fs::write(out.join("eval_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

fn write_positions<W: std::io::Write>(traj: &mut csv::Writer<W>, episode: usize, env: &Env) -> Result<()> {
    let t = env.time();
    for (i, u) in env.uavs().iter().enumerate() {
        traj.write_record([
            episode.to_string(),
            t.to_string(),
            i.to_string(),
            u.role.to_string(),
            u.position[0].to_string(),
            u.position[1].to_string(),
            u.position[2].to_string(),
        ])?;
    }
    Ok(())
}

/// Loads a checkpoint and evaluates it.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, scenario: Option<&Path>, episodes: usize, out: &Path) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let policy = Policy::from_checkpoint(&ck, &EnvParams::from_config(cfg))?;
    cmd_eval_policy(cfg, &policy, eval_scenario(cfg, scenario)?, episodes, out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRow {
    pub n_uav: usize,
    pub timed_steps: usize,
    pub step_us: f64,
    pub per_agent_us: f64,
}

/// Times `steps` joint steps (policy inference plus environment update) of
/// an untrained fleet for each size, discarding the first 10% as warm-up.
pub fn cmd_scale(cfg: &RunConfig, sizes: &[usize], steps: usize, out: Option<&Path>) -> Result<Vec<ScaleRow>> {
    if steps < 10 {
        return Err(Error::Config("scale needs at least 10 steps".into()));
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let mut c = cfg.clone();
        c.fleet = FleetConfig::even(n)?;
        c.train.steps = steps;
        c.run.scenario_pool = 1;
        c.validate()?;
        let policy = Trainer::new(&c)?.policy();
        let scenario = Arc::new(generate_scenario(&c.env, seed::derive(c.run.master_seed, stream::EVAL, 0))?);
        let mut env = Env::new(EnvParams::from_config(&c), scenario, c.run.master_seed)?;
        let mut obs = env.observations();
        let warm = steps / 10;
        let mut timed = 0.0;
        for k in 0..steps {
            let t0 = Instant::now();
            let actions = policy.act(&obs)?;
            let r = env.step(&actions)?;
            let dt = t0.elapsed().as_secs_f64();
            if k >= warm {
                timed += dt;
            }
            obs = r.observations;
        }
        let n_timed = steps - warm;
        let step_us = timed * 1e6 / n_timed as f64;
        rows.push(ScaleRow { n_uav: n, timed_steps: n_timed, step_us, per_agent_us: step_us / n as f64 });
    }
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_path(out.join("scale.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

/// Centered moving average; windows are truncated at the edges.
pub fn window_mean(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(w / 2);
            let hi = (i + (w - 1) / 2).min(n.saturating_sub(1));
            let s = &values[lo..=hi];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

/// Writes smoothed `episode value` series for reward, AoI and VDF.
pub fn cmd_plotdata(metrics: &Path, window: usize, out: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_metrics(metrics)?;
    fs::create_dir_all(out)?;
    let episodes: Vec<usize> = rows.iter().map(|r| r.episode).collect();
    let series: [(&str, Vec<f64>); 3] = [
        ("reward", rows.iter().map(|r| r.reward_mean).collect()),
        ("aoi", rows.iter().map(|r| r.aoi_mean).collect()),
        ("vdf", rows.iter().map(|r| r.vdf_mean).collect()),
    ];
    let mut written = Vec::new();
    for (name, values) in series {
        let path = out.join(format!("{name}.dat"));
        let mut f = BufWriter::new(File::create(&path)?);
        writeln!(f, "# episode {name} (window {window})")?;
        for (e, v) in episodes.iter().zip(window_mean(&values, window)) {
            writeln!(f, "{e} {v}")?;
        }
        f.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the training scenario pool as JSON files.
pub fn cmd_gen_scenarios(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    scenario_pool(cfg)?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = out.join(format!("scenario_{i:03}.json"));
            s.save(&p)?;
            Ok(p)
        })
        .collect()
}
