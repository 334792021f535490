//! Run configuration. Defaults reproduce the environmental and hyperparameter
//! tables of the agricultural setup; files are TOML with flat dotted keys such
//! as `env.x_max = 400.0`, and `--set key=value` overrides use the same keys.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::comms::LinkParams;
use crate::energy::PhysicalConstants;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub v_x_max: f64,
    pub v_y_max: f64,
    /// Flight altitudes of communication, monitoring and collection UAVs, m.
    pub h_c: f64,
    pub h_m: f64,
    pub h_d: f64,
    pub n_ws: usize,
    /// Minimum pairwise sensor spacing, m.
    pub ws_spacing: f64,
    /// AoI update cycle of each sensor type, s. Its length is the number of types.
    pub ws_cycles: Vec<f64>,
    pub n_px: usize,
    pub n_py: usize,
    pub n_gx: usize,
    pub n_gy: usize,
    pub aoi_max: u32,
    pub vdf_max: u32,
    pub t_step: f64,
    pub t_v: f64,
    /// Grid image-quality distance threshold, m.
    pub d_th: f64,
    /// Plot quality needed for a successful capture.
    pub q_th: f64,
    /// Service-metric weights for the client centroid, farthest client and
    /// communication-fleet centroid distances.
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    /// Nearest sensors whose AoI enters a collection UAV's observation.
    pub obs_sensors: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 400.0,
            y_min: 0.0,
            y_max: 400.0,
            v_x_max: 10.0,
            v_y_max: 10.0,
            h_c: 22.0,
            h_m: 20.0,
            h_d: 18.0,
            n_ws: 400,
            ws_spacing: 10.0,
            ws_cycles: vec![40.0, 50.0, 60.0],
            n_px: 20,
            n_py: 20,
            n_gx: 4,
            n_gy: 4,
            aoi_max: 5,
            vdf_max: 5,
            t_step: 1.0,
            t_v: 30.0,
            d_th: 40.0,
            q_th: 0.7,
            eps1: 0.5,
            eps2: 0.2,
            eps3: 0.3,
            obs_sensors: 5,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return fail("env: x_min < x_max and y_min < y_max required");
        }
        if !(self.v_x_max > 0.0 && self.v_y_max > 0.0) {
            return fail("env.v_x_max and env.v_y_max must be positive");
        }
        if self.n_ws == 0 {
            return fail("env.n_ws must be at least 1");
        }
        if !(self.ws_spacing >= 0.0) {
            return fail("env.ws_spacing must be non-negative");
        }
        if self.ws_cycles.is_empty() || self.ws_cycles.iter().any(|c| !(*c > 0.0)) {
            return fail("env.ws_cycles needs at least one positive cycle");
        }
        if self.n_px == 0 || self.n_py == 0 || self.n_gx == 0 || self.n_gy == 0 {
            return fail("env plot and grid counts must be at least 1");
        }
        if self.aoi_max < 1 || self.vdf_max < 1 {
            return fail("env.aoi_max and env.vdf_max must be at least 1");
        }
        if !(self.t_step > 0.0) || !crate::world::is_multiple(self.t_v, self.t_step) {
            return fail("env.t_step must be positive and divide env.t_v");
        }
        if !(self.d_th > 0.0) {
            return fail("env.d_th must be positive");
        }
        if !(0.0..=1.0).contains(&self.q_th) {
            return fail("env.q_th must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn d_safety(&self) -> f64 {
        2.0 * self.v_x_max.hypot(self.v_y_max)
    }
}

/// Sign convention of the service-distance term in the communication reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceSign {
    /// Reward decreases of the service metric.
    Reduction,
    /// Reward `+alpha1 * (D_c(k) - D_c(k-1))` as literally written.
    Verbatim,
}

/// Reward weights alpha1..alpha10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub service: f64,
    pub energy: f64,
    pub collision: f64,
    pub boundary: f64,
    pub vmuf: f64,
    pub vdf_penalty: f64,
    pub vdf_motivation: f64,
    pub dcuf: f64,
    pub aoi_penalty: f64,
    pub aoi_motivation: f64,
    pub service_sign: ServiceSign,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            service: 1.0,
            energy: 0.005,
            collision: 5.0,
            boundary: 10.0,
            vmuf: 2.0,
            vdf_penalty: 0.5,
            vdf_motivation: 0.2,
            dcuf: 2.0,
            aoi_penalty: 0.5,
            aoi_motivation: 0.2,
            service_sign: ServiceSign::Reduction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub steps: usize,
    pub gamma: f64,
    /// Target-critic soft update rate.
    pub xi: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Initial soft-imitation coefficient.
    pub imitation_coef: f64,
    /// Initial mimicry cycle, episodes.
    pub mimicry_cycle: usize,
    /// Shared-ensemble synchronisation rate.
    pub sec_rate: f64,
    /// Weight of the local critic in the predicted Q value.
    pub local_weight: f64,
    pub ensemble_size: usize,
    /// Elite score weights on the reward mean and variance.
    pub elite_mean_weight: f64,
    pub elite_var_weight: f64,
    pub eia: bool,
    pub sec: bool,
    pub hidden: Vec<usize>,
    /// Exploration noise standard deviation as a fraction of the speed limit,
    /// decayed linearly from `noise_start` to `noise_end` over the first
    /// `noise_decay` fraction of training.
    pub noise_start: f64,
    pub noise_end: f64,
    pub noise_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            steps: 500,
            gamma: 0.99,
            xi: 0.005,
            lr_actor: 1e-4,
            lr_critic: 1e-5,
            buffer_capacity: 1 << 16,
            batch_size: 128,
            imitation_coef: 0.1,
            mimicry_cycle: 10,
            sec_rate: 0.1,
            local_weight: 0.1,
            ensemble_size: 2,
            elite_mean_weight: 1.0,
            elite_var_weight: -0.5,
            eia: true,
            sec: true,
            hidden: vec![64, 64],
            noise_start: 0.3,
            noise_end: 0.05,
            noise_decay: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.steps == 0 {
            return fail("train.steps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("train.gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return fail(format!("train.xi must lie in [0, 1], got {}", self.xi));
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return fail("learning rates must be positive".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return fail("train.batch_size must be in 1..=train.buffer_capacity".into());
        }
        if !(self.imitation_coef > 0.0 && self.imitation_coef <= 1.0) {
            return fail("train.imitation_coef must lie in (0, 1]".into());
        }
        if self.mimicry_cycle == 0 {
            return fail("train.mimicry_cycle must be at least 1".into());
        }
        if self.ensemble_size == 0 {
            return fail("train.ensemble_size must be at least 1".into());
        }
        // largest sync coefficient is sec_rate * k_s / k_s
        if !(0.0..=1.0).contains(&self.sec_rate) {
            return fail(format!("train.sec_rate gives a sync coefficient above 1: {}", self.sec_rate));
        }
        if !(0.0..=1.0).contains(&self.local_weight) {
            return fail("train.local_weight must lie in [0, 1]".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("train.hidden needs at least one non-empty layer".into());
        }
        if self.noise_start < 0.0 || self.noise_end < 0.0 || !(0.0..=1.0).contains(&self.noise_decay) {
            return fail("exploration noise settings out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetConfig {
    pub n_c: usize,
    pub n_m: usize,
    pub n_d: usize,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self { n_c: 4, n_m: 4, n_d: 4 }
    }
}

impl FleetConfig {
    pub fn total(&self) -> usize {
        self.n_c + self.n_m + self.n_d
    }

    /// Splits a fleet size evenly across the three roles.
    pub fn even(total: usize) -> Result<Self> {
        if total == 0 || total % 3 != 0 {
            return Err(Error::Config(format!("fleet size {total} does not split into three roles")));
        }
        Ok(Self { n_c: total / 3, n_m: total / 3, n_d: total / 3 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub master_seed: u64,
    /// Number of training scenarios (sensor layouts).
    pub scenario_pool: usize,
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            master_seed: 1,
            scenario_pool: 20,
            out_dir: "runs/default".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub energy: PhysicalConstants,
    pub link: LinkParams,
    pub reward: RewardWeights,
    pub train: TrainConfig,
    pub fleet: FleetConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.energy.validate()?;
        self.link.validate()?;
        self.train.validate()?;
        if self.fleet.total() == 0 {
            return Err(Error::Config("fleet must contain at least one UAV".into()));
        }
        if self.run.scenario_pool == 0 {
            return Err(Error::Config("run.scenario_pool must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses a configuration text, applies `key=value` overrides and validates.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the built-in defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    /// Fully resolved configuration as flat `section.key = value` lines.
    pub fn to_flat_toml(&self) -> String {
        let value = toml::Value::try_from(self).expect("configuration serializes");
        let mut out = String::new();
        if let toml::Value::Table(sections) = value {
            for (section, body) in sections {
                if let toml::Value::Table(fields) = body {
                    for (key, v) in fields {
                        out.push_str(&format!("{section}.{key} = {v}\n"));
                    }
                }
            }
        }
        out
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override key `{key}`: `{part}` is not a section"))),
        };
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_table_defaults() {
        let cfg = RunConfig::from_toml_with("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.env.x_max, 400.0);
        assert_eq!(cfg.train.buffer_capacity, 65536);
        assert_eq!(cfg.reward.boundary, 10.0);
        assert!((cfg.env.d_safety() - 28.284_271_247_461_9).abs() < 1e-12);
    }

    #[test]
    fn dotted_keys_and_overrides() {
        let text = "env.x_max = 100.0\nenv.y_max = 100.0\nfleet.n_c = 2\n";
        let cfg = RunConfig::from_toml_with(
            text,
            &["fleet.n_m=3".into(), "train.eia=false".into(), "reward.service_sign=verbatim".into()],
        )
        .unwrap();
        assert_eq!(cfg.env.x_max, 100.0);
        assert_eq!(cfg.fleet.n_c, 2);
        assert_eq!(cfg.fleet.n_m, 3);
        assert!(!cfg.train.eia);
        assert_eq!(cfg.reward.service_sign, ServiceSign::Verbatim);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let err = RunConfig::from_toml_with("env.x_maxx = 3.0", &[]).unwrap_err();
        assert!(err.to_string().contains("x_maxx"), "{err}");
        let err = RunConfig::from_toml_with("", &["bogus.key=1".into()]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_with("env.x_max = -1.0", &[]).is_err());
        assert!(RunConfig::from_toml_with("train.sec_rate = 1.5", &[]).is_err());
        assert!(RunConfig::from_toml_with("", &["fleet.n_c".into()]).is_err());
    }

    #[test]
    fn flat_echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.env.x_max = 123.5;
        cfg.train.hidden = vec![32, 16];
        cfg.run.master_seed = 42;
        let text = cfg.to_flat_toml();
        assert!(text.contains("env.x_max = 123.5"));
        assert_eq!(RunConfig::from_toml_with(&text, &[]).unwrap(), cfg);
    }
}
