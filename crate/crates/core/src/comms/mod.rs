//! Sensor-to-UAV uplink model (path loss, noise, SINR, BER, PLR), collection
//! draws, and the communication-service assignment and metric.

mod hungarian;

pub use hungarian::{hungarian_assign, Assignment};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::energy::dbm_to_watts;
use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::world::{dist3, Sensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    /// Carrier frequency, GHz.
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub temperature_k: f64,
    pub boltzmann: f64,
    pub packet_bytes: u32,
    /// Sensor transmit power, dBm.
    pub ws_tx_dbm: f64,
    /// Sensor antenna gain, dBi.
    pub ws_gain_dbi: f64,
    /// Vegetation loss `a1 * f_GHz^a2 * d_m^a3`.
    pub veg_a1: f64,
    pub veg_a2: f64,
    pub veg_a3: f64,
    /// Maximum 3D sensor-to-UAV distance for a connection, m.
    pub collect_radius: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            carrier_ghz: 2.8,
            bandwidth_hz: 20e6,
            temperature_k: 298.0,
            boltzmann: 1.38e-23,
            packet_bytes: 20,
            ws_tx_dbm: 20.0,
            ws_gain_dbi: 0.0,
            veg_a1: 0.2,
            veg_a2: 0.5,
            veg_a3: 0.3,
            collect_radius: 80.0,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_ghz > 0.0 && self.bandwidth_hz > 0.0 && self.temperature_k > 0.0) {
            return Err(Error::Config("link: frequency, bandwidth and temperature must be positive".into()));
        }
        if self.packet_bytes == 0 {
            return Err(Error::Config("link.packet_bytes must be at least 1".into()));
        }
        if !(self.collect_radius > 0.0) {
            return Err(Error::Config("link.collect_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn packet_bits(&self) -> u32 {
        8 * self.packet_bytes
    }
}

/// Free-space (distance in km, frequency in MHz) plus vegetation (GHz, m)
/// path loss, dB.
pub fn path_loss(distance_m: f64, p: &LinkParams) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::Degenerate(format!("path loss at distance {distance_m}")));
    }
    let free_space = 20.0 * (distance_m / 1000.0).log10() + 20.0 * (p.carrier_ghz * 1000.0).log10() + 32.44;
    let vegetation = p.veg_a1 * p.carrier_ghz.powf(p.veg_a2) * distance_m.powf(p.veg_a3);
    Ok(free_space + vegetation)
}

/// `k_B * T * B`, W.
pub fn thermal_noise(p: &LinkParams) -> f64 {
    p.boltzmann * p.temperature_k * p.bandwidth_hz
}

/// Power received at `uav` from a sensor on the ground, W. Distances are
/// clamped to at least 1 m.
pub fn received_power(uav: [f64; 3], sensor: [f64; 2], p: &LinkParams) -> f64 {
    let d = dist3(uav, [sensor[0], sensor[1], 0.0]).max(1.0);
    let pl = path_loss(d, p).expect("clamped distance is positive");
    dbm_to_watts(p.ws_tx_dbm + p.ws_gain_dbi - pl)
}

/// Linear SINR at `uav` for `serving`; every other sensor in `active` counts
/// as an interferer.
pub fn sinr(uav: [f64; 3], serving: usize, active: &[usize], sensors: &[Sensor], p: &LinkParams) -> Result<f64> {
    if active.is_empty() {
        return Err(Error::Degenerate("empty active sensor set".into()));
    }
    if !active.contains(&serving) {
        return Err(Error::Degenerate(format!("serving sensor {serving} is not active")));
    }
    let signal = received_power(uav, sensors[serving].position, p);
    let interference: f64 = active
        .iter()
        .filter(|&&k| k != serving)
        .map(|&k| received_power(uav, sensors[k].position, p))
        .sum();
    Ok(signal / (interference + thermal_noise(p)))
}

/// BPSK bit error rate with the exponential Q-function approximation,
/// `Q(sqrt(2 s)) ~ exp(-s) / 2`.
pub fn ber(sinr_linear: f64) -> f64 {
    0.5 * (-sinr_linear.max(0.0)).exp()
}

/// Probability that a packet of `packet_bytes` bytes has at least one bit error.
pub fn plr(ber: f64, packet_bytes: u32) -> f64 {
    let bits = 8.0 * f64::from(packet_bytes);
    -(bits * (-ber.clamp(0.0, 1.0)).ln_1p()).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionOutcome {
    Success,
    Failure,
    OutOfRange,
}

/// One upload attempt: out of range beyond `radius`, otherwise a single
/// uniform draw succeeding with probability `1 - plr`.
pub fn attempt_collection(uav: [f64; 3], sensor: [f64; 2], plr: f64, radius: f64, rng: &mut Rng) -> CollectionOutcome {
    if dist3(uav, [sensor[0], sensor[1], 0.0]) > radius {
        return CollectionOutcome::OutOfRange;
    }
    let u: f64 = rng.random();
    if u < 1.0 - plr {
        CollectionOutcome::Success
    } else {
        CollectionOutcome::Failure
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkAttempt {
    /// Index into the collection-UAV positions.
    pub uav: usize,
    pub sensor: usize,
    pub sinr: f64,
    pub plr: f64,
    pub outcome: CollectionOutcome,
}

/// One collection round. Every requesting sensor connects to its nearest
/// in-range collection UAV; sensors uploading to other UAVs interfere. Draws
/// are taken in sensor order.
pub fn collection_round(
    uavs: &[[f64; 3]],
    sensors: &[Sensor],
    requesting: &[bool],
    p: &LinkParams,
    rng: &mut Rng,
) -> Vec<UplinkAttempt> {
    let mut links: Vec<(usize, usize)> = Vec::new();
    for (j, ws) in sensors.iter().enumerate() {
        if !requesting.get(j).copied().unwrap_or(false) {
            continue;
        }
        let ground = [ws.position[0], ws.position[1], 0.0];
        let mut best: Option<(usize, f64)> = None;
        for (i, u) in uavs.iter().enumerate() {
            let d = dist3(*u, ground);
            if d <= p.collect_radius && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            links.push((i, j));
        }
    }
    let noise = thermal_noise(p);
    // power each UAV receives from the transmitters linked to other UAVs
    let interference: Vec<f64> = (0..uavs.len())
        .map(|i| {
            links
                .iter()
                .filter(|&&(other, _)| other != i)
                .map(|&(_, k)| received_power(uavs[i], sensors[k].position, p))
                .sum()
        })
        .collect();
    links
        .iter()
        .map(|&(i, j)| {
            let signal = received_power(uavs[i], sensors[j].position, p);
            let s = signal / (interference[i] + noise);
            let loss = plr(ber(s), p.packet_bytes);
            let outcome = attempt_collection(uavs[i], sensors[j].position, loss, p.collect_radius, rng);
            UplinkAttempt { uav: i, sensor: j, sinr: s, plr: loss, outcome }
        })
        .collect()
}

pub fn centroid(points: impl IntoIterator<Item = [f64; 3]>) -> Option<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for p in points {
        sum[0] += p[0];
        sum[1] += p[1];
        sum[2] += p[2];
        n += 1;
    }
    (n > 0).then(|| [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64])
}

/// Geometry of one communication UAV relative to its clients and peers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceGeometry {
    pub client_centroid: Option<[f64; 3]>,
    pub farthest_client: Option<[f64; 3]>,
    pub fleet_centroid: [f64; 3],
    pub d_client_centroid: f64,
    pub d_farthest: f64,
    pub d_fleet_centroid: f64,
}

pub fn service_geometry(server: usize, servers: &[[f64; 3]], clients: &[[f64; 3]], assignment: &Assignment) -> ServiceGeometry {
    let me = servers[server];
    let served: Vec<[f64; 3]> = assignment.clients_of(server).map(|c| clients[c]).collect();
    let client_centroid = centroid(served.iter().copied());
    let mut farthest_client = None;
    let mut d_farthest = 0.0;
    for c in &served {
        let d = dist3(me, *c);
        if farthest_client.is_none() || d > d_farthest {
            farthest_client = Some(*c);
            d_farthest = d;
        }
    }
    let fleet_centroid = centroid(servers.iter().copied()).expect("server list contains `server`");
    ServiceGeometry {
        client_centroid,
        farthest_client,
        fleet_centroid,
        d_client_centroid: client_centroid.map_or(0.0, |c| dist3(me, c)),
        d_farthest,
        d_fleet_centroid: dist3(me, fleet_centroid),
    }
}

/// Weighted service metric of one communication UAV; smaller is better.
pub fn service_metric(server: usize, servers: &[[f64; 3]], clients: &[[f64; 3]], assignment: &Assignment, weights: [f64; 3]) -> f64 {
    let g = service_geometry(server, servers, clients, assignment);
    weights[0] * g.d_client_centroid + weights[1] * g.d_farthest + weights[2] * g.d_fleet_centroid
}

/// Euclidean cost matrix, servers by clients.
pub fn distance_costs(servers: &[[f64; 3]], clients: &[[f64; 3]]) -> Vec<Vec<f64>> {
    servers
        .iter()
        .map(|s| clients.iter().map(|c| dist3(*s, *c)).collect())
        .collect()
}
