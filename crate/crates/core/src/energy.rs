//! Rotary-wing power model and per-step energy accounting for the three UAV roles.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::world::{Role, UavState};

/// Airframe, avionics and radio constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// UAV mass, kg.
    pub mass: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    /// Air density, kg/m^3.
    pub air_density: f64,
    /// Speed below which the UAV is treated as hovering, m/s.
    pub hover_threshold: f64,
    pub drag_coefficient: f64,
    pub propellers: u32,
    /// Propeller radius, m.
    pub propeller_radius: f64,
    /// Mechanical efficiency in (0, 1].
    pub efficiency: f64,
    /// Fuselage surface area, m^2.
    pub fuselage_area: f64,
    /// Static power of the computing module, W.
    pub static_power: f64,
    /// Supply voltage, V.
    pub voltage: f64,
    /// Clock frequency, Hz.
    pub clock_hz: f64,
    pub activity_factor: f64,
    /// Load capacitance, F.
    pub load_capacitance: f64,
    /// UAV transmit power, dBm.
    pub tx_power_dbm: f64,
    /// UAV receive-chain power, dBm.
    pub rx_power_dbm: f64,
    /// Camera power of monitoring UAVs, W.
    pub camera_power: f64,
    /// Extra communication power of collection UAVs, dBm.
    pub extra_comm_dbm: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mass: 0.2,
            gravity: 9.8,
            air_density: 1.225,
            hover_threshold: 0.1,
            drag_coefficient: 0.5,
            propellers: 4,
            propeller_radius: 0.1,
            efficiency: 0.8,
            fuselage_area: 0.01,
            static_power: 4.0,
            voltage: 5.0,
            clock_hz: 200e6,
            activity_factor: 0.5,
            load_capacitance: 6.4e-9,
            tx_power_dbm: 20.0,
            rx_power_dbm: 20.0,
            camera_power: 2.5,
            extra_comm_dbm: 40.0,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("energy.mass", self.mass),
            ("energy.gravity", self.gravity),
            ("energy.air_density", self.air_density),
            ("energy.hover_threshold", self.hover_threshold),
            ("energy.drag_coefficient", self.drag_coefficient),
            ("energy.propeller_radius", self.propeller_radius),
            ("energy.fuselage_area", self.fuselage_area),
            ("energy.static_power", self.static_power),
            ("energy.voltage", self.voltage),
            ("energy.clock_hz", self.clock_hz),
            ("energy.load_capacitance", self.load_capacitance),
            ("energy.camera_power", self.camera_power),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.propellers == 0 {
            return Err(Error::Config("energy.propellers must be at least 1".into()));
        }
        for (name, v) in [
            ("energy.efficiency", self.efficiency),
            ("energy.activity_factor", self.activity_factor),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    fn rotor_disc_area(&self) -> f64 {
        f64::from(self.propellers) * PI * self.propeller_radius * self.propeller_radius
    }

    /// Frontal area: fuselage plus rotor discs.
    pub fn frontal_area(&self) -> f64 {
        self.fuselage_area + self.rotor_disc_area()
    }

    /// Parasitic drag coefficient of the forward-flight branch.
    pub fn c1(&self) -> f64 {
        0.5 * self.air_density * self.frontal_area() * self.drag_coefficient
    }

    /// Induced-power coefficient of the forward-flight branch.
    pub fn c2(&self) -> f64 {
        self.mass * self.mass / (self.efficiency * self.air_density * self.rotor_disc_area())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Instantaneous flight power for a horizontal velocity, W.
pub fn flight_power(velocity: [f64; 2], k: &PhysicalConstants) -> f64 {
    let speed = velocity[0].hypot(velocity[1]);
    if speed < k.hover_threshold {
        k.mass * k.gravity.powf(1.5) / ((2.0 * k.air_density * k.frontal_area()).sqrt() * k.efficiency)
    } else {
        k.c1() * speed * speed + k.c2() / speed + k.mass * k.gravity * speed
    }
}

/// Static plus dynamic power of the onboard computer, W.
pub fn compute_power(k: &PhysicalConstants) -> f64 {
    k.static_power + k.load_capacitance * k.voltage * k.voltage * k.clock_hz * k.activity_factor
}

/// Radio power, plus the camera for monitoring UAVs and the sensor uplink
/// radio for collection UAVs, W.
pub fn comm_power(role: Role, k: &PhysicalConstants) -> f64 {
    let base = dbm_to_watts(k.tx_power_dbm) + dbm_to_watts(k.rx_power_dbm);
    match role {
        Role::Communication => base,
        Role::Monitoring => base + k.camera_power,
        Role::Collection => base + dbm_to_watts(k.extra_comm_dbm),
    }
}

/// Total power drawn by a UAV of `role` flying at `velocity`, W.
pub fn total_power(role: Role, velocity: [f64; 2], k: &PhysicalConstants) -> f64 {
    flight_power(velocity, k) + compute_power(k) + comm_power(role, k)
}

/// Energy consumed over one step of length `dt`, J (left-rectangle rule).
pub fn step_energy(state: &UavState, k: &PhysicalConstants, dt: f64) -> f64 {
    total_power(state.role, state.velocity, k) * dt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uav(role: Role, v: [f64; 2]) -> UavState {
        UavState::new(role, [0.0, 0.0, 20.0]).with_velocity(v)
    }

    #[test]
    fn hover_branch_ignores_speed_below_threshold() {
        let k = PhysicalConstants::default();
        let hover = flight_power([0.0, 0.0], &k);
        assert!((hover - 13.303_448_766_400_231).abs() < 1e-9);
        assert_eq!(flight_power([0.1 - 1e-9, 0.0], &k), hover);
        assert_eq!(flight_power([0.0, 0.05], &k), hover);
    }

    #[test]
    fn forward_flight_at_max_speed() {
        let k = PhysicalConstants::default();
        let p = flight_power([10.0, 0.0], &k);
        assert!((p - 23.787_181_601_278_496).abs() < 1e-9, "{p}");
        // direction does not matter, only the magnitude
        let q = flight_power([6.0, 8.0], &k);
        assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn compute_power_cases() {
        let mut k = PhysicalConstants::default();
        assert!((compute_power(&k) - 20.0).abs() < 1e-12);
        k.clock_hz *= 2.0;
        assert!((compute_power(&k) - 36.0).abs() < 1e-12);
        k.activity_factor = 0.0;
        assert_eq!(compute_power(&k), k.static_power);
    }

    #[test]
    fn comm_power_per_role() {
        let k = PhysicalConstants::default();
        assert!((comm_power(Role::Communication, &k) - 0.2).abs() < 1e-12);
        assert!((comm_power(Role::Monitoring, &k) - 2.7).abs() < 1e-12);
        assert!((comm_power(Role::Collection, &k) - 10.2).abs() < 1e-12);
    }

    #[test]
    fn step_energy_hover_totals() {
        let k = PhysicalConstants::default();
        let hover = 13.303_448_766_400_231;
        let e = step_energy(&uav(Role::Communication, [0.0, 0.0]), &k, 1.0);
        assert!((e - (hover + 20.0 + 0.2)).abs() < 1e-9);
        assert!((e - 33.50).abs() < 5e-3);
        let e = step_energy(&uav(Role::Collection, [0.0, 0.0]), &k, 1.0);
        assert!((e - 43.50).abs() < 5e-3);
        assert_eq!(step_energy(&uav(Role::Collection, [3.0, 0.0]), &k, 0.0), 0.0);
    }

    #[test]
    fn monitoring_exceeds_communication_by_camera() {
        let k = PhysicalConstants::default();
        for v in [[0.0, 0.0], [1.0, 2.0], [10.0, -10.0]] {
            let m = step_energy(&uav(Role::Monitoring, v), &k, 1.0);
            let c = step_energy(&uav(Role::Communication, v), &k, 1.0);
            assert!((m - c - k.camera_power).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_power_increases_past_minimum() {
        let k = PhysicalConstants::default();
        let v_min = (k.c2() / (2.0 * k.c1())).cbrt().max(k.hover_threshold);
        let mut prev = flight_power([v_min, 0.0], &k);
        let mut v = v_min;
        while v < 30.0 {
            v += 0.01;
            let p = flight_power([v, 0.0], &k);
            assert!(p > prev, "not increasing at {v}");
            prev = p;
        }
    }

    #[test]
    fn cumulative_energy_is_exact_sum() {
        let k = PhysicalConstants::default();
        let mut s = uav(Role::Monitoring, [3.0, 4.0]);
        let mut expected = 0.0;
        for _ in 0..10_000 {
            let e = step_energy(&s, &k, 1.0);
            assert!(e >= 0.0);
            expected += e;
            s.cumulative_energy += e;
        }
        assert_eq!(s.cumulative_energy, expected);
    }
}
