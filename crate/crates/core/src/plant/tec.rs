//! Single-reaction surrogate of the Tennessee Eastman process.
//!
//! Reactor temperature is heated by the reactive feeds (A and C) and cooled
//! toward the coolant temperature; the yield of product G peaks at `t_opt`.
//! Pressure and the three levels relax toward nominal values shifted by the
//! relative feed imbalance. The single disturbance channel is an additive
//! heat load in °C/min.

use serde::{Deserialize, Serialize};

use crate::plant::{BoundaryFlows, PlantModel};
use crate::scalar::Scalar;

pub const TEC_STATES: [&str; 5] =
    ["reactor_temperature", "reactor_pressure", "reactor_level", "separator_level", "stripper_level"];
pub const TEC_INPUTS: [&str; 3] = ["feed_a", "feed_b", "feed_c"];
pub const TEC_OUTPUTS: [&str; 2] = ["temperature_deviation", "yield_deviation"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TecParams<T> {
    pub coolant_temp_c: T,
    pub cooling_rate_per_min: T,
    /// Equilibrium reactor temperature at nominal feeds.
    pub nominal_temp_c: T,
    /// `k_r·h_rxn`; derived from the nominal balance when absent.
    pub heat_gain: Option<T>,
    pub yield_max: T,
    pub optimal_temp_c: T,
    pub yield_width_c: T,
    /// Nominal feeds A (kscmh), B (kg/h), C (kscmh).
    pub nominal_inputs: [T; 3],
    pub aux_time_constant_min: T,
    /// Nominal pressure (kPa) and reactor/separator/stripper levels (m³).
    pub aux_nominal: [T; 4],
    pub aux_sensitivity: [T; 4],
}

impl Default for TecParams<f64> {
    fn default() -> Self {
        Self {
            coolant_temp_c: 25.0,
            cooling_rate_per_min: 0.2,
            nominal_temp_c: 120.0,
            heat_gain: None,
            yield_max: 0.95,
            optimal_temp_c: 120.0,
            yield_width_c: 40.0,
            nominal_inputs: [0.25, 3686.0, 9.35],
            aux_time_constant_min: 20.0,
            aux_nominal: [2705.0, 16.55, 6.15, 5.05],
            aux_sensitivity: [0.2, 0.3, 0.3, 0.3],
        }
    }
}

impl<T: Scalar> TecParams<T> {
    pub fn cast_from(p: &TecParams<f64>) -> Self {
        let c = T::lit;
        Self {
            coolant_temp_c: c(p.coolant_temp_c),
            cooling_rate_per_min: c(p.cooling_rate_per_min),
            nominal_temp_c: c(p.nominal_temp_c),
            heat_gain: p.heat_gain.map(c),
            yield_max: c(p.yield_max),
            optimal_temp_c: c(p.optimal_temp_c),
            yield_width_c: c(p.yield_width_c),
            nominal_inputs: p.nominal_inputs.map(c),
            aux_time_constant_min: c(p.aux_time_constant_min),
            aux_nominal: p.aux_nominal.map(c),
            aux_sensitivity: p.aux_sensitivity.map(c),
        }
    }

    fn nominal_reactive(&self) -> T {
        self.nominal_inputs[0] + self.nominal_inputs[2]
    }

    /// Heat gain that places the equilibrium at `nominal_temp_c` under nominal feeds.
    pub fn effective_heat_gain(&self) -> T {
        self.heat_gain.unwrap_or_else(|| {
            self.cooling_rate_per_min * (self.nominal_temp_c - self.coolant_temp_c) / self.nominal_reactive()
        })
    }
}

#[derive(Debug, Clone)]
pub struct TecSurrogate<T: Scalar> {
    params: TecParams<T>,
    heat_gain: T,
    states: Vec<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl<T: Scalar> TecSurrogate<T> {
    pub fn new(params: TecParams<T>) -> Self {
        let heat_gain = params.effective_heat_gain();
        Self {
            params,
            heat_gain,
            states: TEC_STATES.iter().map(|s| s.to_string()).collect(),
            inputs: TEC_INPUTS.iter().map(|s| s.to_string()).collect(),
            outputs: TEC_OUTPUTS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn params(&self) -> &TecParams<T> {
        &self.params
    }

    pub fn heat_gain(&self) -> T {
        self.heat_gain
    }

    pub fn nominal_inputs(&self) -> Vec<T> {
        self.params.nominal_inputs.to_vec()
    }

    /// `Y(T) = Y_max·exp(−((T − T_opt)/σ_T)²)`.
    pub fn yield_at(&self, temp: T) -> T {
        let z = (temp - self.params.optimal_temp_c) / self.params.yield_width_c;
        self.params.yield_max * (-(z * z)).exp()
    }

    /// Equilibrium under nominal feeds and zero heat load.
    pub fn equilibrium_state(&self) -> Vec<T> {
        let mut x = vec![self.params.nominal_temp_c];
        x.extend_from_slice(&self.params.aux_nominal);
        x
    }

    fn imbalance(&self, u: &[T]) -> T {
        let nom = &self.params.nominal_inputs;
        let reactive = (u[0] + u[2] - self.params.nominal_reactive()) / self.params.nominal_reactive();
        let b = if nom[1] != T::zero() { (u[1] - nom[1]) / nom[1] } else { T::zero() };
        reactive + b
    }
}

impl TecSurrogate<f64> {
    pub fn nominal() -> Self {
        Self::new(TecParams::default())
    }
}

impl<T: Scalar> PlantModel<T> for TecSurrogate<T> {
    fn state_names(&self) -> &[String] {
        &self.states
    }

    fn input_names(&self) -> &[String] {
        &self.inputs
    }

    fn output_names(&self) -> &[String] {
        &self.outputs
    }

    fn disturbance_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &[T], u: &[T], d: &[T], dx: &mut [T]) {
        let p = &self.params;
        let heat_load = d.first().copied().unwrap_or_else(T::zero);
        dx[0] = self.heat_gain * (u[0] + u[2]) - p.cooling_rate_per_min * (x[0] - p.coolant_temp_c) + heat_load;
        let rho = self.imbalance(u);
        for i in 0..4 {
            let target = p.aux_nominal[i] * (T::one() + p.aux_sensitivity[i] * rho);
            dx[i + 1] = (target - x[i + 1]) / p.aux_time_constant_min;
        }
    }

    fn output(&self, x: &[T], _u: &[T], _d: &[T]) -> Vec<T> {
        let t_nom = self.params.nominal_temp_c;
        vec![x[0] - t_nom, self.yield_at(x[0]) - self.yield_at(t_nom)]
    }

    fn boundary_flows(&self, x: &[T], u: &[T], _d: &[T]) -> Option<BoundaryFlows<T>> {
        let reactive = u[0] + u[2];
        Some(BoundaryFlows { product: self.yield_at(x[0]) * reactive, total_feed: u[0] + u[1] + u[2], reactive_feed: reactive })
    }
}
