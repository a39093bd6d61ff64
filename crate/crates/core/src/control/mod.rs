//! Distributed averaging PI control and the setpoint optimization behind it.

mod dapi;
mod optimality;
mod setpoint;

pub use dapi::{closed_loop_matrix, dapi_derivative, default_local_gains, q_matrix, AgentState};
pub use optimality::{verify_optimality, OptimalityCertificate};
pub use setpoint::{conjugate_gradient_map, solve_setpoints, solve_setpoints_with, DisutilityFunction, SetpointSolution, SolverOptions};
