use serde::{Deserialize, Serialize};

use crate::control::setpoint::{conjugate_gradient_map, DisutilityFunction, SetpointSolution};
use crate::error::{Error, Result};
use crate::plant::{equilibrium_map, EquilibriumParams};
use crate::scalar::{norm_inf, Scalar};
use crate::topology::{laplacian, spectral_summary, Topology, DEFAULT_ZERO_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityCertificate<T> {
    /// Dual vector in `span(1)`.
    pub q_h: Vec<T>,
    /// `‖D·Δȳ(u_h) + L·q_h‖∞`.
    pub residual_5a: T,
    /// `‖u_h − ∇z*(q_h)‖∞`.
    pub residual_5b: T,
    pub tolerance: T,
}

impl<T: Scalar> OptimalityCertificate<T> {
    pub fn passes(&self) -> bool {
        self.residual_5a <= self.tolerance && self.residual_5b <= self.tolerance
    }
}

/// Checks a setpoint solution against the distributed optimality conditions:
/// the equilibrium deviation weighted by `D` is absorbed by the Laplacian
/// acting on a consensus dual, and the primal point is the conjugate
/// gradient of that dual.
pub fn verify_optimality<T: Scalar>(
    t: &Topology<T>,
    d_weights: &[T],
    sol: &SetpointSolution<T>,
    p: &EquilibriumParams<T>,
    z: &[DisutilityFunction<T>],
) -> Result<OptimalityCertificate<T>> {
    let m = t.node_count();
    for len in [d_weights.len(), sol.u_h.len(), z.len()] {
        if len != m {
            return Err(Error::DimensionMismatch { expected: m, got: len });
        }
    }
    if d_weights.iter().any(|&w| w < T::zero()) {
        return Err(Error::ConditionViolated("D must be non-negative".into()));
    }
    let summary = spectral_summary(t, DEFAULT_ZERO_TOL)?;
    let x_l = summary.left_null_vector.ok_or_else(|| {
        Error::ConditionViolated(format!(
            "Laplacian zero eigenvalue has multiplicity {}, no globally reachable node",
            summary.zero_multiplicity
        ))
    })?;
    let weight: f64 = x_l.iter().zip(d_weights).map(|(x, w)| x * w.as_f64()).sum();
    if !(weight > 0.0) {
        return Err(Error::ConditionViolated(format!("x_L' D 1 = {weight} is not positive")));
    }

    let q_h = vec![sol.nu; m];
    let l = laplacian(t);
    let dy = equilibrium_map(&sol.u_h, p)?;
    let res_a: Vec<T> = (0..m)
        .map(|i| {
            let lq = (0..m).fold(T::zero(), |s, j| s + l[(i, j)] * q_h[j]);
            d_weights[i] * dy[i] + lq
        })
        .collect();
    let res_b = z
        .iter()
        .zip(&sol.u_h)
        .zip(&q_h)
        .map(|((zj, &u), &q)| conjugate_gradient_map(zj, q).map(|v| u - v))
        .collect::<Result<Vec<T>>>()?;
    Ok(OptimalityCertificate {
        residual_5a: norm_inf(&res_a),
        residual_5b: norm_inf(&res_b),
        q_h,
        tolerance: T::lit(T::BALANCE_TOL * 100.0),
    })
}
