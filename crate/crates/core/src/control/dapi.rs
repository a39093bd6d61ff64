use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState<T> {
    pub node: NodeId,
    /// Integrator state, in input units.
    pub u: T,
    /// Bias, input units per minute.
    pub beta: T,
    /// Local measurement coefficient `C_j`.
    pub c: T,
}

/// `C_j = Σ_ℓ a_jℓ`, the choice that makes `Q = C − A` the Laplacian.
pub fn default_local_gains<T: Scalar>(t: &Topology<T>) -> Vec<T> {
    (0..t.node_count()).map(|i| t.row_sum(i)).collect()
}

pub fn q_matrix<T: Scalar>(t: &Topology<T>, c: &[T]) -> Result<DMatrix<T>> {
    let m = t.node_count();
    if c.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: c.len() });
    }
    let mut q = -t.adjacency().clone();
    for i in 0..m {
        q[(i, i)] = c[i];
    }
    Ok(q)
}

/// `u̇ = −Q x + β`, evaluated per agent as `−C_j x_j + Σ_ℓ a_jℓ x_ℓ + β_j`.
pub fn dapi_derivative<T: Scalar>(t: &Topology<T>, agents: &[AgentState<T>], x: &[T]) -> Result<Vec<T>> {
    let m = t.node_count();
    if agents.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: agents.len() });
    }
    if x.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: x.len() });
    }
    let a = t.adjacency();
    Ok(agents
        .iter()
        .enumerate()
        .map(|(j, ag)| {
            let remote = (0..m).filter(|&l| l != j).fold(T::zero(), |s, l| s + a[(j, l)] * x[l]);
            -ag.c * x[j] + remote + ag.beta
        })
        .collect())
}

/// Linearized closed loop of the integrator test plant `ẋ = (u − x)/τ`
/// under `u̇ = −Q x`, in coordinates `(x, u)`.
pub fn closed_loop_matrix<T: Scalar>(t: &Topology<T>, c: &[T], tau: T) -> Result<DMatrix<T>> {
    let m = t.node_count();
    let q = q_matrix(t, c)?;
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        a[(i, i)] = -T::one() / tau;
        a[(i, m + i)] = T::one() / tau;
        for j in 0..m {
            a[(m + i, j)] = -q[(i, j)];
        }
    }
    Ok(a)
}
