use crate::plant::PlantModel;
use crate::scalar::Scalar;

/// `ẋ_j = (u_j − x_j)/τ` for each agent; outputs are the states.
#[derive(Debug, Clone)]
pub struct LinearIntegratorPlant<T: Scalar> {
    tau: T,
    states: Vec<String>,
    inputs: Vec<String>,
}

impl<T: Scalar> LinearIntegratorPlant<T> {
    pub fn new(m: usize) -> Self {
        Self::with_time_constant(m, T::one())
    }

    pub fn with_time_constant(m: usize, tau: T) -> Self {
        Self {
            tau,
            states: (1..=m).map(|j| format!("x{j}")).collect(),
            inputs: (1..=m).map(|j| format!("u{j}")).collect(),
        }
    }

    pub fn time_constant(&self) -> T {
        self.tau
    }
}

impl<T: Scalar> PlantModel<T> for LinearIntegratorPlant<T> {
    fn state_names(&self) -> &[String] {
        &self.states
    }

    fn input_names(&self) -> &[String] {
        &self.inputs
    }

    fn output_names(&self) -> &[String] {
        &self.states
    }

    fn disturbance_dim(&self) -> usize {
        0
    }

    fn drift(&self, x: &[T], u: &[T], _d: &[T], dx: &mut [T]) {
        for j in 0..x.len() {
            dx[j] = (u[j] - x[j]) / self.tau;
        }
    }

    fn output(&self, x: &[T], _u: &[T], _d: &[T]) -> Vec<T> {
        x.to_vec()
    }
}
