//! Continuous-time plant models, fixed-step integration, operating limits
//! and boundary KPIs.

mod linear;
mod tec;

use serde::{Deserialize, Serialize};

pub use linear::LinearIntegratorPlant;
pub use tec::{TecParams, TecSurrogate, TEC_INPUTS, TEC_OUTPUTS, TEC_STATES};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Scalar};

/// Piecewise-constant disturbance `δ(t)`; zero before the first breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSignal<T: Scalar> {
    dim: usize,
    breakpoints: Vec<(T, Vec<T>)>,
}

impl<T: Scalar> DisturbanceSignal<T> {
    pub fn zero(dim: usize) -> Self {
        Self { dim, breakpoints: Vec::new() }
    }

    pub fn new(dim: usize, breakpoints: Vec<(T, Vec<T>)>) -> Result<Self> {
        for w in breakpoints.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Invalid("disturbance breakpoint times must be strictly increasing".into()));
            }
        }
        if let Some((_, v)) = breakpoints.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        Ok(Self { dim, breakpoints })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, t: T) -> Vec<T> {
        let idx = self.breakpoints.partition_point(|(bt, _)| *bt <= t);
        if idx == 0 {
            vec![T::zero(); self.dim]
        } else {
            self.breakpoints[idx - 1].1.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState<T: Scalar> {
    /// Minutes.
    pub t: T,
    pub x: Vec<T>,
}

impl<T: Scalar> PlantState<T> {
    pub fn new(t: T, x: Vec<T>) -> Self {
        Self { t, x }
    }
}

/// Instantaneous material flows at the process boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFlows<T> {
    pub product: T,
    /// Sum of all input feeds.
    pub total_feed: T,
    /// Feeds that take part in the reaction; the stoichiometric maximum of product.
    pub reactive_feed: T,
}

/// `ẋ = g(x, u, δ)`, `Δy = h(x, u, δ)`.
pub trait PlantModel<T: Scalar>: Send + Sync {
    fn state_names(&self) -> &[String];
    fn input_names(&self) -> &[String];
    fn output_names(&self) -> &[String];
    fn disturbance_dim(&self) -> usize;
    fn drift(&self, x: &[T], u: &[T], d: &[T], dx: &mut [T]);
    fn output(&self, x: &[T], u: &[T], d: &[T]) -> Vec<T>;

    fn boundary_flows(&self, _x: &[T], _u: &[T], _d: &[T]) -> Option<BoundaryFlows<T>> {
        None
    }

    fn state_dim(&self) -> usize {
        self.state_names().len()
    }

    fn input_dim(&self) -> usize {
        self.input_names().len()
    }
}

fn check_dims<T: Scalar, M: PlantModel<T> + ?Sized>(model: &M, x: &[T], u: &[T]) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::DimensionMismatch { expected: model.state_dim(), got: x.len() });
    }
    if u.len() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), got: u.len() });
    }
    Ok(())
}

/// Classical RK4 advance by `dt` with `u` and `δ(s.t)` held over the step.
pub fn step<T: Scalar, M: PlantModel<T> + ?Sized>(
    model: &M,
    s: &PlantState<T>,
    u: &[T],
    dist: &DisturbanceSignal<T>,
    dt: T,
) -> Result<PlantState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Invalid("dt must be positive".into()));
    }
    if !all_finite(u) {
        return Err(Error::Invalid("input vector has non-finite entries".into()));
    }
    check_dims(model, &s.x, u)?;
    let d = dist.at(s.t);
    let n = s.x.len();
    let half = dt / T::lit(2.0);
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];

    model.drift(&s.x, u, &d, &mut k1);
    for i in 0..n {
        tmp[i] = s.x[i] + half * k1[i];
    }
    model.drift(&tmp, u, &d, &mut k2);
    for i in 0..n {
        tmp[i] = s.x[i] + half * k2[i];
    }
    model.drift(&tmp, u, &d, &mut k3);
    for i in 0..n {
        tmp[i] = s.x[i] + dt * k3[i];
    }
    model.drift(&tmp, u, &d, &mut k4);

    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let x: Vec<T> = (0..n)
        .map(|i| s.x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect();
    let t = s.t + dt;
    if !all_finite(&x) {
        return Err(Error::NonFiniteState { t: t.as_f64() });
    }
    Ok(PlantState { t, x })
}

pub fn output_deviation<T: Scalar, M: PlantModel<T> + ?Sized>(
    model: &M,
    s: &PlantState<T>,
    u: &[T],
    dist: &DisturbanceSignal<T>,
) -> Vec<T> {
    model.output(&s.x, u, &dist.at(s.t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumParams<T> {
    pub gamma: T,
    /// Unmeasured constant disturbance, in units of `Σu`.
    pub d: T,
}

/// `(1/γ)·1·(1ᵀū − d)`; every component is the same value.
pub fn equilibrium_map<T: Scalar>(u_bar: &[T], p: &EquilibriumParams<T>) -> Result<Vec<T>> {
    if !(p.gamma > T::zero()) {
        return Err(Error::Invalid("gamma must be positive".into()));
    }
    let total = u_bar.iter().fold(T::zero(), |s, &v| s + v);
    let level = (total - p.d) / p.gamma;
    Ok(vec![level; u_bar.len()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitClass {
    Normal,
    NormalExceeded,
    ShutdownExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VariableLimits<T> {
    pub normal_low: Option<T>,
    pub normal_high: Option<T>,
    pub shutdown_low: Option<T>,
    pub shutdown_high: Option<T>,
}

impl<T: Scalar> VariableLimits<T> {
    pub fn classify(&self, v: T) -> LimitClass {
        let below = |b: Option<T>| b.is_some_and(|b| v < b);
        let above = |b: Option<T>| b.is_some_and(|b| v > b);
        if below(self.shutdown_low) || above(self.shutdown_high) {
            LimitClass::ShutdownExceeded
        } else if below(self.normal_low) || above(self.normal_high) {
            LimitClass::NormalExceeded
        } else {
            LimitClass::Normal
        }
    }

    /// Checks `shutdown_low ≤ normal_low ≤ normal_high ≤ shutdown_high` over present bounds.
    pub fn ordering_violations(&self) -> Vec<(&'static str, &'static str)> {
        let chain = [
            ("shutdown_low", self.shutdown_low),
            ("normal_low", self.normal_low),
            ("normal_high", self.normal_high),
            ("shutdown_high", self.shutdown_high),
        ];
        let mut out = Vec::new();
        for i in 0..chain.len() {
            for j in (i + 1)..chain.len() {
                if let (Some(a), Some(b)) = (chain[i].1, chain[j].1) {
                    if a > b {
                        out.push((chain[i].0, chain[j].0));
                    }
                }
            }
        }
        out
    }
}

/// Operating limits keyed by variable name, in declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProcessLimits<T> {
    pub entries: Vec<(String, VariableLimits<T>)>,
}

impl<T: Scalar> ProcessLimits<T> {
    pub fn new(entries: Vec<(String, VariableLimits<T>)>) -> Result<Self> {
        for (name, lim) in &entries {
            if let Some((a, b)) = lim.ordering_violations().first() {
                return Err(Error::Invalid(format!("limits for `{name}`: {a} exceeds {b}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, name: &str) -> Option<&VariableLimits<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, l)| l)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Classifies every named state variable; each must have a limits entry.
pub fn check_limits<T: Scalar>(
    names: &[String],
    s: &PlantState<T>,
    limits: &ProcessLimits<T>,
) -> Result<Vec<(String, LimitClass)>> {
    if names.len() != s.x.len() {
        return Err(Error::DimensionMismatch { expected: names.len(), got: s.x.len() });
    }
    names
        .iter()
        .zip(&s.x)
        .map(|(name, &v)| {
            let lim = limits.get(name).ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            Ok((name.clone(), lim.classify(v)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiPoint<T> {
    pub t: T,
    pub flows: BoundaryFlows<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiSample<T> {
    pub throughput_rate: T,
    pub input_feed_rate: T,
    pub output_yield: T,
    pub window: (T, T),
}

fn trapezoid<T: Scalar>(points: &[KpiPoint<T>], f: impl Fn(&BoundaryFlows<T>) -> T) -> T {
    let half = T::lit(0.5);
    points
        .windows(2)
        .fold(T::zero(), |acc, w| acc + (w[1].t - w[0].t) * half * (f(&w[0].flows) + f(&w[1].flows)))
}

/// Window-averaged boundary KPIs (trapezoidal integration).
///
/// Yield is product over the stoichiometric maximum of the consumed
/// reactive feed, and is 0 when nothing was fed.
pub fn kpi<T: Scalar>(points: &[KpiPoint<T>]) -> Result<KpiSample<T>> {
    if points.len() < 2 {
        return Err(Error::EmptyWindow);
    }
    let t0 = points[0].t;
    let t1 = points[points.len() - 1].t;
    let len = t1 - t0;
    if !(len > T::zero()) {
        return Err(Error::EmptyWindow);
    }
    let product = trapezoid(points, |f| f.product);
    let feed = trapezoid(points, |f| f.total_feed);
    let reactive = trapezoid(points, |f| f.reactive_feed);
    let output_yield = if reactive > T::zero() {
        (product / reactive).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    Ok(KpiSample { throughput_rate: product / len, input_feed_rate: feed / len, output_yield, window: (t0, t1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Frozen;

    impl PlantModel<f64> for Frozen {
        fn state_names(&self) -> &[String] {
            static N: std::sync::OnceLock<Vec<String>> = std::sync::OnceLock::new();
            N.get_or_init(|| vec!["a".into(), "b".into()])
        }
        fn input_names(&self) -> &[String] {
            &[]
        }
        fn output_names(&self) -> &[String] {
            self.state_names()
        }
        fn disturbance_dim(&self) -> usize {
            0
        }
        fn drift(&self, _x: &[f64], _u: &[f64], _d: &[f64], dx: &mut [f64]) {
            dx.fill(0.0);
        }
        fn output(&self, x: &[f64], _u: &[f64], _d: &[f64]) -> Vec<f64> {
            x.to_vec()
        }
    }

    #[test]
    fn zero_drift_leaves_state_alone() {
        let s = PlantState::new(0.0, vec![1.5, -7.0]);
        let next = step(&Frozen, &s, &[], &DisturbanceSignal::zero(0), 3.7).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.t, 3.7);
    }

    #[test]
    fn identity_output() {
        let s = PlantState::new(0.0, vec![1.0, 2.0]);
        assert_eq!(output_deviation(&Frozen, &s, &[], &DisturbanceSignal::zero(0)), vec![1.0, 2.0]);
    }

    #[test]
    fn step_rejects_bad_arguments() {
        let s = PlantState::new(0.0, vec![1.0, 2.0]);
        let d = DisturbanceSignal::zero(0);
        assert!(step(&Frozen, &s, &[], &d, 0.0).is_err());
        assert!(matches!(step(&Frozen, &PlantState::new(0.0, vec![1.0]), &[], &d, 0.1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn equilibrium_map_examples() {
        let p = EquilibriumParams { gamma: 1.0, d: 1.0 };
        assert_eq!(equilibrium_map(&[1.0, 2.0], &p).unwrap(), vec![2.0, 2.0]);
        let p = EquilibriumParams { gamma: 2.0, d: 3.0 };
        assert_eq!(equilibrium_map(&[1.0, 1.0, 1.0], &p).unwrap(), vec![0.0, 0.0, 0.0]);
        // nominal A and C feeds
        let p = EquilibriumParams { gamma: 0.5, d: 9.0 };
        let y: Vec<f64> = equilibrium_map(&[0.25, 9.35], &p).unwrap();
        assert!((y[0] - 1.2).abs() < 1e-12);
        assert_eq!(y[0], y[1]);
        assert!(equilibrium_map(&[1.0], &EquilibriumParams { gamma: 0.0, d: 0.0 }).is_err());
    }

    fn reactor_temperature() -> VariableLimits<f64> {
        VariableLimits { normal_low: None, normal_high: Some(150.0), shutdown_low: None, shutdown_high: Some(175.0) }
    }

    #[test]
    fn reactor_temperature_classes() {
        let l = reactor_temperature();
        assert_eq!(l.classify(140.0), LimitClass::Normal);
        assert_eq!(l.classify(160.0), LimitClass::NormalExceeded);
        assert_eq!(l.classify(176.0), LimitClass::ShutdownExceeded);
        assert_eq!(l.classify(-300.0), LimitClass::Normal);
    }

    #[test]
    fn check_limits_needs_every_variable() {
        let limits = ProcessLimits::new(vec![("a".into(), reactor_temperature())]).unwrap();
        let s = PlantState::new(0.0, vec![1.0, 2.0]);
        let names = vec!["a".to_string(), "b".to_string()];
        assert_eq!(check_limits(&names, &s, &limits), Err(Error::UnknownVariable("b".into())));
    }

    #[test]
    fn limit_ordering_is_validated() {
        let bad = VariableLimits { normal_low: None, normal_high: Some(180.0), shutdown_low: None, shutdown_high: Some(175.0) };
        assert!(ProcessLimits::new(vec![("t".into(), bad)]).is_err());
    }

    fn flows(product: f64, feed: f64) -> BoundaryFlows<f64> {
        BoundaryFlows { product, total_feed: feed, reactive_feed: feed }
    }

    #[test]
    fn kpi_constant_product() {
        let pts: Vec<_> = (0..=10).map(|t| KpiPoint { t: t as f64, flows: flows(5.0, 10.0) }).collect();
        let k = kpi(&pts).unwrap();
        assert_eq!(k.throughput_rate, 5.0);
        assert_eq!(k.input_feed_rate, 10.0);
        assert_eq!(k.output_yield, 0.5);
        assert_eq!(k.window, (0.0, 10.0));
    }

    #[test]
    fn kpi_zero_feed_has_zero_yield() {
        let pts: Vec<_> = (0..3).map(|t| KpiPoint { t: t as f64, flows: flows(0.0, 0.0) }).collect();
        let k = kpi(&pts).unwrap();
        assert_eq!(k.input_feed_rate, 0.0);
        assert_eq!(k.output_yield, 0.0);
    }

    #[test]
    fn kpi_needs_two_samples() {
        assert_eq!(kpi::<f64>(&[]), Err(Error::EmptyWindow));
        assert_eq!(kpi(&[KpiPoint { t: 0.0, flows: flows(1.0, 1.0) }]), Err(Error::EmptyWindow));
    }

    #[test]
    fn disturbance_lookup() {
        let d = DisturbanceSignal::new(1, vec![(10.0, vec![2.0]), (20.0, vec![3.0])]).unwrap();
        assert_eq!(d.at(0.0), vec![0.0]);
        assert_eq!(d.at(10.0), vec![2.0]);
        assert_eq!(d.at(19.9), vec![2.0]);
        assert_eq!(d.at(25.0), vec![3.0]);
        assert!(DisturbanceSignal::new(1, vec![(1.0, vec![0.0]), (1.0, vec![1.0])]).is_err());
        assert!(DisturbanceSignal::new(2, vec![(1.0, vec![0.0])]).is_err());
    }
}
