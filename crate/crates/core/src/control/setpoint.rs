//! Setpoint allocation: minimize `Σ z_j(u_j)` subject to `Σ u_j = d`.
//!
//! Solved through the scalar dual. For a multiplier `ν`, each agent's best
//! response is the root of `z_j'(u) = ν` on its open box; the outer loop
//! moves `ν` until the responses balance the demand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `z(u) = (u − r)²/(2α) − μ·[log(u − u_low) + log(u_high − u)]`.
///
/// Infinite bounds drop their barrier term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisutilityFunction<T> {
    pub reference: T,
    pub alpha: T,
    pub low: T,
    pub high: T,
    pub mu: T,
}

impl<T: Scalar> DisutilityFunction<T> {
    pub fn quadratic(reference: T, alpha: T) -> Self {
        Self { reference, alpha, low: T::neg_infinity(), high: T::infinity(), mu: T::zero() }
    }

    pub fn boxed(reference: T, alpha: T, low: T, high: T, mu: T) -> Self {
        Self { reference, alpha, low, high, mu }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(Error::Invalid("disutility alpha must be positive".into()));
        }
        if !(self.mu >= T::zero()) || !self.mu.is_finite() {
            return Err(Error::Invalid("barrier weight must be non-negative".into()));
        }
        if !(self.low < self.high) {
            return Err(Error::Invalid("box requires low < high".into()));
        }
        if !self.reference.is_finite() {
            return Err(Error::Invalid("reference must be finite".into()));
        }
        Ok(())
    }

    fn barrier_low(&self) -> bool {
        self.low.is_finite() && self.mu > T::zero()
    }

    fn barrier_high(&self) -> bool {
        self.high.is_finite() && self.mu > T::zero()
    }

    pub fn value(&self, u: T) -> T {
        let dev = u - self.reference;
        let mut z = dev * dev / (T::lit(2.0) * self.alpha);
        if self.barrier_low() {
            z -= self.mu * (u - self.low).ln();
        }
        if self.barrier_high() {
            z -= self.mu * (self.high - u).ln();
        }
        z
    }

    pub fn derivative(&self, u: T) -> T {
        let mut g = (u - self.reference) / self.alpha;
        if self.barrier_low() {
            g -= self.mu / (u - self.low);
        }
        if self.barrier_high() {
            g += self.mu / (self.high - u);
        }
        g
    }

    pub fn second_derivative(&self, u: T) -> T {
        let mut h = T::one() / self.alpha;
        if self.barrier_low() {
            let s = u - self.low;
            h += self.mu / (s * s);
        }
        if self.barrier_high() {
            let s = self.high - u;
            h += self.mu / (s * s);
        }
        h
    }

    /// A point strictly inside the box used to seed the dual bracket.
    fn midpoint(&self) -> T {
        match (self.low.is_finite(), self.high.is_finite()) {
            (true, true) => (self.low + self.high) / T::lit(2.0),
            (true, false) => self.reference.max(self.low + T::one()),
            (false, true) => self.reference.min(self.high - T::one()),
            (false, false) => self.reference,
        }
    }

    fn clamp_interior(&self, u: T) -> T {
        u.max(self.low).min(self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub balance_tol: f64,
    pub root_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl SolverOptions {
    pub fn for_scalar<T: Scalar>() -> Self {
        Self { balance_tol: T::BALANCE_TOL, root_tol: T::ROOT_TOL, max_outer: 200, max_inner: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointSolution<T> {
    pub u_h: Vec<T>,
    pub nu: T,
    pub balance_residual: T,
    pub stationarity_residual: T,
}

/// Root of `z'(u) = q` on the open box, by Newton steps safeguarded with bisection.
fn best_response<T: Scalar>(z: &DisutilityFunction<T>, q: T, opts: &SolverOptions) -> Result<T> {
    let tol = T::lit(opts.root_tol) * (T::one() + q.abs());
    // Without a barrier the unconstrained quadratic answer is exact, clamped to the box.
    if z.mu == T::zero() {
        return Ok(z.clamp_interior(z.reference + z.alpha * q));
    }
    let guess = z.reference + z.alpha * q;
    let mut lo = z.low;
    let mut hi = z.high;
    if !lo.is_finite() {
        let mut step = z.alpha * (T::one() + q.abs());
        lo = guess.min(z.midpoint()) - step;
        while z.derivative(lo) > q {
            step *= T::lit(2.0);
            lo -= step;
            if !lo.is_finite() {
                return Err(Error::NoConvergence { what: "lower bracket", iterations: opts.max_inner });
            }
        }
    }
    if !hi.is_finite() {
        let mut step = z.alpha * (T::one() + q.abs());
        hi = guess.max(z.midpoint()) + step;
        while z.derivative(hi) < q {
            step *= T::lit(2.0);
            hi += step;
            if !hi.is_finite() {
                return Err(Error::NoConvergence { what: "upper bracket", iterations: opts.max_inner });
            }
        }
    }
    let inside = |u: T, a: T, b: T| u > a && u < b;
    let mut u = if inside(guess, lo, hi) { guess } else { (lo + hi) / T::lit(2.0) };
    for _ in 0..opts.max_inner {
        let f = z.derivative(u) - q;
        if f.abs() <= tol {
            return Ok(u);
        }
        if f < T::zero() {
            lo = u;
        } else {
            hi = u;
        }
        let newton = u - f / z.second_derivative(u);
        let next = if inside(newton, lo, hi) { newton } else { lo + (hi - lo) / T::lit(2.0) };
        if next == u || !inside(next, lo, hi) {
            // bracket has collapsed to adjacent floats
            return Ok(u);
        }
        u = next;
    }
    Err(Error::NoConvergence { what: "best response", iterations: opts.max_inner })
}

/// `∇z*(q) = argmax_u (q·u − z(u)) = (z')⁻¹(q)`.
pub fn conjugate_gradient_map<T: Scalar>(z: &DisutilityFunction<T>, q: T) -> Result<T> {
    z.validate()?;
    best_response(z, q, &SolverOptions::for_scalar::<T>())
}

pub fn solve_setpoints<T: Scalar>(z: &[DisutilityFunction<T>], d_cu: T) -> Result<SetpointSolution<T>> {
    solve_setpoints_with(z, d_cu, &SolverOptions::for_scalar::<T>())
}

pub fn solve_setpoints_with<T: Scalar>(
    z: &[DisutilityFunction<T>],
    d_cu: T,
    opts: &SolverOptions,
) -> Result<SetpointSolution<T>> {
    if z.is_empty() {
        return Err(Error::Invalid("no disutility functions".into()));
    }
    for zj in z {
        zj.validate()?;
    }
    let low: T = z.iter().fold(T::zero(), |s, zj| s + zj.low);
    let high: T = z.iter().fold(T::zero(), |s, zj| s + zj.high);
    if !(low < d_cu && d_cu < high) || !d_cu.is_finite() {
        return Err(Error::Infeasible { demand: d_cu.as_f64(), low: low.as_f64(), high: high.as_f64() });
    }

    let responses = |nu: T| -> Result<(Vec<T>, T, T)> {
        let u = z.iter().map(|zj| best_response(zj, nu, opts)).collect::<Result<Vec<_>>>()?;
        let total = u.iter().fold(T::zero(), |s, &v| s + v);
        let slope = z.iter().zip(&u).fold(T::zero(), |s, (zj, &uj)| s + T::one() / zj.second_derivative(uj));
        Ok((u, total, slope))
    };

    // Bracket ν from the marginal disutilities at the box midpoints.
    let marginals: Vec<T> = z.iter().map(|zj| zj.derivative(zj.midpoint())).collect();
    let mut nu_lo = marginals.iter().copied().fold(T::infinity(), T::min);
    let mut nu_hi = marginals.iter().copied().fold(T::neg_infinity(), T::max);
    let mut width = (nu_hi - nu_lo).max(T::one());
    let mut expansions = 0;
    while responses(nu_lo)?.1 > d_cu {
        nu_lo -= width;
        width *= T::lit(2.0);
        expansions += 1;
        if expansions > opts.max_outer {
            return Err(Error::NoConvergence { what: "dual bracket", iterations: expansions });
        }
    }
    width = (nu_hi - nu_lo).max(T::one());
    while responses(nu_hi)?.1 < d_cu {
        nu_hi += width;
        width *= T::lit(2.0);
        expansions += 1;
        if expansions > opts.max_outer {
            return Err(Error::NoConvergence { what: "dual bracket", iterations: expansions });
        }
    }

    let tol = T::lit(opts.balance_tol);
    let mut nu = (nu_lo + nu_hi) / T::lit(2.0);
    for _ in 0..opts.max_outer {
        let (u, total, slope) = responses(nu)?;
        let gap = total - d_cu;
        if gap.abs() <= tol {
            return polish(z, d_cu, u, nu, gap, slope, &responses);
        }
        if gap < T::zero() {
            nu_lo = nu;
        } else {
            nu_hi = nu;
        }
        let newton = nu - gap / slope;
        let next = if newton > nu_lo && newton < nu_hi { newton } else { nu_lo + (nu_hi - nu_lo) / T::lit(2.0) };
        if next == nu {
            // ν resolved to the last float; accept if the balance is as good as representable
            let scale = u.iter().fold(T::zero(), |s, v| s + v.abs());
            if gap.abs() <= T::epsilon() * T::lit(8.0) * (scale + d_cu.abs()) {
                return Ok(finish(z, u, nu, d_cu));
            }
            break;
        }
        nu = next;
    }
    Err(Error::NoConvergence { what: "dual multiplier", iterations: opts.max_outer })
}

/// A few extra Newton steps past the tolerance, kept only while the
/// balance keeps improving.
fn polish<T: Scalar>(
    z: &[DisutilityFunction<T>],
    d_cu: T,
    mut u: Vec<T>,
    mut nu: T,
    mut gap: T,
    mut slope: T,
    responses: &impl Fn(T) -> Result<(Vec<T>, T, T)>,
) -> Result<SetpointSolution<T>> {
    for _ in 0..4 {
        if gap == T::zero() || !(slope > T::zero()) {
            break;
        }
        let next = nu - gap / slope;
        if next == nu {
            break;
        }
        let (u2, total2, slope2) = responses(next)?;
        let gap2 = total2 - d_cu;
        if !(gap2.abs() < gap.abs()) {
            break;
        }
        (u, nu, gap, slope) = (u2, next, gap2, slope2);
    }
    Ok(finish(z, u, nu, d_cu))
}

fn finish<T: Scalar>(z: &[DisutilityFunction<T>], u: Vec<T>, nu: T, d_cu: T) -> SetpointSolution<T> {
    let total = u.iter().fold(T::zero(), |s, &v| s + v);
    let stationarity = z.iter().zip(&u).fold(T::zero(), |m, (zj, &uj)| m.max((zj.derivative(uj) - nu).abs()));
    SetpointSolution { balance_residual: (total - d_cu).abs(), stationarity_residual: stationarity, u_h: u, nu }
}
