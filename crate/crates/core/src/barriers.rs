//! Closed-form sub- and supersolutions sampled on grids, with discrete residuals.
//!
//! Time derivatives are always analytic, so a residual measures spatial
//! discretization error only.

use std::sync::Arc;

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Flow, FlowConfig};
use crate::grid::{Field, Grid};
use crate::matrix::{EllipticitySpec, OperatorKind};
use crate::scalar::Real;
use crate::stencil::DiscreteOperator;

/// Residual constant calibrated once: `max |F_h(g) - g_t| / h²` for the heat kernel
/// `g = t^{-1} e^{-r²/(4t)}` under `M⁻` with `λ = Λ = 1` on `[0,4]²` centred at `(2,2)`,
/// `t ∈ {0.5, 0.75, 1}`, `h ∈ {1/8, 1/16, 1/32}`, rounded up.
pub const C_CONS: f64 = 1.42;

/// Heat-kernel exponents `(α, β) = (1/(4λ), Λn/(2λ))`.
pub fn heat_exponents<N: Num + Copy>(lambda: N, big_lambda: N, n: N) -> (N, N) {
    let two = N::one() + N::one();
    let four = two + two;
    (N::one() / (four * lambda), big_lambda * n / (two * lambda))
}

/// Barenblatt exponents `(α, β, k)` with `D = 2λ + n(m-1)Λ`:
/// `α = n(m-1)Λ/D`, `β = 2λ/D`, `k = 1/(2D)`.
pub fn barenblatt_exponents<N: Num + Copy>(lambda: N, big_lambda: N, n: N, m: N) -> (N, N, N) {
    let two = N::one() + N::one();
    let d = two * lambda + n * (m - N::one()) * big_lambda;
    (
        n * (m - N::one()) * big_lambda / d,
        two * lambda / d,
        N::one() / (two * d),
    )
}

/// Support radius of the truncated heat barrier at time `t`, zero when empty:
/// `R² = (s/α)(log(c₀/δ₀) - β log s)`, `s = t + τ₀`.
pub fn truncated_support_radius<T: Real>(c0: T, tau0: T, delta0: T, alpha: T, beta: T, t: T) -> T {
    let s = t + tau0;
    let r2 = s / alpha * ((c0 / delta0).ln() - beta * s.ln());
    r2.max(T::zero()).sqrt()
}

/// Last time at which the truncated heat support is still growing:
/// `e^{-1} (c₀/δ₀)^{1/β} - τ₀`.
pub fn truncated_growth_horizon<T: Real>(c0: T, tau0: T, delta0: T, beta: T) -> T {
    (-T::one()).exp() * (c0 / delta0).powf(T::one() / beta) - tau0
}

#[derive(Debug, Clone)]
pub enum BarrierKind<T> {
    /// `t^{-β} exp(-α |x - x₀|²/t)`.
    HeatKernelSub { center: [T; 2] },
    /// `max(c₀ s^{-β} exp(-α |x - x₀|²/s) - δ₀, 0)`, `s = t + τ₀`.
    TruncatedHeatSub {
        c0: T,
        tau0: T,
        delta0: T,
        center: [T; 2],
    },
    /// Pressure `V = t^{-α}(c - k|x - x₀|²/t^β)₊`; in `u` variables
    /// `Ū = ((m-1)/m V)^{1/(m-1)}`.
    BarenblattSub { c: T, center: [T; 2] },
    /// `f (K + t)^{-1/(m-1)}`, `m > 1`.
    SeparableSuper { profile: Field<T>, k: T },
    /// `C φ e^{-μt}`, `m = 1`; both a sub- and a supersolution when `(μ, φ)` is a
    /// discrete eigenpair.
    EigenDecay {
        profile: Field<T>,
        rate: T,
        amplitude: T,
    },
}

#[derive(Debug, Clone)]
pub struct BarrierSpec<T> {
    pub kind: BarrierKind<T>,
    pub spec: EllipticitySpec<T>,
    pub m: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Sub,
    Super,
}

fn dist2<T: Real>(p: [T; 2], c: [T; 2], dim: usize) -> T {
    let dx = p[0] - c[0];
    if dim == 1 {
        dx * dx
    } else {
        let dy = p[1] - c[1];
        dx * dx + dy * dy
    }
}

impl<T: Real> BarrierSpec<T> {
    pub fn new(kind: BarrierKind<T>, spec: EllipticitySpec<T>, m: T) -> Result<Self> {
        if !(m >= T::one()) {
            return Err(Error::Config(format!("m = {m} must be >= 1")));
        }
        match &kind {
            BarrierKind::BarenblattSub { c, .. } if !(m > T::one() && *c > T::zero()) => {
                return Err(Error::Config(
                    "Barenblatt barrier needs m > 1 and c > 0".into(),
                ))
            }
            BarrierKind::SeparableSuper { k, .. } if !(m > T::one() && *k > T::zero()) => {
                return Err(Error::Config(
                    "separable barrier needs m > 1 and K > 0".into(),
                ))
            }
            BarrierKind::EigenDecay { .. } if m != T::one() => {
                return Err(Error::Config("eigen-decay barrier needs m = 1".into()))
            }
            BarrierKind::TruncatedHeatSub {
                c0, tau0, delta0, ..
            } if !(*c0 > T::zero() && *tau0 > T::zero() && *delta0 > T::zero()) => {
                return Err(Error::Config(
                    "truncated heat barrier needs c0, tau0, delta0 > 0".into(),
                ))
            }
            _ => {}
        }
        Ok(Self { kind, spec, m })
    }

    fn n(&self, grid: &Grid<T>) -> T {
        T::from_usize_lossy(grid.dim())
    }

    pub fn heat_exponents(&self, grid: &Grid<T>) -> (T, T) {
        heat_exponents(
            self.spec.lambda_low(),
            self.spec.lambda_high(),
            self.n(grid),
        )
    }

    pub fn barenblatt_exponents(&self, grid: &Grid<T>) -> (T, T, T) {
        barenblatt_exponents(
            self.spec.lambda_low(),
            self.spec.lambda_high(),
            self.n(grid),
            self.m,
        )
    }

    /// Radius of the support at time `t`, for compactly supported barriers.
    pub fn support_radius(&self, grid: &Grid<T>, t: T) -> Option<T> {
        match &self.kind {
            BarrierKind::TruncatedHeatSub {
                c0, tau0, delta0, ..
            } => {
                let (a, b) = self.heat_exponents(grid);
                Some(truncated_support_radius(*c0, *tau0, *delta0, a, b, t))
            }
            BarrierKind::BarenblattSub { c, .. } => {
                let (_, b, k) = self.barenblatt_exponents(grid);
                Some((*c * t.powf(b) / k).sqrt())
            }
            _ => None,
        }
    }

    fn center(&self) -> Option<[T; 2]> {
        match &self.kind {
            BarrierKind::HeatKernelSub { center }
            | BarrierKind::TruncatedHeatSub { center, .. }
            | BarrierKind::BarenblattSub { center, .. } => Some(*center),
            _ => None,
        }
    }

    fn check_time(&self, t: T) -> Result<()> {
        let needs_positive = matches!(
            self.kind,
            BarrierKind::HeatKernelSub { .. } | BarrierKind::BarenblattSub { .. }
        );
        if needs_positive && !(t > T::zero()) {
            return Err(Error::InputDomain(format!("barrier needs t > 0, got {t}")));
        }
        Ok(())
    }

    fn check_support(&self, grid: &Grid<T>, t: T) -> Result<()> {
        if let (Some(r), Some(c)) = (self.support_radius(grid, t), self.center()) {
            let room = grid.domain().signed_distance(c);
            if r > room {
                return Err(Error::DomainViolation {
                    radius: r.as_f64(),
                    room: room.as_f64(),
                });
            }
        }
        Ok(())
    }

    fn check_grid(&self, grid: &Arc<Grid<T>>) -> Result<()> {
        match &self.kind {
            BarrierKind::SeparableSuper { profile, .. }
            | BarrierKind::EigenDecay { profile, .. }
                if !Arc::ptr_eq(profile.grid(), grid) =>
            {
                Err(Error::InputDomain(
                    "barrier profile lives on another grid".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Pointwise value; the pressure `V` for the Barenblatt barrier.
    pub fn sample(&self, grid: &Arc<Grid<T>>, t: T) -> Result<Field<T>> {
        self.check_time(t)?;
        self.check_grid(grid)?;
        self.check_support(grid, t)?;
        let dim = grid.dim();
        Ok(match &self.kind {
            BarrierKind::HeatKernelSub { center } => {
                let (a, b) = self.heat_exponents(grid);
                let c = *center;
                Field::from_fn(grid.clone(), |p| {
                    t.powf(-b) * (-a * dist2(p, c, dim) / t).exp()
                })
            }
            BarrierKind::TruncatedHeatSub {
                c0,
                tau0,
                delta0,
                center,
            } => {
                let (a, b) = self.heat_exponents(grid);
                let s = t + *tau0;
                let c = *center;
                Field::from_fn(grid.clone(), |p| {
                    (*c0 * s.powf(-b) * (-a * dist2(p, c, dim) / s).exp() - *delta0).max(T::zero())
                })
            }
            BarrierKind::BarenblattSub { c, center } => {
                let (a, b, k) = self.barenblatt_exponents(grid);
                let x0 = *center;
                Field::from_fn(grid.clone(), |p| {
                    t.powf(-a) * (*c - k * dist2(p, x0, dim) / t.powf(b)).max(T::zero())
                })
            }
            BarrierKind::SeparableSuper { profile, k } => {
                let s = (*k + t).powf(-T::one() / (self.m - T::one()));
                profile.scale(s)
            }
            BarrierKind::EigenDecay {
                profile,
                rate,
                amplitude,
            } => profile.scale(*amplitude * (-*rate * t).exp()),
        })
    }

    /// The barrier in the variable `u` of `u_t = F(D²u^m)`.
    pub fn sample_u(&self, grid: &Arc<Grid<T>>, t: T) -> Result<Field<T>> {
        let v = self.sample(grid, t)?;
        if let BarrierKind::BarenblattSub { .. } = self.kind {
            let m1 = self.m - T::one();
            let q = T::one() / m1;
            Ok(v.map(|x| (m1 / self.m * x).powf(q)))
        } else {
            Ok(v)
        }
    }

    /// Analytic `∂_t` of `u^m` (of `u` when `m = 1`) at every node.
    fn w_time_derivative(&self, grid: &Arc<Grid<T>>, t: T) -> Result<Field<T>> {
        let dim = grid.dim();
        let m = self.m;
        Ok(match &self.kind {
            BarrierKind::HeatKernelSub { center } => {
                let (a, b) = self.heat_exponents(grid);
                let c = *center;
                Field::from_fn(grid.clone(), |p| {
                    let r2 = dist2(p, c, dim);
                    let g = t.powf(-b) * (-a * r2 / t).exp();
                    g * (-b / t + a * r2 / (t * t))
                })
            }
            BarrierKind::TruncatedHeatSub {
                c0, tau0, center, ..
            } => {
                let (a, b) = self.heat_exponents(grid);
                let s = t + *tau0;
                let c = *center;
                Field::from_fn(grid.clone(), |p| {
                    let r2 = dist2(p, c, dim);
                    let g = *c0 * s.powf(-b) * (-a * r2 / s).exp();
                    g * (-b / s + a * r2 / (s * s))
                })
            }
            BarrierKind::BarenblattSub { c, center } => {
                let (al, be, k) = self.barenblatt_exponents(grid);
                let x0 = *center;
                let m1 = m - T::one();
                let amp = (m1 / m).powf(m / m1);
                let e = al * m / m1;
                Field::from_fn(grid.clone(), |p| {
                    let r2 = dist2(p, x0, dim);
                    let pr = *c - k * r2 / t.powf(be);
                    if pr <= T::zero() {
                        return T::zero();
                    }
                    let dp = be * k * r2 * t.powf(-be - T::one());
                    amp * (-e * t.powf(-e - T::one()) * pr.powf(m / m1)
                        + t.powf(-e) * m / m1 * pr.powf(T::one() / m1) * dp)
                })
            }
            BarrierKind::SeparableSuper { profile, k } => {
                let m1 = m - T::one();
                let s = (*k + t).powf(-m / m1 - T::one());
                profile.map(|f| -m / m1 * f.powf(m) * s)
            }
            BarrierKind::EigenDecay {
                profile,
                rate,
                amplitude,
            } => profile.scale(-*rate * *amplitude * (-*rate * t).exp()),
        })
    }
}

/// Worst discrete residual of a barrier over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub sign: Sign,
    /// Minimum residual for subsolutions, maximum for supersolutions.
    pub worst: f64,
    pub worst_node: Option<usize>,
    pub worst_time: Option<f64>,
    /// Largest residual magnitude seen.
    pub max_abs: f64,
    pub threshold: f64,
    pub nodes_checked: usize,
    pub passed: bool,
}

/// Residual `m w^{1-1/m} F_h(w) - w_t` with `w = u^m` (for `m = 1`: `F_h(u) - u_t`) at
/// interior nodes whose whole stencil sits where the barrier is positive. Subsolutions
/// pass when the residual is `≥ -tol` everywhere, supersolutions when `≤ tol`.
pub fn residual_check<T: Real>(
    barrier: &BarrierSpec<T>,
    operator: &OperatorKind<T>,
    grid: &Arc<Grid<T>>,
    window: &[T],
    sign: Sign,
    tol: T,
) -> Result<ResidualReport> {
    let op = DiscreteOperator::standard(operator.clone(), grid.clone())?;
    let m = barrier.m;
    let compact = barrier.support_radius(grid, window[0]).is_some();
    let mut report = ResidualReport {
        sign,
        worst: match sign {
            Sign::Sub => f64::INFINITY,
            Sign::Super => f64::NEG_INFINITY,
        },
        worst_node: None,
        worst_time: None,
        max_abs: 0.0,
        threshold: match sign {
            Sign::Sub => -tol.as_f64(),
            Sign::Super => tol.as_f64(),
        },
        nodes_checked: 0,
        passed: true,
    };
    for &t in window {
        let u = barrier.sample_u(grid, t)?;
        let w = if m == T::one() {
            u.clone()
        } else {
            u.map(|x| x.powf(m))
        };
        let fw = op.apply(&w)?;
        let wt = barrier.w_time_derivative(grid, t)?;
        for id in grid.interior_ids() {
            if compact
                && (u.get(id) <= T::zero()
                    || op.neighbours(id).iter().any(|&nb| u.get(nb) <= T::zero()))
            {
                continue;
            }
            let coeff = if m == T::one() {
                T::one()
            } else {
                m * w.get(id).powf(T::one() - T::one() / m)
            };
            let r = (coeff * fw.get(id) - wt.get(id)).as_f64();
            report.nodes_checked += 1;
            report.max_abs = report.max_abs.max(r.abs());
            let worse = match sign {
                Sign::Sub => r < report.worst,
                Sign::Super => r > report.worst,
            };
            if worse {
                report.worst = r;
                report.worst_node = Some(id);
                report.worst_time = Some(t.as_f64());
            }
        }
    }
    report.passed = match sign {
        Sign::Sub => report.worst >= report.threshold,
        Sign::Super => report.worst <= report.threshold,
    };
    Ok(report)
}

/// Whether a flow stays between two barriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub times: Vec<f64>,
    /// `max (low - u)₊ / ‖low‖_∞` per snapshot.
    pub below: Vec<f64>,
    /// `max (u - high)₊ / ‖high‖_∞` per snapshot.
    pub above: Vec<f64>,
    pub worst: f64,
    pub passed: bool,
}

/// Evolves `u0` and checks `low ≤ u ≤ high` at every snapshot within 5e-3 relative.
pub fn sandwich_run<T: Real>(
    low: &BarrierSpec<T>,
    high: &BarrierSpec<T>,
    config: &FlowConfig<T>,
    grid: &Arc<Grid<T>>,
    u0: &Field<T>,
) -> Result<SandwichReport> {
    const REL: f64 = 5e-3;
    let t0 = T::zero();
    let (l0, h0) = (low.sample_u(grid, t0)?, high.sample_u(grid, t0)?);
    let slack = T::lit(1e-12) * h0.sup_norm().max(T::one());
    for id in 0..grid.len() {
        let v = u0.get(id);
        if v < l0.get(id) - slack || v > h0.get(id) + slack {
            return Err(Error::InputDomain(format!(
                "initial data not between the barriers at node {id}: {} <= {v} <= {} fails",
                l0.get(id),
                h0.get(id)
            )));
        }
    }
    let trace = Flow::new(config.clone(), grid.clone())?.evolve(u0)?;
    let mut report = SandwichReport {
        times: Vec::new(),
        below: Vec::new(),
        above: Vec::new(),
        worst: 0.0,
        passed: true,
    };
    for s in &trace.snapshots {
        let lo = low.sample_u(grid, s.t)?;
        let hi = high.sample_u(grid, s.t)?;
        let rel = |d: T, scale: T| (d.max(T::zero()) / scale.max(T::min_positive_value())).as_f64();
        let below = lo
            .values()
            .iter()
            .zip(s.u.values())
            .map(|(l, u)| rel(*l - *u, lo.sup_norm()))
            .fold(0.0, f64::max);
        let above = hi
            .values()
            .iter()
            .zip(s.u.values())
            .map(|(h, u)| rel(*u - *h, hi.sup_norm()))
            .fold(0.0, f64::max);
        report.times.push(s.t.as_f64());
        report.below.push(below);
        report.above.push(above);
        report.worst = report.worst.max(below).max(above);
    }
    report.passed = report.worst <= REL;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use num_rational::Ratio;

    #[test]
    fn exponent_examples() {
        let (a, b) = heat_exponents(1.0, 1.0, 1.0);
        assert_eq!((a, b), (0.25, 0.5));
        let r = |n: i64| Ratio::from_integer(n);
        let (a, b, k) = barenblatt_exponents(r(1), r(1), r(1), r(2));
        assert_eq!(a, Ratio::new(1, 3));
        assert_eq!(b, Ratio::new(2, 3));
        assert_eq!(k, Ratio::new(1, 6));
    }

    #[test]
    fn heat_kernel_sample() {
        let g = Grid::build(Domain::interval(4.0).unwrap(), 0.125).unwrap();
        let b = BarrierSpec::new(
            BarrierKind::HeatKernelSub { center: [2.0, 0.0] },
            EllipticitySpec::unit(),
            1.0,
        )
        .unwrap();
        let f = b.sample(&g, 0.5).unwrap();
        for (n, v) in g.nodes().iter().zip(f.values()) {
            let x: f64 = n.pos[0] - 2.0;
            let want = 0.5f64.powf(-0.5) * (-x * x / 2.0).exp();
            assert!((v - want).abs() < 1e-14);
        }
        assert!(b.sample(&g, 0.0).is_err());
    }

    #[test]
    fn support_escaping_domain_is_reported() {
        let g = Grid::build(Domain::interval(1.0).unwrap(), 1.0 / 32.0).unwrap();
        let b = BarrierSpec::new(
            BarrierKind::BarenblattSub {
                c: 1.0,
                center: [0.5, 0.0],
            },
            EllipticitySpec::unit(),
            2.0,
        )
        .unwrap();
        assert!(b.sample(&g, 1e-3).is_ok());
        assert!(matches!(
            b.sample(&g, 10.0),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn truncated_support_grows_until_horizon() {
        let (c0, tau0, d0, a, b): (f64, f64, f64, f64, f64) = (1.0, 0.1, 0.05, 0.25, 1.0);
        let horizon = truncated_growth_horizon(c0, tau0, d0, b);
        let mut prev = 0.0;
        let steps = 50;
        for i in 0..=steps {
            let t = horizon * i as f64 / steps as f64;
            let r = truncated_support_radius(c0, tau0, d0, a, b, t);
            assert!(r >= prev);
            prev = r;
        }
        let later = truncated_support_radius(c0, tau0, d0, a, b, horizon * 1.5 + tau0);
        assert!(later < prev);
    }

    #[test]
    fn separable_at_zero_is_profile() {
        let g = Grid::build(Domain::interval(1.0).unwrap(), 1.0 / 16.0).unwrap();
        let f = Field::from_fn(g.clone(), |p| p[0] * (1.0 - p[0]));
        let b = BarrierSpec::new(
            BarrierKind::SeparableSuper {
                profile: f.clone(),
                k: 1.0,
            },
            EllipticitySpec::unit(),
            2.0,
        )
        .unwrap();
        assert_eq!(b.sample(&g, 0.0).unwrap().values(), f.values());
    }

    #[test]
    fn barenblatt_residual_is_second_order_for_laplacian_in_1d() {
        let lap = OperatorKind::laplacian(EllipticitySpec::unit());
        let worst = |h: f64| {
            let g = Grid::build(Domain::interval(4.0).unwrap(), h).unwrap();
            let b = BarrierSpec::new(
                BarrierKind::BarenblattSub {
                    c: 0.5,
                    center: [2.0, 0.0],
                },
                EllipticitySpec::unit(),
                2.0,
            )
            .unwrap();
            let r = residual_check(&b, &lap, &g, &[0.5, 1.0], Sign::Sub, 1.0).unwrap();
            assert!(r.nodes_checked > 20);
            r.max_abs
        };
        let (a, b) = (worst(1.0 / 32.0), worst(1.0 / 64.0));
        assert!(a / b > 3.5, "{a} {b}");
    }
}
