//! Independent one-dimensional reference solutions by RK4 shooting.

/// Cubic Hermite samples on a uniform grid `x_k = k·dx`.
#[derive(Debug, Clone)]
struct Hermite {
    dx: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl Hermite {
    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len() - 1;
        let s = (x / self.dx).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let t = s - k as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k]
            + h10 * self.dx * self.dy[k]
            + h01 * self.y[k + 1]
            + h11 * self.dx * self.dy[k + 1]
    }
}

/// Integrates `φ'' = g(φ)` from `φ(0) = 0, φ'(0) = slope` with `n` RK4 steps of size `dx`,
/// stopping after the first sign change of `φ`. Returns the samples and the zero crossing.
fn shoot(
    g: impl Fn(f64) -> f64,
    slope: f64,
    dx: f64,
    n: usize,
) -> (Vec<f64>, Vec<f64>, Option<f64>) {
    let f = |y: [f64; 2]| [y[1], g(y[0])];
    let mut y = [0.0, slope];
    let mut ys = vec![y[0]];
    let mut dys = vec![y[1]];
    for k in 0..n {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * dx * k1[0], y[1] + 0.5 * dx * k1[1]]);
        let k3 = f([y[0] + 0.5 * dx * k2[0], y[1] + 0.5 * dx * k2[1]]);
        let k4 = f([y[0] + dx * k3[0], y[1] + dx * k3[1]]);
        let next = [
            y[0] + dx / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + dx / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        ys.push(next[0]);
        dys.push(next[1]);
        if k > 0 && next[0] <= 0.0 {
            // cubic Hermite root on the last step by bisection
            let seg = Hermite {
                dx,
                y: vec![y[0], next[0]],
                dy: vec![y[1], next[1]],
            };
            let (mut a, mut b) = (0.0, dx);
            for _ in 0..80 {
                let c = 0.5 * (a + b);
                if seg.eval(c) > 0.0 {
                    a = c;
                } else {
                    b = c;
                }
            }
            return (ys, dys, Some(k as f64 * dx + 0.5 * (a + b)));
        }
        y = next;
    }
    (ys, dys, None)
}

/// Principal pair of `-M(φ'') = μ φ` on `(0, L)` with `M` a one-dimensional Pucci operator.
#[derive(Debug, Clone)]
pub struct ShootingEigen {
    pub mu: f64,
    /// Largest `φ''` over the open interval, for the sup-normalized `φ`.
    pub max_second: f64,
    profile: Hermite,
}

impl ShootingEigen {
    /// Sup-normalized `φ(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.profile.eval(x)
    }
}

/// Inverse of the one-dimensional Pucci map `p ↦ M(p)`.
fn pucci_inverse(q: f64, lambda_low: f64, lambda_high: f64, plus: bool) -> f64 {
    // M⁻(p) = Λp for p < 0, λp otherwise; M⁺ swaps the two
    let (neg, pos) = if plus {
        (lambda_low, lambda_high)
    } else {
        (lambda_high, lambda_low)
    };
    if q < 0.0 {
        q / neg
    } else {
        q / pos
    }
}

/// Shoots on `μ` until the first zero of `φ` sits at `length`.
pub fn pucci_1d_eigen(lambda_low: f64, lambda_high: f64, plus: bool, length: f64) -> ShootingEigen {
    const N: usize = 1 << 14;
    let dx = length / N as f64;
    let zero = |mu: f64| {
        let (_, _, z) = shoot(
            |p| pucci_inverse(-mu * p, lambda_low, lambda_high, plus),
            1.0,
            dx,
            4 * N,
        );
        z.unwrap_or(f64::INFINITY)
    };
    let (mut lo, mut hi) = (1e-8, 1.0);
    while zero(hi) > length {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zero(mid) > length {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let g = |p: f64| pucci_inverse(-mu * p, lambda_low, lambda_high, plus);
    let (mut ys, mut dys, _) = shoot(g, 1.0, dx, N);
    ys.truncate(N + 1);
    dys.truncate(N + 1);
    let scale = ys.iter().cloned().fold(0.0, f64::max);
    let max_second = ys[1..N]
        .iter()
        .map(|&p| g(p / scale))
        .fold(f64::NEG_INFINITY, f64::max);
    ShootingEigen {
        mu,
        max_second,
        profile: Hermite {
            dx,
            y: ys.iter().map(|v| v / scale).collect(),
            dy: dys.iter().map(|v| v / scale).collect(),
        },
    }
}

/// Positive solution of `-(f^m)'' = f/(m-1)` on `(0, L)` with zero boundary values.
#[derive(Debug, Clone)]
pub struct PorousProfile {
    pub m: f64,
    /// `(f^m)'(0)`.
    pub boundary_flux: f64,
    amplitude: f64,
    stretch: f64,
    base: Hermite,
}

impl PorousProfile {
    /// `φ = f^m` at `x`.
    pub fn eval_power(&self, x: f64) -> f64 {
        (self.amplitude * self.base.eval(self.stretch * x)).max(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_power(x).powf(1.0 / self.m)
    }
}

/// Integrates `φ'' = -φ^{1/m}/(m-1)` from slope 1 to its first zero `L₁`, then rescales
/// `ψ(x) = A φ(Bx)` with `B = L₁/L`, `A = B^{-2/(1-1/m)}`, which solves the same equation.
pub fn porous_1d_profile(m: f64, length: f64) -> PorousProfile {
    assert!(m > 1.0 && length > 0.0);
    let p = 1.0 / m;
    let g = |phi: f64| -phi.max(0.0).powf(p) / (m - 1.0);
    // first pass finds L₁ on a coarse step, second pass samples [0, L₁] finely
    let (_, _, z) = shoot(g, 1.0, 1e-3, 1 << 26);
    let l1 = z.expect("trajectory returns to zero");
    const N: usize = 1 << 16;
    let (_, _, z) = shoot(g, 1.0, l1 / N as f64, 2 * N);
    let l1 = z.expect("trajectory returns to zero");
    let dx = l1 / N as f64;
    let (mut ys, mut dys, _) = shoot(g, 1.0, dx, 2 * N);
    ys.truncate(N + 1);
    dys.truncate(N + 1);
    let stretch = l1 / length;
    let amplitude = stretch.powf(-2.0 / (1.0 - p));
    PorousProfile {
        m,
        boundary_flux: amplitude * stretch,
        amplitude,
        stretch,
        base: Hermite { dx, y: ys, dy: dys },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_shooting_recovers_sine() {
        let e = pucci_1d_eigen(1.0, 1.0, false, PI);
        assert!((e.mu - 1.0).abs() < 1e-9, "{}", e.mu);
        for k in 0..=64 {
            let x = PI * k as f64 / 64.0;
            assert!((e.eval(x) - x.sin()).abs() < 1e-8);
        }
        assert!(e.max_second < 0.0);
    }

    #[test]
    fn pucci_shooting_concave_reduction() {
        let minus = pucci_1d_eigen(1.0, 2.0, false, PI);
        let plus = pucci_1d_eigen(1.0, 2.0, true, PI);
        assert!((minus.mu - 2.0).abs() < 1e-9);
        assert!((plus.mu - 1.0).abs() < 1e-9);
        assert!(minus.max_second < 0.0 && plus.max_second < 0.0);
    }

    #[test]
    fn porous_profile_conserves_first_integral() {
        // φ'²/2 + (2/3) φ^{3/2} is constant along -φ'' = √φ
        let f = porous_1d_profile(2.0, 1.0);
        let e0 = 0.5 * f.boundary_flux * f.boundary_flux;
        let top = f.eval_power(0.5);
        assert!((e0 - 2.0 / 3.0 * top.powf(1.5)).abs() < 1e-7 * e0);
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            assert!((f.eval(x) - f.eval(1.0 - x)).abs() < 1e-6);
        }
        assert!(f.eval(0.0).abs() < 1e-12);
    }
}
