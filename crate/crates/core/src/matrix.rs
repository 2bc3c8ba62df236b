//! Pointwise Pucci extremal operators and Bellman-type operators on small symmetric matrices.
//!
//! For `0 < λ ≤ Λ` the class `A_{λ,Λ}` holds the symmetric matrices with spectrum in `[λ, Λ]`.
//! The extremal operators are
//!
//! ```text
//! M⁺(M) = sup_{A ∈ A_{λ,Λ}} tr(AM) = Λ Σ_{e_i > 0} e_i + λ Σ_{e_i < 0} e_i
//! M⁻(M) = inf_{A ∈ A_{λ,Λ}} tr(AM) = λ Σ_{e_i > 0} e_i + Λ Σ_{e_i < 0} e_i
//! ```
//!
//! where `e_i` are the eigenvalues of `M`. Eigenvalues are computed in closed form
//! (quadratic formula in 2D, trigonometric form in 3D).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ellipticity constants `(λ, Λ)` of the Pucci class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticitySpec<T> {
    lambda_low: T,
    lambda_high: T,
}

impl<T: Real> EllipticitySpec<T> {
    pub fn new(lambda_low: T, lambda_high: T) -> Result<Self> {
        if !(lambda_low.is_finite() && lambda_high.is_finite()) {
            return Err(Error::Config(format!(
                "ellipticity constants must be finite (lambda_low = {lambda_low}, lambda_high = {lambda_high})"
            )));
        }
        if lambda_low <= T::zero() || lambda_high < lambda_low {
            return Err(Error::Config(format!(
                "need 0 < lambda_low <= lambda_high, got lambda_low = {lambda_low}, lambda_high = {lambda_high}"
            )));
        }
        Ok(Self {
            lambda_low,
            lambda_high,
        })
    }

    /// `λ = Λ = 1`, for which both extremal operators coincide with the Laplacian.
    pub fn unit() -> Self {
        Self {
            lambda_low: T::one(),
            lambda_high: T::one(),
        }
    }

    #[inline]
    pub fn lambda_low(&self) -> T {
        self.lambda_low
    }

    #[inline]
    pub fn lambda_high(&self) -> T {
        self.lambda_high
    }

    /// Coefficient picked by `M⁻` for a directional curvature `d`.
    #[inline]
    pub fn minus_coefficient(&self, d: T) -> T {
        if d > T::zero() {
            self.lambda_low
        } else {
            self.lambda_high
        }
    }

    /// Coefficient picked by `M⁺` for a directional curvature `d`.
    #[inline]
    pub fn plus_coefficient(&self, d: T) -> T {
        if d > T::zero() {
            self.lambda_high
        } else {
            self.lambda_low
        }
    }
}

/// Eigenvalues of a [`SymMatrix`], ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum<T> {
    vals: [T; 3],
    len: usize,
}

impl<T: Real> Spectrum<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.vals[..self.len]
    }

    pub fn max(&self) -> T {
        self.vals[self.len - 1]
    }

    pub fn min(&self) -> T {
        self.vals[0]
    }
}

/// Symmetric `n × n` matrix, `n ∈ {1, 2, 3}`. Only the upper triangle is stored,
/// so symmetry holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix<T> {
    dim: usize,
    // (0,0) (0,1) (0,2) (1,1) (1,2) (2,2)
    upper: [T; 6],
}

#[inline]
fn slot(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match (i, j) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InputDomain(format!(
                "matrix dimension {dim} not in 1..=3"
            )));
        }
        Ok(Self {
            dim,
            upper: [T::zero(); 6],
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.set(i, i, T::one());
        }
        Ok(m)
    }

    pub fn scalar(a: T) -> Self {
        let mut upper = [T::zero(); 6];
        upper[0] = a;
        Self { dim: 1, upper }
    }

    /// `[[a, b], [b, c]]`.
    pub fn new2(a: T, b: T, c: T) -> Self {
        let mut upper = [T::zero(); 6];
        upper[0] = a;
        upper[1] = b;
        upper[3] = c;
        Self { dim: 2, upper }
    }

    /// Upper triangle `(a00, a01, a02, a11, a12, a22)`.
    pub fn new3(a00: T, a01: T, a02: T, a11: T, a12: T, a22: T) -> Self {
        Self {
            dim: 3,
            upper: [a00, a01, a02, a11, a12, a22],
        }
    }

    pub fn diag(entries: &[T]) -> Result<Self> {
        let mut m = Self::zeros(entries.len())?;
        for (i, &d) in entries.iter().enumerate() {
            m.set(i, i, d);
        }
        Ok(m)
    }

    /// Builds from a full row-major matrix, symmetrizing as `(A + Aᵀ)/2`.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n)?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InputDomain("matrix rows must be square".into()));
        }
        let half = T::lit(0.5);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, half * (rows[i][j] + rows[j][i]));
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.upper[slot(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.upper[slot(i, j)] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `tr(A M)` for two symmetric matrices of equal dimension.
    pub fn trace_product(&self, other: &Self) -> T {
        let mut s = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j) * other.get(j, i);
            }
        }
        s
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[T]) -> T {
        let mut s = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += v[i] * self.get(i, j) * v[j];
            }
        }
        s
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let mut out = *self;
        for k in 0..6 {
            out.upper[k] = f(self.upper[k], other.upper[k]);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, t: T) -> Self {
        let mut out = *self;
        for v in out.upper.iter_mut() {
            *v *= t;
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    /// `Rᵀ M R` for a full `dim × dim` matrix `R` (row-major).
    pub fn conjugate(&self, r: &[[T; 3]; 3]) -> Self {
        let n = self.dim;
        let mut out = *self;
        for i in 0..n {
            for j in i..n {
                let mut s = T::zero();
                for k in 0..n {
                    for l in 0..n {
                        s += r[k][i] * self.get(k, l) * r[l][j];
                    }
                }
                out.set(i, j, s);
            }
        }
        out
    }

    /// Rotation of a 2×2 matrix by `angle`: `Rᵀ M R`.
    pub fn rotated2(&self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let z = T::zero();
        self.conjugate(&[[c, -s, z], [s, c, z], [z, z, T::one()]])
    }

    /// Angle of the eigenvector for the larger eigenvalue (2×2 only).
    pub fn principal_angle(&self) -> T {
        let two = T::lit(2.0);
        let a = self.get(0, 0);
        let b = self.get(0, 1);
        let c = self.get(1, 1);
        (two * b).atan2(a - c) / two
    }

    /// Closed-form eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Spectrum<T> {
        let z = T::zero();
        match self.dim {
            1 => Spectrum {
                vals: [self.upper[0], z, z],
                len: 1,
            },
            2 => {
                let half = T::lit(0.5);
                let a = self.get(0, 0);
                let b = self.get(0, 1);
                let c = self.get(1, 1);
                let mean = half * (a + c);
                let r = (half * (a - c)).hypot(b);
                Spectrum {
                    vals: [mean - r, mean + r, z],
                    len: 2,
                }
            }
            _ => {
                let mut vals = eig3(self);
                vals.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
                Spectrum { vals, len: 3 }
            }
        }
    }
}

fn eig3<T: Real>(m: &SymMatrix<T>) -> [T; 3] {
    let (a00, a01, a02, a11, a12, a22) = (
        m.get(0, 0),
        m.get(0, 1),
        m.get(0, 2),
        m.get(1, 1),
        m.get(1, 2),
        m.get(2, 2),
    );
    let p1 = a01 * a01 + a02 * a02 + a12 * a12;
    if p1 == T::zero() {
        return [a00, a11, a22];
    }
    let three = T::lit(3.0);
    let q = (a00 + a11 + a22) / three;
    let (b00, b11, b22) = (a00 - q, a11 - q, a22 - q);
    let p2 = b00 * b00 + b11 * b11 + b22 * b22 + T::lit(2.0) * p1;
    let p = (p2 / T::lit(6.0)).sqrt();
    let det = b00 * (b11 * b22 - a12 * a12) - a01 * (a01 * b22 - a12 * a02)
        + a02 * (a01 * a12 - b11 * a02);
    let r = (det / (p * p * p) / T::lit(2.0))
        .max(-T::one())
        .min(T::one());
    let phi = r.acos() / three;
    let two_pi_3 = T::lit(2.0) * T::PI() / three;
    let e1 = q + T::lit(2.0) * p * phi.cos();
    let e3 = q + T::lit(2.0) * p * (phi + two_pi_3).cos();
    let e2 = three * q - e1 - e3;
    [e1, e2, e3]
}

fn check_finite<T: Real>(m: &SymMatrix<T>) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::InputDomain(format!(
            "non-finite matrix entries: {m:?}"
        )))
    }
}

/// `M⁺(M) = Λ Σ(positive eigenvalues) + λ Σ(negative eigenvalues)`.
pub fn pucci_plus<T: Real>(m: &SymMatrix<T>, spec: &EllipticitySpec<T>) -> Result<T> {
    // through M⁻ so that M⁺(M) = -M⁻(-M) holds bit for bit
    Ok(-pucci_minus(&m.neg(), spec)?)
}

/// `M⁻(M) = λ Σ(positive eigenvalues) + Λ Σ(negative eigenvalues)`.
pub fn pucci_minus<T: Real>(m: &SymMatrix<T>, spec: &EllipticitySpec<T>) -> Result<T> {
    check_finite(m)?;
    Ok(m.eigenvalues()
        .as_slice()
        .iter()
        .map(|&e| spec.minus_coefficient(e) * e)
        .sum())
}

/// Which elliptic operator `F` is in play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OperatorVariant<T> {
    PucciMinus,
    PucciPlus,
    Laplacian,
    /// `F(M) = min_k tr(A_k M)` over a finite family of diffusion matrices.
    BellmanInf(Vec<SymMatrix<T>>),
}

/// A validated operator: variant plus ellipticity constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorKind<T> {
    variant: OperatorVariant<T>,
    spec: EllipticitySpec<T>,
}

impl<T: Real> OperatorKind<T> {
    pub fn new(variant: OperatorVariant<T>, spec: EllipticitySpec<T>) -> Result<Self> {
        if let OperatorVariant::BellmanInf(mats) = &variant {
            if mats.is_empty() {
                return Err(Error::Config("BellmanInf needs at least one matrix".into()));
            }
            let dim = mats[0].dim();
            let slack = T::lit(1e-12) * (T::one() + spec.lambda_high());
            for (k, a) in mats.iter().enumerate() {
                if a.dim() != dim {
                    return Err(Error::Config(format!(
                        "BellmanInf matrix {k} has dimension {} (expected {dim})",
                        a.dim()
                    )));
                }
                check_finite(a)?;
                let s = a.eigenvalues();
                if s.min() < spec.lambda_low() - slack || s.max() > spec.lambda_high() + slack {
                    return Err(Error::Config(format!(
                        "BellmanInf matrix {k} has spectrum [{}, {}] outside [{}, {}]",
                        s.min(),
                        s.max(),
                        spec.lambda_low(),
                        spec.lambda_high()
                    )));
                }
            }
        }
        Ok(Self { variant, spec })
    }

    pub fn pucci_minus(spec: EllipticitySpec<T>) -> Self {
        Self {
            variant: OperatorVariant::PucciMinus,
            spec,
        }
    }

    pub fn pucci_plus(spec: EllipticitySpec<T>) -> Self {
        Self {
            variant: OperatorVariant::PucciPlus,
            spec,
        }
    }

    pub fn laplacian(spec: EllipticitySpec<T>) -> Self {
        Self {
            variant: OperatorVariant::Laplacian,
            spec,
        }
    }

    pub fn variant(&self) -> &OperatorVariant<T> {
        &self.variant
    }

    pub fn spec(&self) -> &EllipticitySpec<T> {
        &self.spec
    }

    /// Concave in the Hessian argument.
    pub fn is_concave(&self) -> bool {
        !matches!(self.variant, OperatorVariant::PucciPlus)
    }

    /// Every variant is positively homogeneous of degree one.
    pub fn is_homogeneous(&self) -> bool {
        true
    }

    /// Largest diffusion coefficient the operator can apply along a direction.
    pub fn max_coefficient(&self) -> T {
        match &self.variant {
            OperatorVariant::Laplacian => T::one(),
            _ => self.spec.lambda_high(),
        }
    }

    /// Pointwise evaluation `F(M)`.
    pub fn eval(&self, m: &SymMatrix<T>) -> Result<T> {
        check_finite(m)?;
        match &self.variant {
            OperatorVariant::PucciMinus => pucci_minus(m, &self.spec),
            OperatorVariant::PucciPlus => pucci_plus(m, &self.spec),
            OperatorVariant::Laplacian => Ok(m.trace()),
            OperatorVariant::BellmanInf(mats) => {
                if mats[0].dim() != m.dim() {
                    return Err(Error::InputDomain(format!(
                        "matrix dimension {} does not match operator dimension {}",
                        m.dim(),
                        mats[0].dim()
                    )));
                }
                Ok(mats
                    .iter()
                    .map(|a| a.trace_product(m))
                    .fold(T::infinity(), T::min))
            }
        }
    }
}

/// Checks `M⁻(M − N) ≤ F(M) − F(N) ≤ M⁺(M − N)` up to `1e-12` (scaled by the magnitudes involved).
pub fn ellipticity_sandwich_check<T: Real>(
    kind: &OperatorKind<T>,
    m: &SymMatrix<T>,
    n: &SymMatrix<T>,
) -> Result<bool> {
    if m.dim() != n.dim() {
        return Err(Error::InputDomain("dimension mismatch".into()));
    }
    let diff = m.sub(n);
    let fm = kind.eval(m)?;
    let fnn = kind.eval(n)?;
    let lo = pucci_minus(&diff, kind.spec())?;
    let hi = pucci_plus(&diff, kind.spec())?;
    let d = fm - fnn;
    let tol = T::lit(1e-12) * (T::one() + fm.abs() + fnn.abs());
    Ok(lo <= d + tol && d <= hi + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(l: f64, h: f64) -> EllipticitySpec<f64> {
        EllipticitySpec::new(l, h).unwrap()
    }

    fn random_sym(rng: &mut ChaCha8Rng, dim: usize) -> SymMatrix<f64> {
        let mut m = SymMatrix::zeros(dim).unwrap();
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, rng.gen_range(-3.0..3.0));
            }
        }
        m
    }

    #[test]
    fn spec_rejects_inverted_constants() {
        let err = EllipticitySpec::new(2.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("lambda_low = 2"));
        assert!(EllipticitySpec::new(0.0, 1.0).is_err());
        assert!(EllipticitySpec::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn pucci_diagonal_cases() {
        let s = spec(1.0, 2.0);
        let m = SymMatrix::diag(&[1.0, -1.0]).unwrap();
        assert_eq!(pucci_plus(&m, &s).unwrap(), 1.0);
        assert_eq!(pucci_minus(&m, &s).unwrap(), -1.0);
        let i = SymMatrix::<f64>::identity(2).unwrap();
        assert_eq!(pucci_minus(&i, &s).unwrap(), 2.0);
        for n in 1..=3 {
            let z = SymMatrix::<f64>::zeros(n).unwrap();
            assert_eq!(pucci_plus(&z, &s).unwrap(), 0.0);
            assert_eq!(pucci_minus(&z, &s).unwrap(), 0.0);
        }
    }

    #[test]
    fn pucci_off_diagonal_matches_eigen_split() {
        // eigenvalues of [[0,1],[1,0]] are ±1
        let s = spec(1.0, 2.0);
        let m = SymMatrix::new2(0.0, 1.0, 0.0);
        assert!((pucci_plus(&m, &s).unwrap() - 1.0).abs() < 1e-15);
        assert!((pucci_minus(&m, &s).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_entries_rejected() {
        let s = spec(1.0, 2.0);
        let m = SymMatrix::new2(f64::NAN, 0.0, 1.0);
        assert!(matches!(pucci_plus(&m, &s), Err(Error::InputDomain(_))));
        assert!(matches!(pucci_minus(&m, &s), Err(Error::InputDomain(_))));
    }

    #[test]
    fn pucci_minus_matches_brute_force_over_class() {
        // tr(AM) over A = R diag(a1, a2) Rᵀ, a_i ∈ {λ, Λ}, 3600 rotation angles.
        let s = spec(1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = random_sym(&mut rng, 2);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..3600 {
                let th = std::f64::consts::PI * k as f64 / 3600.0;
                let (sn, cs) = th.sin_cos();
                let e1 = [cs, sn];
                let e2 = [-sn, cs];
                let d1 = m.quad_form(&e1);
                let d2 = m.quad_form(&e2);
                for a1 in [1.0, 2.0] {
                    for a2 in [1.0, 2.0] {
                        let v = a1 * d1 + a2 * d2;
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            // the optimal rotation is the eigenframe; the sweep approaches it to O(dθ²)
            let pm = pucci_minus(&m, &s).unwrap();
            let pp = pucci_plus(&m, &s).unwrap();
            assert!(pm <= lo + 1e-12, "{pm} vs {lo}");
            assert!(pp >= hi - 1e-12);
            assert!((pm - lo).abs() < 1e-5 * (1.0 + pm.abs()));
            assert!((pp - hi).abs() < 1e-5 * (1.0 + pp.abs()));
        }
    }

    #[test]
    fn pucci_minus_matches_brute_force_exact_angle() {
        // sweep containing the eigen-angle exactly agrees to 1e-12
        let s = spec(1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = random_sym(&mut rng, 2);
            let theta0 = m.principal_angle();
            let mut lo = f64::INFINITY;
            for k in 0..3600 {
                let th = theta0 + std::f64::consts::PI * k as f64 / 3600.0;
                let (sn, cs) = th.sin_cos();
                let d1 = m.quad_form(&[cs, sn]);
                let d2 = m.quad_form(&[-sn, cs]);
                for a1 in [1.0, 2.0] {
                    for a2 in [1.0, 2.0] {
                        lo = lo.min(a1 * d1 + a2 * d2);
                    }
                }
            }
            assert!((pucci_minus(&m, &s).unwrap() - lo).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalues_3x3_match_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = random_sym(&mut rng, 3);
            let e = m.eigenvalues();
            let sum: f64 = e.as_slice().iter().sum();
            assert!((sum - m.trace()).abs() < 1e-10);
            for &l in e.as_slice() {
                let shifted = m.sub(&SymMatrix::identity(3).unwrap().scale(l));
                let (a, b, c, d, ee, f) = (
                    shifted.get(0, 0),
                    shifted.get(0, 1),
                    shifted.get(0, 2),
                    shifted.get(1, 1),
                    shifted.get(1, 2),
                    shifted.get(2, 2),
                );
                let det = a * (d * f - ee * ee) - b * (b * f - ee * c) + c * (b * ee - d * c);
                assert!(det.abs() < 1e-9, "det {det}");
            }
        }
    }

    #[test]
    fn operator_eval_examples() {
        let s = spec(1.0, 2.0);
        let lap = OperatorKind::laplacian(s);
        assert_eq!(
            lap.eval(&SymMatrix::diag(&[2.0, 3.0]).unwrap()).unwrap(),
            5.0
        );

        let unit = OperatorKind::pucci_minus(EllipticitySpec::<f64>::unit());
        let m = SymMatrix::new2(1.5, -0.7, -4.0);
        assert!((unit.eval(&m).unwrap() - m.trace()).abs() < 1e-15);

        let bell = OperatorKind::new(
            OperatorVariant::BellmanInf(vec![
                SymMatrix::identity(2).unwrap(),
                SymMatrix::diag(&[1.0, 2.0]).unwrap(),
            ]),
            s,
        )
        .unwrap();
        assert_eq!(
            bell.eval(&SymMatrix::diag(&[-1.0, 1.0]).unwrap()).unwrap(),
            0.0
        );
    }

    #[test]
    fn bellman_validation() {
        let s = spec(1.0, 2.0);
        assert!(matches!(
            OperatorKind::<f64>::new(OperatorVariant::BellmanInf(vec![]), s),
            Err(Error::Config(_))
        ));
        let too_big = SymMatrix::diag(&[1.0, 3.0]).unwrap();
        assert!(OperatorKind::new(OperatorVariant::BellmanInf(vec![too_big]), s).is_err());
        let mixed = vec![
            SymMatrix::identity(2).unwrap(),
            SymMatrix::identity(3).unwrap(),
        ];
        assert!(OperatorKind::new(OperatorVariant::BellmanInf(mixed), s).is_err());
    }

    #[test]
    fn sandwich_examples() {
        let s = spec(0.5, 2.0);
        let lap = OperatorKind::laplacian(s);
        let m = SymMatrix::diag(&[1.0, 0.0]).unwrap();
        let z = SymMatrix::zeros(2).unwrap();
        assert!(ellipticity_sandwich_check(&lap, &m, &z).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pm = OperatorKind::pucci_minus(spec(1.0, 2.0));
        for _ in 0..100 {
            let a = random_sym(&mut rng, 2);
            let b = random_sym(&mut rng, 2);
            assert!(ellipticity_sandwich_check(&pm, &a, &b).unwrap());
        }
    }

    #[test]
    fn bellman_sandwich_randomized() {
        let s = spec(1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mats: Vec<_> = (0..4)
            .map(|_| {
                let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                let d =
                    SymMatrix::diag(&[rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0)]).unwrap();
                d.rotated2(th)
            })
            .collect();
        let bell = OperatorKind::new(OperatorVariant::BellmanInf(mats), s).unwrap();
        for _ in 0..1000 {
            let a = random_sym(&mut rng, 2);
            let b = random_sym(&mut rng, 2);
            assert!(ellipticity_sandwich_check(&bell, &a, &b).unwrap());
        }
    }

    #[test]
    fn f32_evaluation() {
        let s = EllipticitySpec::<f32>::new(1.0, 2.0).unwrap();
        let m = SymMatrix::<f32>::diag(&[1.0, -1.0]).unwrap();
        assert_eq!(pucci_minus(&m, &s).unwrap(), -1.0f32);
    }
}
