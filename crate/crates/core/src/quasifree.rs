//! Quasi-free KMS functional and closed-form Green's functions.
//!
//! Everything here is a finite mode sum. The state on Weyl generators is
//! ω(W(x)) = exp(-¼ (x, (1+2ρ)x)) and products of time-translated Weyl
//! operators have the explicit Green's function
//!
//!   G(ζ_1..ζ_n) = ∏_i e^{-¼(x_i,(1+2ρ)x_i)} ∏_{i<j} e^{-½ R(ζ_j-ζ_i)(x_i,x_j)}
//!
//! with the two-point kernel
//!
//!   R(ζ)(x,y) = Σ_j (1+ρ_j) conj(x_j) y_j e^{iζa_j} + ρ_j conj(y_j) x_j e^{-iζa_j},
//!
//! holomorphic in the strip 0 < Im ζ < β and satisfying the KMS edge
//! identity R(t+iβ)(x,y) = R(-t)(y,x). Substituting ζ = is gives the
//! Euclidean kernel C(s) = ½ R(is), which for κ-real arguments reduces to
//! ½ (x, r(s) y) with the β-periodic scalar covariance r of `pathspace`.

use crate::error::{Error, Result};
use crate::spectral::{bose_factor, charged_rho_pm, DiagonalSystem, Sector, TestVector};
use num_complex::Complex64;

/// Tolerance absorbing rounding at the strip edges.
pub const STRIP_EDGE_TOL: f64 = 1e-12;

/// A product of time-translated Weyl generators W(x_1)(ζ_1)...W(x_n)(ζ_n).
#[derive(Clone, Debug)]
pub struct WeylWord {
    pub times: Vec<Complex64>,
    pub args: Vec<TestVector>,
}

impl WeylWord {
    /// Real-time word; times are unrestricted.
    pub fn real_time(times: &[f64], args: Vec<TestVector>) -> Result<Self> {
        if times.len() != args.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: args.len() });
        }
        Ok(WeylWord { times: times.iter().map(|&t| Complex64::new(t, 0.0)).collect(), args })
    }

    /// General word with complex times; imaginary parts must be
    /// nondecreasing with total spread at most β (the ordered-strip
    /// condition behind holomorphy of G).
    pub fn complex(times: Vec<Complex64>, args: Vec<TestVector>, beta: f64) -> Result<Self> {
        if times.len() != args.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: args.len() });
        }
        for w in times.windows(2) {
            if w[1].im < w[0].im - STRIP_EDGE_TOL {
                return Err(Error::StripViolation(format!(
                    "Im times must be nondecreasing, got {} then {}",
                    w[0].im, w[1].im
                )));
            }
        }
        if let (Some(first), Some(last)) = (times.first(), times.last()) {
            if last.im - first.im > beta + STRIP_EDGE_TOL {
                return Err(Error::StripViolation(format!(
                    "Im spread {} exceeds beta = {}",
                    last.im - first.im,
                    beta
                )));
            }
        }
        Ok(WeylWord { times, args })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Euclidean word: points 0 <= s_1 <= ... <= s_n on the circle with
/// s_n - s_1 <= β, all arguments κ-real.
#[derive(Clone, Debug)]
pub struct EuclideanWeylWord {
    pub s: Vec<f64>,
    pub args: Vec<TestVector>,
}

impl EuclideanWeylWord {
    pub fn new(system: &DiagonalSystem, s: &[f64], args: Vec<TestVector>) -> Result<Self> {
        if s.len() != args.len() {
            return Err(Error::DimensionMismatch { expected: s.len(), got: args.len() });
        }
        if let Some(&first) = s.first() {
            if first < -STRIP_EDGE_TOL {
                return Err(Error::OrderingViolation(format!("s_1 = {first} < 0")));
            }
            let last = *s.last().unwrap();
            if last - first > system.beta() + STRIP_EDGE_TOL {
                return Err(Error::OrderingViolation(format!(
                    "s_n - s_1 = {} exceeds beta",
                    last - first
                )));
            }
        }
        for w in s.windows(2) {
            if w[1] < w[0] - STRIP_EDGE_TOL {
                return Err(Error::OrderingViolation(format!("{} after {}", w[1], w[0])));
            }
        }
        for a in &args {
            system.check_dim(a)?;
            system.check_kappa_real(a, 1e-10)?;
        }
        Ok(EuclideanWeylWord { s: s.to_vec(), args })
    }

    /// The same word viewed at complex times ζ_j = i s_j.
    pub fn to_complex_word(&self, system: &DiagonalSystem) -> Result<WeylWord> {
        WeylWord::complex(
            self.s.iter().map(|&s| Complex64::new(0.0, s)).collect(),
            self.args.clone(),
            system.beta(),
        )
    }
}

/// ω(W(x)) = exp(-¼ (x, (1+2ρ)x)); equals 1 iff x = 0.
pub fn weyl_expectation(system: &DiagonalSystem, x: &TestVector) -> Result<f64> {
    system.check_dim(x)?;
    let w = bose_factor(system).one_plus_two_rho;
    let q = x.weighted_inner(&w, x).re;
    Ok((-0.25 * q).exp())
}

/// Two-point kernel R(ζ)(x,y), holomorphic in 0 <= Im ζ <= β.
pub fn two_point_r(
    system: &DiagonalSystem,
    zeta: Complex64,
    x: &TestVector,
    y: &TestVector,
) -> Result<Complex64> {
    system.check_dim(x)?;
    system.check_dim(y)?;
    if zeta.im < -STRIP_EDGE_TOL || zeta.im > system.beta() + STRIP_EDGE_TOL {
        return Err(Error::StripViolation(format!("Im t = {} not in [0, beta]", zeta.im)));
    }
    Ok(two_point_r_unchecked(system, zeta, x, y))
}

fn two_point_r_unchecked(
    system: &DiagonalSystem,
    zeta: Complex64,
    x: &TestVector,
    y: &TestVector,
) -> Complex64 {
    let rho = bose_factor(system).rho;
    let i = Complex64::new(0.0, 1.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &a) in system.frequencies().iter().enumerate() {
        let up = (i * zeta * a).exp();
        let dn = (-i * zeta * a).exp();
        acc += (1.0 + rho[j]) * x.coeffs[j].conj() * y.coeffs[j] * up
            + rho[j] * y.coeffs[j].conj() * x.coeffs[j] * dn;
    }
    acc
}

/// Euclidean covariance C(s)(x,y) = ½ R(is)(x,y) for κ-real x, y; real,
/// symmetric in (x,y) and β-periodic with C(s) = C(β-s).
pub fn euclid_cov_c(
    system: &DiagonalSystem,
    s: f64,
    x: &TestVector,
    y: &TestVector,
) -> Result<f64> {
    if s < -STRIP_EDGE_TOL || s > system.beta() + STRIP_EDGE_TOL {
        return Err(Error::StripViolation(format!("s = {s} not in [0, beta]")));
    }
    system.check_kappa_real(x, 1e-10)?;
    system.check_kappa_real(y, 1e-10)?;
    system.check_dim(x)?;
    system.check_dim(y)?;
    let z = two_point_r_unchecked(system, Complex64::new(0.0, s), x, y) * 0.5;
    Ok(z.re)
}

/// Green's function of a Weyl word from the closed product formula.
pub fn greens_weyl(system: &DiagonalSystem, word: &WeylWord) -> Result<Complex64> {
    let w = bose_factor(system).one_plus_two_rho;
    let mut log_acc = Complex64::new(0.0, 0.0);
    for x in &word.args {
        system.check_dim(x)?;
        log_acc -= 0.25 * x.weighted_inner(&w, x).re;
    }
    for i in 0..word.len() {
        for j in (i + 1)..word.len() {
            let dz = word.times[j] - word.times[i];
            if dz.im < -STRIP_EDGE_TOL || dz.im > system.beta() + STRIP_EDGE_TOL {
                return Err(Error::StripViolation(format!(
                    "Im(t_{} - t_{}) = {} not in [0, beta]",
                    j, i, dz.im
                )));
            }
            log_acc -= 0.5 * two_point_r_unchecked(system, dz, &word.args[i], &word.args[j]);
        }
    }
    Ok(log_acc.exp())
}

/// Euclidean Green's function ∏_{i,j} e^{-½ C(|s_i-s_j|)(x_i,x_j)};
/// strictly positive for κ-real arguments.
pub fn euclid_greens_weyl(system: &DiagonalSystem, word: &EuclideanWeylWord) -> Result<f64> {
    let n = word.s.len();
    let mut exponent = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = euclid_cov_c(
                system,
                (word.s[i] - word.s[j]).abs(),
                &word.args[i],
                &word.args[j],
            )?;
            exponent -= 0.5 * c;
        }
    }
    Ok(exponent.exp())
}

/// KMS boundary residual |F(t+iβ) - ω(τ_t(W(y))W(x))| evaluated from the
/// closed forms, where F(z) = ω(W(x) τ_z(W(y))). Expected at rounding level.
pub fn kms_residual(system: &DiagonalSystem, x: &TestVector, y: &TestVector, t: f64) -> Result<f64> {
    kms_residual_shifted(system, x, y, t, system.beta())
}

/// Same residual with the continuation taken to t + i*shift instead of
/// t + iβ; shift = β is the KMS edge, anything else is a negative control.
pub fn kms_residual_shifted(
    system: &DiagonalSystem,
    x: &TestVector,
    y: &TestVector,
    t: f64,
    shift: f64,
) -> Result<f64> {
    let lhs = greens_weyl(
        system,
        &WeylWord::complex(
            vec![Complex64::new(0.0, 0.0), Complex64::new(t, shift)],
            vec![x.clone(), y.clone()],
            system.beta(),
        )?,
    )?;
    let rhs = greens_weyl(
        system,
        &WeylWord::real_time(&[t, 0.0], vec![y.clone(), x.clone()])?,
    )?;
    Ok((lhs - rhs).norm())
}

/// Time-reversal residual |ω(W(x)τ_t(W(y))) - conj(ω(W(x)τ_{-t}(W(y))))|
/// for κ-real arguments. Vanishes for the neutral system and the charged
/// system at μ = 0.
pub fn time_reversal_check(
    system: &DiagonalSystem,
    x: &TestVector,
    y: &TestVector,
    t: f64,
) -> Result<f64> {
    system.check_kappa_real(x, 1e-10)?;
    system.check_kappa_real(y, 1e-10)?;
    let fwd = greens_weyl(system, &WeylWord::real_time(&[0.0, t], vec![x.clone(), y.clone()])?)?;
    let bwd = greens_weyl(system, &WeylWord::real_time(&[0.0, -t], vec![x.clone(), y.clone()])?)?;
    Ok((fwd - bwd.conj()).norm())
}

/// Euclidean two-point function of the gauge-invariant quadratic
/// observables φ*(y')φ(y') and φ*(x')φ(x') of the charged field, evaluated
/// at imaginary time s with x' = (u, conj u), y' = (v, conj v):
///
///   (v, (e^{-sε}(1+ρ⁺) + e^{sε}ρ⁻) u) · (u, (e^{-sε}(1+ρ⁻) + e^{sε}ρ⁺) v)
///     + (u, (1+ρ⁺+ρ⁻)u) (v, (1+ρ⁺+ρ⁻)v).
///
/// For μ = 0 the value is real for every u, v; a nonzero imaginary part
/// (possible once μ ≠ 0, s ≠ 0 and at least two distinct frequencies enter)
/// witnesses the loss of stochastic positivity.
pub fn charged_nonpositivity_witness(
    system: &DiagonalSystem,
    u: &[Complex64],
    v: &[Complex64],
    s: f64,
) -> Result<Complex64> {
    let mu = match system.sector() {
        Sector::Charged { mu } => mu,
        Sector::Neutral => {
            return Err(Error::InvalidParameter("witness needs a charged system".into()))
        }
    };
    let h = system.half_dim();
    if u.len() != h || v.len() != h {
        return Err(Error::DimensionMismatch { expected: h, got: u.len().max(v.len()) });
    }
    if s < -STRIP_EDGE_TOL || s > system.beta() + STRIP_EDGE_TOL {
        return Err(Error::StripViolation(format!("s = {s} not in [0, beta]")));
    }
    let (rho_p, rho_m) = charged_rho_pm(system)?;
    let eps: Vec<f64> = system.frequencies()[..h].iter().map(|&a| a + mu).collect();

    let mut f1 = Complex64::new(0.0, 0.0); // (v, D1 u)
    let mut f2 = Complex64::new(0.0, 0.0); // (u, D2 v)
    let mut nu = Complex64::new(0.0, 0.0); // (u, (1+ρ⁺+ρ⁻) u)
    let mut nv = Complex64::new(0.0, 0.0);
    for j in 0..h {
        let em = (-s * eps[j]).exp();
        let ep = (s * eps[j]).exp();
        let d1 = em * (1.0 + rho_p[j]) + ep * rho_m[j];
        let d2 = em * (1.0 + rho_m[j]) + ep * rho_p[j];
        f1 += v[j].conj() * d1 * u[j];
        f2 += u[j].conj() * d2 * v[j];
        let w = 1.0 + rho_p[j] + rho_m[j];
        nu += u[j].conj() * w * u[j];
        nv += v[j].conj() * w * v[j];
    }
    Ok(f1 * f2 + nu * nv)
}
