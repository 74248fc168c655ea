//! Spatially cutoff interactions on sampled thermal fields.
//!
//! The smeared field at lattice site x is φ_Λ(x) = √2 φ(f_{Λ,x}) with the
//! UV-cutoff profile f_{Λ,x}(k) = (4π)^{-1/2} e^{-ikx} χ̂(k/Λ) ε(k)^{-1/2}.
//! Interactions are spatial Riemann sums of Wick-ordered kernels,
//!
//!   V = Δx Σ_l g(x_l) :P(φ_Λ(x_l)):_v ,
//!
//! with v the ordering variance (zero-temperature (f,f) or thermal
//! (f,(1+2ρ)f), both x-independent on the translation-invariant grid).
//! Degree orthogonality of thermally ordered monomials makes every L² inner
//! product an exact double lattice sum, which is the deterministic oracle
//! behind the UV-convergence diagnostics.

use crate::error::{Error, Result};
use crate::pathspace::PathEnsemble;
use crate::rng::gaussian;
use crate::spectral::{bose_factor, dispersion, momentum_to_real_modes, DiagonalSystem, ModeGrid,
                      Sector, TestVector};
use crate::wick::{self, WickPolynomial};
use num_complex::Complex64;
use rayon::prelude::*;

/// Highest kernel degree evaluated by exact tuple sums before switching to
/// Monte Carlo tuple sampling, and the hard cap.
pub const WP_EXACT_MAX: usize = 3;
pub const WP_DEGREE_MAX: usize = 8;

/// Smooth normalized bump: χ(x) = cos²(πx/2w)/w on |x| <= w, so ∫χ = 1 and
/// χ̂(k) = sinc(kw) · π²/(π² - (kw)²), with χ̂(0) = 1 and |χ̂| <= 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiProfile {
    pub width: f64,
}

impl ChiProfile {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter(format!("chi width {width} must be > 0")));
        }
        Ok(ChiProfile { width })
    }

    /// Fourier transform of the bump, stable at the removable points.
    pub fn chi_hat(&self, k: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let u = (k * self.width).abs();
        if u < 1e-4 {
            return 1.0 + u * u * (1.0 / (pi * pi) - 1.0 / 6.0);
        }
        if (u - pi).abs() < 1e-6 {
            // sin(u) = sin(π-u); expand around the zero of π² - u².
            let d = pi - u;
            let sinc = if d.abs() < 1e-12 { 1.0 } else { d.sin() / d };
            return pi * pi * sinc / (u * (pi + u));
        }
        pi * pi * u.sin() / (u * (pi * pi - u * u))
    }
}

/// Spatial cutoff profiles on the shared lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GProfile {
    /// cos² bump of the given half-width, centered at the origin.
    Bump { width: f64 },
    /// g ≡ 1 over the box.
    Uniform,
}

/// Sample a profile on the lattice of `grid`.
pub fn g_profile(grid: &ModeGrid, profile: GProfile) -> Vec<f64> {
    grid.lattice_points()
        .iter()
        .map(|&x| match profile {
            GProfile::Uniform => 1.0,
            GProfile::Bump { width } => {
                if x.abs() <= width {
                    let c = (std::f64::consts::FRAC_PI_2 * x / width).cos();
                    c * c
                } else {
                    0.0
                }
            }
        })
        .collect()
}

/// UV cutoff Λ, the bump χ and the spatial cutoff samples g >= 0.
#[derive(Clone, Debug)]
pub struct CutoffSpec {
    pub lambda: f64,
    pub chi: ChiProfile,
    pub g: Vec<f64>,
}

impl CutoffSpec {
    pub fn new(grid: &ModeGrid, lambda: f64, chi: ChiProfile, g: Vec<f64>) -> Result<Self> {
        if !(lambda >= 1.0) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must be >= 1")));
        }
        if g.len() != grid.n_modes() {
            return Err(Error::DimensionMismatch { expected: grid.n_modes(), got: g.len() });
        }
        if g.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("g must be nonnegative".into()));
        }
        if (chi.chi_hat(0.0) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("chi_hat(0) must equal 1".into()));
        }
        Ok(CutoffSpec { lambda, chi, g })
    }

    /// ‖g‖₁ = Δx Σ g(x).
    pub fn g_l1(&self, grid: &ModeGrid) -> f64 {
        grid.lattice_spacing() * self.g.iter().sum::<f64>()
    }
}

/// Interaction kinds; the polynomial coefficient lists are a_0..a_2n in the
/// Wick basis of the chosen ordering.
#[derive(Clone, Debug)]
pub enum InteractionKind {
    Polynomial { coeffs: Vec<f64> },
    Exponential { alpha: f64 },
    ChargedPolynomial { coeffs: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderingCovariance {
    ZeroTemperature,
    Thermal,
}

#[derive(Clone, Debug)]
pub struct InteractionSpec {
    pub kind: InteractionKind,
    pub ordering: OrderingCovariance,
    pub cutoff: CutoffSpec,
}

impl InteractionSpec {
    /// Basic well-formedness; arbitrary polynomial signs are allowed here
    /// (diagnostics evaluate plain Wick monomials too).
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            InteractionKind::Polynomial { coeffs }
            | InteractionKind::ChargedPolynomial { coeffs } => {
                WickPolynomial::new(coeffs.clone(), 0.0).map(|_| ())
            }
            InteractionKind::Exponential { alpha } => {
                if alpha.abs() >= std::f64::consts::TAU.sqrt() {
                    return Err(Error::InvalidParameter(format!(
                        "|alpha| = {} must stay below sqrt(2π)",
                        alpha.abs()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Reweighting by e^{-V} additionally needs V bounded from below:
    /// polynomial kinds must have even degree and positive leading
    /// coefficient.
    pub fn validate_bounded_below(&self) -> Result<()> {
        self.validate()?;
        match &self.kind {
            InteractionKind::Polynomial { coeffs }
            | InteractionKind::ChargedPolynomial { coeffs } => {
                WickPolynomial::new_interaction(coeffs.clone(), 0.0).map(|_| ())
            }
            InteractionKind::Exponential { .. } => Ok(()),
        }
    }
}

/// The UV-cutoff test function f_{Λ,x} as a κ-real vector in the real-mode
/// basis of the neutral system on `grid`.
pub fn cutoff_testfunction(
    grid: &ModeGrid,
    chi: &ChiProfile,
    lambda: f64,
    x: f64,
) -> Result<TestVector> {
    let eps = dispersion(grid);
    let norm = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    let h: Vec<Complex64> = grid
        .momenta()
        .iter()
        .zip(&eps)
        .map(|(&k, &e)| Complex64::from_polar(norm * chi.chi_hat(k / lambda) / e.sqrt(), -k * x))
        .collect();
    Ok(TestVector::from_complex(momentum_to_real_modes(grid, &h)?))
}

/// Per-site field coefficients and ordering variances of φ_Λ(x_l) = √2 φ(f).
/// `site_coeffs[l][j]` multiplies mode j of the (neutral half-) system.
#[derive(Clone, Debug)]
pub struct FieldProfile {
    pub site_coeffs: Vec<Vec<f64>>,
    /// v₀ = 2 c₀(f,f) = (f,f).
    pub variance_zero: f64,
    /// v_β = 2 c_β(f,f) = (f,(1+2ρ)f).
    pub variance_thermal: f64,
}

/// Build the profile for the half-space modes (the neutral mode set of
/// `half_system`); charged evaluators reuse it for both field components.
pub fn field_profile(
    grid: &ModeGrid,
    half_frequencies: &[f64],
    beta: f64,
    chi: &ChiProfile,
    lambda: f64,
) -> Result<FieldProfile> {
    let d = half_frequencies.len();
    if d != grid.n_modes() {
        return Err(Error::DimensionMismatch { expected: grid.n_modes(), got: d });
    }
    let weights: Vec<f64> = half_frequencies
        .iter()
        .map(|&a| {
            let e = (-beta * a).exp();
            (1.0 + e) / (1.0 - e)
        })
        .collect();
    let sqrt2 = 2.0f64.sqrt();
    let mut site_coeffs = Vec::with_capacity(grid.n_modes());
    let mut v0 = 0.0;
    let mut vb = 0.0;
    for (l, &x) in grid.lattice_points().iter().enumerate() {
        let f = cutoff_testfunction(grid, chi, lambda, x)?;
        if l == 0 {
            for (j, z) in f.coeffs.iter().enumerate() {
                let fj = z.re;
                v0 += fj * fj;
                vb += weights[j] * fj * fj;
            }
        }
        site_coeffs.push(f.coeffs.iter().map(|z| sqrt2 * z.re).collect());
    }
    Ok(FieldProfile { site_coeffs, variance_zero: v0, variance_thermal: vb })
}

enum KernelKind {
    /// Plain-polynomial coefficients of the Wick-expanded kernel in y.
    Plain(Vec<f64>),
    /// Exponential kind: (alpha, ordering variance v).
    Exp(f64, f64),
    /// Charged kind: plain-polynomial coefficients in u = |ψ|².
    Charged(Vec<f64>),
}

/// Evaluates V on ensemble slices; all per-site data is precomputed.
pub struct InteractionEvaluator {
    dx: f64,
    g: Vec<f64>,
    profile: FieldProfile,
    kernel: KernelKind,
    half_dim: usize,
    full_dim: usize,
    /// Ordering variance actually used by the kernel.
    pub variance: f64,
}

/// Expand Σ_n a_n :u^n:_v of the charged kind (u = |ψ|², E u = v) into plain
/// powers of u, using :u^n:_v = n! (-v)^n L_n(u/v).
fn charged_plain_coeffs(coeffs: &[f64], v: f64) -> Vec<f64> {
    let deg = coeffs.len() - 1;
    let mut out = vec![0.0; coeffs.len()];
    let mut fact = vec![1.0f64; deg + 1];
    for i in 1..=deg {
        fact[i] = fact[i - 1] * i as f64;
    }
    for (n, &a) in coeffs.iter().enumerate() {
        // n! (-v)^n L_n(u/v) = Σ_k n!/(k!) C(n,k) (-1)^{n-k}... expanded:
        // L_n(z) = Σ_k C(n,k) (-z)^k / k!.
        for k in 0..=n {
            let binom = fact[n] / (fact[k] * fact[n - k]);
            out[k] += a * fact[n] * (-v).powi((n - k) as i32) * binom / fact[k];
        }
    }
    out
}

fn horner(coeffs: &[f64], y: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * y + c;
    }
    acc
}

impl InteractionEvaluator {
    pub fn new(grid: &ModeGrid, system: &DiagonalSystem, spec: &InteractionSpec) -> Result<Self> {
        spec.validate()?;
        let charged_kind = matches!(spec.kind, InteractionKind::ChargedPolynomial { .. });
        let half: Vec<f64> = match (system.sector(), charged_kind) {
            (Sector::Neutral, false) => system.frequencies().to_vec(),
            (Sector::Charged { mu }, true) => {
                if mu != 0.0 {
                    return Err(Error::InvalidParameter(
                        "charged sampling requires mu = 0 (stochastic positivity)".into(),
                    ));
                }
                system.frequencies()[..system.half_dim()].to_vec()
            }
            _ => {
                return Err(Error::InvalidParameter(
                    "interaction kind does not match the system sector".into(),
                ))
            }
        };
        let profile =
            field_profile(grid, &half, system.beta(), &spec.cutoff.chi, spec.cutoff.lambda)?;
        let v = match spec.ordering {
            OrderingCovariance::ZeroTemperature => profile.variance_zero,
            OrderingCovariance::Thermal => profile.variance_thermal,
        };
        let kernel = match &spec.kind {
            InteractionKind::Polynomial { coeffs } => {
                KernelKind::Plain(WickPolynomial::new(coeffs.clone(), v)?.plain_coeffs())
            }
            InteractionKind::Exponential { alpha } => KernelKind::Exp(*alpha, v),
            InteractionKind::ChargedPolynomial { coeffs } => {
                KernelKind::Charged(charged_plain_coeffs(coeffs, v))
            }
        };
        Ok(InteractionEvaluator {
            dx: grid.lattice_spacing(),
            g: spec.cutoff.g.clone(),
            profile,
            kernel,
            half_dim: half.len(),
            full_dim: system.dim(),
            variance: v,
        })
    }

    /// V evaluated on the fixed-time slice of one sample.
    pub fn eval_slice(&self, slice: &[f64]) -> f64 {
        debug_assert_eq!(slice.len(), self.full_dim);
        let mut acc = 0.0;
        for (l, &gl) in self.g.iter().enumerate() {
            if gl == 0.0 {
                continue;
            }
            let coeffs = &self.profile.site_coeffs[l];
            let val = match &self.kernel {
                KernelKind::Plain(plain) => {
                    let mut y = 0.0;
                    for j in 0..self.half_dim {
                        y += coeffs[j] * slice[j];
                    }
                    horner(plain, y)
                }
                KernelKind::Exp(alpha, v) => {
                    let mut y = 0.0;
                    for j in 0..self.half_dim {
                        y += coeffs[j] * slice[j];
                    }
                    wick::wick_exp(y, *alpha, *v)
                }
                KernelKind::Charged(plain) => {
                    let (mut y1, mut y2) = (0.0, 0.0);
                    for j in 0..self.half_dim {
                        y1 += coeffs[j] * slice[j];
                        y2 += coeffs[j] * slice[self.half_dim + j];
                    }
                    horner(plain, 0.5 * (y1 * y1 + y2 * y2))
                }
            };
            acc += gl * val;
        }
        self.dx * acc
    }

    /// V per sample at one Euclidean time index.
    pub fn eval_at_time(&self, ensemble: &PathEnsemble, time: usize) -> Vec<f64> {
        (0..ensemble.n_samples)
            .into_par_iter()
            .map(|i| self.eval_slice(ensemble.slice(i, time)))
            .collect()
    }

    /// V on every (sample, time) pair, sample-major.
    pub fn eval_grid(&self, ensemble: &PathEnsemble) -> Vec<f64> {
        let n_t = ensemble.grid.n_t;
        (0..ensemble.n_samples * n_t)
            .into_par_iter()
            .map(|idx| self.eval_slice(ensemble.slice(idx / n_t, idx % n_t)))
            .collect()
    }
}

/// Thermal covariance of the smeared fields at two sites and two cutoffs:
/// Cov(φ_Λ(x_l), φ_{Λ'}(x_m)) = (f_{Λ,l}, (1+2ρ) f_{Λ',m}) = 2 c_β(f, f').
pub fn site_covariance_matrix(
    grid: &ModeGrid,
    system: &DiagonalSystem,
    chi: &ChiProfile,
    lambda1: f64,
    lambda2: f64,
) -> Result<Vec<Vec<f64>>> {
    let p1 = field_profile(grid, system.frequencies(), system.beta(), chi, lambda1)?;
    let p2 = field_profile(grid, system.frequencies(), system.beta(), chi, lambda2)?;
    let w = bose_factor(system).one_plus_two_rho;
    let n = grid.n_modes();
    let mut cov = vec![vec![0.0; n]; n];
    for l in 0..n {
        for m in 0..n {
            // site_coeffs carry the √2; ½ w restores (f, (1+2ρ) f').
            let mut acc = 0.0;
            for j in 0..n {
                acc += 0.5 * w[j] * p1.site_coeffs[l][j] * p2.site_coeffs[m][j];
            }
            cov[l][m] = acc;
        }
    }
    Ok(cov)
}

/// Exact thermal L² inner product of two polynomial interactions at cutoffs
/// (Λ, Λ'):  ⟨V, V'⟩ = Σ_n a_n a'_n n! Δx² Σ_{l,m} g_l g_m cov_{lm}^n.
pub fn exact_l2_inner(
    grid: &ModeGrid,
    system: &DiagonalSystem,
    chi: &ChiProfile,
    g: &[f64],
    coeffs1: &[f64],
    lambda1: f64,
    coeffs2: &[f64],
    lambda2: f64,
) -> Result<f64> {
    let cov = site_covariance_matrix(grid, system, chi, lambda1, lambda2)?;
    let dx = grid.lattice_spacing();
    let deg = coeffs1.len().max(coeffs2.len()) - 1;
    let mut fact = vec![1.0f64; deg + 1];
    for i in 1..=deg {
        fact[i] = fact[i - 1] * i as f64;
    }
    let n = grid.n_modes();
    let mut acc = 0.0;
    for l in 0..n {
        if g[l] == 0.0 {
            continue;
        }
        for m in 0..n {
            if g[m] == 0.0 {
                continue;
            }
            let mut cpow = 1.0;
            let mut site = 0.0;
            for j in 0..=deg {
                let a1 = coeffs1.get(j).copied().unwrap_or(0.0);
                let a2 = coeffs2.get(j).copied().unwrap_or(0.0);
                site += a1 * a2 * fact[j] * cpow;
                cpow *= cov[l][m];
            }
            acc += g[l] * g[m] * site;
        }
    }
    Ok(dx * dx * acc)
}

/// Exact thermal L² inner product of two exponential interactions:
/// ⟨V, V'⟩ = Δx² Σ_{l,m} g_l g_m e^{α² cov_{lm}}.
pub fn exact_l2_inner_exp(
    grid: &ModeGrid,
    system: &DiagonalSystem,
    chi: &ChiProfile,
    g: &[f64],
    alpha: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    let cov = site_covariance_matrix(grid, system, chi, lambda1, lambda2)?;
    let dx = grid.lattice_spacing();
    let n = grid.n_modes();
    let mut acc = 0.0;
    for l in 0..n {
        for m in 0..n {
            acc += g[l] * g[m] * (alpha * alpha * cov[l][m]).exp();
        }
    }
    Ok(dx * dx * acc)
}

/// ĝ at an arbitrary momentum, ĝ(p) = Σ_x g(x) e^{-ipx} Δx (real g gives
/// |ĝ(p)| symmetric in p).
fn g_hat_sq(grid: &ModeGrid, g: &[f64], p: f64) -> f64 {
    let dx = grid.lattice_spacing();
    let mut acc = Complex64::new(0.0, 0.0);
    for (l, &x) in grid.lattice_points().iter().enumerate() {
        acc += Complex64::from_polar(g[l] * dx, -p * x);
    }
    acc.norm_sqr()
}

/// Weighted ⊗^p norm of the Wick-monomial kernel
/// w_{p,Λ}(k_1..k_p) = ĝ(Σk_i) ∏ χ̂(k_i/Λ) ε(k_i)^{-1/2}:
/// ‖w‖² = Σ Δk^p |ĝ(Σk)|² ∏ χ̂² (1+2ρ(k_i))/ε(k_i), exact for p <= 3 and
/// Monte Carlo tuple-sampled above (returns the standard error, 0 when
/// exact). A cross-cutoff pairing ⟨w_{p,Λ}, w_{p,Λ'}⟩ uses χ̂(k/Λ)χ̂(k/Λ').
pub fn kernel_wp_norm(
    grid: &ModeGrid,
    system: &DiagonalSystem,
    chi: &ChiProfile,
    g: &[f64],
    p: usize,
    lambda1: f64,
    lambda2: f64,
    mc_tuples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if p == 0 || p > WP_DEGREE_MAX {
        return Err(Error::DegreeTooLarge(p, WP_DEGREE_MAX));
    }
    let eps = dispersion(grid);
    let momenta = grid.momenta();
    let n = momenta.len();
    let dk = grid.delta_k;
    let beta = system.beta();
    // per-momentum factor χ̂χ̂' (1+2ρ(ε(k)))/ε(k)
    let modew: Vec<f64> = (0..n)
        .map(|i| {
            let e = (-beta * eps[i]).exp();
            let w = (1.0 + e) / (1.0 - e);
            chi.chi_hat(momenta[i] / lambda1) * chi.chi_hat(momenta[i] / lambda2) * w / eps[i]
        })
        .collect();
    if p <= WP_EXACT_MAX {
        // exact nested sums
        fn rec(
            depth: usize,
            p: usize,
            ksum: f64,
            wprod: f64,
            grid: &ModeGrid,
            g: &[f64],
            momenta: &[f64],
            modew: &[f64],
            dk: f64,
        ) -> f64 {
            if depth == p {
                return wprod * g_hat_sq(grid, g, ksum);
            }
            let mut acc = 0.0;
            for i in 0..momenta.len() {
                acc += rec(depth + 1, p, ksum + momenta[i], wprod * dk * modew[i], grid, g,
                           momenta, modew, dk);
            }
            acc
        }
        Ok((rec(0, p, 0.0, 1.0, grid, g, &momenta, &modew, dk), 0.0))
    } else {
        // uniform tuple sampling over the n^p grid tuples
        let total = (n as f64).powi(p as i32) * dk.powi(p as i32);
        let vals: Vec<f64> = (0..mc_tuples)
            .into_par_iter()
            .map(|t| {
                let mut ksum = 0.0;
                let mut wprod = 1.0;
                for slot in 0..p {
                    let u = gaussian(seed, t as u64, slot as u64, 0).abs();
                    let idx = ((u * 1e6) as usize) % n;
                    ksum += momenta[idx];
                    wprod *= modew[idx];
                }
                wprod * g_hat_sq(grid, g, ksum)
            })
            .collect();
        let m = vals.iter().sum::<f64>() / mc_tuples as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / mc_tuples as f64;
        Ok((total * m, total * (var / mc_tuples as f64).sqrt()))
    }
}

/// One row of a UV-convergence table.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub distance: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Fitted rate ε₀ in distance ~ Λ^{-ε₀} over consecutive ladder pairs.
    pub fitted_rate: f64,
}

/// Exact L² distances ‖V_Λ - V_Λ'‖ along a cutoff ladder (thermal ordering),
/// with the log-log fitted decay rate over consecutive pairs.
pub fn convergence_study(
    grid: &ModeGrid,
    system: &DiagonalSystem,
    chi: &ChiProfile,
    g: &[f64],
    coeffs: &[f64],
    ladder: &[f64],
) -> Result<ConvergenceTable> {
    let mut rows = Vec::new();
    for w in ladder.windows(2) {
        let (l1, l2) = (w[0], w[1]);
        let a = exact_l2_inner(grid, system, chi, g, coeffs, l1, coeffs, l1)?;
        let b = exact_l2_inner(grid, system, chi, g, coeffs, l2, coeffs, l2)?;
        let c = exact_l2_inner(grid, system, chi, g, coeffs, l1, coeffs, l2)?;
        rows.push(ConvergenceRow {
            lambda1: l1,
            lambda2: l2,
            distance: (a + b - 2.0 * c).max(0.0).sqrt(),
        });
    }
    // least-squares slope of ln d against ln Λ1
    let fitted_rate = if rows.len() >= 2 {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.distance > 0.0)
            .map(|r| (r.lambda1.ln(), r.distance.ln()))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        -(n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    Ok(ConvergenceTable { rows, fitted_rate })
}

/// Reorder a zero-temperature-ordered polynomial into the thermal basis.
/// Returns the new coefficients together with r_Λ = (c_β - c₀)(f,f) and its
/// Λ→∞ limit on the grid.
pub fn reorder_interaction(
    grid: &ModeGrid,
    system: &DiagonalSystem,
    spec: &InteractionSpec,
) -> Result<(Vec<f64>, f64, f64)> {
    let coeffs = match &spec.kind {
        InteractionKind::Polynomial { coeffs } => coeffs.clone(),
        _ => {
            return Err(Error::InvalidParameter(
                "reorder_interaction applies to the neutral polynomial kind".into(),
            ))
        }
    };
    if spec.ordering != OrderingCovariance::ZeroTemperature {
        return Err(Error::InvalidParameter("interaction is already thermally ordered".into()));
    }
    let prof = field_profile(
        grid,
        system.frequencies(),
        system.beta(),
        &spec.cutoff.chi,
        spec.cutoff.lambda,
    )?;
    let p = WickPolynomial::new(coeffs, prof.variance_zero)?;
    let reordered = wick::reorder(&p, prof.variance_thermal)?;
    let r_lambda = 0.5 * (prof.variance_thermal - prof.variance_zero);
    let prof_inf =
        field_profile(grid, system.frequencies(), system.beta(), &spec.cutoff.chi, f64::INFINITY);
    // χ̂(k/∞) = χ̂(0) = 1 pointwise; reuse the profile at a huge cutoff.
    let r_inf = match prof_inf {
        Ok(p) => 0.5 * (p.variance_thermal - p.variance_zero),
        Err(_) => {
            let p = field_profile(grid, system.frequencies(), system.beta(), &spec.cutoff.chi,
                                  1e12)?;
            0.5 * (p.variance_thermal - p.variance_zero)
        }
    };
    Ok((reordered.coeffs, r_lambda, r_inf))
}

/// Thermal position-space kernel K_β(x) = ½ Σ_k Δk cos(kx) (1+2ρ(k))/ε(k).
pub fn kbeta_kernel(grid: &ModeGrid, beta: f64, x: f64) -> f64 {
    let eps = dispersion(grid);
    let dk = grid.delta_k;
    let mut acc = 0.0;
    for (&k, &e) in grid.momenta().iter().zip(&eps) {
        let ex = (-beta * e).exp();
        let w = (1.0 + ex) / (1.0 - ex);
        acc += (k * x).cos() * w / e;
    }
    0.5 * dk * acc
}

/// Coefficients ε_n = (1/n!) (α²/2π)^n ∫∫ g(x) g(y) K_β(x-y)^n dx dy of the
/// exponential-interaction norm series, n = 0..=n_max.
pub fn exp_series(
    grid: &ModeGrid,
    beta: f64,
    g: &[f64],
    alpha: f64,
    n_max: usize,
) -> Result<Vec<f64>> {
    if g.len() != grid.n_modes() {
        return Err(Error::DimensionMismatch { expected: grid.n_modes(), got: g.len() });
    }
    let n_x = g.len();
    let dx = grid.lattice_spacing();
    // K on lattice differences: index l - m + (n_x - 1).
    let kvals: Vec<f64> =
        (0..2 * n_x - 1).map(|i| kbeta_kernel(grid, beta, (i as i64 - (n_x as i64 - 1)) as f64 * dx)).collect();
    let base = alpha * alpha / std::f64::consts::TAU;
    let mut eps_n = Vec::with_capacity(n_max + 1);
    let mut fact = 1.0;
    for n in 0..=n_max {
        if n > 0 {
            fact *= n as f64;
        }
        let mut acc = 0.0;
        for l in 0..n_x {
            if g[l] == 0.0 {
                continue;
            }
            for m in 0..n_x {
                acc += g[l] * g[m] * kvals[(l + n_x - 1) - m].powi(n as i32);
            }
        }
        eps_n.push(base.powi(n as i32) / fact * acc * dx * dx);
    }
    Ok(eps_n)
}

/// Exact pointwise lower bound of a polynomial interaction together with the
/// empirical minimum of V over an ensemble's slices.
#[derive(Clone, Copy, Debug)]
pub struct LowerBoundReport {
    /// min over samples and times of V.
    pub empirical_min: f64,
    /// ‖g‖₁ · min_y :P(y):_v — V can never go below this.
    pub exact_bound: f64,
    /// Ordering variance v used by the kernel.
    pub variance: f64,
}

/// Minimum of a plain polynomial over the real line (even degree, positive
/// leading coefficient): coarse scan on the Cauchy root bound plus golden
/// refinement.
pub fn polynomial_min(plain: &[f64]) -> f64 {
    let deg = plain.len() - 1;
    let lead = plain[deg];
    let bound = 1.0
        + plain[..deg].iter().map(|c| (c / lead).abs()).fold(0.0, f64::max);
    let n_scan = 4000;
    let mut best_x = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..=n_scan {
        let x = -bound + 2.0 * bound * i as f64 / n_scan as f64;
        let v = horner(plain, x);
        if v < best {
            best = v;
            best_x = x;
        }
    }
    // golden-section refine around the scan minimum
    let (mut a, mut b) = (best_x - 2.0 * bound / n_scan as f64, best_x + 2.0 * bound / n_scan as f64);
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if horner(plain, c) < horner(plain, d) {
            b = d;
        } else {
            a = c;
        }
    }
    horner(plain, 0.5 * (a + b)).min(best)
}

/// Empirical minimum of V against the exact pointwise bound.
pub fn lower_bound_probe(
    grid: &ModeGrid,
    system: &DiagonalSystem,
    spec: &InteractionSpec,
    ensemble: &PathEnsemble,
) -> Result<LowerBoundReport> {
    let coeffs = match &spec.kind {
        InteractionKind::Polynomial { coeffs } => coeffs.clone(),
        _ => {
            return Err(Error::InvalidParameter(
                "lower_bound_probe applies to the polynomial kind".into(),
            ))
        }
    };
    let ev = InteractionEvaluator::new(grid, system, spec)?;
    let plain = WickPolynomial::new(coeffs, ev.variance)?.plain_coeffs();
    let kernel_min = polynomial_min(&plain);
    let vgrid = ev.eval_grid(ensemble);
    let empirical_min = vgrid.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LowerBoundReport {
        empirical_min,
        exact_bound: spec.cutoff.g_l1(grid) * kernel_min.min(0.0),
        variance: ev.variance,
    })
}
