//! Finite-mode one-particle spaces for thermal scalar fields.
//!
//! A periodic momentum box replaces the continuum: modes live on the
//! symmetric grid k_j = j*Δk, j = -M..M, with relativistic dispersion
//! ε(k) = sqrt(k² + m²). Pairing (k, -k) into cosine/sine combinations
//! turns the momentum-reflection conjugation into plain componentwise
//! conjugation, so the neutral one-particle space is a list of strictly
//! positive frequencies and every thermal covariance is a finite mode sum.
//!
//! The charged field doubles the mode set with charges ±1 and frequencies
//! a = ε ∓ μ; |μ| < m keeps every frequency positive (no condensation).

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Symmetric momentum grid of a periodic box.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeGrid {
    /// Mode spacing Δk > 0.
    pub delta_k: f64,
    /// Modes run over j = -M..=M.
    pub half_count: usize,
    /// Mass m > 0.
    pub mass: f64,
}

impl ModeGrid {
    pub fn new(delta_k: f64, half_count: usize, mass: f64) -> Result<Self> {
        if !(delta_k > 0.0) {
            return Err(Error::InvalidParameter(format!("delta_k = {delta_k} must be > 0")));
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass = {mass} must be > 0")));
        }
        Ok(ModeGrid { delta_k, half_count, mass })
    }

    /// Box length ℓ = 2π/Δk.
    pub fn box_length(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.delta_k
    }

    /// Number of momentum modes 2M+1.
    pub fn n_modes(&self) -> usize {
        2 * self.half_count + 1
    }

    /// Momenta k_j = j Δk for j = -M..=M, ascending.
    pub fn momenta(&self) -> Vec<f64> {
        let m = self.half_count as i64;
        (-m..=m).map(|j| j as f64 * self.delta_k).collect()
    }

    /// Nonnegative momenta 0, Δk, ..., MΔk (one per paired real mode).
    pub fn momenta_nonneg(&self) -> Vec<f64> {
        (0..=self.half_count).map(|j| j as f64 * self.delta_k).collect()
    }

    /// Real-space lattice sharing the box: x_l = l Δx, l = -M..=M,
    /// Δx = ℓ/(2M+1). Momentum sums and position sums are then dual under
    /// the convention ĥ(p) = Σ_x h(x) e^{-ipx} Δx.
    pub fn lattice_points(&self) -> Vec<f64> {
        let n = self.n_modes() as i64;
        let dx = self.box_length() / n as f64;
        let m = self.half_count as i64;
        (-m..=m).map(|l| l as f64 * dx).collect()
    }

    pub fn lattice_spacing(&self) -> f64 {
        self.box_length() / self.n_modes() as f64
    }
}

/// Relativistic dispersion ε(k) = sqrt(k² + m²) on the grid, ascending in k.
pub fn dispersion(grid: &ModeGrid) -> Vec<f64> {
    grid.momenta().iter().map(|&k| (k * k + grid.mass * grid.mass).sqrt()).collect()
}

/// Which field the system describes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sector {
    Neutral,
    /// Charged doubling at chemical potential μ; sector signs live in
    /// `DiagonalSystem::charges`.
    Charged { mu: f64 },
}

/// A finite-mode one-particle space in diagonal form: strictly positive
/// frequencies, an inverse temperature, and (for the charged field) per-mode
/// charge signs. The conjugation κ acts componentwise for the neutral field
/// and as block swap + conjugation for the charged one.
#[derive(Clone, Debug)]
pub struct DiagonalSystem {
    frequencies: Vec<f64>,
    beta: f64,
    sector: Sector,
    charges: Vec<i8>,
}

impl DiagonalSystem {
    /// Directly wrap a list of frequencies (neutral sector). Frequencies must
    /// be strictly positive.
    pub fn from_frequencies(frequencies: Vec<f64>, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be > 0")));
        }
        if frequencies.is_empty() || frequencies.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidParameter(
                "all frequencies must be strictly positive".into(),
            ));
        }
        Ok(DiagonalSystem { frequencies, beta, sector: Sector::Neutral, charges: Vec::new() })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn charges(&self) -> &[i8] {
        &self.charges
    }

    /// Number of (real) modes d.
    pub fn dim(&self) -> usize {
        self.frequencies.len()
    }

    /// Half dimension of the charged doubling (modes per charge sector).
    pub fn half_dim(&self) -> usize {
        match self.sector {
            Sector::Neutral => self.frequencies.len(),
            Sector::Charged { .. } => self.frequencies.len() / 2,
        }
    }

    /// κ acting on coefficient vectors: componentwise conjugation for the
    /// neutral field, block swap composed with conjugation for the charged
    /// one (κ = θc on X = h ⊕ h).
    pub fn kappa(&self, x: &TestVector) -> TestVector {
        let n = x.coeffs.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        match self.sector {
            Sector::Neutral => {
                for i in 0..n {
                    out[i] = x.coeffs[i].conj();
                }
            }
            Sector::Charged { .. } => {
                let h = n / 2;
                for i in 0..h {
                    out[i] = x.coeffs[h + i].conj();
                    out[h + i] = x.coeffs[i].conj();
                }
            }
        }
        TestVector { coeffs: out }
    }

    /// Max |κx - x| componentwise.
    pub fn kappa_defect(&self, x: &TestVector) -> f64 {
        let kx = self.kappa(x);
        kx.coeffs
            .iter()
            .zip(&x.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn check_kappa_real(&self, x: &TestVector, tol: f64) -> Result<()> {
        let d = self.kappa_defect(x);
        if d > tol {
            return Err(Error::NotKappaReal(d));
        }
        Ok(())
    }

    pub fn check_dim(&self, x: &TestVector) -> Result<()> {
        if x.coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.coeffs.len() });
        }
        Ok(())
    }
}

/// Per-mode Bose occupation and the thermal weight 1 + 2ρ.
#[derive(Clone, Debug)]
pub struct BoseFactors {
    /// ρ_j = 1/(e^{βa_j} - 1).
    pub rho: Vec<f64>,
    /// 1 + 2ρ_j = (1 + e^{-βa_j})/(1 - e^{-βa_j}).
    pub one_plus_two_rho: Vec<f64>,
}

/// Bose factors of a system; underflows cleanly to ρ = 0 for large βa.
pub fn bose_factor(system: &DiagonalSystem) -> BoseFactors {
    let beta = system.beta();
    let mut rho = Vec::with_capacity(system.dim());
    let mut w = Vec::with_capacity(system.dim());
    for &a in system.frequencies() {
        let e = (-beta * a).exp();
        rho.push(e / (1.0 - e));
        w.push((1.0 + e) / (1.0 - e));
    }
    BoseFactors { rho, one_plus_two_rho: w }
}

/// Neutral one-particle space on a momentum grid: (k, -k) pairs are combined
/// into cosine/sine real modes, so the frequency list is
/// [ε(0), ε(Δk), ε(Δk), ε(2Δk), ε(2Δk), ...] with d = 2M+1 entries.
pub fn build_neutral(grid: &ModeGrid, beta: f64) -> Result<DiagonalSystem> {
    let mut freqs = Vec::with_capacity(grid.n_modes());
    for (j, &k) in grid.momenta_nonneg().iter().enumerate() {
        let eps = (k * k + grid.mass * grid.mass).sqrt();
        freqs.push(eps);
        if j > 0 {
            freqs.push(eps);
        }
    }
    DiagonalSystem::from_frequencies(freqs, beta)
}

/// Charged one-particle space: the doubled mode set with a = ε ∓ μ and
/// charges ±1. Rejects |μ| >= m (the condensation threshold).
pub fn build_charged(grid: &ModeGrid, beta: f64, mu: f64) -> Result<DiagonalSystem> {
    if mu.abs() >= grid.mass {
        return Err(Error::CondensationThreshold { mu, mass: grid.mass });
    }
    let neutral = build_neutral(grid, beta)?;
    let half = neutral.frequencies().to_vec();
    let mut freqs = Vec::with_capacity(2 * half.len());
    let mut charges = Vec::with_capacity(2 * half.len());
    for &eps in &half {
        freqs.push(eps - mu);
        charges.push(1i8);
    }
    for &eps in &half {
        freqs.push(eps + mu);
        charges.push(-1i8);
    }
    Ok(DiagonalSystem { frequencies: freqs, beta, sector: Sector::Charged { mu }, charges })
}

/// Complex coefficient vector over the (real-mode) diagonal basis of a
/// `DiagonalSystem`. For the charged field the two charge blocks are stacked:
/// x = (x⁺, x⁻).
#[derive(Clone, Debug, PartialEq)]
pub struct TestVector {
    pub coeffs: Vec<Complex64>,
}

impl TestVector {
    pub fn zero(dim: usize) -> Self {
        TestVector { coeffs: vec![Complex64::new(0.0, 0.0); dim] }
    }

    pub fn from_real(v: &[f64]) -> Self {
        TestVector { coeffs: v.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }

    pub fn from_complex(v: Vec<Complex64>) -> Self {
        TestVector { coeffs: v }
    }

    /// Doubled charged vector (u, conj u) — the κ-real embedding of u.
    pub fn charged_from_half(u: &[Complex64]) -> Self {
        let mut coeffs = Vec::with_capacity(2 * u.len());
        coeffs.extend_from_slice(u);
        coeffs.extend(u.iter().map(|z| z.conj()));
        TestVector { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|z| z.norm_sqr() == 0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        TestVector { coeffs: self.coeffs.iter().map(|z| z * c).collect() }
    }

    /// Plain inner product (x, y) = Σ conj(x_j) y_j.
    pub fn inner(&self, other: &TestVector) -> Complex64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Weighted inner product (x, W y) = Σ conj(x_j) w_j y_j.
    pub fn weighted_inner(&self, weights: &[f64], other: &TestVector) -> Complex64 {
        self.coeffs
            .iter()
            .zip(weights)
            .zip(&other.coeffs)
            .map(|((a, &w), b)| a.conj() * w * b)
            .sum()
    }
}

/// Rotates a momentum-space function h(k_j), j = -M..=M, into the real-mode
/// coordinates of `build_neutral`: x_0 = √Δk h(0) and, for each k > 0,
/// x_cos = √(2Δk) Re h(k), x_sin = √(2Δk) Im h(k) when h is κ-real
/// (conj(h(-k)) = h(k)); the general linear formulas are used below so the
/// map is defined for every h.
pub fn momentum_to_real_modes(grid: &ModeGrid, h: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = grid.n_modes();
    if h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.len() });
    }
    let m = grid.half_count;
    let dk = grid.delta_k;
    let mut out = Vec::with_capacity(n);
    // h index of momentum j Δk is j + M.
    out.push(h[m] * dk.sqrt());
    let half = (dk / 2.0).sqrt();
    let i = Complex64::new(0.0, 1.0);
    for j in 1..=m {
        let hp = h[m + j];
        let hm = h[m - j];
        out.push((hp + hm) * half); // cosine mode
        out.push(-i * (hp - hm) * half); // sine mode
    }
    Ok(out)
}

/// Time-zero Klein-Gordon embedding of a spatial test function.
///
/// Takes u by real-space lattice samples, forms û(k) = Σ_x u(x) e^{-ikx} Δx
/// and returns the κ-real vector with momentum profile
/// (√2·2π)^{-1} ε(k)^{-1/2} û(k); the charged variant stacks (h, conj h).
pub fn kg_time_zero_embedding(
    grid: &ModeGrid,
    system: &DiagonalSystem,
    u_samples: &[f64],
) -> Result<TestVector> {
    let lattice = grid.lattice_points();
    if u_samples.len() != lattice.len() {
        return Err(Error::DimensionMismatch { expected: lattice.len(), got: u_samples.len() });
    }
    let dx = grid.lattice_spacing();
    let norm = 1.0 / (std::f64::consts::TAU * 2.0f64.sqrt());
    let eps = dispersion(grid);
    let h: Vec<Complex64> = grid
        .momenta()
        .iter()
        .zip(&eps)
        .map(|(&k, &e)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, &uv) in lattice.iter().zip(u_samples) {
                acc += Complex64::from_polar(uv * dx, -k * x);
            }
            acc * norm / e.sqrt()
        })
        .collect();
    let real_modes = momentum_to_real_modes(grid, &h)?;
    let v = match system.sector() {
        Sector::Neutral => TestVector::from_complex(real_modes),
        Sector::Charged { .. } => {
            let mut coeffs = Vec::with_capacity(2 * real_modes.len());
            coeffs.extend(real_modes.iter().cloned());
            coeffs.extend(real_modes.iter().map(|z| z.conj()));
            TestVector::from_complex(coeffs)
        }
    };
    system.check_dim(&v)?;
    Ok(v)
}

/// Split the Bose factors of a charged system into the ± sectors
/// (ρ± = (e^{β(ε∓μ)} - 1)^{-1}, indexed by the half-space modes).
pub fn charged_rho_pm(system: &DiagonalSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    match system.sector() {
        Sector::Charged { .. } => {
            let b = bose_factor(system);
            let h = system.half_dim();
            Ok((b.rho[..h].to_vec(), b.rho[h..].to_vec()))
        }
        Sector::Neutral => Err(Error::InvalidParameter("expected a charged system".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dispersion_values() {
        // (k=0, m=1) -> 1 and the 3-4-5 triple.
        let g = ModeGrid::new(3.0, 1, 4.0).unwrap();
        let eps = dispersion(&g);
        assert_relative_eq!(eps[1], 4.0);
        assert_relative_eq!(eps[0], 5.0);
        assert_relative_eq!(eps[2], 5.0);
        let g = ModeGrid::new(1.0, 1, 1.0).unwrap();
        let eps = dispersion(&g);
        assert_relative_eq!(eps[2], 1.4142135623730951, epsilon = 1e-15);
        assert!(eps.iter().all(|&e| e >= 1.0));
    }

    #[test]
    fn bose_factor_values() {
        // e^{ln 2} - 1 = 1 -> rho = 1.
        let s = DiagonalSystem::from_frequencies(vec![2.0f64.ln()], 1.0).unwrap();
        let b = bose_factor(&s);
        assert_relative_eq!(b.rho[0], 1.0, epsilon = 1e-14);
        // beta a = 1 -> 1/(e-1).
        let s = DiagonalSystem::from_frequencies(vec![1.0], 1.0).unwrap();
        let b = bose_factor(&s);
        assert_relative_eq!(b.rho[0], 0.5819767068693265, epsilon = 1e-14);
        // vacuum limit: no NaN, clean underflow to 0.
        let s = DiagonalSystem::from_frequencies(vec![2000.0], 1.0).unwrap();
        let b = bose_factor(&s);
        assert_eq!(b.rho[0], 0.0);
        assert_eq!(b.one_plus_two_rho[0], 1.0);
    }

    #[test]
    fn coth_identity() {
        // 1 + 2rho = coth(beta a / 2) for a spread of parameters.
        for &(a, beta) in &[(0.5, 0.7), (1.0, 1.0), (3.0, 2.0), (10.0, 0.3)] {
            let s = DiagonalSystem::from_frequencies(vec![a], beta).unwrap();
            let b = bose_factor(&s);
            let coth = 1.0 / (beta * a / 2.0).tanh();
            assert_relative_eq!(b.one_plus_two_rho[0], coth, epsilon = 1e-12);
        }
    }

    #[test]
    fn neutral_frequencies_and_count() {
        let g = ModeGrid::new(1.0, 1, 1.0).unwrap();
        let s = build_neutral(&g, 1.0).unwrap();
        assert_eq!(s.dim(), 3);
        assert_relative_eq!(s.frequencies()[0], 1.0);
        assert_relative_eq!(s.frequencies()[1], 2.0f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(s.frequencies()[2], 2.0f64.sqrt(), epsilon = 1e-15);
        // M = 0 -> single mode at a = m.
        let g = ModeGrid::new(1.0, 0, 1.7).unwrap();
        let s = build_neutral(&g, 1.0).unwrap();
        assert_eq!(s.dim(), 1);
        assert_relative_eq!(s.frequencies()[0], 1.7);
        for half in 0..5usize {
            let g = ModeGrid::new(0.5, half, 1.0).unwrap();
            assert_eq!(build_neutral(&g, 1.0).unwrap().dim(), 2 * half + 1);
        }
    }

    #[test]
    fn charged_sectors() {
        let g = ModeGrid::new(1.0, 0, 1.0).unwrap();
        let s = build_charged(&g, 1.0, 0.5).unwrap();
        let (rp, rm) = charged_rho_pm(&s).unwrap();
        assert_relative_eq!(rp[0], 1.5414940825367982, epsilon = 1e-13);
        assert_relative_eq!(rm[0], 0.2872169167888683, epsilon = 1e-13);
        // mu = 0: sectors coincide.
        let s = build_charged(&g, 1.0, 0.0).unwrap();
        let (rp, rm) = charged_rho_pm(&s).unwrap();
        assert_eq!(rp, rm);
        // boundary rejection.
        assert!(build_charged(&g, 1.0, 1.0).is_err());
        assert!(build_charged(&g, 1.0, -1.0).is_err());
    }

    #[test]
    fn kappa_is_involution_and_detects_reality() {
        let g = ModeGrid::new(1.0, 1, 1.0).unwrap();
        let s = build_neutral(&g, 1.0).unwrap();
        let x = TestVector::from_complex(vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.25, 0.0),
            Complex64::new(0.0, -2.0),
        ]);
        let kkx = s.kappa(&s.kappa(&x));
        assert_eq!(kkx, x); // bit-exact double conjugation
        assert!(s.check_kappa_real(&x, 1e-12).is_err());
        let r = TestVector::from_real(&[0.3, -1.0, 2.0]);
        assert!(s.check_kappa_real(&r, 0.0).is_ok());

        let sc = build_charged(&g, 1.0, 0.2).unwrap();
        let u = vec![Complex64::new(0.4, -0.3); 3];
        let xc = TestVector::charged_from_half(&u);
        assert!(sc.check_kappa_real(&xc, 0.0).is_ok());
        let kkxc = sc.kappa(&sc.kappa(&xc));
        assert_eq!(kkxc, xc);
    }

    #[test]
    fn kg_embedding_examples() {
        let g = ModeGrid::new(1.0, 0, 1.0).unwrap();
        let s = build_neutral(&g, 1.0).unwrap();
        // u = 0 -> zero vector.
        let v = kg_time_zero_embedding(&g, &s, &[0.0]).unwrap();
        assert!(v.is_zero());
        // Single lattice site with weight 1/dx gives û ≡ 1; at k=0, m=1 the
        // coefficient is (√2·2π)^{-1} (times √Δk = 1 here).
        let dx = g.lattice_spacing();
        let v = kg_time_zero_embedding(&g, &s, &[1.0 / dx]).unwrap();
        assert_relative_eq!(v.coeffs[0].re, 0.11253953951963826, epsilon = 1e-14);
        assert_relative_eq!(v.coeffs[0].im, 0.0);
    }

    #[test]
    fn kg_embedding_is_kappa_real_for_real_u() {
        let g = ModeGrid::new(0.7, 3, 1.3).unwrap();
        let s = build_neutral(&g, 2.0).unwrap();
        let u: Vec<f64> = (0..g.n_modes()).map(|i| ((i as f64) * 0.77).sin()).collect();
        let v = kg_time_zero_embedding(&g, &s, &u).unwrap();
        assert!(s.kappa_defect(&v) < 1e-14);
        let sc = build_charged(&g, 2.0, 0.4).unwrap();
        let vc = kg_time_zero_embedding(&g, &sc, &u).unwrap();
        assert!(sc.kappa_defect(&vc) < 1e-14);
    }

    #[test]
    fn charged_mu_zero_sector_swap_invariance() {
        // Swapping the ± sectors of a mu = 0 system leaves frequencies fixed.
        let g = ModeGrid::new(0.9, 2, 1.1).unwrap();
        let s = build_charged(&g, 1.3, 0.0).unwrap();
        let h = s.half_dim();
        let f = s.frequencies();
        for i in 0..h {
            assert_eq!(f[i], f[h + i]);
        }
    }
}
