//! The β-periodic OS-positive Gaussian path space, realized concretely.
//!
//! Per real mode of frequency a the process has the β-periodic covariance
//! ½ r(|s-s'|) with r(s) = (e^{-sa} + e^{(s-β)a})/(1 - e^{-βa}), whose
//! Fourier coefficients are the Matsubara weights r_n = 2a/(a² + (2πn/β)²).
//! Sampling synthesizes truncated Matsubara series with independent complex
//! Gaussian coefficients; a dense eigen-factor sampler over the exact grid
//! covariance serves as a brute-force cross-oracle.

use crate::error::{Error, Result};
use crate::quasifree::euclid_cov_c;
use crate::rng::{gaussian, gaussian_pair};
use crate::spectral::{DiagonalSystem, TestVector};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::io::{Read, Write};

/// Default Matsubara truncation; the coefficient tail is O(1/n²) so the
/// covariance truncation error is O(1/N).
pub const DEFAULT_N_MATS: usize = 512;

/// Eigenvalue floor for the brute-force sampler: negative eigenvalues above
/// this magnitude abort (a covariance bug, not roundoff).
pub const PSD_FLOOR: f64 = 1e-10;

/// Uniform grid of n_t times s_i = iβ/n_t on the circle of length β.
/// n_t is even so that β/2 lies on the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub beta: f64,
    pub n_t: usize,
}

impl TimeGrid {
    pub fn new(beta: f64, n_t: usize) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be > 0")));
        }
        if n_t < 4 || n_t % 2 != 0 {
            return Err(Error::InvalidParameter(format!("n_t = {n_t} must be even and >= 4")));
        }
        Ok(TimeGrid { beta, n_t })
    }

    pub fn dt(&self) -> f64 {
        self.beta / self.n_t as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|i| i as f64 * self.dt()).collect()
    }

    /// Reduce a (possibly negative) grid index onto 0..n_t.
    pub fn wrap(&self, i: i64) -> usize {
        (i.rem_euclid(self.n_t as i64)) as usize
    }
}

/// Matsubara coefficients r_n = 2a/(a² + (2πn/β)²) for n = 0..=n_max
/// (the full family is even in n).
pub fn matsubara_coefficients(a: f64, beta: f64, n_max: usize) -> Vec<f64> {
    (0..=n_max)
        .map(|n| {
            let w = 2.0 * std::f64::consts::PI * n as f64 / beta;
            2.0 * a / (a * a + w * w)
        })
        .collect()
}

/// β-periodic covariance r(s) = (e^{-sa} + e^{(s-β)a})/(1 - e^{-βa}),
/// evaluated with s reduced mod β; r(s) = r(-s) = r(β-s) >= 0.
pub fn periodic_cov(s: f64, a: f64, beta: f64) -> f64 {
    let s = s.rem_euclid(beta);
    ((-s * a).exp() + ((s - beta) * a).exp()) / (1.0 - (-beta * a).exp())
}

/// Seeded samples of the β-periodic Gaussian field, stored sample-major as
/// [sample][time][mode].
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub n_samples: usize,
    pub grid: TimeGrid,
    pub d: usize,
    pub seed: u64,
    pub data: Vec<f64>,
}

impl PathEnsemble {
    #[inline]
    pub fn value(&self, sample: usize, time: usize, mode: usize) -> f64 {
        self.data[(sample * self.grid.n_t + time) * self.d + mode]
    }

    /// All mode values at (sample, time).
    #[inline]
    pub fn slice(&self, sample: usize, time: usize) -> &[f64] {
        let base = (sample * self.grid.n_t + time) * self.d;
        &self.data[base..base + self.d]
    }

    /// Sample mean of φ(time, mode).
    pub fn mean(&self, time: usize, mode: usize) -> f64 {
        (0..self.n_samples).map(|i| self.value(i, time, mode)).sum::<f64>() / self.n_samples as f64
    }

    /// Empirical second moment E[φ(t1,mode) φ(t2,mode)] with its standard
    /// error (the process mean is 0 in law).
    pub fn raw_cov(&self, t1: usize, t2: usize, mode: usize) -> (f64, f64) {
        let n = self.n_samples as f64;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for i in 0..self.n_samples {
            let p = self.value(i, t1, mode) * self.value(i, t2, mode);
            s1 += p;
            s2 += p * p;
        }
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Spectral synthesis of the ensemble: per mode j,
/// φ_j(s) = Σ_{|n|<=N} c_{j,n} e^{iω_n s} with independent complex Gaussians
/// of E|c_n|² = r_n(a_j)/(2β) and c_{-n} = conj(c_n). Coefficients are
/// addressed by counter (seed, sample, mode, n), so shard layout never
/// changes the values.
pub fn sample_paths(
    system: &DiagonalSystem,
    grid: &TimeGrid,
    n_samples: usize,
    seed: u64,
    n_mats: usize,
) -> Result<PathEnsemble> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    let d = system.dim();
    let n_t = grid.n_t;
    let beta = grid.beta;
    // Per-mode amplitude tables sigma[j][n].
    let sigmas: Vec<Vec<f64>> = system
        .frequencies()
        .iter()
        .map(|&a| {
            let r = matsubara_coefficients(a, beta, n_mats);
            (0..=n_mats)
                .map(|n| {
                    if n == 0 {
                        (r[0] / (2.0 * beta)).sqrt()
                    } else {
                        (r[n] / (4.0 * beta)).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    // DFT table e^{2πi m l / n_t}.
    let tau = std::f64::consts::TAU;
    let dft: Vec<Complex64> = (0..n_t * n_t)
        .map(|idx| {
            let (m, l) = (idx / n_t, idx % n_t);
            Complex64::from_polar(1.0, tau * ((m * l) % n_t) as f64 / n_t as f64)
        })
        .collect();

    let mut data = vec![0.0f64; n_samples * n_t * d];
    data.par_chunks_mut(n_t * d).enumerate().for_each(|(i, chunk)| {
        let mut bins = vec![Complex64::new(0.0, 0.0); n_t];
        for (j, sig) in sigmas.iter().enumerate() {
            for b in bins.iter_mut() {
                *b = Complex64::new(0.0, 0.0);
            }
            bins[0] += Complex64::new(sig[0] * gaussian(seed, i as u64, j as u64, 0), 0.0);
            for n in 1..=n_mats {
                let (g1, g2) = gaussian_pair(seed, i as u64, j as u64, n as u64);
                let c = Complex64::new(sig[n] * g1, sig[n] * g2);
                let m = n % n_t;
                bins[m] += c;
                bins[(n_t - m) % n_t] += c.conj();
            }
            for l in 0..n_t {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, b) in bins.iter().enumerate() {
                    acc += b * dft[m * n_t + l];
                }
                chunk[l * d + j] = acc.re;
            }
        }
    });
    Ok(PathEnsemble { n_samples, grid: *grid, d, seed, data })
}

/// Outcome of factoring a covariance for the brute-force sampler.
#[derive(Clone, Copy, Debug)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub clipped: usize,
}

fn psd_factor(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, PsdReport)> {
    let n = cov.nrows();
    let eig = cov.clone().symmetric_eigen();
    let mut min_ev = f64::INFINITY;
    let mut clipped = 0usize;
    let mut factor = eig.eigenvectors.clone();
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        min_ev = min_ev.min(ev);
        if ev < -PSD_FLOOR {
            return Err(Error::NotPositiveSemidefinite(ev));
        }
        let lam = if ev < 0.0 {
            clipped += 1;
            0.0
        } else {
            ev
        };
        let s = lam.sqrt();
        for r in 0..n {
            factor[(r, k)] *= s;
        }
    }
    Ok((factor, PsdReport { min_eigenvalue: min_ev, clipped }))
}

/// Exact joint Gaussian samples for an arbitrary PSD covariance matrix;
/// eigenvalues in [-1e-10, 0) are clipped to 0 and reported, anything more
/// negative aborts. Row i of the result is one sample.
pub fn cholesky_oracle_sample(
    cov: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
    stream_tag: u64,
) -> Result<(Vec<Vec<f64>>, PsdReport)> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    let n = cov.nrows();
    let (factor, report) = psd_factor(cov)?;
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let g: Vec<f64> =
                (0..n).map(|k| gaussian(seed, i as u64, stream_tag, k as u64)).collect();
            (0..n)
                .map(|r| (0..n).map(|k| factor[(r, k)] * g[k]).sum::<f64>())
                .collect()
        })
        .collect();
    Ok((samples, report))
}

/// Exact grid covariance of one mode: C_ij = ½ r_a(|s_i - s_j|).
pub fn mode_grid_covariance(a: f64, grid: &TimeGrid) -> DMatrix<f64> {
    let times = grid.times();
    DMatrix::from_fn(grid.n_t, grid.n_t, |i, j| {
        0.5 * periodic_cov(times[i] - times[j], a, grid.beta)
    })
}

/// Brute-force ensemble over the exact per-mode grid covariances; the
/// cross-oracle companion to `sample_paths`.
pub fn cholesky_ensemble(
    system: &DiagonalSystem,
    grid: &TimeGrid,
    n_samples: usize,
    seed: u64,
) -> Result<(PathEnsemble, Vec<PsdReport>)> {
    let d = system.dim();
    let n_t = grid.n_t;
    let mut factors = Vec::with_capacity(d);
    let mut reports = Vec::with_capacity(d);
    for &a in system.frequencies() {
        let (f, rep) = psd_factor(&mode_grid_covariance(a, grid))?;
        factors.push(f);
        reports.push(rep);
    }
    let mut data = vec![0.0f64; n_samples * n_t * d];
    data.par_chunks_mut(n_t * d).enumerate().for_each(|(i, chunk)| {
        for (j, f) in factors.iter().enumerate() {
            for l in 0..n_t {
                let mut acc = 0.0;
                for k in 0..n_t {
                    acc += f[(l, k)] * gaussian(seed, i as u64, j as u64, k as u64);
                }
                chunk[l * d + j] = acc;
            }
        }
    });
    Ok((PathEnsemble { n_samples, grid: *grid, d, seed, data }, reports))
}

/// Time reflection R: s_i -> -s_i mod β, as an exact index remap.
pub fn reflect(ensemble: &PathEnsemble) -> PathEnsemble {
    let n_t = ensemble.grid.n_t;
    let d = ensemble.d;
    let mut out = ensemble.clone();
    for i in 0..ensemble.n_samples {
        for l in 0..n_t {
            let src = (n_t - l) % n_t;
            for j in 0..d {
                out.data[(i * n_t + l) * d + j] = ensemble.value(i, src, j);
            }
        }
    }
    out
}

/// Time translation U(kΔs): the translated path reads φ'(s_i) = φ(s_{i+k}).
pub fn translate(ensemble: &PathEnsemble, k: i64) -> PathEnsemble {
    let n_t = ensemble.grid.n_t;
    let d = ensemble.d;
    let mut out = ensemble.clone();
    for i in 0..ensemble.n_samples {
        for l in 0..n_t {
            let src = ensemble.grid.wrap(l as i64 + k);
            for j in 0..d {
                out.data[(i * n_t + l) * d + j] = ensemble.value(i, src, j);
            }
        }
    }
    out
}

/// One exponential functional e^{iα φ(s, x)} of the field.
#[derive(Clone, Debug)]
pub struct ExpFunctional {
    pub s: f64,
    pub x: TestVector,
    pub alpha: f64,
}

/// Closed-form OS-positivity Gram matrix M_kl = E[(R F_k)* F_l] for the
/// exponential functionals of a family supported in [0, β/2]; returns its
/// minimal eigenvalue (expected >= -1e-10).
pub fn os_positivity_check(system: &DiagonalSystem, family: &[ExpFunctional]) -> Result<f64> {
    let beta = system.beta();
    for f in family {
        if f.s < -1e-12 || f.s > beta / 2.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "functional time {} outside [0, beta/2]",
                f.s
            )));
        }
        system.check_kappa_real(&f.x, 1e-10)?;
    }
    let n = family.len();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            let fk = &family[k];
            let fl = &family[l];
            let ckk = euclid_cov_c(system, 0.0, &fk.x, &fk.x)?;
            let cll = euclid_cov_c(system, 0.0, &fl.x, &fl.x)?;
            let ckl = euclid_cov_c(system, fk.s + fl.s, &fk.x, &fl.x)?;
            let q = fk.alpha * fk.alpha * ckk + fl.alpha * fl.alpha * cll
                - 2.0 * fk.alpha * fl.alpha * ckl;
            gram[(k, l)] = (-0.5 * q).exp();
        }
    }
    Ok(gram.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Minimal eigenvalue of the positive-type Gram [(x_i, r(s_j - s_i) x_j)].
pub fn gram_positivity_check(
    system: &DiagonalSystem,
    times: &[f64],
    vectors: &[TestVector],
) -> Result<f64> {
    if times.len() != vectors.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: vectors.len() });
    }
    for v in vectors {
        system.check_dim(v)?;
    }
    let n = times.len();
    let beta = system.beta();
    let freqs = system.frequencies();
    let gram = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, &a) in freqs.iter().enumerate() {
            acc += vectors[i].coeffs[m].conj()
                * vectors[j].coeffs[m]
                * periodic_cov(times[j] - times[i], a, beta);
        }
        acc
    });
    let eig = gram.symmetric_eigen();
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Markov residual of a scalar covariance c on the circle:
/// |c(s - s') - v_s Σ_BB^{-1} v_{s'}| where the boundary is {0, β/2},
/// s in (0, β/2), s' in (-β/2, 0). Zero exactly for c = ½r.
pub fn markov_residual_with_cov(c: impl Fn(f64) -> f64, beta: f64, s: f64, s_neg: f64) -> f64 {
    let half = beta / 2.0;
    let c0 = c(0.0);
    let ch = c(half);
    let vs = [c(s), c(half - s)];
    let vn = [c(-s_neg), c(half - s_neg)];
    let det = c0 * c0 - ch * ch;
    // Sigma_BB^{-1} applied to vn.
    let w = [(c0 * vn[0] - ch * vn[1]) / det, (c0 * vn[1] - ch * vn[0]) / det];
    let projected = vs[0] * w[0] + vs[1] * w[1];
    (c(s - s_neg) - projected).abs()
}

/// Per-mode Markov residuals of a system; all entries are expected at
/// rounding level (Gaussian conditioning on the two-point boundary
/// σ-algebra {0, β/2} reproduces every cross-arc covariance).
pub fn markov_residual(system: &DiagonalSystem, s: f64, s_neg: f64) -> Result<Vec<f64>> {
    let beta = system.beta();
    if !(s > 0.0 && s < beta / 2.0) || !(s_neg > -beta / 2.0 && s_neg < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need s in (0, beta/2) and s' in (-beta/2, 0), got ({s}, {s_neg})"
        )));
    }
    Ok(system
        .frequencies()
        .iter()
        .map(|&a| markov_residual_with_cov(|u| 0.5 * periodic_cov(u, a, beta), beta, s, s_neg))
        .collect())
}

const MAGIC: &[u8; 4] = b"TFPE";
const VERSION: u32 = 1;

/// Persist an ensemble: header (magic "TFPE", version, n_samples, n_t, d,
/// beta, seed) followed by row-major f64 samples, all little-endian.
pub fn write_ensemble<W: Write>(w: &mut W, e: &PathEnsemble) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(e.n_samples as u64).to_le_bytes())?;
    w.write_all(&(e.grid.n_t as u32).to_le_bytes())?;
    w.write_all(&(e.d as u32).to_le_bytes())?;
    w.write_all(&e.grid.beta.to_le_bytes())?;
    w.write_all(&e.seed.to_le_bytes())?;
    for v in &e.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_ensemble<R: Read>(r: &mut R) -> Result<PathEnsemble> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::MalformedFile("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::MalformedFile(format!("unsupported version {version}")));
    }
    r.read_exact(&mut b8)?;
    let n_samples = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b4)?;
    let n_t = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let beta = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let grid = TimeGrid::new(beta, n_t)?;
    let mut data = vec![0.0f64; n_samples * n_t * d];
    for v in data.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok(PathEnsemble { n_samples, grid, d, seed, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_neutral, ModeGrid};
    use approx::assert_relative_eq;

    fn ou_system(a: f64, beta: f64) -> DiagonalSystem {
        DiagonalSystem::from_frequencies(vec![a], beta).unwrap()
    }

    #[test]
    fn matsubara_values_and_resummation() {
        let r = matsubara_coefficients(2.0, 1.0, 4);
        assert_relative_eq!(r[0], 1.0); // 2/a at a = 2
        let r = matsubara_coefficients(1.0, std::f64::consts::TAU, 1);
        assert_relative_eq!(r[1], 1.0); // 2/(1+1) at beta = 2π
        assert!(r.iter().all(|&x| x > 0.0));
        // partial sums (1/beta) Σ_{|n|<=N} r_n approach r(0) with O(1/N) tail.
        let (a, beta) = (1.3, 0.9);
        let r0 = periodic_cov(0.0, a, beta);
        let mut last_err = f64::INFINITY;
        for &n_max in &[64usize, 128, 256, 512] {
            let r = matsubara_coefficients(a, beta, n_max);
            let sum = (r[0] + 2.0 * r[1..].iter().sum::<f64>()) / beta;
            let err = (sum - r0).abs();
            assert!(err < last_err, "tail must shrink");
            last_err = err;
            // O(1/N): err * N stays bounded by ~2a/pi^2 * beta-ish constant.
            assert!(err * n_max as f64 <= 1.0, "err {err} at N {n_max}");
        }
        // Fourier consistency pointwise at s = 0.3.
        let s = 0.3;
        let r = matsubara_coefficients(a, beta, 4096);
        let tau = std::f64::consts::TAU;
        let sum = (r[0]
            + 2.0 * (1..=4096).map(|n| r[n] * (tau * n as f64 * s / beta).cos()).sum::<f64>())
            / beta;
        assert_relative_eq!(sum, periodic_cov(s, a, beta), epsilon = 1e-4);
    }

    #[test]
    fn periodic_cov_values_and_symmetry() {
        assert_relative_eq!(periodic_cov(0.0, 1.0, 1.0), 2.163953413738653, epsilon = 1e-13);
        for &(a, beta, s) in &[(1.0, 1.0, 0.25), (2.5, 0.7, 0.1), (0.8, 6.0, 2.0)] {
            assert_relative_eq!(
                periodic_cov(s, a, beta),
                periodic_cov(-s, a, beta),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                periodic_cov(s, a, beta),
                periodic_cov(beta - s, a, beta),
                epsilon = 1e-12
            );
            assert!(periodic_cov(s, a, beta) >= 0.0);
        }
    }

    #[test]
    fn sampler_matches_periodic_cov_oracle() {
        let sys = ou_system(1.0, 1.0);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let n = 100_000;
        let e = sample_paths(&sys, &grid, n, 42, DEFAULT_N_MATS).unwrap();
        // mean ~ 0 within 5 SE.
        let m = e.mean(0, 0);
        let sd = (0.5 * periodic_cov(0.0, 1.0, 1.0) / n as f64).sqrt();
        assert!(m.abs() < 5.0 * sd, "mean {m}");
        // Var(phi(0)) vs ½ r(0) and Cov(phi(0), phi(beta/2)) vs ½ r(beta/2).
        let (v, se) = e.raw_cov(0, 0, 0);
        assert!((v - 0.5 * periodic_cov(0.0, 1.0, 1.0)).abs() < 5.0 * se, "var {v} ± {se}");
        let (c, se) = e.raw_cov(0, 4, 0);
        assert!(
            (c - 0.5 * periodic_cov(0.5, 1.0, 1.0)).abs() < 5.0 * se,
            "half-period cov {c} ± {se}"
        );
    }

    #[test]
    fn sampler_determinism_and_seed_sensitivity() {
        let sys = ou_system(1.3, 0.8);
        let grid = TimeGrid::new(0.8, 4).unwrap();
        let a = sample_paths(&sys, &grid, 50, 7, 64).unwrap();
        let b = sample_paths(&sys, &grid, 50, 7, 64).unwrap();
        assert_eq!(a.data, b.data); // bit-identical
        let c = sample_paths(&sys, &grid, 50, 8, 64).unwrap();
        assert_ne!(a.data, c.data);
        assert!(sample_paths(&sys, &grid, 0, 7, 64).is_err());
    }

    #[test]
    fn cholesky_oracle_basics() {
        // 1x1 covariance [v].
        let cov = DMatrix::from_element(1, 1, 0.7);
        let (samples, rep) = cholesky_oracle_sample(&cov, 60_000, 3, 0).unwrap();
        assert_eq!(rep.clipped, 0);
        let n = samples.len() as f64;
        let var = samples.iter().map(|s| s[0] * s[0]).sum::<f64>() / n;
        assert!((var - 0.7).abs() < 5.0 * 0.7 * (2.0 / n).sqrt(), "var {var}");
        // hard failure beyond the floor.
        let bad = DMatrix::from_element(1, 1, -1e-6);
        assert!(cholesky_oracle_sample(&bad, 10, 3, 0).is_err());
        // clipping at rounding scale is allowed and reported.
        let tiny = DMatrix::from_element(1, 1, -0.5e-10);
        let (_, rep) = cholesky_oracle_sample(&tiny, 10, 3, 0).unwrap();
        assert_eq!(rep.clipped, 1);
        assert!(rep.min_eigenvalue >= -PSD_FLOOR);
    }

    #[test]
    fn mode_grid_covariance_agrees_with_euclid_cov() {
        let g = ModeGrid::new(1.0, 1, 1.0).unwrap();
        let sys = build_neutral(&g, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 6).unwrap();
        for (j, &a) in sys.frequencies().iter().enumerate() {
            let cov = mode_grid_covariance(a, &grid);
            let mut ej = TestVector::zero(sys.dim());
            ej.coeffs[j] = 1.0.into();
            for (i1, &t1) in grid.times().iter().enumerate() {
                for (i2, &t2) in grid.times().iter().enumerate() {
                    let c = euclid_cov_c(&sys, (t1 - t2).abs(), &ej, &ej).unwrap();
                    assert_relative_eq!(cov[(i1, i2)], c, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn spectral_vs_cholesky_cross_oracle() {
        let sys = ou_system(1.7, 1.2);
        let grid = TimeGrid::new(1.2, 8).unwrap();
        let n = 60_000;
        let spec = sample_paths(&sys, &grid, n, 11, DEFAULT_N_MATS).unwrap();
        let (chol, reps) = cholesky_ensemble(&sys, &grid, n, 12).unwrap();
        assert!(reps[0].min_eigenvalue > -PSD_FLOOR);
        for t in 0..4 {
            let (a, sa) = spec.raw_cov(0, t, 0);
            let (b, sb) = chol.raw_cov(0, t, 0);
            let s = (sa * sa + sb * sb).sqrt();
            assert!((a - b).abs() < 5.0 * s, "lag {t}: {a} vs {b} ± {s}");
        }
    }

    #[test]
    fn reflect_translate_algebra() {
        let sys = ou_system(1.0, 1.0);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let e = sample_paths(&sys, &grid, 20, 5, 32).unwrap();
        // R² = 1 bit-exactly.
        let rr = reflect(&reflect(&e));
        assert_eq!(rr.data, e.data);
        // R U(k) = U(-k) R.
        for k in [1i64, 3, 5] {
            let lhs = reflect(&translate(&e, k));
            let rhs = translate(&reflect(&e), -k);
            assert_eq!(lhs.data, rhs.data);
        }
        // U(n_t) = identity (β-periodicity).
        let full = translate(&e, grid.n_t as i64);
        assert_eq!(full.data, e.data);
    }

    #[test]
    fn translation_stationarity() {
        let sys = ou_system(1.0, 1.0);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let e = sample_paths(&sys, &grid, 60_000, 99, 256).unwrap();
        let t = translate(&e, 3);
        let (a, sa) = e.raw_cov(0, 2, 0);
        let (b, sb) = t.raw_cov(0, 2, 0);
        assert!((a - b).abs() < 5.0 * (sa * sa + sb * sb).sqrt());
    }

    #[test]
    fn os_positivity_gram() {
        // single functional F = 1 (alpha = 0): M = [1].
        let sys = ou_system(1.0, 1.0);
        let f = ExpFunctional { s: 0.0, x: TestVector::from_real(&[0.0]), alpha: 0.0 };
        assert_relative_eq!(os_positivity_check(&sys, &[f]).unwrap(), 1.0);
        // random family over 3 modes.
        let g = ModeGrid::new(0.9, 1, 1.0).unwrap();
        let sys = build_neutral(&g, 1.4).unwrap();
        let fam: Vec<ExpFunctional> = (0..6)
            .map(|k| ExpFunctional {
                s: sys.beta() / 2.0 * (k as f64) / 6.0,
                x: TestVector::from_real(
                    &(0..sys.dim())
                        .map(|j| crate::rng::gaussian(50, k, j as u64, 0))
                        .collect::<Vec<_>>(),
                ),
                alpha: 0.5 + 0.1 * k as f64,
            })
            .collect();
        let min = os_positivity_check(&sys, &fam).unwrap();
        assert!(min >= -1e-10, "min eig {min}");
        // out-of-window time rejected.
        let bad = ExpFunctional {
            s: sys.beta() * 0.8,
            x: TestVector::from_real(&vec![0.1; sys.dim()]),
            alpha: 1.0,
        };
        assert!(os_positivity_check(&sys, &[bad]).is_err());
    }

    #[test]
    fn gram_positivity_examples() {
        let sys = ou_system(2.0, 1.5);
        let x = TestVector::from_real(&[0.7]);
        // n = 1: r(0) |x|² > 0.
        let min = gram_positivity_check(&sys, &[0.3], &[x.clone()]).unwrap();
        assert_relative_eq!(min, periodic_cov(0.0, 2.0, 1.5) * 0.49, epsilon = 1e-12);
        // constant x at times {0, beta/2}: PSD because r(0) >= r(beta/2).
        let min =
            gram_positivity_check(&sys, &[0.0, 0.75], &[x.clone(), x.clone()]).unwrap();
        let expected = 0.49 * (periodic_cov(0.0, 2.0, 1.5) - periodic_cov(0.75, 2.0, 1.5));
        assert_relative_eq!(min, expected, epsilon = 1e-12);
        assert!(min >= 0.0);
        // n = 8 random times/vectors across a frequency spread.
        let g = ModeGrid::new(2.2, 2, 1.0).unwrap();
        let sys = build_neutral(&g, 0.7).unwrap();
        let times: Vec<f64> =
            (0..8).map(|k| crate::rng::gaussian(60, k, 0, 0).abs() % 0.7).collect();
        let vecs: Vec<TestVector> = (0..8)
            .map(|k| {
                TestVector::from_real(
                    &(0..sys.dim())
                        .map(|j| crate::rng::gaussian(61, k, j as u64, 0))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        assert!(gram_positivity_check(&sys, &times, &vecs).unwrap() >= -1e-10);
    }

    #[test]
    fn markov_identity_and_negative_control() {
        let (a, beta) = (1.0, 2.0);
        let sys = ou_system(a, beta);
        // s' = -s at s = beta/4.
        let r = markov_residual(&sys, 0.5, -0.5).unwrap();
        assert!(r[0] <= 1e-10, "residual {}", r[0]);
        // several asymmetric choices.
        for &(s, sn) in &[(0.25, -0.75), (0.9, -0.1), (0.6, -0.35)] {
            let r = markov_residual(&sys, s, sn).unwrap();
            assert!(r[0] <= 1e-10, "({s},{sn}): {}", r[0]);
        }
        // boundary: residual -> 0 continuously as s -> 0+.
        let r_small = markov_residual(&sys, 1e-6, -0.5).unwrap();
        assert!(r_small[0] <= 1e-10);
        // non-Markov covariance r(s)² fails by a wide margin.
        let bad = markov_residual_with_cov(
            |u| {
                let c = 0.5 * periodic_cov(u, a, beta);
                c * c
            },
            beta,
            0.5,
            -0.5,
        );
        assert!(bad > 1e-3, "negative control {bad}");
        // domain validation.
        assert!(markov_residual(&sys, 1.2, -0.5).is_err());
    }

    #[test]
    fn ensemble_roundtrip() {
        let sys = ou_system(1.0, 1.0);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let e = sample_paths(&sys, &grid, 10, 123, 16).unwrap();
        let mut buf = Vec::new();
        write_ensemble(&mut buf, &e).unwrap();
        assert_eq!(&buf[..4], b"TFPE");
        let back = read_ensemble(&mut buf.as_slice()).unwrap();
        assert_eq!(back.data, e.data);
        assert_eq!(back.seed, e.seed);
        assert_eq!(back.grid, e.grid);
    }
}
