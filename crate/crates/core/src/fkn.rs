//! Feynman-Kac-Nelson kernels and the perturbed measure.
//!
//! The kernel over [a,b] (grid endpoints) is F_{[a,b]} = e^{-T_{[a,b]}} with
//! the β-periodic trapezoid sum T_{[a,b]} = Δt(½V_a + V_{a+1} + ... + ½V_b).
//! Cell contributions are quantized to even multiples of 2^-40 and summed in
//! i64, so interval additivity, shift covariance and reflection covariance
//! are integer-exact identities, not float approximations. The perturbed
//! measure dμ_V ∝ F_{[-β/2,β/2]} dμ is realized by importance weights over
//! the free ensemble with jackknife error bars and ESS monitoring.

use crate::error::{Error, Result};
use crate::interactions::InteractionEvaluator;
use crate::pathspace::PathEnsemble;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

/// Fixed-point scale of the quantized log-weights.
pub const LOG_SCALE: f64 = 1_099_511_627_776.0; // 2^40

/// Default effective-sample-size floor below which estimates carry a warning.
pub const ESS_FLOOR: f64 = 50.0;

/// Per-(sample, time) interaction values: `cells` carries the quantized
/// trapezoid increments Δt·V (even i64 in 2^-40 units), `raw` the plain V.
#[derive(Clone, Debug)]
pub struct VGrid {
    pub n_samples: usize,
    pub n_t: usize,
    pub dt: f64,
    pub cells: Vec<i64>,
    pub raw: Vec<f64>,
}

impl VGrid {
    /// Quantize one cell increment; even so that half-cells stay exact.
    fn quantize(dt_v: f64) -> Result<i64> {
        let scaled = (dt_v * (LOG_SCALE / 2.0)).round();
        if scaled.abs() >= 4.0e18 / 4.0 {
            return Err(Error::InvalidParameter(format!(
                "interaction increment {dt_v} overflows the fixed-point log-weight"
            )));
        }
        Ok(2 * (scaled as i64))
    }

    /// Build from an arbitrary slice functional.
    pub fn from_fn(
        ensemble: &PathEnsemble,
        v: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        let n_t = ensemble.grid.n_t;
        let dt = ensemble.grid.dt();
        let pairs: Vec<(i64, f64)> = (0..ensemble.n_samples * n_t)
            .into_par_iter()
            .map(|idx| {
                let val = v(ensemble.slice(idx / n_t, idx % n_t));
                (Self::quantize(dt * val), val)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(q, val)| q.map(|c| (c, val)))
            .collect::<Result<Vec<_>>>()?;
        Ok(VGrid {
            n_samples: ensemble.n_samples,
            n_t,
            dt,
            cells: pairs.iter().map(|p| p.0).collect(),
            raw: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Build from an interaction evaluator.
    pub fn from_evaluator(ensemble: &PathEnsemble, ev: &InteractionEvaluator) -> Result<Self> {
        Self::from_fn(ensemble, |slice| ev.eval_slice(slice))
    }

    #[inline]
    fn cell(&self, sample: usize, i: i64) -> i64 {
        let idx = i.rem_euclid(self.n_t as i64) as usize;
        self.cells[sample * self.n_t + idx]
    }

    /// Quantized trapezoid log-weight T_{[a,b]} in 2^-40 units; endpoints are
    /// grid indices with 0 <= b - a <= n_t.
    pub fn log_weight_int(&self, sample: usize, a: i64, b: i64) -> Result<i64> {
        if b < a || b - a > self.n_t as i64 {
            return Err(Error::InvalidParameter(format!(
                "interval [{a}, {b}] must satisfy 0 <= b - a <= n_t"
            )));
        }
        if a == b {
            return Ok(0);
        }
        let mut acc = self.cell(sample, a) / 2 + self.cell(sample, b) / 2;
        let mut i = a + 1;
        while i < b {
            acc += self.cell(sample, i);
            i += 1;
        }
        Ok(acc)
    }

    /// The kernel F_{[a,b]} = exp(-T_{[a,b]}) itself.
    pub fn kernel(&self, sample: usize, a: i64, b: i64) -> Result<f64> {
        Ok((-(self.log_weight_int(sample, a, b)? as f64) / LOG_SCALE).exp())
    }
}

/// Outcome of the pathwise FKN axiom verification.
#[derive(Clone, Copy, Debug)]
pub struct AxiomsReport {
    pub n_paths: usize,
    pub n_intervals: usize,
    pub all_positive: bool,
    pub cocycle_exact: bool,
    pub shift_exact: bool,
    pub reflection_exact: bool,
}

impl AxiomsReport {
    pub fn all_pass(&self) -> bool {
        self.all_positive && self.cocycle_exact && self.shift_exact && self.reflection_exact
    }
}

/// Verify positivity, the cocycle, shift covariance and reflection
/// covariance on every path, as exact integer identities on the quantized
/// log-weights.
pub fn axioms_check(v: &VGrid) -> Result<AxiomsReport> {
    let n_t = v.n_t as i64;
    let half = n_t / 2;
    let mut report = AxiomsReport {
        n_paths: v.n_samples,
        n_intervals: 0,
        all_positive: true,
        cocycle_exact: true,
        shift_exact: true,
        reflection_exact: true,
    };
    for sample in 0..v.n_samples {
        // positivity over a spread of intervals
        for &(a, b) in &[(0, half), (-half, half), (1, 1 + half), (-half, 0)] {
            report.n_intervals += 1;
            if !(v.kernel(sample, a, b)? > 0.0) {
                report.all_positive = false;
            }
        }
        // cocycle on all grid triples a <= b <= c with c - a <= n_t
        for a in [-half, -half / 2, 0, 1] {
            for b in a..=(a + half) {
                let c = a + half.min(n_t - (b - a));
                let lhs = v.log_weight_int(sample, a, b)? + v.log_weight_int(sample, b, c)?;
                if lhs != v.log_weight_int(sample, a, c)? {
                    report.cocycle_exact = false;
                }
            }
        }
        // U(s) F_{[a,b]} = F_{[a+s, b+s]}: shifting the path by s steps means
        // reading cell i+s, which must reproduce the shifted window.
        for s in [1i64, 3, half, n_t] {
            let direct = v.log_weight_int(sample, s, half + s)?;
            // window [0, half] evaluated on cells shifted by s:
            let mut on_shifted = v.cell(sample, s) / 2 + v.cell(sample, half + s) / 2;
            for i in 1..half {
                on_shifted += v.cell(sample, i + s);
            }
            if on_shifted != direct {
                report.shift_exact = false;
            }
        }
        // R F_{[a,b]} = F_{[-b,-a]}: reading cell -i must reproduce the
        // mirrored window.
        for &(a, b) in &[(0i64, half), (1, half - 1), (-half / 2, half / 2)] {
            if b <= a {
                continue;
            }
            let mut acc = v.cell(sample, -a) / 2 + v.cell(sample, -b) / 2;
            let mut i = a + 1;
            while i < b {
                acc += v.cell(sample, -i);
                i += 1;
            }
            if acc != v.log_weight_int(sample, -b, -a)? {
                report.reflection_exact = false;
            }
        }
    }
    Ok(report)
}

/// Importance weights of the perturbed measure over the free ensemble.
#[derive(Clone, Debug)]
pub struct FknWeights {
    /// exp(max_log - T_i/2^40): stabilized, max entry 1.
    pub weights: Vec<f64>,
    /// ln Ẑ = ln mean F_{[-β/2,β/2]}.
    pub log_zhat: f64,
    /// (Σw)²/Σw².
    pub ess: f64,
    /// Set when ESS fell below the floor.
    pub warning: Option<String>,
}

/// Weights over the full circle [-β/2, β/2].
pub fn perturb_measure(v: &VGrid) -> Result<FknWeights> {
    let half = v.n_t as i64 / 2;
    let logs: Vec<f64> = (0..v.n_samples)
        .map(|i| Ok(-(v.log_weight_int(i, -half, half)? as f64) / LOG_SCALE))
        .collect::<Result<Vec<_>>>()?;
    let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|&l| (l - max_log).exp()).collect();
    let sw: f64 = weights.iter().sum();
    let sw2: f64 = weights.iter().map(|w| w * w).sum();
    let ess = sw * sw / sw2;
    let log_zhat = max_log + (sw / v.n_samples as f64).ln();
    let warning = (ess < ESS_FLOOR)
        .then(|| format!("effective sample size {ess:.1} below floor {ESS_FLOOR}"));
    Ok(FknWeights { weights, log_zhat, ess, warning })
}

impl FknWeights {
    /// Uniform weights (the free measure).
    pub fn free(n_samples: usize) -> Self {
        FknWeights {
            weights: vec![1.0; n_samples],
            log_zhat: 0.0,
            ess: n_samples as f64,
            warning: None,
        }
    }
}

/// Weighted ratio estimate Σ w g / Σ w with a leave-one-shard-out jackknife
/// standard error.
pub fn jackknife_ratio(values: &[f64], weights: &[f64], n_shards: usize) -> (f64, f64) {
    let n = values.len();
    let shards = n_shards.clamp(2, n);
    let mut num = vec![0.0; shards];
    let mut den = vec![0.0; shards];
    for i in 0..n {
        let j = i * shards / n;
        num[j] += weights[i] * values[i];
        den[j] += weights[i];
    }
    let tot_num: f64 = num.iter().sum();
    let tot_den: f64 = den.iter().sum();
    let theta = tot_num / tot_den;
    let reps: Vec<f64> =
        (0..shards).map(|j| (tot_num - num[j]) / (tot_den - den[j])).collect();
    let mean = reps.iter().sum::<f64>() / shards as f64;
    let var = reps.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / shards as f64;
    (theta, ((shards as f64 - 1.0) * var).sqrt())
}

/// Bounded or polynomial functions of one field value φ(s, f).
#[derive(Clone, Debug)]
pub enum ObsKind {
    One,
    Linear,
    Square,
    /// e^{iα φ}.
    Weyl { alpha: f64 },
}

/// One observable factor: a function of φ(s_j, f_j) = Σ_m coeffs[m] φ_m(s_j).
#[derive(Clone, Debug)]
pub struct Observable {
    pub time_idx: usize,
    pub coeffs: Vec<f64>,
    pub kind: ObsKind,
}

impl Observable {
    fn eval(&self, slice: &[f64]) -> Complex64 {
        let phi: f64 = self.coeffs.iter().zip(slice).map(|(c, v)| c * v).sum();
        match self.kind {
            ObsKind::One => Complex64::new(1.0, 0.0),
            ObsKind::Linear => Complex64::new(phi, 0.0),
            ObsKind::Square => Complex64::new(phi * phi, 0.0),
            ObsKind::Weyl { alpha } => Complex64::new(0.0, alpha * phi).exp(),
        }
    }
}

/// Importance-sampled interacting correlation Ê_V[∏_j O_j] with jackknife
/// errors per component.
pub fn perturbed_greens(
    ensemble: &PathEnsemble,
    weights: &FknWeights,
    observables: &[Observable],
    n_shards: usize,
) -> Result<(Complex64, f64, f64)> {
    for o in observables {
        if o.time_idx >= ensemble.grid.n_t {
            return Err(Error::InvalidParameter(format!(
                "observable time index {} outside the grid",
                o.time_idx
            )));
        }
        if o.coeffs.len() != ensemble.d {
            return Err(Error::DimensionMismatch { expected: ensemble.d, got: o.coeffs.len() });
        }
    }
    let vals: Vec<Complex64> = (0..ensemble.n_samples)
        .into_par_iter()
        .map(|i| {
            observables
                .iter()
                .map(|o| o.eval(ensemble.slice(i, o.time_idx)))
                .product::<Complex64>()
        })
        .collect();
    let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
    let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
    let (tr, se_re) = jackknife_ratio(&re, &weights.weights, n_shards);
    let (ti, se_im) = jackknife_ratio(&im, &weights.weights, n_shards);
    Ok((Complex64::new(tr, ti), se_re, se_im))
}

#[derive(Clone, Copy, Debug)]
pub struct LpBoundReport {
    pub lhs: f64,
    pub lhs_sigma: f64,
    pub rhs: f64,
    pub rhs_sigma: f64,
    pub pass: bool,
}

/// Monte Carlo check of ‖e^{-∫_a^b U(t)V dt}‖_p <= ‖e^{-(b-a)V}‖_p: both
/// sides estimated on the ensemble, pass when lhs <= rhs + 3σ.
pub fn lp_bound_check(
    v: &VGrid,
    p: f64,
    a: i64,
    b: i64,
    n_shards: usize,
) -> Result<LpBoundReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be >= 1")));
    }
    let dur = (b - a) as f64 * v.dt;
    let lhs_pow: Vec<f64> = (0..v.n_samples)
        .map(|i| Ok((-p * (v.log_weight_int(i, a, b)? as f64) / LOG_SCALE).exp()))
        .collect::<Result<Vec<_>>>()?;
    // e^{-(b-a)V} with V read off the time-zero slice (stationarity).
    let rhs_pow: Vec<f64> =
        (0..v.n_samples).map(|i| (-p * dur * v.raw[i * v.n_t]).exp()).collect();
    let ones = vec![1.0; v.n_samples];
    let (lm, ls) = jackknife_ratio(&lhs_pow, &ones, n_shards);
    let (rm, rs) = jackknife_ratio(&rhs_pow, &ones, n_shards);
    // delta method through x^{1/p}
    let lhs = lm.powf(1.0 / p);
    let rhs = rm.powf(1.0 / p);
    let lhs_sigma = lhs / (p * lm) * ls;
    let rhs_sigma = rhs / (p * rm) * rs;
    let sigma = (lhs_sigma * lhs_sigma + rhs_sigma * rhs_sigma).sqrt();
    Ok(LpBoundReport { lhs, lhs_sigma, rhs, rhs_sigma, pass: lhs <= rhs + 3.0 * sigma })
}

/// One member of the weighted OS family: e^{iα φ(s, f)} with the time on the
/// grid inside [0, β/2].
#[derive(Clone, Debug)]
pub struct GridFunctional {
    pub time_idx: usize,
    pub coeffs: Vec<f64>,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct PerturbedCheckReport {
    pub os_min_eig: f64,
    pub os_sigma: f64,
    pub markov_residual: f64,
    pub markov_sigma: f64,
    pub ess: f64,
}

fn min_eig_hermitian(m: &DMatrix<Complex64>) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Weighted OS Gram (min eigenvalue ± jackknife σ) and the weighted Markov
/// residual of the perturbed measure.
///
/// The Markov side estimates the conditional means E_V[φ(s)| φ(0), φ(β/2)]
/// by weighted cubic regression on the boundary values (the perturbed
/// conditional mean is no longer linear) and compares
/// Cov_V(φ(s), φ(s')) with the covariance of the fitted means; under the
/// Markov property the two agree.
pub fn perturbed_os_markov_check(
    ensemble: &PathEnsemble,
    weights: &FknWeights,
    family: &[GridFunctional],
    probe_coeffs: &[f64],
    s_idx: usize,
    s_neg_idx: i64,
    n_shards: usize,
) -> Result<PerturbedCheckReport> {
    let n_t = ensemble.grid.n_t;
    let half = n_t / 2;
    for f in family {
        if f.time_idx > half {
            return Err(Error::InvalidParameter(format!(
                "functional time index {} outside [0, n_t/2]",
                f.time_idx
            )));
        }
        if f.coeffs.len() != ensemble.d {
            return Err(Error::DimensionMismatch { expected: ensemble.d, got: f.coeffs.len() });
        }
    }
    if !(s_idx > 0 && s_idx < half) || !(s_neg_idx > -(half as i64) && s_neg_idx < 0) {
        return Err(Error::InvalidParameter(
            "probe times must satisfy 0 < s < beta/2 < ... < s' < 0 on the grid".into(),
        ));
    }
    let n = ensemble.n_samples;
    let k = family.len();
    let shards = n_shards.clamp(2, n);

    // --- OS Gram: per-shard accumulators of w · conj(F_k(Rω)) F_l(ω). ---
    let mut gram = vec![DMatrix::<Complex64>::zeros(k, k); shards];
    let mut wsum = vec![0.0f64; shards];
    // --- Markov: per-shard sufficient statistics for cubic regression. ---
    // basis: 1, b0, b1, b0², b0b1, b1², b0³, b0²b1, b0b1², b1³
    const NB: usize = 10;
    let mut xtx = vec![DMatrix::<f64>::zeros(NB, NB); shards];
    let mut xty_s = vec![DVector::<f64>::zeros(NB); shards];
    let mut xty_n = vec![DVector::<f64>::zeros(NB); shards];
    let mut cross = vec![[0.0f64; 5]; shards]; // w y_s y_n, w y_s, w y_n, (spare), w

    let phi_at = |i: usize, t: usize, c: &[f64]| -> f64 {
        c.iter().zip(ensemble.slice(i, t)).map(|(a, v)| a * v).sum()
    };
    for i in 0..n {
        let shard = i * shards / n;
        let w = weights.weights[i];
        wsum[shard] += w;
        // OS
        for (kk, fk) in family.iter().enumerate() {
            let phi_r = phi_at(i, (n_t - fk.time_idx) % n_t, &fk.coeffs);
            let fk_r = Complex64::new(0.0, -fk.alpha * phi_r).exp(); // conj(F_k ∘ R)
            for (ll, fl) in family.iter().enumerate() {
                let phi_l = phi_at(i, fl.time_idx, &fl.coeffs);
                let fl_v = Complex64::new(0.0, fl.alpha * phi_l).exp();
                gram[shard][(kk, ll)] += fk_r * fl_v * w;
            }
        }
        // Markov
        let b0 = phi_at(i, 0, probe_coeffs);
        let b1 = phi_at(i, half, probe_coeffs);
        let ys = phi_at(i, s_idx, probe_coeffs);
        let yn = phi_at(i, ensemble.grid.wrap(s_neg_idx), probe_coeffs);
        let basis = [
            1.0,
            b0,
            b1,
            b0 * b0,
            b0 * b1,
            b1 * b1,
            b0 * b0 * b0,
            b0 * b0 * b1,
            b0 * b1 * b1,
            b1 * b1 * b1,
        ];
        for r in 0..NB {
            for c in 0..NB {
                xtx[shard][(r, c)] += w * basis[r] * basis[c];
            }
            xty_s[shard][r] += w * basis[r] * ys;
            xty_n[shard][r] += w * basis[r] * yn;
        }
        cross[shard][0] += w * ys * yn;
        cross[shard][1] += w * ys;
        cross[shard][2] += w * yn;
        cross[shard][4] += w;
    }

    let markov_from = |skip: Option<usize>| -> f64 {
        let mut a = DMatrix::<f64>::zeros(NB, NB);
        let mut bs = DVector::<f64>::zeros(NB);
        let mut bn = DVector::<f64>::zeros(NB);
        let mut c = [0.0f64; 5];
        for j in 0..shards {
            if Some(j) == skip {
                continue;
            }
            a += &xtx[j];
            bs += &xty_s[j];
            bn += &xty_n[j];
            for t in 0..5 {
                c[t] += cross[j][t];
            }
        }
        let w = c[4];
        // ridge at rounding scale keeps the solve stable
        for r in 0..NB {
            a[(r, r)] += 1e-12 * w.max(1.0);
        }
        let lu = a.clone().lu();
        let beta_s = lu.solve(&bs).unwrap_or_else(|| DVector::zeros(NB));
        let beta_n = lu.solve(&bn).unwrap_or_else(|| DVector::zeros(NB));
        // Cov_w(y_s, y_n) - Cov_w(ŷ_s, ŷ_n)
        //   = E_w[y_s y_n] - E_w[ŷ_s ŷ_n]   (fits reproduce the means)
        // and E_w[ŷ_s ŷ_n] = β_s' (X'WX/W) β_n.
        let cov_raw = c[0] / w - (c[1] / w) * (c[2] / w);
        let mut fit_second = 0.0;
        for r in 0..NB {
            for cc in 0..NB {
                fit_second += beta_s[r] * a[(r, cc)] * beta_n[cc];
            }
        }
        let cov_fit = fit_second / w - (c[1] / w) * (c[2] / w);
        cov_raw - cov_fit
    };

    let os_from = |skip: Option<usize>| -> f64 {
        let mut m = DMatrix::<Complex64>::zeros(k, k);
        let mut w = 0.0;
        for j in 0..shards {
            if Some(j) == skip {
                continue;
            }
            m += &gram[j];
            w += wsum[j];
        }
        min_eig_hermitian(&(m / Complex64::new(w, 0.0)))
    };

    let os_min_eig = os_from(None);
    let markov_residual = markov_from(None);
    let jack = |full: f64, f: &dyn Fn(Option<usize>) -> f64| -> f64 {
        let reps: Vec<f64> = (0..shards).map(|j| f(Some(j))).collect();
        let mean = reps.iter().sum::<f64>() / shards as f64;
        let var = reps.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / shards as f64;
        let _ = full;
        ((shards as f64 - 1.0) * var).sqrt()
    };
    Ok(PerturbedCheckReport {
        os_min_eig,
        os_sigma: jack(os_min_eig, &os_from),
        markov_residual,
        markov_sigma: jack(markov_residual, &markov_from),
        ess: weights.ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::{mode_grid_covariance, sample_paths, DEFAULT_N_MATS};
    use approx::assert_relative_eq;

    fn ou_ensemble(a: f64, beta: f64, n_t: usize, n: usize, seed: u64) -> PathEnsemble {
        let sys = DiagonalSystem::from_frequencies(vec![a], beta).unwrap();
        let grid = TimeGrid::new(beta, n_t).unwrap();
        sample_paths(&sys, &grid, n, seed, DEFAULT_N_MATS).unwrap()
    }

    #[test]
    fn kernel_trivial_cases() {
        let ens = ou_ensemble(1.0, 1.0, 8, 50, 1);
        // V ≡ 0 -> F = 1.
        let v = VGrid::from_fn(&ens, |_| 0.0).unwrap();
        for i in 0..ens.n_samples {
            assert_eq!(v.kernel(i, 0, 4).unwrap(), 1.0);
        }
        // V ≡ c constant -> F = e^{-(b-a)c} up to the 2^-40 quantization.
        let v = VGrid::from_fn(&ens, |_| 0.7).unwrap();
        let f = v.kernel(0, -2, 3).unwrap();
        let expected = (-5.0 * ens.grid.dt() * 0.7).exp();
        assert_relative_eq!(f, expected, epsilon = 1e-10);
        // off-grid / oversized intervals rejected.
        assert!(v.log_weight_int(0, 3, 2).is_err());
        assert!(v.log_weight_int(0, 0, 9).is_err());
    }

    #[test]
    fn axioms_are_integer_exact() {
        let ens = ou_ensemble(1.0, 1.0, 16, 1000, 2);
        // a random quartic slice functional
        let v = VGrid::from_fn(&ens, |s| {
            let y = s[0];
            y * y * y * y - 0.3 * y * y + 0.1 * y
        })
        .unwrap();
        let rep = axioms_check(&v).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
        assert_eq!(rep.n_paths, 1000);
        // reflection invariance of the full-circle weight.
        let half = v.n_t as i64 / 2;
        for i in 0..50 {
            let full = v.log_weight_int(i, -half, half).unwrap();
            let mut mirrored = v.cell(i, half) / 2 + v.cell(i, -half) / 2;
            let mut j = -half + 1;
            while j < half {
                mirrored += v.cell(i, -j);
                j += 1;
            }
            assert_eq!(full, mirrored);
        }
    }

    #[test]
    fn weights_and_estimator_consistency() {
        let ens = ou_ensemble(1.0, 1.0, 8, 4000, 3);
        // V = 0: uniform weights, estimator = sample mean.
        let v0 = VGrid::from_fn(&ens, |_| 0.0).unwrap();
        let w0 = perturb_measure(&v0).unwrap();
        assert!(w0.weights.iter().all(|&w| w == 1.0));
        assert_relative_eq!(w0.ess, 4000.0);
        assert_relative_eq!(w0.log_zhat, 0.0);
        // constant V: weights equal, so every ratio estimate matches V = 0.
        let vc = VGrid::from_fn(&ens, |_| 1.3).unwrap();
        let wc = perturb_measure(&vc).unwrap();
        let obs = [Observable {
            time_idx: 2,
            coeffs: vec![1.0],
            kind: ObsKind::Square,
        }];
        let (a, _, _) = perturbed_greens(&ens, &w0, &obs, 40).unwrap();
        let (b, _, _) = perturbed_greens(&ens, &wc, &obs, 40).unwrap();
        assert_relative_eq!(a.re, b.re, epsilon = 1e-9);
        // estimator invariance under V -> V + const.
        let vq = VGrid::from_fn(&ens, |s| 0.5 * s[0] * s[0]).unwrap();
        let vq_shift = VGrid::from_fn(&ens, |s| 0.5 * s[0] * s[0] + 2.0).unwrap();
        let (x, _, _) = perturbed_greens(&ens, &perturb_measure(&vq).unwrap(), &obs, 40).unwrap();
        let (y, _, _) =
            perturbed_greens(&ens, &perturb_measure(&vq_shift).unwrap(), &obs, 40).unwrap();
        assert!((x.re - y.re).abs() <= 1e-9 * x.re.abs().max(1.0), "{x} vs {y}");
        // observables ≡ 1 -> exactly 1.
        let one = [Observable { time_idx: 0, coeffs: vec![0.0], kind: ObsKind::One }];
        let (o, se, _) = perturbed_greens(&ens, &wc, &one, 40).unwrap();
        assert_relative_eq!(o.re, 1.0);
        assert_relative_eq!(se, 0.0);
    }

    #[test]
    fn free_weyl_observable_matches_closed_form() {
        use crate::quasifree::{euclid_greens_weyl, EuclideanWeylWord};
        use crate::spectral::TestVector;
        let (a, beta) = (1.0, 1.0);
        let sys = DiagonalSystem::from_frequencies(vec![a], beta).unwrap();
        let ens = ou_ensemble(a, beta, 8, 120_000, 4);
        let w = FknWeights::free(ens.n_samples);
        let x = TestVector::from_real(&[0.8]);
        // E[e^{iφ(0,x)} e^{iφ(β/2,x)}] vs the Euclidean two-point closed form
        // (Weyl argument convention: φ(s, x) has covariance C(s)(x,x)).
        let obs = [
            Observable { time_idx: 0, coeffs: vec![0.8], kind: ObsKind::Weyl { alpha: 1.0 } },
            Observable { time_idx: 4, coeffs: vec![0.8], kind: ObsKind::Weyl { alpha: 1.0 } },
        ];
        let (mc, se_re, se_im) = perturbed_greens(&ens, &w, &obs, 50).unwrap();
        let word =
            EuclideanWeylWord::new(&sys, &[0.0, 0.5], vec![x.clone(), x.clone()]).unwrap();
        let exact = euclid_greens_weyl(&sys, &word).unwrap();
        assert!((mc.re - exact).abs() < 5.0 * se_re, "{} vs {exact} ± {se_re}", mc.re);
        assert!(mc.im.abs() < 5.0 * se_im.max(1e-6));
    }

    #[test]
    fn quadratic_perturbation_matches_matrix_oracle() {
        // Discrete weight e^{-γ Δt Σ φ_i²} tilts the Gaussian exactly:
        // Σ_V = (Σ^{-1} + 2γΔt)^{-1}. The trapezoid rule on the full circle
        // is the plain sum, so the identity is exact up to quantization.
        let (a, beta, n_t) = (1.0, 1.0, 8);
        let gamma = 0.4;
        let ens = ou_ensemble(a, beta, n_t, 150_000, 5);
        let v = VGrid::from_fn(&ens, |s| gamma * s[0] * s[0]).unwrap();
        let w = perturb_measure(&v).unwrap();
        assert!(w.warning.is_none(), "{:?}", w.warning);
        let grid = TimeGrid::new(beta, n_t).unwrap();
        let sigma = mode_grid_covariance(a, &grid);
        let mut prec = sigma.try_inverse().unwrap();
        for i in 0..n_t {
            prec[(i, i)] += 2.0 * gamma * grid.dt();
        }
        let tilted = prec.try_inverse().unwrap();
        for &(t1, t2) in &[(0usize, 0usize), (0, 2), (0, 4), (1, 5)] {
            let vals: Vec<f64> = (0..ens.n_samples)
                .map(|i| ens.value(i, t1, 0) * ens.value(i, t2, 0))
                .collect();
            let (est, se) = jackknife_ratio(&vals, &w.weights, 50);
            assert!(
                (est - tilted[(t1, t2)]).abs() < 5.0 * se,
                "cov({t1},{t2}): {est} vs {} ± {se}",
                tilted[(t1, t2)]
            );
        }
    }

    #[test]
    fn weight_bounds_from_pointwise_bounds_on_v() {
        // -B <= V <= B pointwise traps every full-circle weight in
        // [e^{-βB}, e^{βB}], and weights are always strictly positive.
        let ens = ou_ensemble(1.0, 2.0, 8, 500, 6);
        let b_bound = 0.9;
        let v = VGrid::from_fn(&ens, |s| (s[0] * s[0] - b_bound).clamp(-b_bound, b_bound))
            .unwrap();
        let half = v.n_t as i64 / 2;
        let beta = 2.0;
        for i in 0..ens.n_samples {
            let f = v.kernel(i, -half, half).unwrap();
            assert!(f > 0.0);
            assert!(f >= (-beta * b_bound).exp() * (1.0 - 1e-9));
            assert!(f <= (beta * b_bound).exp() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn lp_bound_examples() {
        let ens = ou_ensemble(1.0, 1.0, 8, 40_000, 7);
        // constant V: equality of both sides.
        let vc = VGrid::from_fn(&ens, |_| 0.8).unwrap();
        let rep = lp_bound_check(&vc, 2.0, 0, 4, 40).unwrap();
        assert!(rep.pass);
        assert_relative_eq!(rep.lhs, rep.rhs, epsilon = 1e-9);
        // quadratic V at p in {1, 2}.
        let vq = VGrid::from_fn(&ens, |s| 0.6 * s[0] * s[0]).unwrap();
        for &p in &[1.0, 2.0] {
            let rep = lp_bound_check(&vq, p, 0, 4, 40).unwrap();
            assert!(rep.pass, "p = {p}: {rep:?}");
            assert!(rep.lhs <= rep.rhs + 1e-12, "strict Jensen direction");
        }
        assert!(lp_bound_check(&vq, 0.5, 0, 4, 40).is_err());
    }

    #[test]
    fn perturbed_os_markov_free_limit_and_quartic() {
        let (a, beta, n_t) = (1.0, 1.0, 16);
        let ens = ou_ensemble(a, beta, n_t, 30_000, 8);
        let family: Vec<GridFunctional> = (0..4)
            .map(|k| GridFunctional {
                time_idx: k * 2,
                coeffs: vec![1.0],
                alpha: 0.4 + 0.2 * k as f64,
            })
            .collect();
        // V = 0 reduces to the free checks.
        let w0 = FknWeights::free(ens.n_samples);
        let rep =
            perturbed_os_markov_check(&ens, &w0, &family, &[1.0], 4, -4, 40).unwrap();
        assert!(rep.os_min_eig > -3.0 * rep.os_sigma, "{rep:?}");
        assert!(rep.markov_residual.abs() <= 3.0 * rep.markov_sigma, "{rep:?}");
        // λ⁴ reweighting.
        let v = VGrid::from_fn(&ens, |s| 0.2 * s[0].powi(4)).unwrap();
        let w = perturb_measure(&v).unwrap();
        assert!(w.ess >= 200.0, "ess {}", w.ess);
        let rep = perturbed_os_markov_check(&ens, &w, &family, &[1.0], 4, -4, 40).unwrap();
        assert!(rep.os_min_eig > -3.0 * rep.os_sigma, "{rep:?}");
        assert!(rep.markov_residual.abs() <= 3.0 * rep.markov_sigma, "{rep:?}");
        // corrupted weights (sign flip on half) break PSD by a wide margin.
        let mut bad = w.clone();
        for (i, w) in bad.weights.iter_mut().enumerate() {
            if i % 2 == 0 {
                *w = -*w;
            }
        }
        let rep_bad =
            perturbed_os_markov_check(&ens, &bad, &family, &[1.0], 4, -4, 40).unwrap();
        assert!(rep_bad.os_min_eig < -0.01, "sanity control: {rep_bad:?}");
    }
}
