//! Finite-dimensional verification of the KMS / Liouvillean statements.
//!
//! For a Gibbs state of a Hermitian H on C^d the GNS space is the doubled
//! space C^{d²} with cyclic vector Ω ∝ vec(e^{-βH/2}), Liouvillean
//! L = H⊗1 - 1⊗Hᵀ and modular conjugation J vec(M) = vec(M†). Perturbing by
//! a V diagonal in the distinguished abelian basis,
//!
//!   H_V = L + V⊗1,   Ω_V ∝ e^{-βH_V/2}Ω = vec(e^{-β(H+v)/2})/‖·‖,
//!   L_V = H_V - J(V⊗1)J = (H+v)⊗1 - 1⊗(H+v)ᵀ,
//!
//! and every identity below is an exact finite-dimensional theorem whose
//! numerical residual only reflects rounding. The bridge to the field
//! theory is the truncated-oscillator cross-check at the bottom, comparing
//! dense operator traces with reweighted path sampling.

use crate::error::{Error, Result};
use crate::fkn::{perturb_measure, perturbed_greens, ObsKind, Observable, VGrid};
use crate::pathspace::{sample_paths, TimeGrid};
use crate::rng::gaussian;
use crate::spectral::DiagonalSystem;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Hard cap on the one-particle dimension (the doubled space is d²).
pub const MAX_DIM: usize = 64;

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

/// A finite KMS system: Hermitian Hamiltonian, inverse temperature, a
/// perturbation diagonal in the distinguished abelian basis, and an
/// optional integer gauge generator (commuting with H).
#[derive(Clone, Debug)]
pub struct FiniteKmsSystem {
    pub dim: usize,
    pub h: CMat,
    pub beta: f64,
    pub v_diag: DVector<f64>,
    pub q_charge: Option<Vec<i64>>,
}

impl FiniteKmsSystem {
    pub fn new(
        h: CMat,
        beta: f64,
        v_diag: DVector<f64>,
        q_charge: Option<Vec<i64>>,
    ) -> Result<Self> {
        let dim = h.nrows();
        if dim == 0 || dim > MAX_DIM || h.ncols() != dim {
            return Err(Error::InvalidParameter(format!(
                "H must be square with 1 <= d <= {MAX_DIM}"
            )));
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        let herm_defect = (&h - h.adjoint()).norm();
        if herm_defect > 1e-12 * h.norm().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "H is not Hermitian (defect {herm_defect:.3e})"
            )));
        }
        if v_diag.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v_diag.len() });
        }
        if let Some(q) = &q_charge {
            if q.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: q.len() });
            }
            // [H, Q] = 0, i.e. H is block diagonal over charge sectors.
            for i in 0..dim {
                for j in 0..dim {
                    if q[i] != q[j] && h[(i, j)].norm() > 1e-12 {
                        return Err(Error::InvalidParameter(
                            "H must commute with the gauge generator".into(),
                        ));
                    }
                }
            }
        }
        Ok(FiniteKmsSystem { dim, h, beta, v_diag, q_charge })
    }
}

/// Hermitian function calculus f(H) through the eigendecomposition.
fn herm_fun(h: &CMat, f: impl Fn(f64) -> Complex64) -> CMat {
    let eig = h.clone().symmetric_eigen();
    let u = &eig.eigenvectors;
    let mut d = CMat::zeros(h.nrows(), h.ncols());
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        d[(i, i)] = f(lam);
    }
    u * d * u.adjoint()
}

/// vec(M) with row-major index (i, j) -> i d + j.
fn vec_of(m: &CMat) -> CVec {
    let d = m.nrows();
    CVec::from_fn(d * d, |k, _| m[(k / d, k % d)])
}

fn mat_of(v: &CVec, d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| v[i * d + j])
}

/// Doubled-space GNS objects of the Gibbs state.
#[derive(Clone, Debug)]
pub struct StandardFormObjects {
    pub dim: usize,
    pub beta: f64,
    pub h: CMat,
    /// Ω = vec(e^{-βH/2})/‖·‖ (rebased at the ground energy for stability).
    pub omega: CVec,
}

impl StandardFormObjects {
    /// (A⊗1)ψ.
    pub fn apply_left(&self, a: &CMat, psi: &CVec) -> CVec {
        vec_of(&(a * mat_of(psi, self.dim)))
    }

    /// (1⊗Bᵀ)ψ = vec(M B).
    pub fn apply_right(&self, b: &CMat, psi: &CVec) -> CVec {
        vec_of(&(mat_of(psi, self.dim) * b))
    }

    /// Modular conjugation J ψ = vec(M†).
    pub fn j_conj(&self, psi: &CVec) -> CVec {
        vec_of(&mat_of(psi, self.dim).adjoint())
    }

    /// Liouvillean action Lψ = vec(HM - MH).
    pub fn liouvillean(&self, psi: &CVec) -> CVec {
        let m = mat_of(psi, self.dim);
        vec_of(&(&self.h * &m - &m * &self.h))
    }

    /// State value ω(A) = ⟨Ω, (A⊗1)Ω⟩.
    pub fn expectation(&self, a: &CMat) -> Complex64 {
        self.omega.dotc(&self.apply_left(a, &self.omega.clone()))
    }

    /// The doubled gauge generator Q = Q⊗1 - 1⊗Qᵀ as action.
    pub fn doubled_charge(&self, q: &[i64], psi: &CVec) -> CVec {
        let m = mat_of(psi, self.dim);
        let d = self.dim;
        vec_of(&CMat::from_fn(d, d, |i, j| m[(i, j)] * (q[i] - q[j]) as f64))
    }
}

/// Normalized vec(e^{-βH/2}); energies are rebased at the ground state so
/// large β cannot underflow everything at once.
fn gibbs_vector(h: &CMat, beta: f64) -> CVec {
    let eig = h.clone().symmetric_eigen();
    let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let u = &eig.eigenvectors;
    let mut d = CMat::zeros(h.nrows(), h.ncols());
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        d[(i, i)] = Complex64::new((-0.5 * beta * (lam - e0)).exp(), 0.0);
    }
    let m = u * d * u.adjoint();
    let v = vec_of(&m);
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

/// GNS standard form of the Gibbs state of `sys`.
pub fn gns_build(sys: &FiniteKmsSystem) -> Result<StandardFormObjects> {
    let omega = gibbs_vector(&sys.h, sys.beta);
    Ok(StandardFormObjects { dim: sys.dim, beta: sys.beta, h: sys.h.clone(), omega })
}

/// Gibbs expectation Tr(e^{-βH}A)/Z by direct trace (the independent route
/// against `StandardFormObjects::expectation`).
pub fn gibbs_trace_expectation(h: &CMat, beta: f64, a: &CMat) -> Complex64 {
    let eig = h.clone().symmetric_eigen();
    let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let at = eig.eigenvectors.adjoint() * a * &eig.eigenvectors;
    let mut num = Complex64::new(0.0, 0.0);
    let mut z = 0.0;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let w = (-beta * (lam - e0)).exp();
        num += at[(i, i)] * w;
        z += w;
    }
    num / z
}

/// Max KMS residual |F(t+iβ) - ω(τ_t(B)A)| over a real-time grid, both sides
/// evaluated through the eigendecomposition of `h_dyn`. Passing a wrong
/// `beta_continue` (≠ the state's β) is the negative control.
pub fn kms_verify(
    h_dyn: &CMat,
    beta: f64,
    beta_continue: f64,
    a: &CMat,
    b: &CMat,
    t_grid: &[f64],
) -> f64 {
    let eig = h_dyn.clone().symmetric_eigen();
    let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let u = &eig.eigenvectors;
    let at = u.adjoint() * a * u;
    let bt = u.adjoint() * b * u;
    let ev: Vec<f64> = eig.eigenvalues.iter().map(|&l| l - e0).collect();
    let d = ev.len();
    let z: f64 = ev.iter().map(|&e| (-beta * e).exp()).sum();
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        let mut lhs = Complex64::new(0.0, 0.0); // F(t + i beta_continue)
        let mut rhs = Complex64::new(0.0, 0.0); // ω(τ_t(B) A)
        for m in 0..d {
            let wm = (-beta * ev[m]).exp();
            for n in 0..d {
                let osc = Complex64::new(0.0, t * (ev[n] - ev[m])).exp();
                lhs += wm * at[(m, n)] * bt[(n, m)] * osc
                    * (-beta_continue * (ev[n] - ev[m])).exp();
                rhs += wm * bt[(m, n)] * at[(n, m)] * Complex64::new(0.0, t * (ev[m] - ev[n])).exp();
            }
        }
        worst = worst.max(((lhs - rhs) / z).norm());
    }
    worst
}

/// Outcome of the perturbation identities.
#[derive(Clone, Debug)]
pub struct PerturbationReport {
    /// ‖Ω_V(doubled route) - Ω_V(vec route)‖ (Gibbs-vectorization identity).
    pub vectorization_residual: f64,
    /// ‖L_V Ω_V‖.
    pub liouvillean_annihilation: f64,
    /// max over probes of ‖e^{itL_V}(A⊗1)e^{-itL_V} - (τ_t^V A)⊗1‖ on Ω_V.
    pub dynamics_residual: f64,
    /// KMS residual of (ω_V, τ_V).
    pub kms_residual: f64,
    /// max over probes of ‖J e^{-βL_V/2}(A⊗1)Ω_V - (A†⊗1)Ω_V‖ (J_V = J).
    pub modular_residual: f64,
    /// max over probes of |ω_V(A) - Tr(e^{-β(H+v)}A)/Z_v|.
    pub state_residual: f64,
}

impl PerturbationReport {
    pub fn pass(&self) -> bool {
        self.vectorization_residual <= 1e-10
            && self.liouvillean_annihilation <= 1e-10
            && self.dynamics_residual <= 1e-8
            && self.kms_residual <= 1e-8
            && self.modular_residual <= 1e-10
            && self.state_residual <= 1e-10
    }
}

/// Perturbed vector by the two independent routes:
/// e^{-βH_V/2}Ω on the doubled space (H_V = L + V⊗1 materialized and
/// eigendecomposed, no tensor shortcuts) versus vec(e^{-β(H+v)/2})/‖·‖.
pub fn perturb(objs: &StandardFormObjects, v_diag: &DVector<f64>) -> Result<(CVec, CVec)> {
    let d = objs.dim;
    if v_diag.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: v_diag.len() });
    }
    // H_V = H⊗1 - 1⊗Hᵀ + V⊗1 as a dense d²×d² Hermitian matrix.
    let dd = d * d;
    let mut h_v = CMat::zeros(dd, dd);
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            h_v[(row, row)] += Complex64::new(v_diag[i], 0.0);
            for k in 0..d {
                // (H⊗1): couples (i,j) <- (k,j); (1⊗Hᵀ): (i,j) <- (i,k).
                h_v[(row, k * d + j)] += objs.h[(i, k)];
                h_v[(row, i * d + k)] -= objs.h[(k, j)];
            }
        }
    }
    let eig = h_v.symmetric_eigen();
    let u = &eig.eigenvectors;
    let coeff = u.adjoint() * &objs.omega;
    // Rebase at the smallest eigenvalue carrying weight, for stability.
    let e_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut scaled = coeff.clone();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        scaled[i] *= Complex64::new((-0.5 * objs.beta * (lam - e_min)).exp(), 0.0);
    }
    let doubled = u * scaled;
    let doubled = &doubled / Complex64::new(doubled.norm(), 0.0);

    // Independent route: the Gibbs vector of H + v. Both routes produce the
    // vec of a positive matrix, so they agree without phase adjustment.
    let mut h_pert = objs.h.clone();
    for i in 0..d {
        h_pert[(i, i)] += Complex64::new(v_diag[i], 0.0);
    }
    let vec_route = gibbs_vector(&h_pert, objs.beta);
    Ok((doubled, vec_route))
}

/// Full verification of the perturbed GNS identities for one system.
pub fn liouvillean_verify(sys: &FiniteKmsSystem, n_probes: usize) -> Result<PerturbationReport> {
    let objs = gns_build(sys)?;
    let d = sys.dim;
    let (omega_v_doubled, omega_v) = perturb(&objs, &sys.v_diag)?;
    let vectorization_residual = (&omega_v_doubled - &omega_v).norm();

    // Perturbed one-particle Hamiltonian and its GNS objects.
    let mut h_pert = sys.h.clone();
    for i in 0..d {
        h_pert[(i, i)] += Complex64::new(sys.v_diag[i], 0.0);
    }
    let objs_v = StandardFormObjects {
        dim: d,
        beta: sys.beta,
        h: h_pert.clone(),
        omega: omega_v.clone(),
    };
    // L_V Ω_V = 0.
    let liouvillean_annihilation = objs_v.liouvillean(&omega_v).norm();

    // Probe matrices.
    let probes: Vec<CMat> = (0..n_probes.max(1))
        .map(|p| {
            CMat::from_fn(d, d, |i, j| {
                Complex64::new(
                    gaussian(0x51ab, p as u64, (i * d + j) as u64, 0),
                    gaussian(0x51ac, p as u64, (i * d + j) as u64, 0),
                )
            })
        })
        .collect();

    // e^{itL_V}(A⊗1)e^{-itL_V} = (e^{itH_v}Ae^{-itH_v})⊗1, applied to Ω_V.
    let mut dynamics_residual: f64 = 0.0;
    for a in &probes {
        for &t in &[0.37, 1.1] {
            let u_t = herm_fun(&h_pert, |lam| Complex64::new(0.0, t * lam).exp());
            let evolved_a = &u_t * a * u_t.adjoint();
            // e^{-itL_V}ψ = vec(e^{-itH_v} M e^{itH_v})
            let psi = objs_v.apply_right(&u_t, &objs_v.apply_left(&u_t.adjoint(), &omega_v));
            let psi = objs_v.apply_left(a, &psi);
            let lhs = objs_v.apply_right(&u_t.adjoint(), &objs_v.apply_left(&u_t, &psi));
            let rhs = objs_v.apply_left(&evolved_a, &omega_v);
            dynamics_residual = dynamics_residual.max((lhs - rhs).norm());
        }
    }

    // KMS for the perturbed state and dynamics.
    let t_grid: Vec<f64> = (0..7).map(|i| -1.5 + 0.5 * i as f64).collect();
    let mut kms_residual: f64 = 0.0;
    for pair in probes.chunks(2) {
        let a = &pair[0];
        let b = if pair.len() > 1 { &pair[1] } else { &pair[0] };
        kms_residual =
            kms_residual.max(kms_verify(&h_pert, sys.beta, sys.beta, a, b, &t_grid));
    }

    // J_V = J through the modular involution S_V = J e^{-βL_V/2}:
    // S_V (A⊗1)Ω_V = (A†⊗1)Ω_V.
    let half_gibbs = herm_fun(&h_pert, |lam| Complex64::new((-0.5 * sys.beta * lam).exp(), 0.0));
    let half_gibbs_inv =
        herm_fun(&h_pert, |lam| Complex64::new((0.5 * sys.beta * lam).exp(), 0.0));
    let mut modular_residual: f64 = 0.0;
    for a in &probes {
        let psi = objs_v.apply_left(a, &omega_v);
        // e^{-βL_V/2} vec(M) = vec(e^{-βH_v/2} M e^{βH_v/2})
        let m = mat_of(&psi, d);
        let damped = vec_of(&(&half_gibbs * &m * &half_gibbs_inv));
        let lhs = objs_v.j_conj(&damped);
        let rhs = objs_v.apply_left(&a.adjoint(), &omega_v);
        modular_residual = modular_residual.max((lhs - rhs).norm() / psi.norm().max(1.0));
    }

    // ω_V(A) = Tr(e^{-β(H+v)}A)/Z_v.
    let mut state_residual: f64 = 0.0;
    for a in &probes {
        let lhs = objs_v.expectation(a);
        let rhs = gibbs_trace_expectation(&h_pert, sys.beta, a);
        state_residual = state_residual.max((lhs - rhs).norm() / a.norm().max(1.0));
    }

    Ok(PerturbationReport {
        vectorization_residual,
        liouvillean_annihilation,
        dynamics_residual,
        kms_residual,
        modular_residual,
        state_residual,
    })
}

#[derive(Clone, Debug)]
pub struct GaugeReport {
    /// ‖QΩ‖.
    pub charge_annihilation: f64,
    /// dim Ker Q on the doubled space.
    pub kernel_dim: usize,
    /// dim span{(A⊗1)Ω : [A, Q] = 0}.
    pub invariant_span_dim: usize,
    /// Largest principal angle between the two subspaces.
    pub max_principal_angle: f64,
}

/// Gauge sectors: the closure of {gauge-invariant A}Ω equals Ker Q, checked
/// through orthonormal bases and principal angles; the gauge average
/// projector is realized by discrete averaging over the (finite) orbit.
pub fn gauge_sector_check(sys: &FiniteKmsSystem) -> Result<GaugeReport> {
    let q = sys
        .q_charge
        .clone()
        .ok_or_else(|| Error::InvalidParameter("system carries no gauge generator".into()))?;
    let objs = gns_build(sys)?;
    let d = sys.dim;
    let dd = d * d;
    let charge_annihilation = objs.doubled_charge(&q, &objs.omega).norm();

    // Discrete gauge averaging: P = (1/K) Σ_k e^{iθ_k Q_d} kills every
    // nonzero integer charge difference when K exceeds their spread.
    let qmax = q.iter().map(|&c| c.unsigned_abs()).max().unwrap_or(0) as i64;
    let k_orbit = (4 * qmax + 1) as usize;
    // Basis of Ker Q_d from gauge averaging the canonical basis.
    let mut kernel_basis: Vec<CVec> = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let mut e = CVec::zeros(dd);
            e[i * d + j] = Complex64::new(1.0, 0.0);
            let mut avg = CVec::zeros(dd);
            for kk in 0..k_orbit {
                let theta = std::f64::consts::TAU * kk as f64 / k_orbit as f64;
                // e^{iθQ_d} is diagonal with phases θ(q_i - q_j).
                let mut rot = e.clone();
                rot[i * d + j] *= Complex64::new(0.0, theta * (q[i] - q[j]) as f64).exp();
                avg += rot;
            }
            avg /= Complex64::new(k_orbit as f64, 0.0);
            if avg.norm() > 0.5 {
                kernel_basis.push(avg.normalize());
            }
        }
    }
    // Span of (A⊗1)Ω over a basis of gauge-invariant (block-diagonal) A.
    let mut span: Vec<CVec> = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if q[i] != q[j] {
                continue;
            }
            let mut a = CMat::zeros(d, d);
            a[(i, j)] = Complex64::new(1.0, 0.0);
            span.push(objs.apply_left(&a, &objs.omega));
        }
    }
    let orth = |vs: &[CVec]| -> CMat {
        let m = CMat::from_columns(vs);
        let svd = m.svd(true, false);
        let u = svd.u.unwrap();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
        u.columns(0, rank).into_owned()
    };
    let q1 = orth(&kernel_basis);
    let q2 = orth(&span);
    // Max principal angle through its sine: the columnwise projection defect
    // ‖(1 - Q1 Q1†) Q2‖ is well conditioned near 0, unlike acos of the
    // overlap singular values.
    let max_principal_angle = if q1.ncols() == q2.ncols() {
        let defect = &q2 - &q1 * (q1.adjoint() * &q2);
        let mut worst: f64 = 0.0;
        for c in 0..defect.ncols() {
            worst = worst.max(defect.column(c).norm());
        }
        worst.min(1.0).asin()
    } else {
        std::f64::consts::FRAC_PI_2
    };
    Ok(GaugeReport {
        charge_annihilation,
        kernel_dim: q1.ncols(),
        invariant_span_dim: q2.ncols(),
        max_principal_angle,
    })
}

/// Euclidean two-point function of the single-mode interacting oscillator,
/// Tr(e^{-(β-s)H_v} Φ e^{-sH_v} Φ)/Z_v with Φ = √a x, H_v = H_osc + λΦ⁴,
/// discretized on a Dirichlet position grid of n interior points over
/// [-box, box].
pub fn oscillator_two_point(
    a: f64,
    beta: f64,
    lambda: f64,
    s: f64,
    n: usize,
    box_half: f64,
) -> f64 {
    let dx = 2.0 * box_half / (n as f64 + 1.0);
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut phi = DVector::<f64>::zeros(n);
    for i in 0..n {
        let x = -box_half + (i as f64 + 1.0) * dx;
        phi[i] = a.sqrt() * x;
        h[(i, i)] = 1.0 / (dx * dx) + 0.5 * a * a * x * x + lambda * phi[i].powi(4);
        if i + 1 < n {
            h[(i, i + 1)] = -0.5 / (dx * dx);
            h[(i + 1, i)] = -0.5 / (dx * dx);
        }
    }
    let eig = h.symmetric_eigen();
    let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let u = &eig.eigenvectors;
    // Φ in the eigenbasis.
    let mut phi_eig = DMatrix::<f64>::zeros(n, n);
    for m in 0..n {
        for k in 0..n {
            let mut acc = 0.0;
            for r in 0..n {
                acc += u[(r, m)] * phi[r] * u[(r, k)];
            }
            phi_eig[(m, k)] = acc;
        }
    }
    let ev: Vec<f64> = eig.eigenvalues.iter().map(|&l| l - e0).collect();
    let mut z = 0.0;
    let mut num = 0.0;
    for m in 0..n {
        let wm = (-beta * ev[m]).exp();
        z += wm;
        if wm < 1e-300 {
            continue;
        }
        for k in 0..n {
            let w = ((s - beta) * ev[m] - s * ev[k]).exp();
            if w > 0.0 {
                num += w * phi_eig[(m, k)] * phi_eig[(m, k)];
            }
        }
    }
    num / z
}

/// Richardson extrapolation over grids (n, 2n): the raw discretization error
/// is O(Δx²), leaving O(Δx⁴) after extrapolation.
pub fn oscillator_two_point_richardson(
    a: f64,
    beta: f64,
    lambda: f64,
    s: f64,
    n: usize,
    box_half: f64,
) -> f64 {
    let coarse = oscillator_two_point(a, beta, lambda, s, n, box_half);
    let fine = oscillator_two_point(a, beta, lambda, s, 2 * n, box_half);
    (4.0 * fine - coarse) / 3.0
}

#[derive(Clone, Debug)]
pub struct CrossCheckReport {
    pub operator_value: f64,
    pub mc_value: f64,
    pub mc_sigma: f64,
    pub trunc_budget: f64,
    pub ess: f64,
    pub pass: bool,
}

/// Operator-vs-path-integral Feynman-Kac cross-check: the interacting
/// two-point function ⟨φ(0)φ(s)⟩_V of a single mode with V = λφ⁴, computed
/// by dense operator traces and by reweighted path sampling.
pub fn feynman_kac_crosscheck(
    a: f64,
    beta: f64,
    lambda: f64,
    s_idx: usize,
    n_t: usize,
    n_samples: usize,
    seed: u64,
    trunc_budget: f64,
) -> Result<CrossCheckReport> {
    let sys = DiagonalSystem::from_frequencies(vec![a], beta)?;
    let grid = TimeGrid::new(beta, n_t)?;
    let ens = sample_paths(&sys, &grid, n_samples, seed, crate::pathspace::DEFAULT_N_MATS)?;
    let v = VGrid::from_fn(&ens, |slice| lambda * slice[0].powi(4))?;
    let w = perturb_measure(&v)?;
    let obs = [
        Observable { time_idx: 0, coeffs: vec![1.0], kind: ObsKind::Linear },
        Observable { time_idx: s_idx, coeffs: vec![1.0], kind: ObsKind::Linear },
    ];
    let (mc, mc_sigma, _) = perturbed_greens(&ens, &w, &obs, 50)?;
    let s = s_idx as f64 * grid.dt();
    let operator_value = oscillator_two_point_richardson(a, beta, lambda, s, 700, 8.0 / a.sqrt());
    let pass = (mc.re - operator_value).abs() <= 5.0 * mc_sigma + trunc_budget;
    Ok(CrossCheckReport {
        operator_value,
        mc_value: mc.re,
        mc_sigma,
        trunc_budget,
        ess: w.ess,
        pass,
    })
}
