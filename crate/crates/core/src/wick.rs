//! Wick calculus on scalar Gaussian variables.
//!
//! Ordering is always relative to an explicit covariance value c:
//!
//!   :y^n:_c = Σ_{m<=n/2} n!/(m!(n-2m)!) y^{n-2m} (-c/2)^m,
//!   :e^{αy}:_c = e^{αy - α²c/2},
//!
//! together with the reordering identities exchanging c's. The field enters
//! only through covariance bookkeeping (`interactions` tracks v = 2c(f,f)),
//! which keeps this module an exactly testable kernel.

use crate::error::{Error, Result};

/// Largest supported Wick degree; factorials are precomputed below it.
pub const MAX_DEGREE: usize = 40;

fn factorial_table() -> &'static [f64; MAX_DEGREE + 1] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[f64; MAX_DEGREE + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [1.0f64; MAX_DEGREE + 1];
        for i in 1..=MAX_DEGREE {
            t[i] = t[i - 1] * i as f64;
        }
        t
    })
}

fn factorial(n: usize) -> f64 {
    factorial_table()[n]
}

fn check_degree(n: usize) -> Result<()> {
    if n > MAX_DEGREE {
        return Err(Error::DegreeTooLarge(n, MAX_DEGREE));
    }
    Ok(())
}

/// Hermite-type Wick power :y^n:_c.
pub fn wick_power(y: f64, n: usize, c: f64) -> Result<f64> {
    check_degree(n)?;
    let mut acc = 0.0;
    for m in 0..=(n / 2) {
        let coeff = factorial(n) / (factorial(m) * factorial(n - 2 * m));
        acc += coeff * y.powi((n - 2 * m) as i32) * (-0.5 * c).powi(m as i32);
    }
    Ok(acc)
}

/// Wick exponential :e^{αy}:_c = e^{αy - α²c/2}.
pub fn wick_exp(y: f64, alpha: f64, c: f64) -> f64 {
    (alpha * y - 0.5 * alpha * alpha * c).exp()
}

/// A polynomial Σ_j a_j :y^j:_c with its ordering covariance attached.
#[derive(Clone, Debug, PartialEq)]
pub struct WickPolynomial {
    /// a_0..a_deg in the :y^j:_c basis.
    pub coeffs: Vec<f64>,
    /// Ordering covariance c >= 0.
    pub covariance: f64,
}

impl WickPolynomial {
    pub fn new(coeffs: Vec<f64>, covariance: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("empty coefficient list".into()));
        }
        check_degree(coeffs.len() - 1)?;
        if covariance < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "ordering covariance {covariance} must be >= 0"
            )));
        }
        Ok(WickPolynomial { coeffs, covariance })
    }

    /// An interaction polynomial additionally has even degree and positive
    /// leading coefficient (bounded from below).
    pub fn new_interaction(coeffs: Vec<f64>, covariance: f64) -> Result<Self> {
        let p = Self::new(coeffs, covariance)?;
        let deg = p.degree();
        if deg % 2 != 0 || p.coeffs[deg] <= 0.0 {
            return Err(Error::InvalidParameter(
                "interaction polynomial needs even degree and positive leading coefficient"
                    .into(),
            ));
        }
        Ok(p)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluate Σ_j a_j :y^j:_c at a sample value y.
    pub fn eval(&self, y: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, &a)| a * wick_power(y, j, self.covariance).expect("degree checked"))
            .sum()
    }

    /// Evaluate as a plain polynomial in y (Wick orderings expanded out).
    pub fn plain_coeffs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs.len()];
        for (n, &a) in self.coeffs.iter().enumerate() {
            for m in 0..=(n / 2) {
                let coeff = factorial(n) / (factorial(m) * factorial(n - 2 * m));
                out[n - 2 * m] += a * coeff * (-0.5 * self.covariance).powi(m as i32);
            }
        }
        out
    }
}

/// Reorder Σ a_j :y^j:_{c_from} into the :y^j:_{c_to} basis; degree and
/// leading coefficient are preserved, the correction is lower order.
pub fn reorder(p: &WickPolynomial, c_to: f64) -> Result<WickPolynomial> {
    let shift = -0.5 * (p.covariance - c_to);
    let mut out = vec![0.0; p.coeffs.len()];
    for (n, &a) in p.coeffs.iter().enumerate() {
        for m in 0..=(n / 2) {
            let coeff = factorial(n) / (factorial(m) * factorial(n - 2 * m));
            out[n - 2 * m] += a * coeff * shift.powi(m as i32);
        }
    }
    WickPolynomial::new(out, c_to)
}

/// Exact Gaussian pairing E[:y^n:_{v_ff} :z^n:_{v_gg}] = n! v_fg^n, valid
/// when the ordering covariances equal the true variances; the input
/// covariance block must be PSD.
pub fn pair_inner(n: usize, v_ff: f64, v_gg: f64, v_fg: f64) -> Result<f64> {
    check_degree(n)?;
    if v_ff < 0.0 || v_gg < 0.0 || v_fg * v_fg > v_ff * v_gg * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "({v_ff}, {v_gg}, {v_fg}) is not a PSD covariance block"
        )));
    }
    Ok(factorial(n) * v_fg.powi(n as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_pair;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn low_degree_expansions() {
        for &(y, c) in &[(0.3, 0.7), (-1.2, 2.0), (2.0, 0.0), (0.9, 1.3)] {
            assert_relative_eq!(wick_power(y, 2, c).unwrap(), y * y - c, epsilon = 1e-14);
            assert_relative_eq!(
                wick_power(y, 3, c).unwrap(),
                y.powi(3) - 3.0 * c * y,
                epsilon = 1e-13
            );
            assert_relative_eq!(
                wick_power(y, 4, c).unwrap(),
                y.powi(4) - 6.0 * c * y * y + 3.0 * c * c,
                epsilon = 1e-13
            );
        }
        assert!(wick_power(1.0, MAX_DEGREE + 1, 1.0).is_err());
    }

    #[test]
    fn wick_exp_examples_and_series() {
        assert_relative_eq!(wick_exp(3.0, 0.0, 2.0), 1.0);
        assert_relative_eq!(wick_exp(0.0, 1.0, 2.0), 0.36787944117144233, epsilon = 1e-15);
        // Truncated generating series on |α| <= 1, |y| <= 2, c <= 2: the
        // N = 20 tail sits near 7e-9 at the domain corner (the alternating
        // Hermite terms cancel slowly), N = 30 is comfortably below 1e-10.
        for &(y, alpha, c) in
            &[(2.0f64, 1.0f64, 2.0f64), (-2.0, 1.0, 1.5), (0.5, -1.0, 0.3), (1.0, 1.0, 1.0)]
        {
            let partial = |n_max: usize| -> f64 {
                (0..=n_max)
                    .map(|n| {
                        alpha.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>()
                            * wick_power(y, n, c).unwrap()
                    })
                    .sum()
            };
            let exact = wick_exp(y, alpha, c);
            assert!((partial(20) - exact).abs() <= 1e-8, "N=20 tail at ({y},{alpha},{c})");
            assert!((partial(30) - exact).abs() <= 1e-10, "N=30 tail at ({y},{alpha},{c})");
        }
    }

    #[test]
    fn reorder_examples() {
        // identity when covariances agree.
        let p = WickPolynomial::new(vec![0.5, -1.0, 2.0, 0.0, 1.0], 0.8).unwrap();
        let q = reorder(&p, 0.8).unwrap();
        assert_eq!(p.coeffs, q.coeffs);
        // :y²:_{c2} = :y²:_{c1} - (c2 - c1), reading c2 = 0.3, c1 = 1.1.
        let p = WickPolynomial::new(vec![0.0, 0.0, 1.0], 0.3).unwrap();
        let q = reorder(&p, 1.1).unwrap();
        assert_relative_eq!(q.coeffs[0], -(0.3 - 1.1), epsilon = 1e-14);
        assert_relative_eq!(q.coeffs[2], 1.0);
        // reordering never changes the value as a function of y.
        let p = WickPolynomial::new(vec![0.2, -0.7, 0.0, 1.5, 0.3], 0.6).unwrap();
        let q = reorder(&p, 1.9).unwrap();
        for &y in &[-2.0, -0.3, 0.0, 1.1, 2.7] {
            assert_relative_eq!(p.eval(y), q.eval(y), epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn reorder_roundtrip(coeffs in proptest::collection::vec(-3.0..3.0f64, 1..8),
                             c1 in 0.0..3.0f64, c2 in 0.0..3.0f64) {
            let p = WickPolynomial::new(coeffs, c1).unwrap();
            let rt = reorder(&reorder(&p, c2).unwrap(), c1).unwrap();
            for (a, b) in p.coeffs.iter().zip(&rt.coeffs) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn reorder_difference_is_lower_degree(deg in 1usize..8,
                                              c1 in 0.0..2.0f64, c2 in 0.0..2.0f64) {
            let mut coeffs = vec![0.0; deg + 1];
            coeffs[deg] = 1.0;
            let p = WickPolynomial::new(coeffs, c1).unwrap();
            let q = reorder(&p, c2).unwrap();
            prop_assert_eq!(q.degree(), deg);
            prop_assert!((q.coeffs[deg] - 1.0).abs() < 1e-14);
            if deg >= 1 {
                // the difference in the c2 basis has degree <= deg - 2
                prop_assert!((q.coeffs[deg - 1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pair_inner_examples() {
        assert_relative_eq!(pair_inner(0, 1.0, 1.0, 0.3).unwrap(), 1.0);
        assert_relative_eq!(pair_inner(1, 1.0, 1.0, 0.45).unwrap(), 0.45);
        assert_relative_eq!(pair_inner(3, 1.0, 1.0, 0.5).unwrap(), 0.75, epsilon = 1e-14);
        assert!(pair_inner(2, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn pair_inner_matches_bivariate_mc() {
        // E[:y³::z³:] = 3! v_fg³ against Monte Carlo over a correlated pair.
        let (vff, vgg, vfg) = (1.0, 1.0, 0.5);
        let exact = pair_inner(3, vff, vgg, vfg).unwrap();
        let n = 400_000u64;
        let (mut acc, mut acc2) = (0.0, 0.0);
        let b = (vgg - vfg * vfg / vff).sqrt();
        for i in 0..n {
            let (g1, g2) = gaussian_pair(4242, i, 0, 0);
            let y = vff.sqrt() * g1;
            let z = vfg / vff.sqrt() * g1 + b * g2;
            let p = wick_power(y, 3, vff).unwrap() * wick_power(z, 3, vgg).unwrap();
            acc += p;
            acc2 += p * p;
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - exact).abs() < 5.0 * se, "{mean} vs {exact} ± {se}");
        // cross-degree pairings vanish: E[:y²::z³:] = 0.
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for i in 0..n {
            let (g1, g2) = gaussian_pair(4243, i, 0, 0);
            let y = g1;
            let z = vfg * g1 + b * g2;
            let p = wick_power(y, 2, 1.0).unwrap() * wick_power(z, 3, vgg).unwrap();
            acc += p;
            acc2 += p * p;
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean.abs() < 5.0 * se, "cross degree {mean} ± {se}");
    }
}
