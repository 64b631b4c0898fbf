//! Quadrature conventions and covariance-matrix algebra.
//!
//! Quadratures are ordered `x = [q_1..q_n, p_1..p_n]` and the vacuum has
//! covariance `I/2`. Every matrix in the crate is expressed in this basis.

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::matrix::{all_finite_c, asymmetry, max_abs_c, symmetrize, CMat, RMat};

/// Tolerance on the smallest symplectic eigenvalue for a covariance to count
/// as physical.
pub const PHYSICAL_TOL: f64 = 1e-9;
/// Looser physicality tolerance for covariances produced by long integrations.
pub const PHYSICAL_TOL_INTEGRATED: f64 = 1e-6;
/// Covariances more asymmetric than this are rejected rather than symmetrized.
pub const ASYMMETRY_TOL: f64 = 1e-8;

/// `Σ_n = [[0, I], [−I, 0]]`.
pub fn sigma(n: usize) -> RMat {
    let mut s = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(i, n + i)] = 1.0;
        s[(n + i, i)] = -1.0;
    }
    s
}

/// Number of modes for a `2n`-dimensional phase-space matrix.
pub fn modes_of(dim: usize) -> Result<usize> {
    if dim == 0 || dim % 2 != 0 {
        return Err(invalid(format!("phase-space dimension {dim} is not a positive even number")));
    }
    Ok(dim / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: RMat,
}

impl GaussianState {
    /// Symmetrizes `cov`; rejects it if its asymmetry exceeds [`ASYMMETRY_TOL`].
    pub fn new(mean: DVector<f64>, cov: RMat) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::InvalidCovariance("covariance is not square".into()));
        }
        modes_of(cov.nrows())?;
        if mean.len() != cov.nrows() {
            return Err(invalid("mean length does not match covariance dimension"));
        }
        if !cov.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        let asym = asymmetry(&cov);
        if asym > ASYMMETRY_TOL {
            return Err(Error::InvalidCovariance(format!("asymmetry {asym:e} above tolerance")));
        }
        Ok(GaussianState { mean, cov: symmetrize(&cov) })
    }

    pub fn zero_mean(cov: RMat) -> Result<Self> {
        let dim = cov.nrows();
        Self::new(DVector::zeros(dim), cov)
    }

    pub fn vacuum(n: usize) -> Self {
        GaussianState {
            mean: DVector::zeros(2 * n),
            cov: RMat::identity(2 * n, 2 * n) * 0.5,
        }
    }

    pub fn modes(&self) -> usize {
        self.cov.nrows() / 2
    }

    pub fn purity(&self) -> Result<f64> {
        purity(&self.cov)
    }

    pub fn is_physical(&self, tol: f64) -> Result<bool> {
        is_physical(&self.cov, tol)
    }
}

/// Complex coupling matrix `C` (`L = Cx`) together with its real image
/// `C̄ = √2 [Re(iC); Im(iC)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexCoupling {
    c: CMat,
    cbar: RMat,
}

impl ComplexCoupling {
    pub fn new(c: CMat) -> Result<Self> {
        modes_of(c.ncols())?;
        let cbar = build_cbar(&c)?;
        Ok(ComplexCoupling { c, cbar })
    }

    /// Coupling whose `k`-th output is `−i Σ_j (α_kj a_j + β_kj a_j†)`, so that
    /// `H = i(ã†Cx − h.c.) = Σ_k ã_k† Σ_j (α_kj a_j + β_kj a_j†) + h.c.`.
    ///
    /// `alpha` and `beta` are `m × n` mode-operator coefficient matrices.
    pub fn from_mode_operators(alpha: &CMat, beta: &CMat) -> Result<Self> {
        if alpha.shape() != beta.shape() {
            return Err(invalid("alpha and beta shapes differ"));
        }
        let (m, n) = alpha.shape();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let i = Complex64::i();
        let mut ic = CMat::zeros(m, 2 * n);
        for k in 0..m {
            for j in 0..n {
                let (a, b) = (alpha[(k, j)], beta[(k, j)]);
                // a = (q + ip)/√2, a† = (q − ip)/√2
                ic[(k, j)] = (a + b) * s;
                ic[(k, n + j)] = (a - b) * i * s;
            }
        }
        Self::new(ic * (-i))
    }

    pub fn c(&self) -> &CMat {
        &self.c
    }

    pub fn cbar(&self) -> &RMat {
        &self.cbar
    }

    /// Number of output channels `m`.
    pub fn channels(&self) -> usize {
        self.c.nrows()
    }

    pub fn modes(&self) -> usize {
        self.c.ncols() / 2
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.c.map(|z| z * s))
    }

    /// Stacks the rows of `other` below those of `self`.
    pub fn stacked(&self, other: &ComplexCoupling) -> Result<Self> {
        if self.c.ncols() != other.c.ncols() {
            return Err(invalid("couplings act on different mode counts"));
        }
        let (m1, m2) = (self.c.nrows(), other.c.nrows());
        let mut c = CMat::zeros(m1 + m2, self.c.ncols());
        c.rows_mut(0, m1).copy_from(&self.c);
        c.rows_mut(m1, m2).copy_from(&other.c);
        Self::new(c)
    }
}

/// `C̄ = √2 [Re(iC); Im(iC)]`: first `m` rows from the real part, next `m`
/// from the imaginary part.
pub fn build_cbar(c: &CMat) -> Result<RMat> {
    if !all_finite_c(c) {
        return Err(invalid("coupling matrix has non-finite entries"));
    }
    let (m, cols) = c.shape();
    let rt2 = std::f64::consts::SQRT_2;
    let mut out = RMat::zeros(2 * m, cols);
    for k in 0..m {
        for j in 0..cols {
            let z = c[(k, j)] * Complex64::i();
            out[(k, j)] = rt2 * z.re;
            out[(m + k, j)] = rt2 * z.im;
        }
    }
    Ok(out)
}

/// `1/√(2^{2n} det V)`.
pub fn purity(v: &RMat) -> Result<f64> {
    let n = modes_of(v.nrows())?;
    let det = v.determinant();
    if det.is_nan() || det <= 0.0 {
        return Err(Error::InvalidCovariance(format!("determinant {det:e} is not positive")));
    }
    // (2^{2n} det V)^{-1/2} = Π over n of 1/2 times det^{-1/2}
    Ok(1.0 / ((4.0f64).powi(n as i32) * det).sqrt())
}

/// `S = [[Re U, −Im U], [Im U, Re U]]` for the mode rotation `a' = U a`.
pub fn symplectic_from_unitary(u: &CMat) -> Result<RMat> {
    if !u.is_square() {
        return Err(invalid("unitary must be square"));
    }
    let n = u.nrows();
    let defect = max_abs_c(&(u * u.adjoint() - CMat::identity(n, n)));
    if !(defect <= 1e-9) {
        return Err(invalid(format!("matrix is not unitary (‖UU† − I‖ = {defect:e})")));
    }
    let mut s = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = u[(i, j)];
            s[(i, j)] = z.re;
            s[(i, n + j)] = -z.im;
            s[(n + i, j)] = z.im;
            s[(n + i, n + j)] = z.re;
        }
    }
    Ok(s)
}

fn sqrt_spd(v: &RMat) -> Result<RMat> {
    let eig = SymmetricEigen::new(v.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::InvalidCovariance(format!(
            "covariance is not positive definite (min eigenvalue {min:e})"
        )));
    }
    let sq = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * RMat::from_diagonal(&sq) * eig.eigenvectors.transpose())
}

/// Symplectic eigenvalues of `V`, ascending, one per mode.
///
/// They are the moduli of the eigenvalues of `iΣV`, obtained here from the
/// Hermitian matrix `i V^{1/2} Σ V^{1/2}` whose spectrum is `±ν_k`.
pub fn symplectic_eigenvalues(v: &RMat) -> Result<Vec<f64>> {
    let n = modes_of(v.nrows())?;
    if asymmetry(v) > ASYMMETRY_TOL {
        return Err(Error::InvalidCovariance("covariance is not symmetric".into()));
    }
    let root = sqrt_spd(&symmetrize(v))?;
    let m = &root * sigma(n) * &root;
    let h = m.map(|x| Complex64::new(0.0, x));
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev[n..].to_vec())
}

/// `V + (i/2)Σ ⪰ 0`, tested as every symplectic eigenvalue ≥ 1/2 − tol.
pub fn is_physical(v: &RMat, tol: f64) -> Result<bool> {
    match symplectic_eigenvalues(v) {
        Ok(nu) => Ok(nu.iter().all(|&x| x >= 0.5 - tol)),
        Err(Error::InvalidCovariance(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Haar-ish random unitary from the QR decomposition of a complex Gaussian
/// matrix with the diagonal phases of R removed.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        let mut col = u.column_mut(j);
        col *= phase;
    }
    u
}

/// Random symplectic `O₁ · diag(e^{−s}, e^{s}) · O₂` with independent
/// single-mode squeezings `s_k ∈ [−max_squeeze, max_squeeze]`.
pub fn random_symplectic<R: Rng + ?Sized>(rng: &mut R, n: usize, max_squeeze: f64) -> RMat {
    let o1 = symplectic_from_unitary(&random_unitary(rng, n)).expect("random unitary");
    let o2 = symplectic_from_unitary(&random_unitary(rng, n)).expect("random unitary");
    let mut d = RMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        let s = rng.random_range(-max_squeeze..=max_squeeze);
        d[(k, k)] = (-s).exp();
        d[(n + k, n + k)] = s.exp();
    }
    o1 * d * o2
}

/// Random pure covariance `S Sᵀ / 2`.
pub fn random_pure_covariance<R: Rng + ?Sized>(rng: &mut R, n: usize, max_squeeze: f64) -> RMat {
    let s = random_symplectic(rng, n, max_squeeze);
    symmetrize(&(&s * s.transpose() * 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sigma_identities() {
        for n in 1..5 {
            let s = sigma(n);
            assert_eq!(s.transpose(), -&s);
            assert_eq!(&s * &s, -RMat::identity(2 * n, 2 * n));
        }
    }

    #[test]
    fn cbar_of_zero_is_zero() {
        let cb = build_cbar(&CMat::zeros(1, 2)).unwrap();
        assert_eq!(cb, RMat::zeros(2, 2));
    }

    #[test]
    fn cbar_single_mode_squeezer() {
        let (mu, r) = (1.3, 0.6);
        let s = mu / std::f64::consts::SQRT_2;
        let cm = CMat::from_row_slice(1, 2, &[c(s * (1.0 + r), 0.0), c(0.0, s * (1.0 - r))]);
        let expected = RMat::from_row_slice(2, 2, &[0.0, -mu * (1.0 - r), mu * (1.0 + r), 0.0]);
        assert!(max_abs(&(build_cbar(&cm).unwrap() - expected)) < 1e-14);
    }

    #[test]
    fn cbar_rejects_nan() {
        let cm = CMat::from_element(1, 2, c(f64::NAN, 0.0));
        assert!(matches!(build_cbar(&cm), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn mode_operator_coupling_matches_direct_form() {
        // α = 1, β = r gives C ∝ [1 + r, i(1 − r)] up to a global phase −i.
        let r = 0.8;
        let cp = ComplexCoupling::from_mode_operators(
            &CMat::from_element(1, 1, c(1.0, 0.0)),
            &CMat::from_element(1, 1, c(r, 0.0)),
        )
        .unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let direct = CMat::from_row_slice(1, 2, &[c(s * (1.0 + r), 0.0), c(0.0, s * (1.0 - r))]);
        assert!(max_abs_c(&(cp.c() * Complex64::i() - direct)) < 1e-15);
    }

    #[test]
    fn purity_examples() {
        assert_abs_diff_eq!(purity(&(RMat::identity(2, 2) * 0.5)).unwrap(), 1.0, epsilon = 1e-15);
        let xi: f64 = 0.7;
        let sq = RMat::from_diagonal(&DVector::from_vec(vec![(-2.0 * xi).exp() / 2.0, (2.0 * xi).exp() / 2.0]));
        assert_abs_diff_eq!(purity(&sq).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(purity(&RMat::identity(2, 2)).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(purity(&RMat::zeros(2, 2)), Err(Error::InvalidCovariance(_))));
    }

    #[test]
    fn symplectic_from_unitary_examples() {
        assert_eq!(symplectic_from_unitary(&CMat::identity(3, 3)).unwrap(), RMat::identity(6, 6));
        let s = symplectic_from_unitary(&CMat::from_element(1, 1, c(0.0, 1.0))).unwrap();
        assert_eq!(s, RMat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let bad = CMat::from_element(1, 1, c(2.0, 0.0));
        assert!(symplectic_from_unitary(&bad).is_err());
    }

    #[test]
    fn random_symplectics_are_symplectic_and_orthogonal_when_unsqueezed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..6 {
            let s = symplectic_from_unitary(&random_unitary(&mut rng, n)).unwrap();
            let sg = sigma(n);
            assert!(max_abs(&(&s * &sg * s.transpose() - &sg)) < 1e-10);
            assert!(max_abs(&(&s * s.transpose() - RMat::identity(2 * n, 2 * n))) < 1e-10);
            let t = random_symplectic(&mut rng, n, 1.0);
            assert!(max_abs(&(&t * &sg * t.transpose() - &sg)) < 1e-10);
        }
    }

    #[test]
    fn symplectic_eigenvalues_examples() {
        for n in 1..4 {
            let nu = symplectic_eigenvalues(&(RMat::identity(2 * n, 2 * n) * 0.5)).unwrap();
            assert_eq!(nu.len(), n);
            assert!(nu.iter().all(|v| (v - 0.5).abs() < 1e-14));
        }
        let sq = RMat::from_diagonal(&DVector::from_vec(vec![(-1.4f64).exp() / 2.0, (1.4f64).exp() / 2.0]));
        assert!((symplectic_eigenvalues(&sq).unwrap()[0] - 0.5).abs() < 1e-14);
        // thermal state with mean occupation 1: ν = 3/2
        let th = RMat::identity(2, 2) * 1.5;
        assert!((symplectic_eigenvalues(&th).unwrap()[0] - 1.5).abs() < 1e-14);
        assert!(symplectic_eigenvalues(&(-RMat::identity(2, 2))).is_err());
    }

    #[test]
    fn physicality() {
        assert!(is_physical(&(RMat::identity(4, 4) * 0.5), PHYSICAL_TOL).unwrap());
        assert!(!is_physical(&(RMat::identity(4, 4) * 0.4), PHYSICAL_TOL).unwrap());
        assert!(!is_physical(&RMat::zeros(2, 2), PHYSICAL_TOL).unwrap());
    }

    #[test]
    fn state_construction_symmetrizes_and_rejects() {
        let mut v = RMat::identity(2, 2) * 0.5;
        v[(0, 1)] = 1e-10;
        let st = GaussianState::zero_mean(v.clone()).unwrap();
        assert_eq!(st.cov[(0, 1)], st.cov[(1, 0)]);
        v[(0, 1)] = 1e-3;
        assert!(matches!(GaussianState::zero_mean(v), Err(Error::InvalidCovariance(_))));
        assert!(GaussianState::zero_mean(RMat::identity(3, 3)).is_err());
    }

    #[test]
    fn purity_and_symplectic_spectrum_agree_on_random_pure_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..6 {
            let v = random_pure_covariance(&mut rng, n, 0.8);
            assert!((purity(&v).unwrap() - 1.0).abs() < 1e-8);
            let nu = symplectic_eigenvalues(&v).unwrap();
            assert!(nu.iter().all(|x| (x - 0.5).abs() < 1e-8), "{nu:?}");
            let mixed = &v * 1.2;
            assert!(purity(&mixed).unwrap() < 1.0 - 1e-3);
            assert!(symplectic_eigenvalues(&mixed).unwrap().iter().all(|x| (x - 0.6).abs() < 1e-8));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cmat(m: usize, cols: usize) -> impl Strategy<Value = CMat> {
            proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), m * cols)
                .prop_map(move |v| CMat::from_iterator(m, cols, v.into_iter().map(|(a, b)| Complex64::new(a, b))))
        }

        proptest! {
            #[test]
            fn cbar_is_real_linear(a in cmat(2, 4), b in cmat(2, 4), s in -3.0..3.0f64) {
                let lhs = build_cbar(&(&a + &b * Complex64::new(s, 0.0))).unwrap();
                let rhs = build_cbar(&a).unwrap() + build_cbar(&b).unwrap() * s;
                prop_assert!(max_abs(&(lhs - rhs)) < 1e-12);
            }

            #[test]
            fn symplectic_invariance_of_spectrum(seed in any::<u64>(), n in 1usize..5, scale in 0.5..3.0f64) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = random_symplectic(&mut rng, n, 0.7);
                let v = RMat::identity(2 * n, 2 * n) * scale;
                let w = symmetrize(&(&s * &v * s.transpose()));
                let nu = symplectic_eigenvalues(&w).unwrap();
                prop_assert!(nu.iter().all(|x| (x - scale).abs() < 1e-8 * scale.max(1.0) * 10.0));
            }
        }
    }
}
