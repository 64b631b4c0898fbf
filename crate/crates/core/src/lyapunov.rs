//! Stability analysis and steady states of `dV/dt = AV + VAᵀ + Q`.
//!
//! Two independent direct solvers are kept: a real-Schur (Bartels–Stewart)
//! reduction for general use and a Kronecker-vectorized dense solve for small
//! problems, which the tests use as an oracle for the first. Time evolution is
//! fixed-step RK4.

use std::io::Write;

use nalgebra::{DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::gaussian::{is_physical, PHYSICAL_TOL_INTEGRATED};
use crate::matrix::{all_finite, asymmetry, max_abs, symmetrize, RMat};

/// Eigenvalues with real part in `[−HURWITZ_TOL, ∞)` count as unstable.
pub const HURWITZ_TOL: f64 = 1e-9;
/// Largest dimension accepted by the Kronecker solver.
pub const KRONECKER_MAX_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex64>,
    pub max_real: f64,
    pub hurwitz: bool,
}

impl SpectralReport {
    /// Eigenvalue with the largest real part.
    pub fn rightmost(&self) -> Complex64 {
        self.eigenvalues
            .iter()
            .copied()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap_or_default()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }
}

// QR iteration at machine-epsilon deflation occasionally stalls; a slightly
// looser threshold converges and the solver residual check still applies.
fn schur(a: &RMat) -> Result<Schur<f64, nalgebra::Dyn>> {
    [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12]
        .iter()
        .find_map(|&eps| Schur::try_new(a.clone(), eps, 5_000))
        .ok_or_else(|| Error::NumericalFailure("real Schur decomposition did not converge".into()))
}

/// Full spectrum of `a` and whether every eigenvalue has `Re λ < −HURWITZ_TOL`.
pub fn is_hurwitz(a: &RMat) -> Result<SpectralReport> {
    if !a.is_square() {
        return Err(invalid("drift matrix must be square"));
    }
    if !all_finite(a) {
        return Err(invalid("drift matrix has non-finite entries"));
    }
    if a.nrows() == 0 {
        return Ok(SpectralReport { eigenvalues: vec![], max_real: f64::NEG_INFINITY, hurwitz: true });
    }
    let eigenvalues: Vec<Complex64> = schur(a)?.complex_eigenvalues().iter().copied().collect();
    let max_real = eigenvalues.iter().fold(f64::NEG_INFINITY, |acc, z| acc.max(z.re));
    Ok(SpectralReport { eigenvalues, max_real, hurwitz: max_real < -HURWITZ_TOL })
}

/// `A V + V Aᵀ + Q = 0` with `Q = Qᵀ ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovProblem {
    pub a: RMat,
    pub q: RMat,
}

impl LyapunovProblem {
    pub fn new(a: RMat, q: RMat) -> Result<Self> {
        check_shapes(&a, &q)?;
        if asymmetry(&q) > 1e-10 {
            return Err(invalid("inhomogeneity Q is not symmetric"));
        }
        let q = symmetrize(&q);
        if q.nrows() > 0 {
            let min = SymmetricEigen::new(q.clone()).eigenvalues.min();
            if min < -1e-10 * (1.0 + max_abs(&q)) {
                return Err(invalid(format!("inhomogeneity Q is not positive semidefinite ({min:e})")));
            }
        }
        Ok(LyapunovProblem { a, q })
    }

    /// Problem for diffusion matrix `B`: `Q = BBᵀ/2`.
    pub fn from_diffusion(a: RMat, b: &RMat) -> Result<Self> {
        Self::new(a, symmetrize(&(b * b.transpose() * 0.5)))
    }

    pub fn solve(&self) -> Result<RMat> {
        solve_lyapunov(&self.a, &self.q)
    }

    pub fn solve_kronecker(&self) -> Result<RMat> {
        solve_lyapunov_kronecker(&self.a, &self.q)
    }

    pub fn residual(&self, v: &RMat) -> f64 {
        lyapunov_residual(&self.a, &self.q, v)
    }
}

fn check_shapes(a: &RMat, q: &RMat) -> Result<()> {
    if !a.is_square() || !q.is_square() || a.nrows() != q.nrows() {
        return Err(invalid(format!(
            "shape mismatch: A is {:?}, Q is {:?}",
            a.shape(),
            q.shape()
        )));
    }
    if !all_finite(a) || !all_finite(q) {
        return Err(invalid("non-finite entries"));
    }
    Ok(())
}

/// `‖AV + VAᵀ + Q‖∞` (entrywise).
pub fn lyapunov_residual(a: &RMat, q: &RMat, v: &RMat) -> f64 {
    max_abs(&(a * v + v * a.transpose() + q))
}

fn residual_ok(a: &RMat, q: &RMat, v: &RMat) -> Result<()> {
    let res = lyapunov_residual(a, q, v);
    let bound = 1e-9 * (1.0 + max_abs(q));
    if !(res <= bound) {
        return Err(Error::NumericalFailure(format!(
            "Lyapunov residual {res:e} exceeds {bound:e}"
        )));
    }
    Ok(())
}

fn require_hurwitz(a: &RMat) -> Result<()> {
    let report = is_hurwitz(a)?;
    if !report.hurwitz {
        return Err(Error::NoUniqueSteadyState { eigenvalue: report.rightmost() });
    }
    Ok(())
}

/// Solves `AV + VAᵀ + Q = 0` by real Schur reduction (Bartels–Stewart).
///
/// With `A = Z T Zᵀ` the equation becomes `T Y + Y Tᵀ = −Zᵀ Q Z`. Since `Tᵀ`
/// is block lower triangular, the columns of `Y` are recovered from the last
/// to the first, one 1×1 or 2×2 diagonal block of `T` at a time.
pub fn solve_lyapunov(a: &RMat, q: &RMat) -> Result<RMat> {
    check_shapes(a, q)?;
    require_hurwitz(a)?;
    let dim = a.nrows();
    if dim == 0 {
        return Ok(RMat::zeros(0, 0));
    }
    let (z, t) = schur(a)?.unpack();
    let f = z.transpose() * q * &z;
    let mut y = RMat::zeros(dim, dim);

    // diagonal block boundaries of the quasi-triangular factor
    let mut blocks = Vec::new();
    let mut j = 0;
    while j < dim {
        if j + 1 < dim && t[(j + 1, j)] != 0.0 {
            blocks.push((j, 2));
            j += 2;
        } else {
            blocks.push((j, 1));
            j += 1;
        }
    }

    let eye = RMat::identity(dim, dim);
    for &(j, size) in blocks.iter().rev() {
        // rhs_c = −f_c − Σ_{k beyond block} T[c, k] y_k
        let mut rhs = Vec::with_capacity(size);
        for c in j..j + size {
            let mut r = -f.column(c).into_owned();
            for k in (j + size)..dim {
                let tck = t[(c, k)];
                if tck != 0.0 {
                    r -= y.column(k) * tck;
                }
            }
            rhs.push(r);
        }
        if size == 1 {
            let m = &t + &eye * t[(j, j)];
            let sol = m
                .lu()
                .solve(&rhs[0])
                .ok_or_else(|| Error::NumericalFailure("singular Schur block system".into()))?;
            y.set_column(j, &sol);
        } else {
            let mut m = RMat::zeros(2 * dim, 2 * dim);
            m.view_mut((0, 0), (dim, dim)).copy_from(&(&t + &eye * t[(j, j)]));
            m.view_mut((0, dim), (dim, dim)).copy_from(&(&eye * t[(j, j + 1)]));
            m.view_mut((dim, 0), (dim, dim)).copy_from(&(&eye * t[(j + 1, j)]));
            m.view_mut((dim, dim), (dim, dim)).copy_from(&(&t + &eye * t[(j + 1, j + 1)]));
            let mut r = DVector::zeros(2 * dim);
            r.rows_mut(0, dim).copy_from(&rhs[0]);
            r.rows_mut(dim, dim).copy_from(&rhs[1]);
            let sol = m
                .lu()
                .solve(&r)
                .ok_or_else(|| Error::NumericalFailure("singular Schur block system".into()))?;
            y.set_column(j, &sol.rows(0, dim));
            y.set_column(j + 1, &sol.rows(dim, dim));
        }
    }

    let v = symmetrize(&(&z * y * z.transpose()));
    residual_ok(a, q, &v)?;
    Ok(v)
}

/// Solves `AV + VAᵀ + Q = 0` as `(I ⊗ A + A ⊗ I) vec V = −vec Q`.
///
/// Dense in `N²` unknowns, so limited to `N ≤ KRONECKER_MAX_DIM`.
pub fn solve_lyapunov_kronecker(a: &RMat, q: &RMat) -> Result<RMat> {
    check_shapes(a, q)?;
    let dim = a.nrows();
    if dim > KRONECKER_MAX_DIM {
        return Err(invalid(format!("Kronecker solver limited to N ≤ {KRONECKER_MAX_DIM}, got {dim}")));
    }
    require_hurwitz(a)?;
    let eye = RMat::identity(dim, dim);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    // nalgebra storage is column-major, which is exactly vec()
    let rhs = DVector::from_iterator(dim * dim, q.iter().map(|v| -v));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular Kronecker operator".into()))?;
    let v = symmetrize(&RMat::from_column_slice(dim, dim, sol.as_slice()));
    residual_ok(a, q, &v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationPolicy {
    /// RK4 step (units of 1/μ).
    pub step: f64,
    pub horizon: f64,
    /// Stop once `‖dV/dt‖∞` drops below this.
    pub convergence_tol: f64,
    /// Record one trajectory sample every this many steps.
    pub sample_every: usize,
}

impl Default for IntegrationPolicy {
    fn default() -> Self {
        IntegrationPolicy { step: 1e-2, horizon: 100.0, convergence_tol: 1e-10, sample_every: 10 }
    }
}

impl IntegrationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.horizon > 0.0) || !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidPolicy("step, horizon and convergence_tol must be positive".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidPolicy("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks `step ≤ 0.1/ρ(A)`.
    pub fn validate_for(&self, a: &RMat) -> Result<()> {
        self.validate()?;
        let rho = is_hurwitz(a)?.spectral_radius();
        if rho > 0.0 && self.step > 0.1 / rho {
            return Err(Error::InvalidPolicy(format!(
                "step {} exceeds 0.1/ρ(A) = {}",
                self.step,
                0.1 / rho
            )));
        }
        Ok(())
    }

    /// Largest admissible step for `a`, capped at `cap`.
    pub fn max_step_for(a: &RMat, cap: f64) -> Result<f64> {
        let rho = is_hurwitz(a)?.spectral_radius();
        Ok(if rho > 0.0 { cap.min(0.1 / rho) } else { cap })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub samples: Vec<RMat>,
    pub final_time: f64,
    pub final_v: RMat,
    /// Whether the derivative threshold (or the caller's stop condition) was
    /// reached before the horizon.
    pub converged: bool,
}

impl Trajectory {
    /// CSV with header `t,v_i_j,...` over the upper triangle.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.final_v.nrows();
        let mut header = vec!["t".to_string()];
        for i in 0..dim {
            for j in i..dim {
                header.push(format!("v_{i}_{j}"));
            }
        }
        w.write_record(&header)?;
        for (t, v) in self.times.iter().zip(&self.samples) {
            let mut row = vec![format!("{t}")];
            for i in 0..dim {
                for j in i..dim {
                    row.push(format!("{:e}", v[(i, j)]));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn derivative(a: &RMat, d: &RMat, v: &RMat) -> RMat {
    let av = a * v;
    &av + av.transpose() + d
}

/// One classic RK4 step of `dV/dt = AV + VAᵀ + D`, re-symmetrized.
pub fn rk4_step(a: &RMat, d: &RMat, v: &RMat, h: f64) -> RMat {
    let k1 = derivative(a, d, v);
    let k2 = derivative(a, d, &(v + &k1 * (h / 2.0)));
    let k3 = derivative(a, d, &(v + &k2 * (h / 2.0)));
    let k4 = derivative(a, d, &(v + &k3 * h));
    symmetrize(&(v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

const DIVERGENCE_NORM: f64 = 1e12;

/// RK4 integration of `dV/dt = AV + VAᵀ + BBᵀ/2` from `v0`, stopping at the
/// horizon or when `‖dV/dt‖∞ < policy.convergence_tol`.
pub fn integrate_covariance(a: &RMat, b: &RMat, v0: &RMat, policy: &IntegrationPolicy) -> Result<Trajectory> {
    let tol = policy.convergence_tol;
    integrate_until(a, b, v0, policy, |_, _, dv| max_abs(dv) < tol)
}

/// Same integrator with a caller-supplied stop condition `stop(t, V, dV/dt)`,
/// evaluated before every step (so an initial fixed point costs no steps).
pub fn integrate_until<F>(a: &RMat, b: &RMat, v0: &RMat, policy: &IntegrationPolicy, mut stop: F) -> Result<Trajectory>
where
    F: FnMut(f64, &RMat, &RMat) -> bool,
{
    let dim = a.nrows();
    if !a.is_square() || b.nrows() != dim || v0.shape() != (dim, dim) {
        return Err(invalid("shape mismatch between A, B and V0"));
    }
    policy.validate_for(a)?;
    if !is_physical(v0, PHYSICAL_TOL_INTEGRATED)? {
        return Err(Error::InvalidCovariance("initial covariance is not physical".into()));
    }
    let d = symmetrize(&(b * b.transpose() * 0.5));
    let h = policy.step;
    let mut v = symmetrize(v0);
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut samples = vec![v.clone()];
    let mut steps = 0usize;
    let mut converged = false;
    loop {
        let dv = derivative(a, &d, &v);
        if stop(t, &v, &dv) {
            converged = true;
            break;
        }
        if t + 0.5 * h > policy.horizon {
            break;
        }
        v = rk4_step(a, &d, &v, h);
        steps += 1;
        t = steps as f64 * h;
        let norm = max_abs(&v);
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::UnstableIntegration { t, norm });
        }
        if steps % policy.sample_every == 0 {
            times.push(t);
            samples.push(v.clone());
        }
    }
    if times.last() != Some(&t) {
        times.push(t);
        samples.push(v.clone());
    }
    Ok(Trajectory { times, samples, final_time: t, final_v: v, converged })
}
