//! Drift/diffusion models and purity certificates.
//!
//! A *target system* has Hamiltonian `H = xᵀGx/2` and coupling `L = Cx`
//! (possibly global), plus optional local damping at rate `γ` on every mode.
//! Its *extended system* replaces `L` by a two-body interaction
//! `i(ã†Cx − h.c.)` with `m` auxiliary modes, each damped at rate `κ`.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{modes_of, purity, sigma, ComplexCoupling};
use crate::lyapunov::{is_hurwitz, solve_lyapunov, SpectralReport};
use crate::matrix::{asymmetry, block2, block_diag, max_abs, max_abs_c, symmetrize, CMat, MatrixJson, RMat};

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSystem {
    g: RMat,
    coupling: ComplexCoupling,
    gamma: f64,
}

impl TargetSystem {
    pub fn new(g: RMat, coupling: ComplexCoupling) -> Result<Self> {
        let n = modes_of(g.nrows())?;
        if !g.is_square() {
            return Err(invalid("G must be square"));
        }
        if coupling.modes() != n {
            return Err(invalid(format!(
                "G acts on {n} modes but C on {}",
                coupling.modes()
            )));
        }
        if asymmetry(&g) > 1e-10 {
            return Err(invalid("G is not symmetric"));
        }
        Ok(TargetSystem { g: symmetrize(&g), coupling, gamma: 0.0 })
    }

    /// Target with `G = 0`.
    pub fn dissipative(coupling: ComplexCoupling) -> Result<Self> {
        let n = coupling.modes();
        Self::new(RMat::zeros(2 * n, 2 * n), coupling)
    }

    /// Adds local damping `L_j = √γ a_j` on every mode.
    pub fn with_decoherence(mut self, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(invalid("decoherence rate must be finite and nonnegative"));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn modes(&self) -> usize {
        self.g.nrows() / 2
    }

    pub fn g(&self) -> &RMat {
        &self.g
    }

    pub fn coupling(&self) -> &ComplexCoupling {
        &self.coupling
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `C` with the decoherence channels `√γ a_j` appended as extra rows.
    pub fn effective_coupling(&self) -> Result<ComplexCoupling> {
        if self.gamma == 0.0 {
            return Ok(self.coupling.clone());
        }
        let n = self.modes();
        let alpha = CMat::identity(n, n) * Complex64::new(self.gamma.sqrt(), 0.0);
        let damping = ComplexCoupling::from_mode_operators(&alpha, &CMat::zeros(n, n))?;
        self.coupling.stacked(&damping)
    }
}

/// `A₁ = Σ(G + C̄ᵀΣ_mC̄/2)`, `B₁ = ΣC̄ᵀ` (decoherence channels included).
pub fn build_target_drift(sys: &TargetSystem) -> Result<(RMat, RMat)> {
    let n = sys.modes();
    let c = sys.effective_coupling()?;
    let cb = c.cbar();
    let m = c.channels();
    let s = sigma(n);
    let a1 = &s * (sys.g() + cb.transpose() * sigma(m) * cb * 0.5);
    let b1 = &s * cb.transpose();
    Ok((a1, b1))
}

/// Steady covariance of the target system alone.
pub fn target_steady_state(sys: &TargetSystem) -> Result<RMat> {
    let (a1, b1) = build_target_drift(sys)?;
    solve_lyapunov(&a1, &symmetrize(&(&b1 * b1.transpose() * 0.5)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedSystem {
    pub target: TargetSystem,
    /// Auxiliary damping rate.
    pub kappa: f64,
}

impl ExtendedSystem {
    pub fn new(target: TargetSystem, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(invalid("kappa must be positive"));
        }
        Ok(ExtendedSystem { target, kappa })
    }

    pub fn auxiliary_modes(&self) -> usize {
        self.target.coupling.channels()
    }
}

/// Extended drift and diffusion
/// `A = [[ΣG − γI/2, ΣC̄ᵀ], [Σ_mC̄, −κI/2]]`, `B = −[0; √κ I]`.
///
/// With target decoherence `γ > 0` the diffusion becomes `diag(√γ I, √κ I)`.
pub fn build_extended_drift(ext: &ExtendedSystem) -> Result<(RMat, RMat)> {
    let t = &ext.target;
    let n = t.modes();
    let m = ext.auxiliary_modes();
    let cb = t.coupling.cbar();
    let (sn, sm) = (sigma(n), sigma(m));
    let top_left = &sn * t.g() - RMat::identity(2 * n, 2 * n) * (t.gamma / 2.0);
    let a = block2(
        &top_left,
        &(&sn * cb.transpose()),
        &(&sm * cb),
        &(RMat::identity(2 * m, 2 * m) * (-ext.kappa / 2.0)),
    )?;
    let b = if t.gamma > 0.0 {
        block_diag(
            &(RMat::identity(2 * n, 2 * n) * t.gamma.sqrt()),
            &(RMat::identity(2 * m, 2 * m) * ext.kappa.sqrt()),
        )
    } else {
        let mut b = RMat::zeros(2 * (n + m), 2 * m);
        b.view_mut((2 * n, 0), (2 * m, 2 * m))
            .copy_from(&(RMat::identity(2 * m, 2 * m) * -ext.kappa.sqrt()));
        b
    };
    Ok((a, b))
}

pub fn extended_steady_state(ext: &ExtendedSystem) -> Result<RMat> {
    let (a, b) = build_extended_drift(ext)?;
    solve_lyapunov(&a, &symmetrize(&(&b * b.transpose() * 0.5)))
}

/// Permutation `P` taking the extended block ordering
/// `[q, p (target) | q, p (auxiliary)]` to the global quadrature ordering
/// `[q, q_aux, p, p_aux]`, so that `P A Pᵀ`, `P V Pᵀ` are in the usual basis.
pub fn extended_permutation(n: usize, m: usize) -> RMat {
    let mut p = RMat::zeros(2 * (n + m), 2 * (n + m));
    let nm = n + m;
    for j in 0..n {
        p[(j, j)] = 1.0;
        p[(nm + j, n + j)] = 1.0;
    }
    for j in 0..m {
        p[(n + j, 2 * n + j)] = 1.0;
        p[(nm + n + j, 2 * n + m + j)] = 1.0;
    }
    p
}

/// Pure-steady-state conditions for a target system.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Certificate {
    pub spectrum: SpectralReport,
    /// `‖(V + iΣ/2)Cᵀ‖∞`
    pub kernel_residual: f64,
    /// `‖ΣGV + V(ΣG)ᵀ‖∞`
    pub hamiltonian_residual: f64,
    pub purity: f64,
    pub tol: f64,
    pub passes: bool,
}

/// Evaluates both pure-steady-state conditions on `v`.
///
/// `A₁` must be Hurwitz so that `v` is the unique steady state.
pub fn check_theorem1(v: &RMat, sys: &TargetSystem, tol: f64) -> Result<Theorem1Certificate> {
    let n = sys.modes();
    if v.shape() != (2 * n, 2 * n) {
        return Err(invalid("covariance dimension does not match the system"));
    }
    let (a1, _) = build_target_drift(sys)?;
    let spectrum = is_hurwitz(&a1)?;
    if !spectrum.hurwitz {
        return Err(Error::NoUniqueSteadyState { eigenvalue: spectrum.rightmost() });
    }
    let s = sigma(n);
    let c = sys.effective_coupling()?;
    let vc = v.map(|x| Complex64::new(x, 0.0)) + s.map(|x| Complex64::new(0.0, 0.5 * x));
    let kernel_residual = max_abs_c(&(vc * c.c().transpose()));
    let sg = &s * sys.g();
    let hamiltonian_residual = max_abs(&(&sg * v + v * sg.transpose()));
    let purity = purity(v)?;
    Ok(Theorem1Certificate {
        spectrum,
        kernel_residual,
        hamiltonian_residual,
        purity,
        tol,
        passes: kernel_residual <= tol && hamiltonian_residual <= tol,
    })
}

/// Solves the target system and certifies its steady state.
pub fn certify_target(sys: &TargetSystem, tol: f64) -> Result<(RMat, Theorem1Certificate)> {
    let v = target_steady_state(sys)?;
    let cert = check_theorem1(&v, sys, tol)?;
    Ok((v, cert))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Certificate {
    pub theorem1: Theorem1Certificate,
    pub spectrum: SpectralReport,
    /// Target-only steady state `V₁`.
    pub target_steady: RMat,
    /// Steady state of the extended system.
    pub extended_steady: RMat,
    /// `‖V₁₂‖∞`
    pub off_diagonal_residual: f64,
    /// `‖V₂ − I/2‖∞`
    pub auxiliary_residual: f64,
    /// `‖V_target − V₁‖∞`
    pub target_residual: f64,
    /// Purity of the extended system's target block.
    pub target_purity: f64,
    pub tol: f64,
    pub passes: bool,
}

/// Solves the extended system and checks that its steady state is
/// `diag(V₁, I/2)` with `V₁` the target system's steady state.
///
/// When the target's steady state is not pure the certificate is still
/// produced (with `passes = false`) so that the block residuals can be
/// inspected; a non-Hurwitz extended drift in that case is reported as
/// [`Error::NoUniqueSteadyState`]. A non-Hurwitz extended drift with a pure
/// target is [`Error::TheoremHypothesisViolated`].
pub fn check_theorem2(ext: &ExtendedSystem, tol: f64) -> Result<Theorem2Certificate> {
    let (target_steady, theorem1) = certify_target(&ext.target, tol)?;
    let (a, b) = build_extended_drift(ext)?;
    let spectrum = is_hurwitz(&a)?;
    if !spectrum.hurwitz {
        return Err(if theorem1.passes {
            Error::TheoremHypothesisViolated(format!(
                "pure target but extended drift has eigenvalue {}",
                spectrum.rightmost()
            ))
        } else {
            Error::NoUniqueSteadyState { eigenvalue: spectrum.rightmost() }
        });
    }
    let v = solve_lyapunov(&a, &symmetrize(&(&b * b.transpose() * 0.5)))?;
    let n2 = 2 * ext.target.modes();
    let m2 = 2 * ext.auxiliary_modes();
    let v1 = v.view((0, 0), (n2, n2)).into_owned();
    let v12 = v.view((0, n2), (n2, m2)).into_owned();
    let v2 = v.view((n2, n2), (m2, m2)).into_owned();
    let off_diagonal_residual = max_abs(&v12);
    let auxiliary_residual = max_abs(&(v2 - RMat::identity(m2, m2) * 0.5));
    let target_residual = max_abs(&(&v1 - &target_steady));
    let target_purity = purity(&v1)?;
    let passes = theorem1.passes
        && off_diagonal_residual <= tol
        && auxiliary_residual <= tol
        && target_residual <= tol;
    Ok(Theorem2Certificate {
        theorem1,
        spectrum,
        target_steady,
        extended_steady: v,
        off_diagonal_residual,
        auxiliary_residual,
        target_residual,
        target_purity,
        tol,
        passes,
    })
}

/// Coupling whose rows span the `n`-dimensional kernel of `V + iΣ/2` for a
/// pure covariance `V`; with `G = 0` it makes `V` the steady state.
pub fn pure_coupling_from_covariance(v: &RMat) -> Result<ComplexCoupling> {
    let n = modes_of(v.nrows())?;
    let s = sigma(n);
    let h = v.map(|x| Complex64::new(x, 0.0)) + s.map(|x| Complex64::new(0.0, 0.5 * x));
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let kernel: Vec<usize> = (0..2 * n).filter(|&k| eig.eigenvalues[k].abs() < 1e-9).collect();
    if kernel.len() != n {
        return Err(Error::InvalidCovariance(format!(
            "V + iΣ/2 has a {}-dimensional kernel, expected {n} (state not pure?)",
            kernel.len()
        )));
    }
    let mut c = CMat::zeros(n, 2 * n);
    for (row, &k) in kernel.iter().enumerate() {
        // (V + iΣ/2) Cᵀ = 0: rows of C are the kernel vectors, unconjugated
        c.row_mut(row).copy_from(&eig.eigenvectors.column(k).transpose());
    }
    ComplexCoupling::new(c)
}

/// Coupling `L = 2Cx/√κ` of the model with the auxiliary modes adiabatically
/// eliminated.
pub fn build_adiabatic_target(sys: &TargetSystem, kappa: f64) -> Result<TargetSystem> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(invalid("kappa must be positive"));
    }
    let coupling = sys.coupling.scaled(2.0 / kappa.sqrt())?;
    TargetSystem::new(sys.g.clone(), coupling)?.with_decoherence(sys.gamma)
}

/// Two atomic ensembles in a two-mode cavity. Rates are in units of `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprParams {
    pub mu: f64,
    pub r: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl EprParams {
    pub fn new(r: f64, kappa: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        let p = EprParams { mu: 1.0, r, kappa, gamma, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu > 0.0
            && (0.0..1.0).contains(&self.r)
            && self.kappa > 0.0
            && self.gamma >= 0.0
            && self.epsilon > 0.0
            && [self.mu, self.r, self.kappa, self.gamma, self.epsilon].iter().all(|v| v.is_finite());
        if !ok {
            return Err(invalid(format!(
                "EPR parameters out of range (need mu > 0, 0 ≤ r < 1, kappa > 0, gamma ≥ 0, epsilon > 0): {self:?}"
            )));
        }
        Ok(())
    }

    /// Squeezing `ξ = atanh r`.
    pub fn xi(&self) -> f64 {
        self.r.atanh()
    }

    /// Target system (ensembles only) with decoherence.
    pub fn target(&self) -> Result<TargetSystem> {
        TargetSystem::dissipative(build_epr_coupling(self)?)?.with_decoherence(self.gamma * self.mu)
    }

    pub fn extended(&self) -> Result<ExtendedSystem> {
        ExtendedSystem::new(self.target()?, self.kappa * self.mu)
    }
}

/// Cavity–ensemble coupling with mode-operator rows
/// `μ(a₁ + εr a₂†)` and `μ(r a₁† + ε a₂)`.
///
/// At `ε = 1` this is `iC = μ/√2 [[1, r, i, −ir], [r, 1, −ir, i]]`; `ε` scales
/// every coefficient of ensemble 2.
pub fn build_epr_coupling(p: &EprParams) -> Result<ComplexCoupling> {
    p.validate()?;
    let z = |v: f64| Complex64::new(v * p.mu, 0.0);
    let alpha = CMat::from_row_slice(2, 2, &[z(1.0), z(0.0), z(0.0), z(p.epsilon)]);
    let beta = CMat::from_row_slice(2, 2, &[z(0.0), z(p.epsilon * p.r), z(p.r), z(0.0)]);
    ComplexCoupling::from_mode_operators(&alpha, &beta)
}

/// Eight-dimensional drift/diffusion of the cavity–ensemble system with
/// ensemble decoherence: `A′ = A + diag(−γI/2, 0)`, `B′ = diag(√γ I, √κ I)`.
pub fn build_perturbed_epr(p: &EprParams) -> Result<(RMat, RMat)> {
    build_extended_drift(&p.extended()?)
}

/// Two-mode squeezed covariance `½[[cosh, −sinh, 0, 0], ...]` at `ξ = atanh r`
/// in `(q₁, q₂, p₁, p₂)` order.
pub fn two_mode_squeezed(r: f64) -> RMat {
    let xi = r.atanh();
    let (ch, sh) = ((2.0 * xi).cosh() / 2.0, (2.0 * xi).sinh() / 2.0);
    RMat::from_row_slice(4, 4, &[ch, -sh, 0.0, 0.0, -sh, ch, 0.0, 0.0, 0.0, 0.0, ch, sh, 0.0, 0.0, sh, ch])
}

/// Single-mode squeezed covariance `diag(e^{−2ξ}, e^{2ξ})/2` at `ξ = atanh r`.
pub fn single_mode_squeezed(r: f64) -> RMat {
    let xi = r.atanh();
    RMat::from_row_slice(2, 2, &[(-2.0 * xi).exp() / 2.0, 0.0, 0.0, (2.0 * xi).exp() / 2.0])
}

/// A matrix field in a system document: either nested rows or the shared
/// `{rows, cols, real, imag}` object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixField {
    Rows(Vec<Vec<f64>>),
    Json(MatrixJson),
}

impl MatrixField {
    pub fn from_real(m: &RMat) -> Self {
        MatrixField::Rows(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    pub fn to_real(&self) -> Result<RMat> {
        match self {
            MatrixField::Json(j) => j.to_real(),
            MatrixField::Rows(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err(Error::Parse("ragged matrix rows".into()));
                }
                Ok(RMat::from_row_iterator(r, c, rows.iter().flatten().copied()))
            }
        }
    }
}

/// On-disk description of a target or extended system.
///
/// `kappa` absent means target-only; `gamma` adds local damping on each
/// target mode; `epsilon` is informational (already folded into `C`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SystemDocument {
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub G: MatrixField,
    pub C_real: MatrixField,
    pub C_imag: MatrixField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl SystemDocument {
    pub fn from_target(sys: &TargetSystem, kappa: Option<f64>) -> Self {
        let c = sys.coupling.c();
        SystemDocument {
            n: sys.modes(),
            m: sys.coupling.channels(),
            kappa,
            G: MatrixField::from_real(sys.g()),
            C_real: MatrixField::from_real(&c.map(|z| z.re)),
            C_imag: MatrixField::from_real(&c.map(|z| z.im)),
            gamma: (sys.gamma > 0.0).then_some(sys.gamma),
            epsilon: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn target(&self) -> Result<TargetSystem> {
        let g = self.G.to_real()?;
        let (cr, ci) = (self.C_real.to_real()?, self.C_imag.to_real()?);
        if g.shape() != (2 * self.n, 2 * self.n) {
            return Err(invalid(format!("G must be {0}x{0}", 2 * self.n)));
        }
        if cr.shape() != (self.m, 2 * self.n) || ci.shape() != cr.shape() {
            return Err(invalid(format!("C_real and C_imag must be {}x{}", self.m, 2 * self.n)));
        }
        let c = CMat::from_fn(self.m, 2 * self.n, |i, j| Complex64::new(cr[(i, j)], ci[(i, j)]));
        TargetSystem::new(g, ComplexCoupling::new(c)?)?.with_decoherence(self.gamma.unwrap_or(0.0))
    }

    pub fn extended(&self) -> Result<Option<ExtendedSystem>> {
        match self.kappa {
            Some(k) => Ok(Some(ExtendedSystem::new(self.target()?, k)?)),
            None => Ok(None),
        }
    }
}
