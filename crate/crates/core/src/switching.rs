//! Single-auxiliary-mode switching protocol.
//!
//! Stage `k` couples one damped cavity mode to the rotated mode
//! `a′_k = Σ_j U_kj a_j` through `μ{ã†(a′_k + r a′_k†) + h.c.}`. Run to
//! convergence, the stage squeezes `a′_k` to `diag(e^{−2ξ}, e^{2ξ})/2` and
//! leaves every other rotated mode untouched; running stages `1..n` in order
//! from the vacuum produces the rotated squeezed state `SᵀDS/2`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cluster::rotated_squeezed_covariance;
use crate::error::{invalid, Error, Result};
use crate::gaussian::{purity, symplectic_from_unitary, ComplexCoupling};
use crate::lyapunov::{integrate_until, IntegrationPolicy};
use crate::matrix::{block_diag, max_abs, max_abs_c, CMat, RMat};
use crate::system::{build_extended_drift, extended_permutation, single_mode_squeezed, ExtendedSystem, TargetSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingStage {
    /// 1-based stage index.
    pub k: usize,
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub r: f64,
    pub mu: f64,
}

impl SwitchingStage {
    /// Stage `k` (1-based) for `u`: `α_j = U_kj`, `β_j = r U*_kj`.
    pub fn new(u: &CMat, k: usize, r: f64, mu: f64) -> Result<Self> {
        if k == 0 || k > u.nrows() {
            return Err(invalid(format!("stage index {k} out of range 1..={}", u.nrows())));
        }
        let row = u.row(k - 1);
        Ok(SwitchingStage {
            k,
            alpha: row.iter().copied().collect(),
            beta: row.iter().map(|z| z.conj() * r).collect(),
            r,
            mu,
        })
    }

    pub fn modes(&self) -> usize {
        self.alpha.len()
    }

    /// Single-row coupling `C` of the stage interaction.
    pub fn coupling(&self) -> Result<ComplexCoupling> {
        let n = self.modes();
        let mu = Complex64::new(self.mu, 0.0);
        let alpha = CMat::from_iterator(1, n, self.alpha.iter().map(|z| z * mu));
        let beta = CMat::from_iterator(1, n, self.beta.iter().map(|z| z * mu));
        ComplexCoupling::from_mode_operators(&alpha, &beta)
    }

    /// Rows `k` and `n + k` of the symplectic rotation, i.e. `(q′_k, p′_k)`.
    fn primed_rows(&self) -> RMat {
        let n = self.modes();
        let mut rows = RMat::zeros(2, 2 * n);
        for (j, z) in self.alpha.iter().enumerate() {
            rows[(0, j)] = z.re;
            rows[(0, n + j)] = -z.im;
            rows[(1, j)] = z.im;
            rows[(1, n + j)] = z.re;
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSchedule {
    pub u: CMat,
    pub r: f64,
    pub mu: f64,
    pub stages: Vec<SwitchingStage>,
}

impl SwitchingSchedule {
    pub fn modes(&self) -> usize {
        self.u.nrows()
    }

    pub fn is_complete(&self) -> bool {
        self.stages.len() == self.modes()
            && self.stages.iter().enumerate().all(|(i, s)| s.k == i + 1)
    }

    /// First `count` stages only.
    pub fn truncated(&self, count: usize) -> Self {
        SwitchingSchedule {
            stages: self.stages.iter().take(count).cloned().collect(),
            ..self.clone()
        }
    }

    /// Target covariance `SᵀDS/2` at `ξ = atanh r`.
    pub fn target_covariance(&self) -> Result<RMat> {
        rotated_squeezed_covariance(&self.u, self.r.atanh())
    }
}

fn check_unitary(u: &CMat) -> Result<()> {
    if !u.is_square() {
        return Err(invalid("unitary must be square"));
    }
    let n = u.nrows();
    let defect = max_abs_c(&(u * u.adjoint() - CMat::identity(n, n)));
    if !(defect <= 1e-9) {
        return Err(invalid(format!("matrix is not unitary (defect {defect:e})")));
    }
    Ok(())
}

/// Stages `1..n` with `α⁽ᵏ⁾ = U_k·`, `β⁽ᵏ⁾ = r U*_k·`.
pub fn make_schedule(u: &CMat, r: f64, mu: f64) -> Result<SwitchingSchedule> {
    check_unitary(u)?;
    if !(0.0..1.0).contains(&r) {
        return Err(invalid("r must lie in [0, 1)"));
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(invalid("mu must be positive"));
    }
    let stages = (1..=u.nrows())
        .map(|k| SwitchingStage::new(u, k, r, mu))
        .collect::<Result<Vec<_>>>()?;
    Ok(SwitchingSchedule { u: u.clone(), r, mu, stages })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserSetting {
    /// 1-based.
    pub stage: usize,
    /// 1-based.
    pub ensemble: usize,
    pub omega_u: f64,
    pub phi_u: f64,
    pub omega_s: f64,
    pub phi_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserSchedule {
    pub omega: f64,
    pub r: f64,
    pub settings: Vec<LaserSetting>,
}

const ZERO_AMPLITUDE: f64 = 1e-14;

/// `arg z` in `[0, 2π)`; zero for vanishing `z`.
fn phase(z: Complex64) -> f64 {
    if z.norm() < ZERO_AMPLITUDE {
        return 0.0;
    }
    // `+ 0.0` turns −0 into 0
    let p = z.arg().rem_euclid(TAU) + 0.0;
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Rabi amplitudes and phases with `Ω_u e^{iφ_u} = Ω U_kj` and
/// `Ω_s e^{iφ_s} = rΩ U*_kj`.
pub fn realize_lasers(u: &CMat, omega: f64, r: f64) -> Result<LaserSchedule> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(invalid("omega must be positive"));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(invalid("r must lie in [0, 1)"));
    }
    let mut settings = Vec::with_capacity(u.len());
    for k in 0..u.nrows() {
        for j in 0..u.ncols() {
            let z = u[(k, j)];
            let zero = z.norm() < ZERO_AMPLITUDE;
            settings.push(LaserSetting {
                stage: k + 1,
                ensemble: j + 1,
                omega_u: if zero { 0.0 } else { omega * z.norm() },
                phi_u: phase(z),
                omega_s: if zero { 0.0 } else { r * omega * z.norm() },
                phi_s: phase(z.conj()),
            });
        }
    }
    Ok(LaserSchedule { omega, r, settings })
}

impl LaserSchedule {
    /// `U_kj = Ω_u e^{iφ_u} / Ω`.
    pub fn reconstruct_unitary(&self) -> CMat {
        let n = self.settings.iter().map(|s| s.stage).max().unwrap_or(0);
        let mut u = CMat::zeros(n, n);
        for s in &self.settings {
            u[(s.stage - 1, s.ensemble - 1)] = Complex64::from_polar(s.omega_u / self.omega, s.phi_u);
        }
        u
    }

    /// CSV with header `stage,ensemble,Omega_u,phi_u,Omega_s,phi_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stage", "ensemble", "Omega_u", "phi_u", "Omega_s", "phi_s"])?;
        for s in &self.settings {
            w.write_record(&[
                s.stage.to_string(),
                s.ensemble.to_string(),
                format!("{}", s.omega_u),
                format!("{}", s.phi_u),
                format!("{}", s.omega_s),
                format!("{}", s.phi_s),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Phases in units of π, for display.
    pub fn phases_over_pi(&self) -> Vec<(f64, f64)> {
        self.settings.iter().map(|s| (s.phi_u / PI, s.phi_s / PI)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePolicy {
    /// Frobenius distance of the stage's rotated-mode block to the squeezed
    /// target at which the stage is switched off.
    pub convergence_tol: f64,
    /// Time cap per stage (units of 1/μ).
    pub max_duration: f64,
    /// Upper bound on the RK4 step; the integrator also enforces `0.1/ρ(A)`.
    pub max_step: f64,
}

impl Default for StagePolicy {
    fn default() -> Self {
        StagePolicy { convergence_tol: 1e-6, max_duration: 500.0, max_step: 0.05 }
    }
}

impl StagePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tol > 0.0) || !(self.max_duration > 0.0) || !(self.max_step > 0.0) {
            return Err(Error::InvalidPolicy("stage tolerances and durations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub cov: RMat,
    pub duration: f64,
    pub residual: f64,
}

fn frobenius(m: &RMat) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs one stage from target covariance `v` with the cavity in vacuum,
/// until the rotated mode `k` is within `policy.convergence_tol` of the
/// squeezed target. The cavity block is discarded on return.
pub fn run_stage(v: &RMat, stage: &SwitchingStage, kappa: f64, policy: &StagePolicy) -> Result<StageOutcome> {
    policy.validate()?;
    let n = stage.modes();
    if v.shape() != (2 * n, 2 * n) {
        return Err(invalid("covariance dimension does not match the stage"));
    }
    let target = TargetSystem::dissipative(stage.coupling()?)?;
    let ext = ExtendedSystem::new(target, kappa)?;
    let (a, b) = build_extended_drift(&ext)?;
    // integrate in the global quadrature basis so physicality checks apply
    let p = extended_permutation(n, 1);
    let a = &p * a * p.transpose();
    let b = &p * b;
    let rows = stage.primed_rows();
    let goal = single_mode_squeezed(stage.r);
    let v0 = &p * block_diag(v, &(RMat::identity(2, 2) * 0.5)) * p.transpose();
    let integration = IntegrationPolicy {
        step: IntegrationPolicy::max_step_for(&a, policy.max_step)?,
        horizon: policy.max_duration,
        convergence_tol: policy.convergence_tol,
        sample_every: usize::MAX,
    };
    let dim = 2 * n;
    let target_of = |full: &RMat| (p.transpose() * full * &p).view((0, 0), (dim, dim)).into_owned();
    let mut residual = f64::INFINITY;
    let traj = integrate_until(&a, &b, &v0, &integration, |_, full, _| {
        let block = &rows * target_of(full) * rows.transpose();
        residual = frobenius(&(block - &goal));
        residual < policy.convergence_tol
    })?;
    if !traj.converged {
        return Err(Error::StageTimeout { stage: stage.k, duration: traj.final_time, residual });
    }
    Ok(StageOutcome {
        cov: target_of(&traj.final_v),
        duration: traj.final_time,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub k: usize,
    pub duration: f64,
    pub residual: f64,
    /// Largest change of any rotated-frame covariance entry not involving
    /// mode `k`.
    pub spectator_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub cov: RMat,
    pub log: Vec<StageLog>,
    /// `‖V − SᵀDS/2‖∞` when the schedule is complete.
    pub target_distance: Option<f64>,
    pub purity: f64,
}

fn spectator_drift(before: &RMat, after: &RMat, k: usize, n: usize) -> f64 {
    let skip = |i: usize| i == k || i == n + k;
    let mut worst: f64 = 0.0;
    for i in (0..2 * n).filter(|&i| !skip(i)) {
        for j in (0..2 * n).filter(|&j| !skip(j)) {
            worst = worst.max((after[(i, j)] - before[(i, j)]).abs());
        }
    }
    worst
}

/// Runs the stages in order. Stage logs carry duration, final residual and
/// the drift of the rotated-frame entries the stage should not touch.
pub fn run_schedule(v0: &RMat, schedule: &SwitchingSchedule, kappa: f64, policy: &StagePolicy) -> Result<ScheduleOutcome> {
    let n = schedule.modes();
    if v0.shape() != (2 * n, 2 * n) {
        return Err(invalid("initial covariance does not match the schedule"));
    }
    let s = symplectic_from_unitary(&schedule.u)?;
    let mut v = v0.clone();
    let mut log = Vec::with_capacity(schedule.stages.len());
    for stage in &schedule.stages {
        let before = &s * &v * s.transpose();
        let out = run_stage(&v, stage, kappa, policy)?;
        let after = &s * &out.cov * s.transpose();
        log.push(StageLog {
            k: stage.k,
            duration: out.duration,
            residual: out.residual,
            spectator_drift: spectator_drift(&before, &after, stage.k - 1, n),
        });
        v = out.cov;
    }
    let target_distance = if schedule.is_complete() {
        Some(max_abs(&(&v - schedule.target_covariance()?)))
    } else {
        None
    };
    let purity = if n == 0 { 1.0 } else { purity(&v)? };
    Ok(ScheduleOutcome { cov: v, log, target_distance, purity })
}
