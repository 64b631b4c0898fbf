//! Logarithmic negativity of two-mode states and the cavity–ensemble EPR
//! model: closed forms, optimal parameters and parameter sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{is_physical, symplectic_eigenvalues, PHYSICAL_TOL_INTEGRATED};
use crate::matrix::RMat;
use crate::system::{build_adiabatic_target, extended_steady_state, target_steady_state, EprParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativityReport {
    pub nu: f64,
    pub e_n: f64,
}

impl NegativityReport {
    fn from_nu(nu: f64) -> Self {
        NegativityReport { nu, e_n: negativity_from_nu(nu) }
    }
}

/// `max{0, −ln 2ν}`.
pub fn negativity_from_nu(nu: f64) -> f64 {
    (-(2.0 * nu).ln()).max(0.0)
}

/// Negativity of a two-mode covariance in `(q₁, q₂, p₁, p₂)` order. The
/// partial transpose flips the sign of `p₂`.
pub fn log_negativity(v: &RMat) -> Result<NegativityReport> {
    if v.shape() != (4, 4) {
        return Err(invalid(format!("expected a 4×4 two-mode covariance, got {:?}", v.shape())));
    }
    if !is_physical(v, PHYSICAL_TOL_INTEGRATED)? {
        return Err(Error::InvalidCovariance("two-mode covariance is not physical".into()));
    }
    let mut pt = v.clone();
    for i in 0..4 {
        pt[(3, i)] = -pt[(3, i)];
        pt[(i, 3)] = -pt[(i, 3)];
    }
    let nu = symplectic_eigenvalues(&pt)?[0];
    Ok(NegativityReport::from_nu(nu))
}

fn check_closed_form_args(kappa: f64, gamma: f64, r: f64) -> Result<()> {
    let ok = kappa > 0.0 && gamma >= 0.0 && (0.0..1.0).contains(&r) && kappa.is_finite() && gamma.is_finite();
    if !ok {
        return Err(invalid(format!("need kappa > 0, gamma ≥ 0, 0 ≤ r < 1 (got {kappa}, {gamma}, {r})")));
    }
    Ok(())
}

/// Smallest partial-transpose symplectic eigenvalue of the EPR steady state
/// at `ε = 1`, rates in units of `μ`.
pub fn nu_closed_form(kappa: f64, gamma: f64, r: f64) -> Result<f64> {
    check_closed_form_args(kappa, gamma, r)?;
    let s = 4.0 * (1.0 - r * r);
    let num = kappa * gamma * gamma + 4.0 * kappa * (1.0 - r).powi(2) + gamma * (kappa * kappa + s);
    let den = 2.0 * (kappa + gamma) * (kappa * gamma + s);
    if !(den > 0.0) {
        return Err(invalid("closed form denominator is not positive"));
    }
    Ok(num / den)
}

pub fn closed_form_negativity(kappa: f64, gamma: f64, r: f64) -> Result<NegativityReport> {
    Ok(NegativityReport::from_nu(nu_closed_form(kappa, gamma, r)?))
}

/// Ensemble steady state at `ε = 1`:
/// `diag([[rc + ½, −c], [−c, rc + ½]], [[rc + ½, c], [c, rc + ½]])`
/// with `c = 4rκ / ((κ + γ)(κγ + 4(1 − r²)))`.
pub fn closed_form_steady(kappa: f64, gamma: f64, r: f64) -> Result<RMat> {
    check_closed_form_args(kappa, gamma, r)?;
    let c = 4.0 * r * kappa / ((kappa + gamma) * (kappa * gamma + 4.0 * (1.0 - r * r)));
    let a = r * c + 0.5;
    Ok(RMat::from_row_slice(4, 4, &[a, -c, 0.0, 0.0, -c, a, 0.0, 0.0, 0.0, 0.0, a, c, 0.0, 0.0, c, a]))
}

/// Ensemble block of the full cavity–ensemble steady state.
pub fn epr_target_covariance(p: &EprParams) -> Result<RMat> {
    let v = extended_steady_state(&p.extended()?)?;
    Ok(v.view((0, 0), (4, 4)).into_owned())
}

pub fn numeric_negativity(p: &EprParams) -> Result<NegativityReport> {
    log_negativity(&epr_target_covariance(p)?)
}

/// Negativity of the model with the cavity adiabatically eliminated.
pub fn adiabatic_negativity(p: &EprParams) -> Result<NegativityReport> {
    let sys = build_adiabatic_target(&p.target()?, p.kappa * p.mu)?;
    log_negativity(&target_steady_state(&sys)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalParams {
    pub gamma: f64,
    pub r_star: f64,
    pub kappa_star: f64,
    pub e_n: f64,
}

const OPTIMUM_PROBE: f64 = 1e-3;

/// Closed-form maximiser of the `ε = 1` negativity at fixed `γ`:
/// `r★ = (2 + d + γ²(γ² − 3)/d) / (2(γ² + 1))`, `κ★ = 2√(1 − r★²)` with
/// `d = ∛(−γ⁶ + 5γ⁴ − 2γ² + (γ² + 1)γ²√(4 − γ²))`.
pub fn optimal_params(gamma: f64) -> Result<OptimalParams> {
    if !(gamma > 0.0) {
        return Err(Error::NoInteriorOptimum(gamma));
    }
    if !(gamma < 2.0) {
        return Err(Error::OutOfModel(format!("gamma = {gamma} is outside (0, 2)")));
    }
    let g2 = gamma * gamma;
    let radicand = -g2.powi(3) + 5.0 * g2 * g2 - 2.0 * g2 + (g2 + 1.0) * g2 * (4.0 - g2).sqrt();
    let d = radicand.cbrt();
    let r_star = (2.0 + d + g2 * (g2 - 3.0) / d) / (2.0 * (g2 + 1.0));
    if !(0.0..1.0).contains(&r_star) {
        return Err(Error::OutOfModel(format!("r★ = {r_star} outside [0, 1)")));
    }
    let kappa_star = 2.0 * (1.0 - r_star * r_star).sqrt();
    let e_n = closed_form_negativity(kappa_star, gamma, r_star)?.e_n;
    for (dr, dk) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
        let (r, k) = (r_star + dr * OPTIMUM_PROBE, kappa_star + dk * OPTIMUM_PROBE);
        if let Ok(rep) = closed_form_negativity(k, gamma, r) {
            if rep.e_n > e_n {
                return Err(Error::NumericalFailure(format!(
                    "closed-form optimum is not a local maximum (E_N {} at r = {r}, κ = {k} exceeds {e_n})",
                    rep.e_n
                )));
            }
        }
    }
    Ok(OptimalParams { gamma, r_star, kappa_star, e_n })
}

/// Inclusive range with `steps` equally spaced points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridRange {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        let g = GridRange { min, max, steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 || !(self.min > 0.0) || !(self.max >= self.min) || !self.max.is_finite() {
            return Err(invalid(format!("invalid range {self:?}: need 0 < min ≤ max and steps ≥ 2")));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.value(i)).collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.steps - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub xi_range: GridRange,
    pub kappa_range: GridRange,
    pub gamma: f64,
    pub epsilon: f64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        self.xi_range.validate()?;
        self.kappa_range.validate()?;
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() || !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid("need gamma ≥ 0 and epsilon > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Unstable,
    Invalid,
}

impl PointStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::Unstable => "unstable",
            PointStatus::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub xi: f64,
    pub kappa: f64,
    #[serde(rename = "E_N")]
    pub e_n: f64,
    pub status: PointStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub grid: SweepGrid,
    /// Row-major in `xi`, then `kappa`.
    pub rows: Vec<SweepRow>,
}

/// Negativity at one point: closed form when `ε = 1`, full Lyapunov solve
/// otherwise.
pub fn negativity_at(r: f64, kappa: f64, gamma: f64, epsilon: f64) -> Result<f64> {
    if epsilon == 1.0 {
        Ok(closed_form_negativity(kappa, gamma, r)?.e_n)
    } else {
        Ok(numeric_negativity(&EprParams::new(r, kappa, gamma, epsilon)?)?.e_n)
    }
}

fn sweep_point(xi: f64, kappa: f64, gamma: f64, epsilon: f64) -> SweepRow {
    let (e_n, status) = match negativity_at(xi.tanh(), kappa, gamma, epsilon) {
        Ok(v) if v.is_finite() => (v, PointStatus::Ok),
        Ok(_) | Err(Error::NoUniqueSteadyState { .. }) | Err(Error::NumericalFailure(_)) => {
            (f64::NAN, PointStatus::Unstable)
        }
        Err(_) => (f64::NAN, PointStatus::Invalid),
    };
    SweepRow { xi, kappa, e_n, status }
}

pub fn sweep(grid: &SweepGrid) -> Result<SweepTable> {
    grid.validate()?;
    let (nx, nk) = (grid.xi_range.steps, grid.kappa_range.steps);
    let rows = (0..nx * nk)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / nk, idx % nk);
            sweep_point(grid.xi_range.value(i), grid.kappa_range.value(j), grid.gamma, grid.epsilon)
        })
        .collect();
    Ok(SweepTable { grid: *grid, rows })
}

impl SweepTable {
    /// Row with the largest finite `E_N`.
    pub fn argmax(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.e_n.is_finite())
            .max_by(|a, b| a.e_n.total_cmp(&b.e_n))
    }

    /// CSV with header `xi,kappa,E_N,status`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["xi", "kappa", "E_N", "status"])?;
        for r in &self.rows {
            w.write_record(&[format!("{}", r.xi), format!("{}", r.kappa), format!("{}", r.e_n), r.status.as_str().into()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub r_min: f64,
    pub r_max: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub grid: usize,
    pub tol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { r_min: 0.5, r_max: 0.999, kappa_min: 0.05, kappa_max: 3.0, grid: 60, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub r: f64,
    pub kappa: f64,
    pub e_n: f64,
    pub evaluations: usize,
}

/// Grid search over `(r, κ)` followed by coordinate descent until the step
/// falls below `opts.tol`.
pub fn optimize_negativity(gamma: f64, epsilon: f64, opts: &OptimizeOptions) -> Result<Optimum> {
    let ok = opts.grid >= 2
        && opts.tol > 0.0
        && 0.0 <= opts.r_min
        && opts.r_min < opts.r_max
        && opts.r_max < 1.0
        && 0.0 < opts.kappa_min
        && opts.kappa_min < opts.kappa_max;
    if !ok {
        return Err(invalid(format!("invalid optimizer options {opts:?}")));
    }
    let clamp = |r: f64, k: f64| (r.clamp(opts.r_min, opts.r_max), k.clamp(opts.kappa_min, opts.kappa_max));
    let mut evaluations = 0usize;
    let mut eval = |r: f64, k: f64| {
        evaluations += 1;
        negativity_at(r, k, gamma, epsilon).ok().filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY)
    };
    let rs = GridRange { min: opts.r_min, max: opts.r_max, steps: opts.grid };
    let ks = GridRange { min: opts.kappa_min, max: opts.kappa_max, steps: opts.grid };
    let mut best = (rs.min, ks.min, f64::NEG_INFINITY);
    for i in 0..opts.grid {
        for j in 0..opts.grid {
            let (r, k) = (rs.value(i), ks.value(j));
            let e = eval(r, k);
            if e > best.2 {
                best = (r, k, e);
            }
        }
    }
    if !best.2.is_finite() {
        return Err(Error::NumericalFailure("no stable grid point".into()));
    }
    let (mut dr, mut dk) = (rs.spacing(), ks.spacing());
    while dr.max(dk) > opts.tol {
        let mut moved = false;
        for (sr, sk) in [(dr, 0.0), (-dr, 0.0), (0.0, dk), (0.0, -dk)] {
            let (r, k) = clamp(best.0 + sr, best.1 + sk);
            let e = eval(r, k);
            if e > best.2 {
                best = (r, k, e);
                moved = true;
            }
        }
        if !moved {
            dr *= 0.5;
            dk *= 0.5;
        }
    }
    Ok(Optimum { r: best.0, kappa: best.1, e_n: best.2, evaluations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticComparison {
    pub kappa: f64,
    pub full: f64,
    pub adiabatic: f64,
}

impl AdiabaticComparison {
    pub fn margin(&self) -> f64 {
        (self.full - self.adiabatic).abs()
    }
}

/// Full versus adiabatically eliminated negativity at fixed `r` over `kappas`.
pub fn compare_adiabatic(r: f64, gamma: f64, epsilon: f64, kappas: &[f64]) -> Result<Vec<AdiabaticComparison>> {
    kappas
        .iter()
        .map(|&kappa| {
            let p = EprParams::new(r, kappa, gamma, epsilon)?;
            Ok(AdiabaticComparison { kappa, full: numeric_negativity(&p)?.e_n, adiabatic: adiabatic_negativity(&p)?.e_n })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs;
    use crate::system::two_mode_squeezed;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_has_no_negativity() {
        let rep = log_negativity(&(RMat::identity(4, 4) * 0.5)).unwrap();
        assert_abs_diff_eq!(rep.nu, 0.5, epsilon = 1e-14);
        assert_eq!(rep.e_n, 0.0);
    }

    #[test]
    fn two_mode_squeezed_negativity_is_two_xi() {
        let rep = log_negativity(&two_mode_squeezed(0.8)).unwrap();
        assert_abs_diff_eq!(rep.e_n, 2.0 * 0.8f64.atanh(), epsilon = 1e-10);
        assert_abs_diff_eq!(rep.e_n, 2.1972245773, epsilon = 1e-9);
    }

    #[test]
    fn wrong_dimension_rejected() {
        assert!(matches!(log_negativity(&RMat::identity(2, 2)), Err(Error::InvalidInput(_))));
        assert!(log_negativity(&(RMat::identity(4, 4) * 0.1)).is_err());
    }

    #[test]
    fn closed_form_at_reference_point() {
        let nu = nu_closed_form(0.523, 0.01, 0.9652).unwrap();
        assert_abs_diff_eq!(nu, 0.0271098, epsilon = 1e-6);
        let e = closed_form_negativity(0.523, 0.01, 0.9652).unwrap().e_n;
        assert_abs_diff_eq!(e, 2.914713, epsilon = 1e-5);
        let num = numeric_negativity(&EprParams::new(0.9652, 0.523, 0.01, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(num.e_n, e, epsilon = 1e-8);
    }

    #[test]
    fn closed_form_limits() {
        for r in [0.1, 0.5, 0.8, 0.95] {
            let nu = nu_closed_form(1.3, 0.0, r).unwrap();
            assert_abs_diff_eq!(nu, (1.0 - r) / (2.0 * (1.0 + r)), epsilon = 1e-14);
        }
        assert_eq!(closed_form_steady(1.0, 0.3, 0.0).unwrap(), RMat::identity(4, 4) * 0.5);
        assert!(max_abs(&(closed_form_steady(1.0, 0.0, 0.8).unwrap() - two_mode_squeezed(0.8))) < 1e-12);
        assert!(nu_closed_form(0.0, 0.1, 0.5).is_err());
        assert!(nu_closed_form(1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn closed_form_steady_matches_lyapunov() {
        for &(k, g, r) in &[(0.3, 0.0, 0.4), (1.0, 0.01, 0.8), (2.5, 0.2, 0.95), (0.523, 0.01, 0.9652)] {
            let v = epr_target_covariance(&EprParams::new(r, k, g, 1.0).unwrap()).unwrap();
            assert!(max_abs(&(v - closed_form_steady(k, g, r).unwrap())) < 1e-9);
        }
    }

    #[test]
    fn optimal_params_small_gamma() {
        let o = optimal_params(0.01).unwrap();
        assert_abs_diff_eq!(o.r_star, 0.9651, epsilon = 1e-4);
        assert_abs_diff_eq!(o.kappa_star, 0.52376, epsilon = 1e-4);
        assert_abs_diff_eq!(o.e_n, 2.914715, epsilon = 1e-5);
    }

    #[test]
    fn optimal_params_errors() {
        assert!(matches!(optimal_params(0.0), Err(Error::NoInteriorOptimum(_))));
        assert!(matches!(optimal_params(-1.0), Err(Error::NoInteriorOptimum(_))));
        assert!(matches!(optimal_params(2.0), Err(Error::OutOfModel(_))));
    }

    #[test]
    fn optimum_is_stationary() {
        for gamma in [0.01, 0.05, 0.1, 0.5] {
            let o = optimal_params(gamma).unwrap();
            let h = 1e-5;
            let f = |r: f64, k: f64| closed_form_negativity(k, gamma, r).unwrap().e_n;
            let gr = (f(o.r_star + h, o.kappa_star) - f(o.r_star - h, o.kappa_star)) / (2.0 * h);
            let gk = (f(o.r_star, o.kappa_star + h) - f(o.r_star, o.kappa_star - h)) / (2.0 * h);
            assert!(gr.hypot(gk) < 1e-4, "gamma {gamma}: gradient ({gr}, {gk})");
        }
    }

    #[test]
    fn grid_range_values() {
        let g = GridRange::new(0.1, 1.0, 4).unwrap();
        let v = g.values();
        assert_eq!(v.len(), 4);
        assert_eq!((v[0], v[3]), (0.1, 1.0));
        assert!((v[1] - 0.4).abs() < 1e-15 && (v[2] - 0.7).abs() < 1e-15);
        assert!(GridRange::new(0.1, 1.0, 1).is_err());
        assert!(GridRange::new(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn gamma_zero_sweep_is_flat_in_kappa() {
        let grid = SweepGrid {
            xi_range: GridRange::new(0.1, 2.0, 5).unwrap(),
            kappa_range: GridRange::new(0.1, 3.0, 7).unwrap(),
            gamma: 0.0,
            epsilon: 1.0,
        };
        let t = sweep(&grid).unwrap();
        assert_eq!(t.rows.len(), 35);
        for row in &t.rows {
            assert_eq!(row.status, PointStatus::Ok);
            assert_abs_diff_eq!(row.e_n, 2.0 * row.xi, epsilon = 1e-9);
        }
        assert_eq!(t.rows[7].xi, grid.xi_range.value(1));
        assert_eq!(t.rows[7].kappa, grid.kappa_range.value(0));
    }

    #[test]
    fn sweep_paths_agree_and_csv_header() {
        let grid = SweepGrid {
            xi_range: GridRange::new(0.5, 2.0, 4).unwrap(),
            kappa_range: GridRange::new(0.2, 2.0, 4).unwrap(),
            gamma: 0.05,
            epsilon: 1.0,
        };
        let fast = sweep(&grid).unwrap();
        for row in &fast.rows {
            let p = EprParams::new(row.xi.tanh(), row.kappa, 0.05, 1.0).unwrap();
            assert_abs_diff_eq!(row.e_n, numeric_negativity(&p).unwrap().e_n, epsilon = 1e-8);
        }
        let mut buf = Vec::new();
        fast.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("xi,kappa,E_N,status\n"));
        assert_eq!(text.lines().count(), 17);
    }

    #[test]
    fn unreachable_squeezing_is_flagged() {
        // tanh(40) rounds to 1
        let row = sweep_point(40.0, 1.0, 0.0, 1.0);
        assert!(row.e_n.is_nan());
        assert_ne!(row.status, PointStatus::Ok);
    }

    #[test]
    fn negativity_non_increasing_in_gamma() {
        for &k in &[0.2, 0.7, 1.5, 3.0] {
            for &r in &[0.3, 0.7, 0.9, 0.98] {
                let mut prev = f64::INFINITY;
                for i in 0..=20 {
                    let e = closed_form_negativity(k, 0.005 * i as f64, r).unwrap().e_n;
                    assert!(e >= 0.0);
                    assert!(e <= prev + 1e-12);
                    prev = e;
                }
            }
        }
    }

    #[test]
    fn optimizer_recovers_closed_form() {
        let o = optimize_negativity(0.1, 1.0, &OptimizeOptions { grid: 30, ..Default::default() }).unwrap();
        let c = optimal_params(0.1).unwrap();
        assert_abs_diff_eq!(o.e_n, c.e_n, epsilon = 1e-8);
        assert_abs_diff_eq!(o.r, c.r_star, epsilon = 1e-3);
        assert_abs_diff_eq!(o.kappa, c.kappa_star, epsilon = 1e-2);
    }

    #[test]
    fn adiabatic_agrees_for_large_kappa() {
        let cmp = compare_adiabatic(0.9, 0.01, 1.0, &[50.0]).unwrap();
        assert!(cmp[0].margin() < 1e-2);
    }
}
