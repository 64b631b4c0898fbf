use std::fs;
use std::path::Path;

use gaussdiss::cluster::{
    cluster_covariance, cluster_unitary, expected_nullifier_covariance, nullifier_covariance, square_cluster_premix,
    ClusterGraph, Method,
};
use gaussdiss::entanglement::{sweep as run_sweep, GridRange, SweepGrid, SweepRow};
use gaussdiss::gaussian::GaussianState;
use gaussdiss::lyapunov::is_hurwitz;
use gaussdiss::matrix::{max_abs, MatrixJson, RMat};
use gaussdiss::switching::{make_schedule, realize_lasers, run_schedule, StageLog, StagePolicy};
use gaussdiss::system::{build_target_drift, certify_target, check_theorem2, EprParams, SystemDocument};
use gaussdiss::Error;
use serde::{Deserialize, Serialize};

use crate::report::{print_json, status, CmdResult, Failure, SpectrumJson, EXIT_FAIL, EXIT_OK, EXIT_TIMEOUT};
use crate::MethodArg;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn rows(m: &RMat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<RMat, Failure> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Failure::usage("ragged matrix rows"));
    }
    Ok(RMat::from_fn(n, cols, |i, j| rows[i][j]))
}

#[derive(Debug, Serialize, Deserialize)]
struct Theorem1Json {
    kernel_residual: f64,
    hamiltonian_residual: f64,
    passes: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Theorem2Json {
    spectrum: SpectrumJson,
    off_diagonal_residual: f64,
    auxiliary_residual: f64,
    target_residual: f64,
    target_purity: f64,
    passes: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct VerifyReport {
    command: String,
    status: String,
    diagnosis: Option<String>,
    modes: usize,
    channels: usize,
    tol: f64,
    spectrum: SpectrumJson,
    theorem1: Option<Theorem1Json>,
    theorem2: Option<Theorem2Json>,
    purity: Option<f64>,
}

impl VerifyReport {
    fn print_text(&self) {
        let s = &self.spectrum;
        println!("modes {}, channels {}", self.modes, self.channels);
        println!("drift spectrum: max Re = {:.6e} ({})", s.max_real, if s.hurwitz { "Hurwitz" } else { "not Hurwitz" });
        for [re, im] in &s.eigenvalues {
            println!("  {re:+.6e} {im:+.6e}i");
        }
        if let Some(t) = &self.theorem1 {
            println!("kernel residual       {:.3e}", t.kernel_residual);
            println!("hamiltonian residual  {:.3e}", t.hamiltonian_residual);
        }
        if let Some(t) = &self.theorem2 {
            println!("extended drift: max Re = {:.6e}", t.spectrum.max_real);
            println!("off-diagonal residual {:.3e}", t.off_diagonal_residual);
            println!("auxiliary residual    {:.3e}", t.auxiliary_residual);
            println!("target residual       {:.3e}", t.target_residual);
        }
        if let Some(p) = self.purity {
            println!("purity {p:.6}");
        }
        if let Some(d) = &self.diagnosis {
            println!("{d}");
        }
        println!("{}", self.status.to_uppercase());
    }
}

pub fn verify(path: &Path, tol: f64, json: bool) -> CmdResult {
    if !(tol > 0.0) {
        return Err(Failure::usage("--tol must be positive"));
    }
    let doc = SystemDocument::from_json(&read(path)?)?;
    let sys = doc.target()?;
    let (a1, _) = build_target_drift(&sys)?;
    let spectrum = is_hurwitz(&a1)?;
    let mut report = VerifyReport {
        command: "verify".into(),
        status: "fail".into(),
        diagnosis: None,
        modes: sys.modes(),
        channels: sys.coupling().channels(),
        tol,
        spectrum: SpectrumJson::from(&spectrum),
        theorem1: None,
        theorem2: None,
        purity: None,
    };
    if spectrum.hurwitz {
        let (_, t1) = certify_target(&sys, tol)?;
        report.purity = Some(t1.purity);
        report.theorem1 = Some(Theorem1Json {
            kernel_residual: t1.kernel_residual,
            hamiltonian_residual: t1.hamiltonian_residual,
            passes: t1.passes,
        });
        let mut pass = t1.passes;
        if let Some(ext) = doc.extended()? {
            match check_theorem2(&ext, tol) {
                Ok(t2) => {
                    pass &= t2.passes;
                    report.theorem2 = Some(Theorem2Json {
                        spectrum: SpectrumJson::from(&t2.spectrum),
                        off_diagonal_residual: t2.off_diagonal_residual,
                        auxiliary_residual: t2.auxiliary_residual,
                        target_residual: t2.target_residual,
                        target_purity: t2.target_purity,
                        passes: t2.passes,
                    });
                }
                Err(err @ (Error::TheoremHypothesisViolated(_) | Error::NoUniqueSteadyState { .. })) => {
                    pass = false;
                    report.diagnosis = Some(format!("extended system: {err}"));
                }
                Err(err) => return Err(err.into()),
            }
        }
        if !t1.passes && report.diagnosis.is_none() {
            report.diagnosis = Some("steady state is not pure".into());
        }
        report.status = status(pass).into();
    } else {
        let z = spectrum.rightmost();
        report.diagnosis = Some(format!("drift not Hurwitz: eigenvalue {:+.6e} {:+.6e}i", z.re, z.im));
    }
    if json {
        print_json(&report)?;
    } else {
        report.print_text();
    }
    Ok(if report.status == "pass" { EXIT_OK } else { EXIT_FAIL })
}

/// Everything `switch` needs to replay a cluster protocol.
#[derive(Debug, Serialize, Deserialize)]
pub struct Bundle {
    pub nodes: usize,
    pub method: Method,
    pub r: f64,
    pub xi: f64,
    pub omega: f64,
    /// Number of stages to run; 0 gives an empty protocol.
    pub stages: usize,
    pub adjacency: Vec<Vec<f64>>,
    pub premix: Vec<Vec<f64>>,
    pub unitary: MatrixJson,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterReport {
    command: String,
    status: String,
    nodes: usize,
    method: Method,
    r: f64,
    xi: f64,
    unitarity_defect: f64,
    witness_defect: f64,
    nullifier_deviation: f64,
    unitary: MatrixJson,
    files: Vec<String>,
}

const CLUSTER_TOL: f64 = 1e-9;

fn load_premix(choice: Option<&str>, method: MethodArg, n: usize) -> Result<Option<RMat>, Failure> {
    match (choice, method) {
        (None, _) => Ok(None),
        (Some(_), MethodArg::Polar) => Err(Failure::usage("--premix applies to the gs method only")),
        (Some("square"), MethodArg::Gs) if n == 4 => Ok(Some(square_cluster_premix())),
        (Some("square"), MethodArg::Gs) => Err(Failure::usage("the square premix needs a 4-node graph")),
        (Some(path), MethodArg::Gs) => {
            let rows: Vec<Vec<f64>> = serde_json::from_str(&read(Path::new(path))?)?;
            Ok(Some(from_rows(&rows)?))
        }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, files: &mut Vec<String>) -> Result<(), Failure> {
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    files.push(name.into());
    Ok(())
}

pub fn cluster(
    graph: &Path,
    r: f64,
    method: MethodArg,
    omega: f64,
    premix: Option<&str>,
    out: Option<&Path>,
    json: bool,
) -> CmdResult {
    if !(0.0..1.0).contains(&r) {
        return Err(Failure::usage("--r must lie in [0, 1)"));
    }
    if !fs::metadata(graph).is_ok_and(|m| m.is_file()) {
        return Err(Failure::usage(format!("{}: no such file", graph.display())));
    }
    let g = ClusterGraph::load(graph)?;
    let premix = load_premix(premix, method, g.nodes())?;
    let method = match method {
        MethodArg::Polar => Method::Polar,
        MethodArg::Gs => Method::GramSchmidt,
    };
    let cu = cluster_unitary(&g, method, premix.as_ref())?;
    let xi = r.atanh();
    let state = cluster_covariance(&cu, xi)?;
    let nullifier = nullifier_covariance(&state, &g)?;
    let nullifier_deviation = max_abs(&(&nullifier - expected_nullifier_covariance(&g, xi)));
    let lasers = realize_lasers(&cu.u, omega, r)?;
    let pass = nullifier_deviation <= CLUSTER_TOL && cu.unitarity_defect() <= CLUSTER_TOL;

    let unitary = MatrixJson::from_complex(&cu.u);
    let mut files = Vec::new();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let bundle = Bundle {
            nodes: g.nodes(),
            method,
            r,
            xi,
            omega,
            stages: g.nodes(),
            adjacency: rows(g.adjacency()),
            premix: rows(&cu.premix),
            unitary: unitary.clone(),
        };
        write_json(dir, "bundle.json", &bundle, &mut files)?;
        write_json(dir, "unitary.json", &unitary, &mut files)?;
        write_json(dir, "target_covariance.json", &MatrixJson::from_real(&state.cov), &mut files)?;
        write_json(dir, "nullifier_covariance.json", &MatrixJson::from_real(&nullifier), &mut files)?;
        lasers.write_csv(fs::File::create(dir.join("lasers.csv"))?)?;
        files.push("lasers.csv".into());
    }
    let report = ClusterReport {
        command: "cluster".into(),
        status: status(pass).into(),
        nodes: g.nodes(),
        method,
        r,
        xi,
        unitarity_defect: cu.unitarity_defect(),
        witness_defect: cu.witness_defect(&g),
        nullifier_deviation,
        unitary,
        files,
    };
    if json {
        print_json(&report)?;
    } else {
        let name = match method {
            Method::Polar => "polar",
            Method::GramSchmidt => "gram-schmidt",
        };
        println!("{} nodes, method {name}, r = {r}, xi = {xi:.6}", report.nodes);
        println!("U =");
        for i in 0..cu.u.nrows() {
            let row: Vec<String> = cu.u.row(i).iter().map(|z| format!("{:+.6}{:+.6}i", z.re, z.im)).collect();
            println!("  [{}]", row.join(", "));
        }
        println!("unitarity defect     {:.3e}", report.unitarity_defect);
        println!("nullifier deviation  {:.3e}", nullifier_deviation);
        println!("stage ensemble Omega_u phi_u/pi Omega_s phi_s/pi");
        for (s, (pu, ps)) in lasers.settings.iter().zip(lasers.phases_over_pi()) {
            println!("{:>5} {:>8} {:.6} {:.4} {:.6} {:.4}", s.stage, s.ensemble, s.omega_u, pu, s.omega_s, ps);
        }
        if let Some(dir) = out {
            println!("wrote {} files to {}", report.files.len(), dir.display());
        }
        println!("{}", report.status.to_uppercase());
    }
    Ok(if pass { EXIT_OK } else { EXIT_FAIL })
}

#[derive(Debug, Serialize, Deserialize)]
struct StageJson {
    k: usize,
    duration: f64,
    physical_duration: f64,
    residual: f64,
    spectator_drift: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SwitchReport {
    command: String,
    status: String,
    nodes: usize,
    stages_run: usize,
    kappa: f64,
    tol: f64,
    mu: f64,
    log: Vec<StageJson>,
    target_distance: Option<f64>,
    distance_bound: f64,
    nullifier_deviation: Option<f64>,
    purity: f64,
    diagnosis: Option<String>,
}

const PURITY_FLOOR: f64 = 1.0 - 1e-4;

#[allow(clippy::too_many_arguments)]
pub fn switch(
    path: &Path,
    kappa: f64,
    tol: f64,
    max_duration: f64,
    stages: Option<usize>,
    mu: f64,
    out: Option<&Path>,
    json: bool,
) -> CmdResult {
    if !(kappa > 0.0) || !(tol > 0.0) || !(max_duration > 0.0) || !(mu > 0.0) {
        return Err(Failure::usage("--kappa, --tol, --max-duration and --mu must be positive"));
    }
    let bundle: Bundle = serde_json::from_str(&read(path)?)?;
    let u = bundle.unitary.to_complex()?;
    let n = u.nrows();
    if bundle.nodes != n || bundle.stages > n {
        return Err(Failure::usage("bundle node and stage counts do not match its unitary"));
    }
    let count = match stages {
        Some(s) if s > bundle.stages => {
            return Err(Failure::usage(format!("--stages {s} exceeds the bundle's {} stages", bundle.stages)))
        }
        Some(s) => s,
        None => bundle.stages,
    };
    let schedule = make_schedule(&u, bundle.r, 1.0)?.truncated(count);
    let policy = StagePolicy { convergence_tol: tol, max_duration, ..StagePolicy::default() };
    let v0 = RMat::identity(2 * n, 2 * n) * 0.5;
    let distance_bound = n as f64 * 10.0 * tol;

    let stage_json = |l: &StageLog| StageJson {
        k: l.k,
        duration: l.duration,
        physical_duration: l.duration / mu,
        residual: l.residual,
        spectator_drift: l.spectator_drift,
    };
    let mut report = SwitchReport {
        command: "switch".into(),
        status: "fail".into(),
        nodes: n,
        stages_run: 0,
        kappa,
        tol,
        mu,
        log: vec![],
        target_distance: None,
        distance_bound,
        nullifier_deviation: None,
        purity: 1.0,
        diagnosis: None,
    };
    let code = match run_schedule(&v0, &schedule, kappa, &policy) {
        Ok(outcome) => {
            report.stages_run = outcome.log.len();
            report.log = outcome.log.iter().map(stage_json).collect();
            report.target_distance = outcome.target_distance;
            report.purity = outcome.purity;
            if schedule.is_complete() && n > 0 {
                let g = ClusterGraph::new(from_rows(&bundle.adjacency)?)?;
                let state = GaussianState::zero_mean(outcome.cov.clone())?;
                let null = nullifier_covariance(&state, &g)?;
                report.nullifier_deviation = Some(max_abs(&(null - expected_nullifier_covariance(&g, bundle.xi))));
            }
            if let Some(dest) = out {
                fs::write(dest, serde_json::to_string_pretty(&MatrixJson::from_real(&outcome.cov))? + "\n")?;
            }
            let pass = outcome.target_distance.is_none_or(|d| d <= distance_bound) && outcome.purity >= PURITY_FLOOR;
            if !pass {
                report.diagnosis = Some("final state outside tolerance".into());
            }
            report.status = status(pass).into();
            if pass {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        Err(err @ Error::StageTimeout { .. }) => {
            report.status = "timeout".into();
            report.diagnosis = Some(err.to_string());
            EXIT_TIMEOUT
        }
        Err(err) => return Err(err.into()),
    };
    if json {
        print_json(&report)?;
    } else {
        println!("{n} nodes, {} of {} stages, kappa = {kappa}, tol = {tol:e}", schedule.stages.len(), bundle.stages);
        println!("stage duration    residual   spectator_drift");
        for l in &report.log {
            println!("{:>5} {:<10.4} {:<10.3e} {:.3e}", l.k, l.physical_duration, l.residual, l.spectator_drift);
        }
        if let Some(d) = report.target_distance {
            println!("distance to target {d:.3e} (bound {distance_bound:.1e})");
        }
        if let Some(d) = report.nullifier_deviation {
            println!("nullifier deviation {d:.3e}");
        }
        println!("purity {:.8}", report.purity);
        if let Some(d) = &report.diagnosis {
            println!("{d}");
        }
        println!("{}", report.status.to_uppercase());
    }
    Ok(code)
}

fn parse_range(text: &str, name: &str) -> Result<GridRange, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Failure::usage(format!("--{name} expects min:max:steps, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    GridRange::new(min, max, steps).map_err(|e| Failure::usage(format!("--{name}: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepReport {
    command: String,
    rows: usize,
    unstable: usize,
    gamma: f64,
    epsilon: f64,
    argmax: Option<SweepRow>,
    out: Option<String>,
}

pub fn sweep(gamma: f64, epsilon: f64, xi: &str, kappa: &str, out: Option<&Path>, json: bool) -> CmdResult {
    let grid = SweepGrid {
        xi_range: parse_range(xi, "xi")?,
        kappa_range: parse_range(kappa, "kappa")?,
        gamma,
        epsilon,
    };
    let table = run_sweep(&grid)?;
    let argmax = table.argmax().copied();
    match out {
        Some(dest) => table.write_csv(fs::File::create(dest)?)?,
        None if !json => table.write_csv(std::io::stdout().lock())?,
        None => {}
    }
    let report = SweepReport {
        command: "sweep".into(),
        rows: table.rows.len(),
        unstable: table.rows.iter().filter(|r| !r.e_n.is_finite()).count(),
        gamma,
        epsilon,
        argmax,
        out: out.map(|p| p.display().to_string()),
    };
    if json {
        print_json(&report)?;
    } else {
        let line = match argmax {
            Some(r) => format!("argmax: xi = {}, kappa = {}, E_N = {:.6}", r.xi, r.kappa, r.e_n),
            None => "argmax: no stable grid point".into(),
        };
        // keep stdout pure CSV when the table goes there
        if out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(EXIT_OK)
}

pub fn epr(r: f64, kappa: f64, gamma: f64, epsilon: f64, out: Option<&Path>) -> CmdResult {
    let p = EprParams::new(r, kappa, gamma, epsilon)?;
    let mut doc = SystemDocument::from_target(&p.target()?, Some(kappa));
    doc.epsilon = (epsilon != 1.0).then_some(epsilon);
    let text = doc.to_json()? + "\n";
    match out {
        Some(dest) => fs::write(dest, text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}
