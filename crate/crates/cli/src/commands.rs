//! Subcommand bodies. Each returns whether its checks passed; hard errors
//! propagate as `Err`.

use anyhow::{anyhow, bail, Context, Result};
use consensus_forge::linalg::sym_eigen;
use consensus_forge::lmi::{negdef_margin, SolverOptions, SymMatrix};
use consensus_forge::simulator::{self, BoundCheck, BoundVerdict, SimConfig, OUTSIDE_CLASS};
use consensus_forge::synthesis::{
    bound_constant, closed_loop_abscissae, coupled_block, initial_state_term,
    lift_uniform_solution, synthesize, uniform_block, uniform_f, verify_riccati,
};
use consensus_forge::{
    Certificate64, Error as CoreError, Matrix, Method, NetworkSpec64, SimulationResult64,
};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::certificate::{CertificateFile, Tolerances};
use crate::config::{self, ConfigFile};
use crate::output;

/// Synchronization verdict threshold on `‖e(T)‖ / ‖e(0)‖`.
pub const SYNC_RATIO: f64 = 1e-3;

pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

fn fmt_rows(m: &Matrix<f64>) -> String {
    format!("{:?}", m.to_rows())
}

fn solver_options(cfg: &ConfigFile) -> Result<SolverOptions> {
    Ok(SolverOptions {
        margin_tol: cfg.margin_tol()?,
        ..SolverOptions::default()
    })
}

/// Synthesis outcome: a certificate, or the reason none was issued.
pub enum Synthesized {
    Issued(Box<CertificateFile>),
    Refused(String),
}

pub fn synthesize_file(cfg: &ConfigFile, method: Method) -> Result<Synthesized> {
    let spec = cfg.spec()?;
    let opts = solver_options(cfg)?;
    match synthesize(&spec, method, &opts) {
        Ok(cert) => Ok(Synthesized::Issued(Box::new(CertificateFile::new(
            &cert,
            cfg.spec_hash(),
            Tolerances::from(&opts),
        )))),
        Err(
            e @ (CoreError::Infeasible(_)
            | CoreError::CertificateRejected(_)
            | CoreError::LiftRejected { .. }),
        ) => Ok(Synthesized::Refused(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

pub fn synth_summary(file: &CertificateFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "method: {}", file.method);
    let _ = writeln!(s, "K = {:?}", file.k);
    let _ = writeln!(s, "solver margin = {:e}", file.solver_margin);
    let _ = writeln!(s, "LMI margins = {:?}", file.lmi_margins);
    let _ = writeln!(s, "Riccati margins = {:?}", file.riccati_margins);
    let _ = writeln!(s, "pi = {:?}", file.pi);
    let _ = writeln!(s, "theta = {:?}", file.theta);
    let _ = writeln!(s, "bound_constant = {:e}", file.bound_constant);
    match file.bound_total {
        Some(b) => {
            let _ = writeln!(s, "bound_total = {b:e}");
        }
        None => {
            let _ = writeln!(s, "bound_total = n/a (no initial state in config)");
        }
    }
    s
}

pub fn synth(config: &Path, method: Option<Method>, out: Option<&Path>) -> Result<Outcome> {
    let cfg = config::load(config)?;
    let method = method.or_else(|| cfg.method()).unwrap_or(Method::Coupled);
    match synthesize_file(&cfg, method)? {
        Synthesized::Issued(file) => {
            print!("{}", synth_summary(&file));
            if let Some(out) = out {
                file.save(out)?;
                println!("certificate written to {}", out.display());
            }
            Ok(Outcome::Pass)
        }
        Synthesized::Refused(msg) => {
            println!("method: {method}");
            println!("infeasible: {msg}");
            Ok(Outcome::Fail)
        }
    }
}

/// Parses `a,b;c,d` into a row-major matrix.
pub fn parse_gain(text: &str, rows: usize, cols: usize) -> Result<Matrix<f64>> {
    let parsed: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| anyhow!("gain entry {v:?} is not a number"))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let m = Matrix::from_rows(&parsed).context("inline gain rows differ in length")?;
    if m.shape() != (rows, cols) {
        bail!(
            "inline gain is {}x{}, expected {rows}x{cols} (rows separated by ';')",
            m.rows(),
            m.cols()
        );
    }
    Ok(m)
}

/// Where the simulated gain comes from.
pub enum GainSource<'a> {
    Certificate(&'a Path),
    Inline(&'a str),
}

fn resolve_gain(
    cfg: &ConfigFile,
    spec: &NetworkSpec64,
    source: GainSource<'_>,
) -> Result<(Matrix<f64>, Option<Certificate64>)> {
    match source {
        GainSource::Certificate(path) => {
            let file = CertificateFile::load(path)?;
            file.check_hash(&cfg.spec_hash())?;
            let cert = file.certificate()?;
            Ok((cert.k.clone(), Some(cert)))
        }
        GainSource::Inline(text) => Ok((
            parse_gain(text, spec.input_dim(), spec.state_dim())?,
            None,
        )),
    }
}

pub struct RunSummary {
    pub result: SimulationResult64,
    pub admissible: bool,
    pub bound: Option<BoundCheck<f64>>,
    pub sync_ratio: f64,
}

impl RunSummary {
    pub fn synchronized(&self) -> bool {
        self.sync_ratio <= SYNC_RATIO
    }

    pub fn violated(&self) -> bool {
        matches!(&self.bound, Some(b) if b.verdict == BoundVerdict::Violated)
    }

    pub fn horizon_warning(&self) -> bool {
        self.tail_indicator() > simulator::HORIZON_TOL
    }

    pub fn tail_indicator(&self) -> f64 {
        self.sync_ratio * self.sync_ratio
    }

    pub fn verdict_label(&self) -> &'static str {
        match &self.bound {
            None => "no-certificate",
            Some(b) => match b.verdict {
                BoundVerdict::Satisfied => "satisfied",
                BoundVerdict::Violated => "violated",
                BoundVerdict::NotClaimed(_) => "not-claimed",
            },
        }
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let r = &self.result;
        let _ = writeln!(s, "samples = {}", r.len());
        let _ = writeln!(s, "J_direct = {:e}", r.final_cost);
        if !self.admissible {
            let _ = writeln!(s, "notice: {OUTSIDE_CLASS}; no bound verdict");
        } else {
            match &self.bound {
                None => {
                    let _ = writeln!(s, "bound: not checked (inline gain, no certificate)");
                }
                Some(b) => match &b.verdict {
                    BoundVerdict::Satisfied => {
                        let _ = writeln!(
                            s,
                            "bound: satisfied (J_direct {:e} <= bound_total {:e})",
                            b.j_direct, b.bound_total
                        );
                    }
                    BoundVerdict::Violated => {
                        let _ = writeln!(
                            s,
                            "bound: VIOLATED (J_direct {:e} > bound_total {:e})",
                            b.j_direct, b.bound_total
                        );
                    }
                    BoundVerdict::NotClaimed(why) => {
                        let _ = writeln!(s, "bound: not claimed ({why})");
                    }
                },
            }
        }
        let _ = writeln!(s, "tail indicator = {:e}", self.tail_indicator());
        let iqc = if r.iqc_passed() { "pass" } else { "fail" };
        let _ = writeln!(s, "IQC: {iqc} ({} neighbor pairs)", r.iqc.len());
        let sync = if self.synchronized() { "pass" } else { "fail" };
        let _ = writeln!(
            s,
            "synchronization: {sync} (|e(T)|/|e(0)| = {:e})",
            self.sync_ratio
        );
        s
    }
}

pub fn run(
    spec: &NetworkSpec64,
    gain: &Matrix<f64>,
    sim: &SimConfig<f64>,
    cert: Option<&Certificate64>,
) -> Result<RunSummary> {
    let result = simulator::simulate(spec, gain, sim)?;
    let admissible = result.coupling.is_admissible()?;
    let bound = cert
        .map(|c| simulator::check_bound(&result, c, spec))
        .transpose()?;
    let norms = result.error_norms();
    let (start, end) = (norms[0], *norms.last().expect("at least one sample"));
    let sync_ratio = if start > 0.0 { end / start } else { 0.0 };
    Ok(RunSummary {
        result,
        admissible,
        bound,
        sync_ratio,
    })
}

fn horizon_notice(summary: &RunSummary) {
    if summary.horizon_warning() {
        eprintln!(
            "warning: horizon too short, |e(T)|^2/|e(0)|^2 = {:e} exceeds {:e}; the finite-horizon cost understates the infinite-horizon cost",
            summary.tail_indicator(),
            simulator::HORIZON_TOL
        );
    }
}

pub fn simulate(
    config: &Path,
    source: GainSource<'_>,
    k: Option<f64>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let cfg = config::load(config)?;
    let spec = cfg.spec()?;
    let (gain, cert) = resolve_gain(&cfg, &spec, source)?;
    let sim = cfg.sim_config(k)?;
    let summary = run(&spec, &gain, &sim, cert.as_ref())?;
    println!("K = {}", fmt_rows(&gain));
    print!("{}", summary.report());
    horizon_notice(&summary);
    if let Some(out) = out {
        output::write_trajectory(out, &summary.result)?;
        println!("trajectory written to {}", out.display());
    }
    Ok(Outcome::from_pass(!summary.violated()))
}

struct Report {
    text: String,
    failures: usize,
}

impl Report {
    fn new() -> Self {
        Self {
            text: String::new(),
            failures: 0,
        }
    }

    fn check(&mut self, pass: bool, line: impl AsRef<str>) {
        if !pass {
            self.failures += 1;
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(self.text, "{tag}  {}", line.as_ref());
    }

    fn info(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.text, "      {}", line.as_ref());
    }

    /// A margin that must reach `tol`; computation errors count as failures.
    fn margin(&mut self, label: &str, value: consensus_forge::Result<f64>, tol: f64) {
        match value {
            Ok(m) => self.check(m >= tol, format!("{label}: {m:.6e} (need >= {tol:e})")),
            Err(e) => self.check(false, format!("{label}: {e}")),
        }
    }
}

fn block_margin(m: consensus_forge::Result<Matrix<f64>>) -> consensus_forge::Result<f64> {
    negdef_margin(&SymMatrix::new(m?.symmetrized())?)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Independent re-check of a certificate against its config.
pub fn verify_report(cfg: &ConfigFile, file: &CertificateFile) -> Result<(String, bool)> {
    file.check_hash(&cfg.spec_hash())?;
    let spec = cfg.spec()?;
    let sd = spec.spectral()?;
    let cert = file.certificate()?;
    let tol = config::env_margin_tol()?.unwrap_or(file.tolerances.margin_tol);
    let agents = spec.agent_count();
    let (n, m) = (spec.state_dim(), spec.input_dim());
    let mut rep = Report::new();
    let _ = writeln!(
        rep.text,
        "certificate {} ({} v{}), spec hash {}",
        cert.method, file.tool, file.version, file.spec_hash
    );
    let _ = writeln!(rep.text, "margin_tol = {tol:e}");

    let shapes_ok = cert.y.shape() == (n, n)
        && cert.f.shape() == (m, n)
        && cert.k.shape() == (m, n)
        && cert.pi.len() == agents
        && cert.theta.len() == if agents > 1 { agents } else { 0 };
    rep.check(shapes_ok, "shapes of Y, F, K, pi, theta match the config");
    if !shapes_ok {
        return Ok((rep.text, false));
    }

    let y = &cert.y;
    let scale = 1.0 + y.max_abs();
    let asym = y.asymmetry();
    rep.check(asym <= 1e-12 * scale, format!("Y symmetric: asymmetry {asym:e}"));
    match sym_eigen(y) {
        Ok(e) => {
            let min = e.values[0];
            rep.check(min > 0.0, format!("Y positive definite: min eigenvalue {min:.6e}"));
        }
        Err(e) => rep.check(false, format!("Y positive definite: {e}")),
    }
    let positive = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
    rep.check(
        positive(&cert.pi) && positive(&cert.theta),
        format!("multipliers positive: pi {:?}, theta {:?}", cert.pi, cert.theta),
    );
    let ky = &cert.k * y;
    let mismatch = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (ky[(i, j)] - cert.f[(i, j)]).abs())
        .fold(0.0, f64::max);
    rep.check(
        mismatch <= 1e-8 * (1.0 + cert.f.max_abs()),
        format!("K Y = F: max deviation {mismatch:e}"),
    );

    let point = cert.point();
    match cert.method {
        Method::Coupled => {
            for i in 0..agents {
                rep.margin(
                    &format!("LMI margin, subsystem {}", i + 1),
                    block_margin(coupled_block(&spec, &sd, i, &point)),
                    tol,
                );
            }
        }
        Method::Uniform => {
            let beta = cert.theta.first().map_or(0.0, |t| 1.0 / t);
            rep.margin(
                "uniform LMI margin",
                block_margin(uniform_block(&spec, &sd, y, 1.0 / cert.pi[0], beta)),
                tol,
            );
            for i in 0..agents {
                let value = block_margin(coupled_block(&spec, &sd, i, &point));
                match value {
                    Ok(v) => rep.check(
                        v > 0.0,
                        format!("lifted LMI margin, subsystem {}: {v:.6e} (need > 0)", i + 1),
                    ),
                    Err(e) => rep.check(false, format!("lifted LMI margin, subsystem {}: {e}", i + 1)),
                }
            }
        }
    }
    for i in 0..agents {
        rep.margin(
            &format!("Riccati margin, subsystem {}", i + 1),
            verify_riccati(&spec, &sd, y, &cert.f, &cert.pi, &cert.theta, i),
            tol,
        );
    }

    if cert.method == Method::Uniform {
        match uniform_f(&spec, &sd) {
            Ok(f) => {
                let dev = (0..m)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| (f[(i, j)] - cert.f[(i, j)]).abs())
                    .fold(0.0, f64::max);
                rep.check(
                    dev <= 1e-12 * (1.0 + f.max_abs()),
                    format!("F equals the uniform gain formula: max deviation {dev:e}"),
                );
            }
            Err(e) => rep.check(false, format!("F equals the uniform gain formula: {e}")),
        }
        let theta = cert.theta.first().copied().unwrap_or(0.0);
        match lift_uniform_solution(&spec, &sd, y, cert.pi[0], theta) {
            Ok(lift) => {
                for (i, mg) in lift.riccati_margins.iter().enumerate() {
                    rep.check(
                        *mg > 0.0,
                        format!("lifted Riccati margin, subsystem {}: {mg:.6e}", i + 1),
                    );
                }
            }
            Err(e) => rep.check(false, format!("lift to the coupled form: {e}")),
        }
    }

    match closed_loop_abscissae(&spec, &sd, &cert.k) {
        Ok(abs) => {
            for (i, (a, lam)) in abs.iter().zip(&sd.lambdas).enumerate() {
                rep.check(
                    *a < 0.0,
                    format!(
                        "Hurwitz, lambda_{} = {lam:.6}: max Re eig(A + lambda B1 K) = {a:.6e}",
                        i + 1
                    ),
                );
            }
        }
        Err(e) => rep.check(false, format!("Hurwitz checks: {e}")),
    }

    let constant = bound_constant(&cert.pi, &cert.theta, spec.d);
    rep.check(
        relative_gap(constant, cert.bound_constant) <= 1e-9 || constant == cert.bound_constant,
        format!(
            "bound_constant: recomputed {constant:e}, stored {:e}",
            cert.bound_constant
        ),
    );
    match (&spec.e0, cert.bound_total) {
        (Some(e0), stored) => match initial_state_term(y, e0) {
            Ok(term) => {
                let total = constant + term;
                let agrees = stored.is_none_or(|s| relative_gap(total, s) <= 1e-9);
                rep.check(
                    agrees,
                    format!(
                        "bound_total: recomputed {total:e}, stored {}",
                        stored.map_or("none".into(), |s| format!("{s:e}"))
                    ),
                );
            }
            Err(e) => rep.check(false, format!("bound_total: {e}")),
        },
        (None, _) => rep.info("bound_total: no initial state in config"),
    }

    let passed = rep.failures == 0;
    let _ = writeln!(
        rep.text,
        "verify: {}",
        if passed {
            "all checks passed".to_string()
        } else {
            format!("{} check(s) failed", rep.failures)
        }
    );
    Ok((rep.text, passed))
}

pub fn verify(config: &Path, cert: &Path) -> Result<Outcome> {
    let cfg = config::load(config)?;
    let file = CertificateFile::load(cert)?;
    let (text, passed) = verify_report(&cfg, &file)?;
    print!("{text}");
    Ok(Outcome::from_pass(passed))
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("k-grid entry {v:?} is not a number"))
        })
        .collect::<Result<_>>()?;
    if grid.iter().any(|k| !k.is_finite()) {
        bail!("k-grid entries must be finite");
    }
    Ok(grid)
}

/// One simulation per `k`, run concurrently, reported in grid order.
pub fn sweep(
    config: &Path,
    source: GainSource<'_>,
    grid: &[f64],
    out: Option<&Path>,
) -> Result<Outcome> {
    let cfg = config::load(config)?;
    let spec = cfg.spec()?;
    let (gain, cert) = resolve_gain(&cfg, &spec, source)?;
    let runs: Vec<(f64, RunSummary)> = grid
        .par_iter()
        .map(|&k| {
            let sim = cfg.sim_config(Some(k))?;
            Ok((k, run(&spec, &gain, &sim, cert.as_ref())?))
        })
        .collect::<Result<_>>()?;
    let table = output::sweep_table(&runs)?;
    print!("{table}");
    for (k, s) in &runs {
        if s.horizon_warning() {
            eprintln!("warning: k = {k}: horizon too short (tail indicator {:e})", s.tail_indicator());
        }
    }
    if let Some(out) = out {
        std::fs::write(out, &table).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(Outcome::from_pass(runs.iter().all(|(_, s)| !s.violated())))
}

/// Full pendulum pipeline into `dir`.
pub fn demo(name: &str, dir: &Path, k: f64) -> Result<Outcome> {
    if name != "pendulum" {
        bail!("unknown demo {name:?} (available: pendulum)");
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let cfg = ConfigFile::pendulum(k);
    let config_path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&cfg)?;
    text.push('\n');
    std::fs::write(&config_path, text)?;
    println!("config: {}", config_path.display());

    let spec = cfg.spec()?;
    let sim = cfg.sim_config(None)?;
    let mut all_pass = true;
    let mut runs: Vec<(Method, RunSummary)> = Vec::new();
    for method in [Method::Coupled, Method::Uniform] {
        let tag = method.as_str();
        let file = match synthesize_file(&cfg, method)? {
            Synthesized::Issued(file) => file,
            Synthesized::Refused(msg) => {
                println!("[{tag}] infeasible: {msg}");
                all_pass = false;
                continue;
            }
        };
        let cert_path = dir.join(format!("certificate_{tag}.json"));
        file.save(&cert_path)?;
        println!("[{tag}] certificate: {}", cert_path.display());
        print!("{}", indent(tag, &synth_summary(&file)));

        let (report, passed) = verify_report(&cfg, &file)?;
        let report_path = dir.join(format!("verify_{tag}.txt"));
        std::fs::write(&report_path, &report)?;
        println!(
            "[{tag}] verify: {} ({})",
            if passed { "pass" } else { "FAIL" },
            report_path.display()
        );
        all_pass &= passed;

        let cert = file.certificate()?;
        let summary = run(&spec, &cert.k, &sim, Some(&cert))?;
        let traj_path = dir.join(format!("trajectory_{tag}.csv"));
        output::write_trajectory(&traj_path, &summary.result)?;
        println!("[{tag}] trajectory: {}", traj_path.display());
        print!("{}", indent(tag, &summary.report()));
        horizon_notice(&summary);
        all_pass &= !summary.violated();
        runs.push((method, summary));
    }

    let labelled: Vec<(&str, &SimulationResult64)> =
        runs.iter().map(|(m, s)| (m.as_str(), &s.result)).collect();
    for (file, component) in [("relative_angles.csv", 0), ("relative_velocities.csv", 1)] {
        let path: PathBuf = dir.join(file);
        output::write_relative(&path, &labelled, component)?;
        println!("plot data: {}", path.display());
    }
    Ok(Outcome::from_pass(all_pass))
}

fn indent(tag: &str, text: &str) -> String {
    text.lines().map(|l| format!("[{tag}]   {l}\n")).collect()
}
