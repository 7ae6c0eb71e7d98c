//! Case files, solution archives and the command-line surface.
//!
//! A case file is a TOML document with the sections `[geometry]`, `[gas]`,
//! `[background]`, `[perturbation]` and `[numerics]`. Profiles are either a
//! bare array (cosine series `sum a_k cos(k pi phi / phi0)`) or an inline
//! table naming one family:
//!
//! ```toml
//! [perturbation]
//! eps = 1e-3
//! u_en = [0.0, 1.0]
//! w_en = { axis_tapered = [1.0] }
//! v_en = { end_tapered = [1.0, -0.5] }
//! s_en = { phi = [0.0, 0.4, 0.785398], value = [1.0, 0.5, 0.0] }
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::case::{NozzleCase, Numerics, Perturbation, Profile, ProfileForm};
use crate::core_model::{FlowFields, GasLaw, Grid, NozzleGeometry};
use crate::eigenbasis::{build_basis, default_nodes};
use crate::error::{NozzleError, NozzleResult};
use crate::outer_iteration::{scaling_study, solve_case, ExitStatus, IterationConfig, ScalingStudy, Solution, SolveReport};
use crate::radial_background::{integrate_background, BackgroundParams, Doping, RadialBackground};
use crate::verify_report::{residual_euler_poisson, PrimitiveFields};

pub const ARCHIVE_VERSION: &str = concat!("nozzle-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    geometry: RawGeometry,
    gas: RawGas,
    background: RawBackground,
    #[serde(default)]
    perturbation: RawPerturbation,
    #[serde(default)]
    numerics: RawNumerics,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    r_en: f64,
    r_ex: f64,
    phi0: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGas {
    gamma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackground {
    m0: Option<f64>,
    /// entrance Mach number, as an alternative to `m0`
    mach0: Option<f64>,
    s0: Option<f64>,
    rho0: f64,
    e0: Option<f64>,
    doping: RawDoping,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDoping {
    Constant(f64),
    Table { r: Vec<f64>, b: Vec<f64> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    eps: Option<f64>,
    u_en: Option<RawProfile>,
    v_en: Option<RawProfile>,
    w_en: Option<RawProfile>,
    s_en: Option<RawProfile>,
    e_en: Option<RawProfile>,
    phi_ex: Option<RawProfile>,
    b: Option<RawProfile>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawProfile {
    Cosine(Vec<f64>),
    Family(RawFamily),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    cosine: Option<Vec<f64>>,
    axis_tapered: Option<Vec<f64>>,
    end_tapered: Option<Vec<f64>>,
    phi: Option<Vec<f64>>,
    value: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    nr: Option<usize>,
    nphi: Option<usize>,
    modes: Option<usize>,
    quad_nodes: Option<usize>,
    tol: Option<f64>,
    tol_p: Option<f64>,
    tol_v: Option<f64>,
    tol_t: Option<f64>,
    max_iters: Option<usize>,
    relax: Option<f64>,
    sonic_margin: Option<f64>,
    delta_bar: Option<f64>,
    ode_rtol: Option<f64>,
    budget: Option<f64>,
}

fn located(text: &str, offset: usize, message: String) -> NozzleError {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    NozzleError::Parse { line, column, message }
}

fn profile(name: &str, raw: Option<RawProfile>, phi0: f64) -> NozzleResult<Profile> {
    let form = match raw {
        None => return Ok(Profile::zero(phi0)),
        Some(RawProfile::Cosine(a)) => ProfileForm::Cosine(a),
        Some(RawProfile::Family(f)) => {
            let given = [f.cosine.is_some(), f.axis_tapered.is_some(), f.end_tapered.is_some(), f.phi.is_some()]
                .iter()
                .filter(|&&b| b)
                .count();
            if given != 1 || f.phi.is_some() != f.value.is_some() {
                return Err(NozzleError::Validation(format!(
                    "profile {name} must name exactly one of cosine, axis_tapered, end_tapered or phi/value"
                )));
            }
            if let Some(a) = f.cosine {
                ProfileForm::Cosine(a)
            } else if let Some(a) = f.axis_tapered {
                ProfileForm::AxisTapered(a)
            } else if let Some(a) = f.end_tapered {
                ProfileForm::EndTapered(a)
            } else {
                let (phi, value) = (f.phi.unwrap_or_default(), f.value.unwrap_or_default());
                if phi.len() != value.len() || phi.len() < 2 {
                    return Err(NozzleError::Validation(format!("profile {name}: table needs matching phi/value of length >= 2")));
                }
                if phi.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(NozzleError::Validation(format!("profile {name}: phi must increase strictly")));
                }
                if phi[0].abs() > 1e-12 || (phi[phi.len() - 1] - phi0).abs() > 1e-6 {
                    return Err(NozzleError::Validation(format!("profile {name}: table must span [0, phi0]")));
                }
                ProfileForm::Table { phi, value }
            }
        }
    };
    Ok(Profile { form, phi0 })
}

/// Parses a case from text. Syntax errors carry line and column.
pub fn parse_case_str(text: &str) -> NozzleResult<NozzleCase> {
    let raw: RawCase = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        located(text, offset, e.message().trim().to_string())
    })?;
    let g = raw.geometry;
    let gamma = raw.gas.gamma;
    GasLaw::new(gamma)?;
    let phi0 = g.phi0;
    let bg = raw.background;
    let s0 = bg.s0.unwrap_or(1.0);
    let m0 = match (bg.m0, bg.mach0) {
        (Some(m), None) => m,
        (None, Some(mach)) => {
            let c0 = (gamma * s0 * bg.rho0.powf(gamma - 1.0)).sqrt();
            mach * g.r_en * g.r_en * bg.rho0 * c0
        }
        _ => return Err(NozzleError::Validation("background needs exactly one of m0 or mach0".into())),
    };
    let doping = match bg.doping {
        RawDoping::Constant(b) => Doping::Constant(b),
        RawDoping::Table { r, b } => {
            if r.len() != b.len() || r.len() < 2 || r.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(NozzleError::Validation("doping table needs increasing r with matching b".into()));
            }
            Doping::Table { r, b }
        }
    };
    let p = raw.perturbation;
    let perturbation = Perturbation {
        eps: p.eps.unwrap_or(0.0),
        u_en: profile("u_en", p.u_en, phi0)?,
        v_en: profile("v_en", p.v_en, phi0)?,
        w_en: profile("w_en", p.w_en, phi0)?,
        s_en: profile("S_en", p.s_en, phi0)?,
        e_en: profile("E_en", p.e_en, phi0)?,
        phi_ex: profile("Phi_ex", p.phi_ex, phi0)?,
        b: profile("b", p.b, phi0)?,
    };
    let d = Numerics::default();
    let n = raw.numerics;
    let tol = n.tol;
    let numerics = Numerics {
        nr: n.nr.unwrap_or(d.nr),
        nphi: n.nphi.unwrap_or(d.nphi),
        modes: n.modes.unwrap_or(d.modes),
        quad_nodes: n.quad_nodes.or(d.quad_nodes),
        tol_p: n.tol_p.or(tol).unwrap_or(d.tol_p),
        tol_v: n.tol_v.or(tol).unwrap_or(d.tol_v),
        tol_t: n.tol_t.or(tol).unwrap_or(d.tol_t),
        max_iters: n.max_iters.unwrap_or(d.max_iters),
        relax: n.relax.unwrap_or(d.relax),
        sonic_margin: n.sonic_margin.unwrap_or(d.sonic_margin),
        delta_bar: n.delta_bar.or(d.delta_bar),
        ode_rtol: n.ode_rtol.unwrap_or(d.ode_rtol),
        budget: n.budget.unwrap_or(d.budget),
    };
    let case = NozzleCase {
        geometry: NozzleGeometry { r_en: g.r_en, r_ex: g.r_ex, phi0 },
        gas: GasLaw { gamma },
        background: BackgroundParams { gamma, m0, s0, rho0: bg.rho0, e0: bg.e0.unwrap_or(0.0), doping },
        perturbation,
        numerics,
    };
    case.validate()?;
    validate_compatibility(&case)?;
    Ok(case)
}

/// Reads and parses a case file.
pub fn parse_case(path: &Path) -> NozzleResult<NozzleCase> {
    let text = fs::read_to_string(path)?;
    parse_case_str(&text)
}

/// Checks the boundary compatibility conditions at `1e-8`.
pub fn validate_compatibility(case: &NozzleCase) -> NozzleResult<()> {
    case.check_compatibility()
}

/// Hex SHA-256 of the canonical JSON form of a case.
pub fn case_hash(case: &NozzleCase) -> String {
    let json = serde_json::to_string(case).expect("case serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub const SOLUTION_HEADER: &str = "r,phi,rho,u_r,u_phi,u_theta,S,Phi,M,psi,chi,Psi";

/// Node table of a solution, row-major with `r` outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTable {
    pub nr: usize,
    pub nphi: usize,
    pub rows: Vec<[f64; 12]>,
}

impl SolutionTable {
    pub fn new(fields: &FlowFields, p: &PrimitiveFields) -> Self {
        let g = &fields.grid;
        let mut rows = Vec::with_capacity(g.len());
        for i in 0..g.nr() {
            for j in 0..g.nphi() {
                let k = g.idx(i, j);
                rows.push([
                    g.r[i],
                    g.phi[j],
                    p.rho[k],
                    p.u_r[k],
                    p.u_phi[k],
                    p.u_theta[k],
                    p.entropy[k],
                    p.big_phi[k],
                    p.mach[k],
                    fields.psi[k],
                    fields.chi[k],
                    fields.big_psi[k],
                ]);
            }
        }
        SolutionTable { nr: g.nr(), nphi: g.nphi(), rows }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * 12 * 24);
        s.push_str(SOLUTION_HEADER);
        s.push('\n');
        for row in &self.rows {
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> NozzleResult<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == SOLUTION_HEADER => {}
            _ => return Err(NozzleError::Parse { line: 1, column: 1, message: "missing solution header".into() }),
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = [0.0; 12];
            let mut count = 0;
            let mut column = 1;
            for (c, cell) in line.split(',').enumerate() {
                if c >= 12 {
                    return Err(NozzleError::Parse { line: n + 2, column, message: "too many columns".into() });
                }
                row[c] = f64::from_str(cell.trim()).map_err(|e| NozzleError::Parse {
                    line: n + 2,
                    column,
                    message: format!("bad number {cell:?}: {e}"),
                })?;
                column += cell.len() + 1;
                count += 1;
            }
            if count != 12 {
                return Err(NozzleError::Parse { line: n + 2, column, message: format!("expected 12 columns, got {count}") });
            }
            rows.push(row);
        }
        let nphi = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
        if rows.is_empty() || rows.len() % nphi != 0 {
            return Err(NozzleError::GridMismatch("rows do not form a tensor grid".into()));
        }
        Ok(SolutionTable { nr: rows.len() / nphi, nphi, rows })
    }

    pub fn grid(&self) -> Grid {
        Grid {
            r: (0..self.nr).map(|i| self.rows[i * self.nphi][0]).collect(),
            phi: (0..self.nphi).map(|j| self.rows[j][1]).collect(),
        }
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    pub fn primitives(&self, gamma: f64) -> PrimitiveFields {
        PrimitiveFields {
            grid: self.grid(),
            gamma,
            rho: self.column(2),
            u_r: self.column(3),
            u_phi: self.column(4),
            u_theta: self.column(5),
            entropy: self.column(6),
            big_phi: self.column(7),
            mach: self.column(8),
        }
    }
}

/// Self-describing header stored next to the field table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub version: String,
    pub case_hash: String,
    pub grid: [usize; 2],
    pub modes: usize,
    pub tolerances: [f64; 3],
    pub case: NozzleCase,
    pub report: SolveReport,
}

/// Writes `solution.csv` (when primitives exist) and `report.json`.
pub fn write_solution(dir: &Path, case: &NozzleCase, sol: &Solution) -> NozzleResult<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    if let (Some(f), Some(p)) = (&sol.fields, &sol.primitives) {
        let path = dir.join("solution.csv");
        fs::write(&path, SolutionTable::new(f, p).to_csv())?;
        out.push(path);
    }
    let c = &sol.report.config;
    let archive = Archive {
        version: ARCHIVE_VERSION.into(),
        case_hash: case_hash(case),
        grid: sol.report.grid,
        modes: sol.report.modes,
        tolerances: [c.tol_p, c.tol_v, c.tol_t],
        case: case.clone(),
        report: sol.report.clone(),
    };
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&archive).expect("report serializes") + "\n")?;
    out.push(path);
    Ok(out)
}

/// `r,rho,drho,E,dE,u,M,phi_bar,Phi_bar` per station.
pub fn background_csv(bg: &RadialBackground) -> String {
    let mut s = String::from("r,rho,drho,E,dE,u,M,phi_bar,Phi_bar\n");
    for i in 0..bg.r.len() {
        let row = [bg.r[i], bg.rho[i], bg.drho[i], bg.e[i], bg.de[i], bg.u[i], bg.mach[i], bg.phi_bar[i], bg.big_phi_bar[i]];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridArg {
    pub nr: usize,
    pub nphi: usize,
}

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NRxNPHI, got {s:?}"))?;
        let nr = a.trim().parse().map_err(|_| format!("bad NR in {s:?}"))?;
        let nphi = b.trim().parse().map_err(|_| format!("bad NPHI in {s:?}"))?;
        Ok(GridArg { nr, nphi })
    }
}

#[derive(Debug, Parser)]
#[command(name = "nozzle", version, about = "Supersonic Euler-Poisson flow in a divergent conical nozzle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// case file
    #[arg(long)]
    case: PathBuf,
    /// output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// grid size, e.g. 64x16
    #[arg(long)]
    grid: Option<GridArg>,
    /// number of eigenmodes
    #[arg(long)]
    modes: Option<usize>,
    /// tolerance for all three loops
    #[arg(long)]
    tol: Option<f64>,
    /// damping factor in (0, 1]
    #[arg(long)]
    relax: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// integrate the radial background and write background.csv
    Background(Common),
    /// build the angular eigenbasis and write eigen.csv
    Eigen(Common),
    /// solve the case and write solution.csv and report.json
    Solve(Common),
    /// recompute residuals of a stored solution.csv
    Verify(Common),
    /// amplitude sweep with a log-log fit of the deviation norm
    Sweep {
        #[command(flatten)]
        common: Common,
        /// comma-separated amplitudes
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
}

fn load(c: &Common) -> NozzleResult<NozzleCase> {
    let mut case = parse_case(&c.case)?;
    let n = &mut case.numerics;
    if let Some(g) = c.grid {
        n.nr = g.nr;
        n.nphi = g.nphi;
    }
    if let Some(m) = c.modes {
        n.modes = m;
    }
    if let Some(t) = c.tol {
        n.tol_p = t;
        n.tol_v = t;
        n.tol_t = t;
    }
    if let Some(r) = c.relax {
        n.relax = r;
    }
    case.validate()?;
    Ok(case)
}

fn exit_for(status: ExitStatus) -> i32 {
    if status == ExitStatus::Converged {
        0
    } else {
        2
    }
}

fn run(cmd: Command) -> NozzleResult<i32> {
    match cmd {
        Command::Background(c) => {
            let case = load(&c)?;
            let g = &case.geometry;
            let n = &case.numerics;
            match integrate_background(&case.background, g.r_en, g.r_ex, n.nr, &n.stepper_config()) {
                Ok(bg) => {
                    fs::create_dir_all(&c.out)?;
                    let path = c.out.join("background.csv");
                    fs::write(&path, background_csv(&bg))?;
                    println!("wrote {}", path.display());
                    Ok(0)
                }
                Err(e @ NozzleError::HorizonBeforeExit { .. }) => {
                    eprintln!("{e}");
                    Ok(2)
                }
                Err(e) => Err(e),
            }
        }
        Command::Eigen(c) => {
            let case = load(&c)?;
            let n = &case.numerics;
            let basis = build_basis(case.geometry.phi0, n.modes, n.quad_nodes.unwrap_or_else(|| default_nodes(n.modes)))?;
            let mut s = String::from("k,omega\n");
            for (k, w) in basis.omegas.iter().enumerate() {
                let _ = writeln!(s, "{k},{w:.16e}");
                println!("{k} {w:.12}");
            }
            fs::create_dir_all(&c.out)?;
            let path = c.out.join("eigen.csv");
            fs::write(&path, s)?;
            Ok(0)
        }
        Command::Solve(c) => {
            let case = load(&c)?;
            let cfg = IterationConfig::from_numerics(&case.numerics);
            let sol = solve_case(&case, &cfg)?;
            let paths = write_solution(&c.out, &case, &sol)?;
            let r = &sol.report;
            print!("status {:?} after {} outer iterations", r.status, r.outer_iterations);
            if let Some(m) = r.min_mach {
                print!(", min Mach {m:.6}");
            }
            println!();
            if let Some(msg) = &r.message {
                println!("{msg}");
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(exit_for(r.status))
        }
        Command::Verify(c) => {
            let case = load(&c)?;
            let text = fs::read_to_string(c.out.join("solution.csv"))?;
            let table = SolutionTable::from_csv(&text)?;
            let report = residual_euler_poisson(&table.primitives(case.gas.gamma), &case)?;
            let path = c.out.join("residuals.json");
            fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
            println!(
                "residuals: continuity {:.3e} momentum {:.3e} entropy {:.3e} swirl {:.3e} poisson {:.3e}",
                report.continuity, report.momentum_phi, report.entropy, report.angular_momentum, report.poisson
            );
            println!(
                "mass-flux spread {:.3e}, K-defect {:.3e}, min M - 1 = {:.6}",
                report.conservation.mass_flux_spread, report.conservation.k_defect, report.min_mach_margin
            );
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Sweep { common, eps } => {
            let case = load(&common)?;
            let cfg = IterationConfig::from_numerics(&case.numerics);
            let study: ScalingStudy = match scaling_study(&case, &eps, &cfg) {
                Ok(s) => s,
                Err(e @ NozzleError::StudyAborted(_)) => {
                    eprintln!("{e}");
                    return Ok(2);
                }
                Err(e) => return Err(e),
            };
            for w in &study.warnings {
                eprintln!("warning: {w}");
            }
            println!("{:>12} {:>22}", "eps", "deviation");
            for row in &study.rows {
                println!("{:>12.3e} {:>22.12e}", row.eps, row.deviation);
            }
            println!("slope {:.6}", study.slope);
            fs::create_dir_all(&common.out)?;
            fs::write(common.out.join("sweep.json"), serde_json::to_string_pretty(&study).expect("study serializes") + "\n")?;
            Ok(0)
        }
    }
}

/// Runs the command line; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[geometry]\nr_en = 2.0\nr_ex = 3.0\nphi0 = 0.785\n\n[gas]\ngamma = 1.4\n\n[background]\nmach0 = 2.0\nrho0 = 1.0\ndoping = 0.5\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_case_str(MINIMAL).unwrap();
        assert!(c.perturbation.is_zero());
        assert_eq!(c.numerics, Numerics::default());
        assert!((c.background.mach0(2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_one_is_rejected() {
        let text = MINIMAL.replace("gamma = 1.4", "gamma = 1.0");
        let e = parse_case_str(&text).unwrap_err();
        assert!(matches!(e, NozzleError::Validation(ref m) if m == "gamma must exceed 1"), "{e}");
    }

    #[test]
    fn syntax_error_is_located() {
        let text = MINIMAL.replace("rho0 = 1.0", "rho0 = = 1.0");
        match parse_case_str(&text).unwrap_err() {
            NozzleError::Parse { line, .. } => assert_eq!(line, 11),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_key_is_located() {
        let text = MINIMAL.replace("[gas]\n", "[gas]\ncolour = 3\n");
        assert!(matches!(parse_case_str(&text).unwrap_err(), NozzleError::Parse { line: 7, .. }));
    }

    #[test]
    fn grid_argument() {
        assert_eq!("64x16".parse::<GridArg>().unwrap(), GridArg { nr: 64, nphi: 16 });
        assert!("64".parse::<GridArg>().is_err());
    }

    #[test]
    fn hash_is_stable() {
        let c = parse_case_str(MINIMAL).unwrap();
        assert_eq!(case_hash(&c), case_hash(&c.clone()));
        assert_eq!(case_hash(&c).len(), 64);
    }
}
