use std::fs;
use std::path::Path;
use std::process::Command;

use nozzle_core::cli_io::{parse_case_str, run_cli, SolutionTable};
use nozzle_core::NozzleError;

const BASE: &str = "[geometry]
r_en = 2.0
r_ex = 3.0
phi0 = 0.785

[gas]
gamma = 1.4

[background]
mach0 = 2.0
rho0 = 1.0
doping = 0.5
";

const PERTURBED: &str = "
[perturbation]
eps = 1e-3
b = [1.0, 0.5]
e_en = [0.0, 1.0]
s_en = [0.0, 1.0]
w_en = { axis_tapered = [1.0] }

[numerics]
nr = 32
nphi = 10
modes = 6
";

fn write_case(dir: &Path, text: &str) -> String {
    let p = dir.join("case.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("nozzle").chain(args.iter().copied()))
}

#[test]
fn solve_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), &format!("{BASE}{PERTURBED}"));
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["solve", "--case", &case, "--out", out]), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["status"], "Converged");
    assert_eq!(cli(&["verify", "--case", &case, "--out", out]), 0);
    let res: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("residuals.json")).unwrap()).unwrap();
    let stored = report["report"]["residuals"]["total"].as_f64().unwrap();
    let again = res["total"].as_f64().unwrap();
    // the csv carries 17 significant digits, so the residuals agree closely
    assert!((stored - again).abs() <= 1e-6 * stored.max(1e-12), "{stored} vs {again}");
}

#[test]
fn csv_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), &format!("{BASE}{PERTURBED}"));
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["solve", "--case", &case, "--out", out, "--grid", "16x8"]), 0);
    let text = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let table = SolutionTable::from_csv(&text).unwrap();
    assert_eq!((table.nr, table.nphi), (16, 8));
    assert_eq!(table.to_csv(), text);
}

#[test]
fn background_and_eigen_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), BASE);
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["background", "--case", &case, "--out", out]), 0);
    assert_eq!(cli(&["eigen", "--case", &case, "--out", out, "--modes", "4"]), 0);
    let eig = fs::read_to_string(dir.path().join("eigen.csv")).unwrap();
    // header plus modes + 1 eigenvalues
    assert_eq!(eig.lines().count(), 6);
    assert!(fs::read_to_string(dir.path().join("background.csv")).unwrap().lines().count() > 10);
}

#[test]
fn sweep_reports_unit_slope() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), &format!("{BASE}{PERTURBED}"));
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["sweep", "--case", &case, "--out", out, "--eps", "1e-4,1e-3,1e-2"]), 0);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    let slope = s["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn sweep_needs_two_decades() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), &format!("{BASE}{PERTURBED}"));
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["sweep", "--case", &case, "--out", out, "--eps", "1e-3,2e-3,4e-3"]), 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["solve", "--bogus"]), 1);
    assert_eq!(cli(&["solve", "--case", "/nonexistent/case.toml"]), 1);
    assert_eq!(cli(&["--help"]), 0);
}

#[test]
fn sonic_case_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[perturbation]\neps = -1.2\nu_en = [1.0]\n\n[numerics]\nnr = 32\nnphi = 10\n");
    let case = write_case(dir.path(), &text);
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["solve", "--case", &case, "--out", out]), 2);
    let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report.contains("SonicApproach"));
}

#[test]
fn binary_runs() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), BASE);
    let st = Command::new(env!("CARGO_BIN_EXE_nozzle"))
        .args(["solve", "--case", &case, "--grid", "16x8", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let st = Command::new(env!("CARGO_BIN_EXE_nozzle")).arg("frobnicate").status().unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn dense_entrance_is_rejected_with_sonic_density() {
    let text = BASE.replace("mach0 = 2.0", "m0 = 1.0").replace("rho0 = 1.0", "rho0 = 5.0");
    let e = parse_case_str(&text).unwrap_err();
    assert!(matches!(e, NozzleError::Validation(ref m) if m.contains("rho_s")), "{e}");
}

#[test]
fn linear_swirl_fails_compatibility() {
    let text = format!("{BASE}\n[perturbation]\neps = 1e-3\nw_en = {{ phi = [0.0, 0.785], value = [0.0, 0.785] }}\n");
    match parse_case_str(&text).unwrap_err() {
        NozzleError::Compatibility(f) => assert!(f.iter().any(|m| m.contains("dw_en/dphi(phi0)")), "{f:?}"),
        e => panic!("{e}"),
    }
}

#[test]
fn shipped_cases_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases");
    for name in ["demo.toml", "background.toml"] {
        nozzle_core::cli_io::parse_case(&dir.join(name)).unwrap();
    }
}
