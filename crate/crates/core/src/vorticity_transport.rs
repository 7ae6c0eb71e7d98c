//! Swirl stream component `psi` and streamline transport of `(S, Lambda)`.
//!
//! `psi` solves `-(Lap - 1/(r^2 sin^2 phi)) psi = G` with `psi = 0` on the
//! axis, the wall and the exit and `d_r(r psi) = 0` at the entrance. In the
//! variable `P = r psi` the radial part becomes `P_rr`, so the entrance
//! condition is a plain Neumann condition.

use rayon::prelude::*;

use crate::core_model::{Grid, VelocityField};
use crate::error::{NozzleError, NozzleResult};
use crate::numerics::{apply_row, uniform_point_weights, BandedMatrix, Parity};

/// Solves with homogeneous entrance data.
pub fn solve_psi(g_sharp: &[f64], grid: &Grid) -> NozzleResult<Vec<f64>> {
    solve_psi_with(g_sharp, grid, None)
}

/// Solves with entrance data `d_r(r psi)(r_en, phi_j) = robin[j]`.
pub fn solve_psi_with(g_sharp: &[f64], grid: &Grid, robin: Option<&[f64]>) -> NozzleResult<Vec<f64>> {
    if g_sharp.len() != grid.len() {
        return Err(NozzleError::GridMismatch("source length differs from grid".into()));
    }
    let (nr, np) = (grid.nr(), grid.nphi());
    if nr < 3 || np < 3 {
        return Err(NozzleError::InsufficientGrid(format!("psi solve needs 3x3 nodes, got {nr}x{np}")));
    }
    let (hr, hp) = (grid.hr(), grid.hphi());
    let ni = np - 2;
    let idx = |i: usize, j: usize| i * ni + (j - 1);
    let n = (nr - 1) * ni;
    let mut a = BandedMatrix::new(n, ni, ni);
    let mut b = vec![0.0; n];
    let (hr2, hp2) = (1.0 / (hr * hr), 1.0 / (hp * hp));
    for i in 0..nr - 1 {
        let r = grid.r[i];
        for j in 1..np - 1 {
            let row = idx(i, j);
            let phi = grid.phi[j];
            let s = phi.sin();
            let sp = (phi + 0.5 * hp).sin();
            let sm = (phi - 0.5 * hp).sin();
            let ang = hp2 / (r * r * s);
            let diag = -ang * (sp + sm) - 1.0 / (r * r * s * s) - 2.0 * hr2;
            if j + 1 < np - 1 {
                a.add(row, idx(i, j + 1), ang * sp);
            }
            if j > 1 {
                a.add(row, idx(i, j - 1), ang * sm);
            }
            let mut rhs = -r * g_sharp[grid.idx(i, j)];
            if i == 0 {
                // ghost P_{-1} = P_1 - 2 hr data
                a.add(row, idx(1, j), 2.0 * hr2);
                if let Some(d) = robin {
                    rhs += 2.0 * d[j] / hr;
                }
            } else {
                a.add(row, idx(i - 1, j), hr2);
                if i + 1 < nr - 1 {
                    a.add(row, idx(i + 1, j), hr2);
                }
            }
            a.add(row, row, diag);
            b[row] = rhs;
        }
    }
    let x = a.solve(&b)?;
    let mut psi = vec![0.0; grid.len()];
    for i in 0..nr - 1 {
        for j in 1..np - 1 {
            psi[grid.idx(i, j)] = x[idx(i, j)] / grid.r[i];
        }
    }
    Ok(psi)
}

/// Bicubic interpolation of grid fields with per-field axis parity.
#[derive(Debug, Clone)]
pub struct FieldInterpolator<'a> {
    grid: &'a Grid,
}

impl<'a> FieldInterpolator<'a> {
    pub fn new(grid: &'a Grid) -> Self {
        FieldInterpolator { grid }
    }

    pub fn at(&self, f: &[f64], parity: Parity, r: f64, phi: f64) -> f64 {
        let g = self.grid;
        let (nr, np) = (g.nr(), g.nphi());
        let rr = uniform_point_weights(r - g.r[0], g.hr(), nr, 4.min(nr), 0, Parity::None).remove(0);
        let rp = uniform_point_weights(phi, g.hphi(), np, 4.min(np), 0, parity).remove(0);
        let mut acc = 0.0;
        for &(i, wi) in &rr {
            acc += wi * apply_row(&rp, &f[i * np..(i + 1) * np]);
        }
        acc
    }
}

/// Entrance angle of the streamline through a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamlineFoot {
    pub phi_foot: f64,
    /// the trace touched the axis or wall and was clamped there
    pub clamped: bool,
}

/// Parities used when interpolating `(u_r, u_phi)` near the axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParity {
    pub u_r: Parity,
    pub u_phi: Parity,
}

impl Default for TraceParity {
    fn default() -> Self {
        TraceParity { u_r: Parity::Even, u_phi: Parity::Odd }
    }
}

/// Traces `d phi/dr = u_phi / (r u_r)` backward from `(r, phi)` to `r_en`
/// with step-doubling RK4.
pub fn trace_streamline(
    grid: &Grid,
    u: &VelocityField,
    parity: TraceParity,
    r: f64,
    phi: f64,
) -> NozzleResult<StreamlineFoot> {
    let r_en = grid.r[0];
    let phi0 = grid.phi0();
    let it = FieldInterpolator::new(grid);
    let rhs = |r: f64, p: f64| -> NozzleResult<f64> {
        let p = p.clamp(0.0, phi0);
        let ur = it.at(&u.u_r, parity.u_r, r, p);
        if !(ur > 0.0) {
            return Err(NozzleError::Backflow { u_r: ur, r, phi: p });
        }
        Ok(it.at(&u.u_phi, parity.u_phi, r, p) / (r * ur))
    };
    let rk4 = |r: f64, p: f64, h: f64| -> NozzleResult<f64> {
        let k1 = rhs(r, p)?;
        let k2 = rhs(r + 0.5 * h, p + 0.5 * h * k1)?;
        let k3 = rhs(r + 0.5 * h, p + 0.5 * h * k2)?;
        let k4 = rhs(r + h, p + h * k3)?;
        Ok(p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    };
    let span = r - r_en;
    if span <= 0.0 {
        return Ok(StreamlineFoot { phi_foot: phi.clamp(0.0, phi0), clamped: false });
    }
    let tol = 1e-10;
    let mut cur_r = r;
    let mut p = phi;
    let mut h = -(span / 4.0).min(grid.hr());
    let mut clamped = false;
    let mut guard = 0;
    while cur_r > r_en + 1e-14 * span {
        guard += 1;
        if guard > 100_000 {
            return Err(NozzleError::NonConvergence { loop_name: "streamline trace".into(), iterations: guard });
        }
        if cur_r + h < r_en {
            h = r_en - cur_r;
        }
        let full = rk4(cur_r, p, h)?;
        let half = rk4(cur_r, p, 0.5 * h)?;
        let two = rk4(cur_r + 0.5 * h, half, 0.5 * h)?;
        let err = (two - full).abs() / 15.0;
        if err > tol && h.abs() > 1e-8 {
            h *= 0.5;
            continue;
        }
        cur_r += h;
        p = two + (two - full) / 15.0;
        if p <= 0.0 || p >= phi0 {
            clamped = true;
            p = p.clamp(0.0, phi0);
        }
        if err < tol / 32.0 {
            h = (2.0 * h).max(-span);
        }
    }
    Ok(StreamlineFoot { phi_foot: p, clamped })
}

/// Feet of every grid node (parallel over nodes).
pub fn trace_all(grid: &Grid, u: &VelocityField, parity: TraceParity) -> NozzleResult<Vec<StreamlineFoot>> {
    let np = grid.nphi();
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / np, k % np);
            let r = grid.r[i];
            let phi = grid.phi[j];
            if j == 0 {
                // axis streamline
                return Ok(StreamlineFoot { phi_foot: 0.0, clamped: false });
            }
            if j == np - 1 {
                return Ok(StreamlineFoot { phi_foot: grid.phi0(), clamped: false });
            }
            trace_streamline(grid, u, parity, r, phi)
        })
        .collect()
}

/// `S = S_en(foot)`, `Lambda = r_en sin(foot) w_en(foot)`, `V = Lambda / (r sin phi)`.
pub fn transport_scalars(
    grid: &Grid,
    feet: &[StreamlineFoot],
    s_en: impl Fn(f64) -> f64,
    w_en: impl Fn(f64) -> f64,
) -> NozzleResult<(Vec<f64>, Vec<f64>)> {
    let w0 = w_en(0.0);
    if w0.abs() > 1e-8 {
        return Err(NozzleError::Compatibility(vec![format!("w_en(0) = 0 (got {w0:e})")]));
    }
    let r_en = grid.r[0];
    let np = grid.nphi();
    let mut s = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(grid.len());
    for (k, f) in feet.iter().enumerate() {
        let (i, j) = (k / np, k % np);
        s.push(s_en(f.phi_foot));
        if j == 0 {
            v.push(0.0);
        } else {
            let lam = r_en * f.phi_foot.sin() * w_en(f.phi_foot);
            v.push(lam / (grid.r[i] * grid.phi[j].sin()));
        }
    }
    Ok((s, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(nr: usize, np: usize) -> Grid {
        Grid::span(2.0, 3.0, PI / 4.0, nr, np)
    }

    #[test]
    fn zero_source_gives_zero_psi() {
        let g = grid(9, 9);
        let psi = solve_psi(&vec![0.0; g.len()], &g).unwrap();
        assert!(psi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn positive_source_gives_positive_psi() {
        let g = grid(9, 9);
        let src = g.sample(|r, p| (r - 1.5) * p.sin());
        let psi = solve_psi(&src, &g).unwrap();
        for i in 0..g.nr() - 1 {
            for j in 1..g.nphi() - 1 {
                assert!(psi[g.idx(i, j)] > 0.0);
            }
        }
    }

    #[test]
    fn psi_boundary_traits() {
        let g = grid(17, 9);
        let src = g.sample(|_, p| p.sin());
        let psi = solve_psi(&src, &g).unwrap();
        for i in 0..g.nr() {
            assert_eq!(psi[g.idx(i, 0)], 0.0);
            assert_eq!(psi[g.idx(i, g.nphi() - 1)], 0.0);
        }
        for j in 0..g.nphi() {
            assert_eq!(psi[g.idx(g.nr() - 1, j)], 0.0);
        }
    }

    #[test]
    fn radial_flow_has_vertical_characteristics() {
        let g = grid(9, 9);
        let u = VelocityField { u_r: g.sample(|r, _| 1.0 / (r * r)), u_phi: vec![0.0; g.len()], u_theta: vec![0.0; g.len()] };
        let feet = trace_all(&g, &u, TraceParity::default()).unwrap();
        for (k, f) in feet.iter().enumerate() {
            assert!((f.phi_foot - g.phi[k % g.nphi()]).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_characteristics() {
        let g = grid(33, 17);
        let u = VelocityField { u_r: vec![1.0; g.len()], u_phi: g.sample(|r, _| r), u_theta: vec![0.0; g.len()] };
        let par = TraceParity { u_r: Parity::None, u_phi: Parity::None };
        let (r, phi) = (2.5, 0.7);
        let f = trace_streamline(&g, &u, par, r, phi).unwrap();
        assert!((f.phi_foot - (phi - (r - 2.0))).abs() < 1e-9);
    }

    #[test]
    fn backflow_is_reported() {
        let g = grid(9, 9);
        let u = VelocityField { u_r: vec![-1.0; g.len()], u_phi: vec![0.0; g.len()], u_theta: vec![0.0; g.len()] };
        assert!(matches!(trace_streamline(&g, &u, TraceParity::default(), 2.5, 0.3), Err(NozzleError::Backflow { .. })));
    }

    #[test]
    fn uniform_data_transport() {
        let g = grid(9, 9);
        let feet: Vec<StreamlineFoot> =
            (0..g.len()).map(|k| StreamlineFoot { phi_foot: g.phi[k % 9], clamped: false }).collect();
        let (s, v) = transport_scalars(&g, &feet, |_| 1.0, |_| 0.0).unwrap();
        assert!(s.iter().all(|&x| x == 1.0) && v.iter().all(|&x| x == 0.0));
        assert!(transport_scalars(&g, &feet, |_| 1.0, |_| 0.1).is_err());
    }
}
