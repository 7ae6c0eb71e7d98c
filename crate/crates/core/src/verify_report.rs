//! A-posteriori checks of converged fields against the original system.
//!
//! Derivatives here come from their own fourth-order table, not from the
//! solver's differentiators.

use serde::{Deserialize, Serialize};

use crate::case::NozzleCase;
use crate::core_model::Grid;
use crate::error::{NozzleError, NozzleResult};
use crate::numerics::{composite_weights, Parity};

/// Primitive variables on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveFields {
    pub grid: Grid,
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub u_r: Vec<f64>,
    pub u_phi: Vec<f64>,
    pub u_theta: Vec<f64>,
    pub entropy: Vec<f64>,
    pub big_phi: Vec<f64>,
    pub mach: Vec<f64>,
}

impl PrimitiveFields {
    /// Fills `mach` from the other fields.
    pub fn with_mach(mut self) -> Self {
        let g = self.gamma;
        self.mach = (0..self.rho.len())
            .map(|k| {
                let q2 = self.u_r[k].powi(2) + self.u_phi[k].powi(2) + self.u_theta[k].powi(2);
                (q2 / (g * self.entropy[k] * self.rho[k].powf(g - 1.0))).sqrt()
            })
            .collect();
        self
    }

    fn check(&self) -> NozzleResult<()> {
        let n = self.grid.len();
        let all = [&self.rho, &self.u_r, &self.u_phi, &self.u_theta, &self.entropy, &self.big_phi, &self.mach];
        if all.iter().any(|f| f.len() != n) {
            return Err(NozzleError::GridMismatch("primitive field length differs from grid".into()));
        }
        let (nr, np) = (self.grid.nr(), self.grid.nphi());
        if nr < 6 || np < 6 {
            return Err(NozzleError::InsufficientGrid(format!("verification needs 6x6 nodes, got {nr}x{np}")));
        }
        Ok(())
    }
}

/// Weighted residuals of the five equations and the conservation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub nr: usize,
    pub nphi: usize,
    pub continuity: f64,
    pub momentum_phi: f64,
    pub entropy: f64,
    pub angular_momentum: f64,
    pub poisson: f64,
    /// root of the sum of squares of the five entries above
    pub total: f64,
    pub conservation: ConservationReport,
    pub min_mach_margin: f64,
    pub margin_at: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `int rho u_r r^2 sin(phi) dphi` per station
    pub mass_flux: Vec<f64>,
    /// `(max - min) / mean` of `mass_flux`
    pub mass_flux_spread: f64,
    /// max of `|B - Phi|`
    pub k_defect: f64,
    /// weighted L2 of `rho q . grad S` and `rho q . grad Lambda`
    pub entropy_defect: f64,
    pub lambda_defect: f64,
    pub s_min: f64,
    pub s_max: f64,
}

// Fourth-order first and second difference tables; rows at the two nodes
// nearest an end are one-sided.
const D1_EDGE: [[f64; 5]; 2] = [[-25.0, 48.0, -36.0, 16.0, -3.0], [-3.0, -10.0, 18.0, -6.0, 1.0]];
const D1_MID: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D2_EDGE: [[f64; 6]; 2] = [[45.0, -154.0, 214.0, -156.0, 61.0, -10.0], [10.0, -15.0, -4.0, 14.0, -6.0, 1.0]];
const D2_MID: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

/// Differentiates one line of samples to fourth order. With `Even`/`Odd`
/// parity the left end is a symmetry axis and mirrored ghosts replace the
/// one-sided rows there.
fn diff_line(f: &[f64], h: f64, order: usize, left: Parity) -> Vec<f64> {
    let n = f.len();
    let sign = match left {
        Parity::Odd => -1.0,
        _ => 1.0,
    };
    let at = |i: isize| -> f64 {
        if i >= 0 {
            f[i as usize]
        } else {
            sign * f[(-i) as usize]
        }
    };
    let scale = if order == 1 { 1.0 / (12.0 * h) } else { 1.0 / (12.0 * h * h) };
    let mid = if order == 1 { D1_MID } else { D2_MID };
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let edge_left = i < 2 && left == Parity::None;
        let edge_right = i + 2 >= n;
        let v = if edge_left || edge_right {
            // mirror the table for the right end; first derivatives flip sign
            let (e, flip) = if edge_left { (i, 1.0) } else { (n - 1 - i, if order == 1 { -1.0 } else { 1.0 }) };
            let node = |m: usize| if edge_left { f[m] } else { f[n - 1 - m] };
            if order == 1 {
                flip * D1_EDGE[e].iter().enumerate().map(|(m, c)| c * node(m)).sum::<f64>()
            } else {
                flip * D2_EDGE[e].iter().enumerate().map(|(m, c)| c * node(m)).sum::<f64>()
            }
        } else {
            (0..5).map(|m| mid[m] * at(i as isize + m as isize - 2)).sum::<f64>()
        };
        *o = v * scale;
    }
    out
}

fn diff_r(grid: &Grid, f: &[f64], order: usize) -> Vec<f64> {
    let (nr, np) = (grid.nr(), grid.nphi());
    let mut out = vec![0.0; f.len()];
    let mut line = vec![0.0; nr];
    for j in 0..np {
        for i in 0..nr {
            line[i] = f[grid.idx(i, j)];
        }
        for (i, d) in diff_line(&line, grid.hr(), order, Parity::None).into_iter().enumerate() {
            out[grid.idx(i, j)] = d;
        }
    }
    out
}

fn diff_phi(grid: &Grid, f: &[f64], order: usize, parity: Parity) -> Vec<f64> {
    let np = grid.nphi();
    let mut out = Vec::with_capacity(f.len());
    for i in 0..grid.nr() {
        out.extend(diff_line(&f[i * np..(i + 1) * np], grid.hphi(), order, parity));
    }
    out
}

/// Node weights of `2 pi int int f r^2 sin(phi) dr dphi`.
pub fn volume_weights(grid: &Grid) -> Vec<f64> {
    let wr = composite_weights(grid.nr(), grid.hr());
    let wp = composite_weights(grid.nphi(), grid.hphi());
    let mut w = Vec::with_capacity(grid.len());
    for i in 0..grid.nr() {
        for j in 0..grid.nphi() {
            w.push(2.0 * std::f64::consts::PI * wr[i] * wp[j] * grid.r[i] * grid.r[i] * grid.phi[j].sin());
        }
    }
    w
}

fn weighted_l2(w: &[f64], f: &[f64]) -> f64 {
    w.iter().zip(f).map(|(a, b)| a * b * b).sum::<f64>().sqrt()
}

/// Doping `b(r, phi) = b_bar(r) + eps db(phi)` on a grid.
pub fn doping_on(grid: &Grid, case: &NozzleCase) -> Vec<f64> {
    let p = &case.perturbation;
    grid.sample(|r, phi| case.background.doping.at(r) + p.eps * p.b.value(phi))
}

/// Plugs the fields into the five equations of the axisymmetric system.
pub fn residual_euler_poisson(fields: &PrimitiveFields, case: &NozzleCase) -> NozzleResult<ResidualReport> {
    fields.check()?;
    let g = &fields.grid;
    let gamma = fields.gamma;
    let n = g.len();
    let b = doping_on(g, case);
    let mut mass_r = vec![0.0; n];
    let mut mass_p = vec![0.0; n];
    let mut lam = vec![0.0; n];
    let mut press = vec![0.0; n];
    for i in 0..g.nr() {
        let r = g.r[i];
        for j in 0..g.nphi() {
            let k = g.idx(i, j);
            let s = g.phi[j].sin();
            mass_r[k] = r * r * s * fields.rho[k] * fields.u_r[k];
            mass_p[k] = r * s * fields.rho[k] * fields.u_phi[k];
            lam[k] = r * s * fields.u_theta[k];
            press[k] = fields.entropy[k] * fields.rho[k].powf(gamma);
        }
    }
    let dmr = diff_r(g, &mass_r, 1);
    let dmp = diff_phi(g, &mass_p, 1, Parity::Even);
    let up_r = diff_r(g, &fields.u_phi, 1);
    let up_p = diff_phi(g, &fields.u_phi, 1, Parity::Odd);
    let p_p = diff_phi(g, &press, 1, Parity::Even);
    let s_r = diff_r(g, &fields.entropy, 1);
    let s_p = diff_phi(g, &fields.entropy, 1, Parity::Even);
    let l_r = diff_r(g, &lam, 1);
    let l_p = diff_phi(g, &lam, 1, Parity::Even);
    let f_r = diff_r(g, &fields.big_phi, 1);
    let f_rr = diff_r(g, &fields.big_phi, 2);
    let f_p = diff_phi(g, &fields.big_phi, 1, Parity::Even);
    let f_pp = diff_phi(g, &fields.big_phi, 2, Parity::Even);

    let mut res = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tr_s = vec![0.0; n];
    let mut tr_l = vec![0.0; n];
    for i in 0..g.nr() {
        let r = g.r[i];
        for j in 0..g.nphi() {
            let k = g.idx(i, j);
            let (rho, ur, up, ut) = (fields.rho[k], fields.u_r[k], fields.u_phi[k], fields.u_theta[k]);
            res[0][k] = dmr[k] + dmp[k];
            res[2][k] = mass_r[k] * s_r[k] + mass_p[k] * s_p[k];
            res[3][k] = mass_r[k] * l_r[k] + mass_p[k] * l_p[k];
            tr_s[k] = rho * (ur * s_r[k] + up * s_p[k] / r);
            tr_l[k] = rho * (ur * l_r[k] + up * l_p[k] / r);
            if j == 0 {
                // zero weight on the axis
                continue;
            }
            let cot = g.phi[j].cos() / g.phi[j].sin();
            res[1][k] = rho * ur * up_r[k] + rho * up * up_p[k] / r + p_p[k] / r + rho * ur * up / r
                - rho / r * ut * ut * cot
                - rho * f_p[k] / r;
            let lap = f_rr[k] + 2.0 * f_r[k] / r + (f_pp[k] + cot * f_p[k]) / (r * r);
            res[4][k] = lap - (rho - b[k]);
        }
    }
    let w = volume_weights(g);
    let norms: Vec<f64> = res.iter().map(|f| weighted_l2(&w, f)).collect();
    let mut cons = conservation_core(fields)?;
    cons.entropy_defect = weighted_l2(&w, &tr_s);
    cons.lambda_defect = weighted_l2(&w, &tr_l);
    let (margin, at) = supersonic_margin(fields);
    Ok(ResidualReport {
        nr: g.nr(),
        nphi: g.nphi(),
        continuity: norms[0],
        momentum_phi: norms[1],
        entropy: norms[2],
        angular_momentum: norms[3],
        poisson: norms[4],
        total: norms.iter().map(|x| x * x).sum::<f64>().sqrt(),
        conservation: cons,
        min_mach_margin: margin,
        margin_at: at,
    })
}

fn conservation_core(fields: &PrimitiveFields) -> NozzleResult<ConservationReport> {
    let g = &fields.grid;
    let gamma = fields.gamma;
    let wp = composite_weights(g.nphi(), g.hphi());
    let mut mass_flux = Vec::with_capacity(g.nr());
    for i in 0..g.nr() {
        let r = g.r[i];
        let m: f64 = (0..g.nphi())
            .map(|j| {
                let k = g.idx(i, j);
                wp[j] * fields.rho[k] * fields.u_r[k] * r * r * g.phi[j].sin()
            })
            .sum();
        mass_flux.push(m);
    }
    let (lo, hi) = mass_flux.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &m| (a.min(m), b.max(m)));
    let mean = mass_flux.iter().sum::<f64>() / mass_flux.len() as f64;
    let mut k_defect = 0.0f64;
    for k in 0..g.len() {
        let q2 = fields.u_r[k].powi(2) + fields.u_phi[k].powi(2) + fields.u_theta[k].powi(2);
        let bern = 0.5 * q2 + gamma / (gamma - 1.0) * fields.entropy[k] * fields.rho[k].powf(gamma - 1.0);
        k_defect = k_defect.max((bern - fields.big_phi[k]).abs());
    }
    let (s_min, s_max) =
        fields.entropy.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    Ok(ConservationReport {
        mass_flux,
        mass_flux_spread: (hi - lo) / mean.abs(),
        k_defect,
        entropy_defect: 0.0,
        lambda_defect: 0.0,
        s_min,
        s_max,
    })
}

/// Mass flux per station, `K`-defect, transport defects and entropy range.
pub fn conservation_report(fields: &PrimitiveFields) -> NozzleResult<ConservationReport> {
    fields.check()?;
    let g = &fields.grid;
    let w = volume_weights(g);
    let mut out = conservation_core(fields)?;
    let lam: Vec<f64> = (0..g.len())
        .map(|k| g.r[k / g.nphi()] * g.phi[k % g.nphi()].sin() * fields.u_theta[k])
        .collect();
    let (s_r, s_p) = (diff_r(g, &fields.entropy, 1), diff_phi(g, &fields.entropy, 1, Parity::Even));
    let (l_r, l_p) = (diff_r(g, &lam, 1), diff_phi(g, &lam, 1, Parity::Even));
    let mut ds = vec![0.0; g.len()];
    let mut dl = vec![0.0; g.len()];
    for k in 0..g.len() {
        let r = g.r[k / g.nphi()];
        let (rho, ur, up) = (fields.rho[k], fields.u_r[k], fields.u_phi[k]);
        ds[k] = rho * (ur * s_r[k] + up * s_p[k] / r);
        dl[k] = rho * (ur * l_r[k] + up * l_p[k] / r);
    }
    out.entropy_defect = weighted_l2(&w, &ds);
    out.lambda_defect = weighted_l2(&w, &dl);
    Ok(out)
}

/// `||u||_{H^(k-1)} + ||d_r u||_{H^(k-1)}` with coordinate derivatives
/// `d_r^a d_phi^b`, `a + b <= k - 1`, and the volume element `r^2 sin(phi)`.
pub fn hk_star_norm(grid: &Grid, field: &[f64], parity: Parity, k: usize) -> NozzleResult<f64> {
    if !(1..=4).contains(&k) {
        return Err(NozzleError::Validation(format!("norm order {k} outside 1..=4")));
    }
    if field.len() != grid.len() {
        return Err(NozzleError::GridMismatch("field length differs from grid".into()));
    }
    let need = 5 + k;
    if grid.nr() < need || grid.nphi() < need {
        return Err(NozzleError::InsufficientGrid(format!(
            "order {k} needs {need} nodes per direction, got {}x{}",
            grid.nr(),
            grid.nphi()
        )));
    }
    let w = volume_weights(grid);
    let m = k - 1;
    // phi-derivatives of each order, with their parities
    let mut by_phi: Vec<(Vec<f64>, Parity)> = vec![(field.to_vec(), parity)];
    for b in 1..=m {
        let (prev, par) = &by_phi[b - 1];
        let d = diff_phi(grid, prev, 1, *par);
        by_phi.push((d, par.derivative()));
    }
    let (mut plain, mut radial) = (0.0, 0.0);
    for (b, (f, _)) in by_phi.iter().enumerate() {
        let mut cur = f.clone();
        for a in 0..=(m - b + 1) {
            let sq = weighted_l2(&w, &cur).powi(2);
            if a <= m - b {
                plain += sq;
            }
            if a >= 1 {
                radial += sq;
            }
            if a <= m - b {
                cur = diff_r(grid, &cur, 1);
            }
        }
    }
    Ok(plain.sqrt() + radial.sqrt())
}

/// `min (M - 1)` over the grid and its location `(r, phi)`.
pub fn supersonic_margin(fields: &PrimitiveFields) -> (f64, [f64; 2]) {
    let g = &fields.grid;
    let mut best = (f64::INFINITY, [f64::NAN; 2]);
    for (k, &m) in fields.mach.iter().enumerate() {
        if m - 1.0 < best.0 {
            best = (m - 1.0, [g.r[k / g.nphi()], g.phi[k % g.nphi()]]);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn difference_tables_are_fourth_order() {
        let err = |n: usize| {
            let h = 1.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|i| (1.3 * i as f64 * h).sin()).collect();
            let d1 = diff_line(&f, h, 1, Parity::None);
            let d2 = diff_line(&f, h, 2, Parity::None);
            let mut e = 0.0f64;
            for i in 0..n {
                let x = i as f64 * h;
                e = e.max((d1[i] - 1.3 * (1.3 * x).cos()).abs());
                e = e.max((d2[i] + 1.69 * (1.3 * x).sin()).abs());
            }
            e
        };
        let ratio = err(21) / err(41);
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn parity_ghosts_match_symmetric_functions() {
        let n = 30;
        let h = 0.05;
        let even: Vec<f64> = (0..n).map(|i| (i as f64 * h).cos()).collect();
        let odd: Vec<f64> = (0..n).map(|i| (i as f64 * h).sin()).collect();
        let de = diff_line(&even, h, 1, Parity::Even);
        let d2o = diff_line(&odd, h, 2, Parity::Odd);
        for i in 0..4 {
            let x = i as f64 * h;
            assert!((de[i] + x.sin()).abs() < 1e-6);
            assert!((d2o[i] + x.sin()).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_norm_is_scaled_root_volume() {
        let g = Grid::span(2.0, 3.0, PI / 4.0, 41, 41);
        let c = 1.7;
        let vol = 2.0 * PI * (27.0 - 8.0) / 3.0 * (1.0 - (PI / 4.0).cos());
        let n = hk_star_norm(&g, &vec![c; g.len()], Parity::Even, 1).unwrap();
        assert!((n - c * vol.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn linear_field_norm() {
        let g = Grid::span(2.0, 3.0, PI / 3.0, 41, 41);
        let f = g.sample(|r, _| r);
        let n = hk_star_norm(&g, &f, Parity::Even, 1).unwrap();
        let ang = 2.0 * PI * (1.0 - (PI / 3.0).cos());
        let exact = (ang * (243.0 - 32.0) / 5.0).sqrt() + (ang * 19.0 / 3.0).sqrt();
        assert!((n - exact).abs() < 1e-7, "{n} vs {exact}");
    }

    #[test]
    fn insufficient_grid_is_reported() {
        let g = Grid::span(2.0, 3.0, 0.5, 6, 6);
        assert!(matches!(
            hk_star_norm(&g, &vec![0.0; 36], Parity::Even, 3),
            Err(NozzleError::InsufficientGrid(_))
        ));
    }
}
