//! Frozen-coefficient linear step for `(chi, Psi)`.
//!
//! The continuity equation is written as
//!
//! ```text
//! sum a_ij d_ij chi + sum (a_i - alpha_i) d_i chi - b_1 d_r Psi - c Psi = F
//! Lap Psi - g_0 Psi - h_1 d_r chi = f
//! ```
//!
//! with `a_ij, a_i` frozen at the previous iterate and `alpha_1, b_1, c, g_0,
//! h_1` taken at the background. Both unknowns are expanded in the Neumann
//! eigenbasis, `chi = sum v_k xi_k + chi_bd`, `Psi = sum w_k xi_k + Psi_bd`,
//! and the modal ODEs in `r` are solved as one banded system.

use crate::case::{NozzleCase, Profile};
use crate::core_model::{curl_theta_with, density_closure, locate, GasLaw, Grid, GridCalculus};
use crate::eigenbasis::{build_basis, default_nodes, EigenBasis};
use crate::error::{NozzleError, NozzleResult};
use crate::numerics::{apply_row, uniform_point_weights, BandedMatrix, Differentiator, Parity, Row};
use crate::radial_background::{integrate_background, RadialBackground};

/// Quintic smoothstep cutoff `(eta, eta', eta'')`: one at `r_en`, zero at
/// `r_ex`, flat to second order at both ends.
pub fn cutoff(r: f64, r_en: f64, r_ex: f64) -> [f64; 3] {
    let l = r_ex - r_en;
    let x = ((r - r_en) / l).clamp(0.0, 1.0);
    let s = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
    let ds = 30.0 * x * x * (1.0 - x) * (1.0 - x) / l;
    let dds = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / (l * l);
    [1.0 - s, -ds, -dds]
}

/// Boundary liftings `chi_bd`, `Psi_bd`.
///
/// `chi_bd = eta(r) r_en int_0^phi v_en`,
/// `Psi_bd = r A(phi) + r^2 B(phi) / 2` with `d_r Psi_bd` equal to the
/// entrance and exit field perturbations at the two ends.
#[derive(Debug, Clone)]
pub struct Lifting {
    pub r_en: f64,
    pub r_ex: f64,
    pub eps: f64,
    pub v_en: Profile,
    pub e_en: Profile,
    pub phi_ex: Profile,
    /// eigen-coefficients of `(E_en, Phi_ex)` when the field data are
    /// represented in the basis
    modal: Option<(EigenBasis, Vec<f64>, Vec<f64>)>,
}

/// Value and derivatives `[f, f_r, f_rr, f_phi, f_phiphi, f_rphi]`.
pub type Jet = [f64; 6];

impl Lifting {
    pub fn new(case: &NozzleCase) -> Self {
        let p = &case.perturbation;
        Lifting {
            r_en: case.geometry.r_en,
            r_ex: case.geometry.r_ex,
            eps: p.eps,
            v_en: p.v_en.clone(),
            e_en: p.e_en.clone(),
            phi_ex: p.phi_ex.clone(),
            modal: None,
        }
    }

    /// As [`Lifting::new`], with the field data in `Psi_bd` replaced by their
    /// projections onto the span of `basis`.
    pub fn projected(case: &NozzleCase, basis: &EigenBasis) -> Self {
        let mut l = Self::new(case);
        let e = basis.project_fn(|p| l.e_en.value(p));
        let x = basis.project_fn(|p| l.phi_ex.value(p));
        l.modal = Some((basis.clone(), e, x));
        l
    }

    fn field_data(&self, phi: f64) -> ([f64; 3], [f64; 3]) {
        match &self.modal {
            None => (self.e_en.eval(phi), self.phi_ex.eval(phi)),
            Some((basis, e, x)) => {
                let (mut de, mut dx) = ([0.0; 3], [0.0; 3]);
                for (k, mv) in basis.mode_values(phi).iter().enumerate() {
                    for d in 0..3 {
                        de[d] += e[k] * mv[d];
                        dx[d] += x[k] * mv[d];
                    }
                }
                (de, dx)
            }
        }
    }

    pub fn chi(&self, r: f64, phi: f64) -> Jet {
        if self.eps == 0.0 || self.v_en.is_zero() {
            return [0.0; 6];
        }
        let eta = cutoff(r, self.r_en, self.r_ex);
        let vint = self.eps * self.r_en * self.v_en.integral(phi);
        let v = self.v_en.eval(phi);
        let (v0, v1) = (self.eps * self.r_en * v[0], self.eps * self.r_en * v[1]);
        [eta[0] * vint, eta[1] * vint, eta[2] * vint, eta[0] * v0, eta[0] * v1, eta[1] * v0]
    }

    pub fn big_psi(&self, r: f64, phi: f64) -> Jet {
        if self.eps == 0.0 || (self.e_en.is_zero() && self.phi_ex.is_zero()) {
            return [0.0; 6];
        }
        let l = self.r_ex - self.r_en;
        let (de, dx) = self.field_data(phi);
        let a: Vec<f64> = (0..3).map(|d| self.eps * (self.r_ex * de[d] - self.r_en * dx[d]) / l).collect();
        let b: Vec<f64> = (0..3).map(|d| self.eps * (dx[d] - de[d]) / l).collect();
        [
            r * a[0] + 0.5 * r * r * b[0],
            a[0] + r * b[0],
            b[0],
            r * a[1] + 0.5 * r * r * b[1],
            r * a[2] + 0.5 * r * r * b[2],
            a[1] + r * b[1],
        ]
    }

    /// `(chi_bd, Psi_bd)` on a grid.
    pub fn sample(&self, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
        (grid.sample(|r, p| self.chi(r, p)[0]), grid.sample(|r, p| self.big_psi(r, p)[0]))
    }
}

/// Builds the liftings after checking the boundary compatibility conditions.
pub fn lift_boundary(case: &NozzleCase, grid: &Grid) -> NozzleResult<(Lifting, Vec<f64>, Vec<f64>)> {
    case.check_compatibility()?;
    let l = Lifting::new(case);
    let (c, p) = l.sample(grid);
    Ok((l, c, p))
}

/// `F_2(z, p, q) = p.q / (q_1^2 - c^2) - a_1(z, q) u_bar`.
pub fn frak_f2(gas: &GasLaw, r: f64, z: f64, p: [f64; 3], q: [f64; 3], u_bar: f64) -> f64 {
    let q2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
    let c2 = (gas.gamma - 1.0) * (z - 0.5 * q2);
    let d = q[0] * q[0] - c2;
    let a1 = -2.0 * c2 / (r * d);
    (p[0] * q[0] + p[1] * q[1] + p[2] * q[2]) / d - a1 * u_bar
}

/// Background derivatives of `F_2` and of the density closure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundLinearization {
    pub alpha1: f64,
    pub b1: f64,
    pub c: f64,
    pub g0: f64,
    pub h1: f64,
}

/// `alpha_1 = d F_2/d q_1`, `b_1 = d F_2/d p_1`, `c = d F_2/d z` at
/// `(Phi_bar, (E, 0, 0), (u, 0, 0))`; `g_0 = d rho/d z`, `h_1 = d rho/d q_1`.
pub fn background_linearization(gas: &GasLaw, r: f64, s0: f64, z: f64, e: f64, u: f64) -> BackgroundLinearization {
    let g = gas.gamma;
    let c2 = (g - 1.0) * (z - 0.5 * u * u);
    let d = u * u - c2;
    let d2 = d * d;
    let alpha1 = (-e * (g * u * u + c2) - 2.0 * u * u * ((g - 1.0) * u * u + 2.0 * c2) / r) / d2;
    let b1 = u / d;
    let c = (g - 1.0) * u * e / d2 + 2.0 * (g - 1.0) * u.powi(3) / (r * d2);
    let rho = (c2 / (g * s0)).powf(1.0 / (g - 1.0));
    let g0 = rho / c2;
    BackgroundLinearization { alpha1, b1, c, g0, h1: -u * g0 }
}

/// Background data at one solver radius.
#[derive(Debug, Clone, Copy)]
pub struct BackgroundNode {
    pub r: f64,
    pub u: f64,
    pub e: f64,
    pub big_phi: f64,
    /// density from the closure at the background state
    pub rho: f64,
    pub f2: f64,
    pub lin: BackgroundLinearization,
}

/// Everything fixed for a case: grid, background, basis, liftings and
/// interpolation tables.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub case: NozzleCase,
    pub gas: GasLaw,
    pub grid: Grid,
    pub calc: GridCalculus,
    pub basis: EigenBasis,
    pub bg: RadialBackground,
    pub nodes: Vec<BackgroundNode>,
    pub lifting: Lifting,
    /// lifting jets at `(r_i, gauss node q)`, row-major in `i`
    pub chi_bd_q: Vec<Jet>,
    pub psi_bd_q: Vec<Jet>,
    /// lifting jets on the grid
    pub chi_bd_g: Vec<Jet>,
    pub psi_bd_g: Vec<Jet>,
    /// mode values `(xi, xi', xi'')` at each grid angle
    pub modes_g: Vec<Vec<[f64; 3]>>,
    /// grid-to-gauss interpolation rows, by parity
    interp_even: Vec<Row>,
    interp_odd: Vec<Row>,
    /// first derivative along `r` on the solver grid
    pub dr: Differentiator,
    /// entrance radial-velocity and doping perturbations at the gauss nodes
    pub du_q: Vec<f64>,
    pub db_q: Vec<f64>,
    pub db_g: Vec<f64>,
}

impl Workspace {
    pub fn new(case: &NozzleCase) -> NozzleResult<Self> {
        case.validate()?;
        let g = &case.geometry;
        let n = &case.numerics;
        let grid = Grid::uniform(g, n.nr, n.nphi);
        let bg = integrate_background(&case.background, g.r_en, g.r_ex, n.nr, &n.stepper_config())?;
        let quad = n.quad_nodes.unwrap_or_else(|| default_nodes(n.modes));
        let basis = build_basis(g.phi0, n.modes, quad)?;
        Self::with_parts(case, grid, bg, basis)
    }

    /// Assembles a workspace from prebuilt pieces (grid radii must coincide
    /// with the background samples).
    pub fn with_parts(case: &NozzleCase, grid: Grid, bg: RadialBackground, basis: EigenBasis) -> NozzleResult<Self> {
        case.check_compatibility()?;
        if bg.r.len() != grid.nr() {
            return Err(NozzleError::GridMismatch("background samples differ from grid radii".into()));
        }
        let gas = case.gas;
        let s0 = case.background.s0;
        let mut nodes = Vec::with_capacity(grid.nr());
        for i in 0..grid.nr() {
            let r = grid.r[i];
            let (u, e, z) = (bg.u[i], bg.e[i], bg.big_phi_bar[i]);
            let rho = density_closure(&gas, s0, z, [u, 0.0, 0.0]).map_err(|e| locate(e, r, 0.0))?;
            nodes.push(BackgroundNode {
                r,
                u,
                e,
                big_phi: z,
                rho,
                f2: frak_f2(&gas, r, z, [e, 0.0, 0.0], [u, 0.0, 0.0], u),
                lin: background_linearization(&gas, r, s0, z, e, u),
            });
        }
        let lifting = Lifting::projected(case, &basis);
        let nq = basis.nodes.len();
        let mut chi_bd_q = Vec::with_capacity(grid.nr() * nq);
        let mut psi_bd_q = Vec::with_capacity(grid.nr() * nq);
        for &r in &grid.r {
            for &p in &basis.nodes {
                chi_bd_q.push(lifting.chi(r, p));
                psi_bd_q.push(lifting.big_psi(r, p));
            }
        }
        let mut chi_bd_g = Vec::with_capacity(grid.len());
        let mut psi_bd_g = Vec::with_capacity(grid.len());
        for &r in &grid.r {
            for &p in &grid.phi {
                chi_bd_g.push(lifting.chi(r, p));
                psi_bd_g.push(lifting.big_psi(r, p));
            }
        }
        let modes_g = grid.phi.iter().map(|&p| basis.mode_values(p)).collect();
        let (h, np) = (grid.hphi(), grid.nphi());
        let width = 6.min(np);
        let interp = |par: Parity| -> Vec<Row> {
            basis.nodes.iter().map(|&p| uniform_point_weights(p, h, np, width, 0, par).remove(0)).collect()
        };
        let pert = &case.perturbation;
        let du_q = basis.nodes.iter().map(|&p| pert.eps * pert.u_en.value(p)).collect();
        let db_q = basis.nodes.iter().map(|&p| pert.eps * pert.b.value(p)).collect();
        let db_g = grid.r.iter().flat_map(|_| grid.phi.iter().map(|&p| pert.eps * pert.b.value(p))).collect();
        Ok(Workspace {
            case: case.clone(),
            gas,
            calc: GridCalculus::new(&grid),
            dr: Differentiator::uniform(grid.nr(), grid.hr(), Parity::None),
            interp_even: interp(Parity::Even),
            interp_odd: interp(Parity::Odd),
            grid,
            basis,
            bg,
            nodes,
            lifting,
            chi_bd_q,
            psi_bd_q,
            chi_bd_g,
            psi_bd_g,
            modes_g,
            du_q,
            db_q,
            db_g,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    pub fn nq(&self) -> usize {
        self.basis.nodes.len()
    }

    /// Interpolates each `r`-row of a grid field to the gauss nodes.
    pub fn to_gauss(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        let rows = if parity == Parity::Odd { &self.interp_odd } else { &self.interp_even };
        let (np, nq) = (self.grid.nphi(), self.nq());
        let mut out = Vec::with_capacity(self.grid.nr() * nq);
        for i in 0..self.grid.nr() {
            let line = &f[i * np..(i + 1) * np];
            for row in rows.iter().take(nq) {
                out.push(apply_row(row, line));
            }
        }
        out
    }
}

/// Modal coefficients `v[i * M + k]`, `w[i * M + k]` of the homogeneous parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub n_modes: usize,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl ModalState {
    pub fn zeros(nr: usize, n_modes: usize) -> Self {
        ModalState { n_modes, v: vec![0.0; nr * n_modes], w: vec![0.0; nr * n_modes] }
    }

    fn column(f: &[f64], k: usize, m: usize) -> Vec<f64> {
        f.iter().skip(k).step_by(m).copied().collect()
    }

    /// Radial derivatives of each mode (fourth-order differences).
    pub fn radial_derivative(&self, dr: &Differentiator) -> (Vec<f64>, Vec<f64>) {
        let m = self.n_modes;
        let mut dv = vec![0.0; self.v.len()];
        let mut dw = vec![0.0; self.w.len()];
        for k in 0..m {
            let a = dr.first(&Self::column(&self.v, k, m));
            let b = dr.first(&Self::column(&self.w, k, m));
            for (i, (x, y)) in a.iter().zip(&b).enumerate() {
                dv[i * m + k] = *x;
                dw[i * m + k] = *y;
            }
        }
        (dv, dw)
    }
}

/// Frozen `(psi, S, V)` and their derivatives at the gauss nodes.
#[derive(Debug, Clone)]
pub struct FrozenAtGauss {
    pub t: [Vec<f64>; 3],
    pub t_r: [Vec<f64>; 3],
    pub t_p: [Vec<f64>; 3],
    pub s: Vec<f64>,
    pub s_r: Vec<f64>,
    pub s_p: Vec<f64>,
    /// `curl_r(psi)` at the gauss nodes of the entrance station
    pub tr_entrance: Vec<f64>,
}

/// Interpolates the frozen fields to the gauss nodes.
pub fn freeze(ws: &Workspace, psi: &[f64], entropy: &[f64], swirl: &[f64]) -> FrozenAtGauss {
    let c = &ws.calc;
    let (tr, tp) = curl_theta_with(&ws.grid, c, psi);
    let par = [Parity::Even, Parity::Odd, Parity::Odd];
    let fields = [tr, tp, swirl.to_vec()];
    let mut t: [Vec<f64>; 3] = Default::default();
    let mut t_r: [Vec<f64>; 3] = Default::default();
    let mut t_p: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        t[a] = ws.to_gauss(&fields[a], par[a]);
        t_r[a] = ws.to_gauss(&c.d_r(&fields[a]), par[a]);
        t_p[a] = ws.to_gauss(&c.d_phi(&fields[a], par[a]), par[a].derivative());
    }
    let nq = ws.nq();
    let tr_entrance = t[0][..nq].to_vec();
    FrozenAtGauss {
        t,
        t_r,
        t_p,
        s: ws.to_gauss(entropy, Parity::Even),
        s_r: ws.to_gauss(&c.d_r(entropy), Parity::Even),
        s_p: ws.to_gauss(&c.d_phi(entropy, Parity::Even), Parity::Odd),
        tr_entrance,
    }
}

/// Background-state frozen fields (no swirl, uniform entropy).
pub fn freeze_background(ws: &Workspace) -> FrozenAtGauss {
    let n = ws.grid.len();
    freeze(ws, &vec![0.0; n], &vec![ws.case.background.s0; n], &vec![0.0; n])
}

/// Pointwise coefficients and right-hand sides at `(r_i, gauss node q)`.
#[derive(Debug, Clone)]
pub struct CoefficientFields {
    pub nr: usize,
    pub nq: usize,
    pub a12: Vec<f64>,
    pub a22: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// `q_1^2 - c^2`
    pub d: Vec<f64>,
    /// `F` and `f` at the frozen state
    pub big_f: Vec<f64>,
    pub small_f: Vec<f64>,
    /// `F - L_1(lifting)` and `f - L_2(lifting)`
    pub rhs_v: Vec<f64>,
    pub rhs_w: Vec<f64>,
    /// `<u_en - u_bar - curl_r(psi) - d_r chi_bd, xi_k>` at the entrance
    pub entrance: Vec<f64>,
}

/// Assembles coefficients and right-hand sides at the iterate
/// `(chi, Psi) = (modal + lifting)` with frozen `(psi, S, V)`.
pub fn assemble_coefficients(
    ws: &Workspace,
    modal: &ModalState,
    frozen: &FrozenAtGauss,
) -> NozzleResult<CoefficientFields> {
    let gas = &ws.gas;
    let g = gas.gamma;
    let b = &ws.basis;
    let (nr, nq, m) = (ws.grid.nr(), ws.nq(), ws.n_modes());
    let margin = ws.case.numerics.sonic_margin;
    let (dv, dw) = modal.radial_derivative(&ws.dr);
    let size = nr * nq;
    let mut out = CoefficientFields {
        nr,
        nq,
        a12: vec![0.0; size],
        a22: vec![0.0; size],
        a1: vec![0.0; size],
        a2: vec![0.0; size],
        d: vec![0.0; size],
        big_f: vec![0.0; size],
        small_f: vec![0.0; size],
        rhs_v: vec![0.0; size],
        rhs_w: vec![0.0; size],
        entrance: vec![0.0; m],
    };
    for i in 0..nr {
        let bn = &ws.nodes[i];
        let r = bn.r;
        let lin = bn.lin;
        for q in 0..nq {
            let phi = b.nodes[q];
            let (sn, cs) = phi.sin_cos();
            let cot = cs / sn;
            let k = i * nq + q;
            // modal parts
            let (mut ch_r, mut ch_p, mut ps, mut ps_r, mut ps_p) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..m {
                let (vj, dvj, wj, dwj) = (modal.v[i * m + j], dv[i * m + j], modal.w[i * m + j], dw[i * m + j]);
                ch_r += dvj * b.xis[j][q];
                ch_p += vj * b.dxis[j][q];
                ps += wj * b.xis[j][q];
                ps_r += dwj * b.xis[j][q];
                ps_p += wj * b.dxis[j][q];
            }
            let cb = &ws.chi_bd_q[k];
            let pb = &ws.psi_bd_q[k];
            ch_r += cb[1];
            ch_p += cb[3];
            ps += pb[0];
            ps_r += pb[1];
            ps_p += pb[3];

            let t = [frozen.t[0][k], frozen.t[1][k], frozen.t[2][k]];
            let tr = [frozen.t_r[0][k], frozen.t_r[1][k], frozen.t_r[2][k]];
            let tpp = [frozen.t_p[0][k], frozen.t_p[1][k], frozen.t_p[2][k]];
            let (s, s_r, s_p) = (frozen.s[k], frozen.s_r[k], frozen.s_p[k]);

            let z = bn.big_phi + ps;
            let pvec = [bn.e + ps_r, ps_p / r, 0.0];
            let phi_r = bn.u + ch_r;
            let qv = [phi_r + t[0], ch_p / r + t[1], t[2]];
            let qsq = qv[0] * qv[0] + qv[1] * qv[1] + qv[2] * qv[2];
            let head = z - 0.5 * qsq;
            if !(head > 0.0) {
                return Err(NozzleError::Cavitation { head, r, phi });
            }
            if !(qv[0] > 0.0) {
                return Err(NozzleError::Backflow { u_r: qv[0], r, phi });
            }
            let c2 = (g - 1.0) * head;
            let d = qv[0] * qv[0] - c2;
            if !(d >= margin * c2) {
                return Err(NozzleError::SonicApproach { margin: d / c2, r, phi });
            }
            let a12 = qv[0] * qv[1] / (r * d);
            let a22 = (qv[1] * qv[1] - c2) / (r * r * d);
            let a1 = -2.0 * c2 / (r * d);
            let a2 = -(qv[0] * qv[1] + c2 * cot) / (r * r * d);

            // covariant (q . grad) t and div t
            let qg = |a: usize| qv[0] * tr[a] + qv[1] / r * tpp[a];
            let adv = [
                qg(0) - (qv[1] * t[1] + qv[2] * t[2]) / r,
                qg(1) + qv[1] * t[0] / r - qv[2] * t[2] * cot / r,
                qg(2) + qv[2] * t[0] / r + qv[2] * t[1] * cot / r,
            ];
            let qadv = qv[0] * adv[0] + qv[1] * adv[1] + qv[2] * adv[2];
            let div_t = tr[0] + 2.0 * t[0] / r + tpp[1] / r + cot * t[1] / r;
            let gamma_terms =
                (phi_r * (qv[1] * qv[1] + qv[2] * qv[2]) / r + ch_p * (-qv[0] * qv[1] + qv[2] * qv[2] * cot) / (r * r)) / d;
            let qds = qv[0] * s_r + qv[1] * s_p / r;
            let f1 = (c2 * div_t - qadv) / d - head * qds / (s * d) - gamma_terms;
            let f2 = frak_f2(gas, r, z, pvec, qv, bn.u);
            let big_f = f1 + f2 - bn.f2 - lin.alpha1 * ch_r - lin.b1 * ps_r - lin.c * ps;

            let rho = density_closure(gas, s, z, qv).map_err(|e| locate(e, r, phi))?;
            let small_f = rho - bn.rho - ws.db_q[q] - lin.g0 * ps - lin.h1 * ch_r;

            let l1_bd = cb[2] + 2.0 * a12 * cb[5] + a22 * cb[4] + (a1 - lin.alpha1) * cb[1] + a2 * cb[3]
                - lin.b1 * pb[1]
                - lin.c * pb[0];
            let l2_bd = pb[2] + 2.0 * pb[1] / r + (pb[4] + cot * pb[3]) / (r * r) - lin.g0 * pb[0] - lin.h1 * cb[1];

            out.a12[k] = a12;
            out.a22[k] = a22;
            out.a1[k] = a1;
            out.a2[k] = a2;
            out.d[k] = d;
            out.big_f[k] = big_f;
            out.small_f[k] = small_f;
            out.rhs_v[k] = big_f - l1_bd;
            out.rhs_w[k] = small_f - l2_bd;
        }
    }
    let ent: Vec<f64> = (0..nq).map(|q| ws.du_q[q] - frozen.tr_entrance[q] - ws.chi_bd_q[q][1]).collect();
    out.entrance = b.project(&ent);
    Ok(out)
}

/// Modal boundary value problem in `r`:
///
/// ```text
/// v_k'' + sum_j (A12 + Ar)_kj v_j' + sum_j Aphi_kj v_j - b1 w_k' - c w_k = F_k
/// w_k'' + 2 w_k'/r - (omega_k / r^2 + g0) w_k - h1 v_k' = f_k
/// v_k(r_en) = 0, v_k'(r_en) = g_k, w_k'(r_en) = w_k'(r_ex) = 0
/// ```
///
/// Matrices are stored per radius, row-major `M x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSystem {
    pub r: Vec<f64>,
    pub n_modes: usize,
    pub a12: Vec<Vec<f64>>,
    pub aphi: Vec<Vec<f64>>,
    pub ar: Vec<Vec<f64>>,
    pub omegas: Vec<f64>,
    pub b1: Vec<f64>,
    pub c: Vec<f64>,
    pub g0: Vec<f64>,
    pub h1: Vec<f64>,
    pub big_f: Vec<Vec<f64>>,
    pub small_f: Vec<Vec<f64>>,
    pub entrance: Vec<f64>,
}

/// Projects the coefficient fields onto the basis.
pub fn galerkin_reduce(ws: &Workspace, cf: &CoefficientFields) -> ModalSystem {
    let b = &ws.basis;
    let (nr, nq, m) = (cf.nr, cf.nq, b.n_modes());
    let mut sys = ModalSystem {
        r: ws.grid.r.clone(),
        n_modes: m,
        a12: Vec::with_capacity(nr),
        aphi: Vec::with_capacity(nr),
        ar: Vec::with_capacity(nr),
        omegas: b.omegas.clone(),
        b1: ws.nodes.iter().map(|n| n.lin.b1).collect(),
        c: ws.nodes.iter().map(|n| n.lin.c).collect(),
        g0: ws.nodes.iter().map(|n| n.lin.g0).collect(),
        h1: ws.nodes.iter().map(|n| n.lin.h1).collect(),
        big_f: Vec::with_capacity(nr),
        small_f: Vec::with_capacity(nr),
        entrance: cf.entrance.clone(),
    };
    for i in 0..nr {
        let alpha1 = ws.nodes[i].lin.alpha1;
        let mut a12 = vec![0.0; m * m];
        let mut aphi = vec![0.0; m * m];
        let mut ar = vec![0.0; m * m];
        for q in 0..nq {
            let kq = i * nq + q;
            let w = b.weights[q];
            for j in 0..m {
                let e12 = 2.0 * cf.a12[kq] * b.dxis[j][q];
                let ep = cf.a22[kq] * b.d2xis[j][q] + cf.a2[kq] * b.dxis[j][q];
                let er = (cf.a1[kq] - alpha1) * b.xis[j][q];
                for k in 0..m {
                    let wk = w * b.xis[k][q];
                    a12[k * m + j] += wk * e12;
                    aphi[k * m + j] += wk * ep;
                    ar[k * m + j] += wk * er;
                }
            }
        }
        let fv: Vec<f64> = (0..m).map(|k| (0..nq).map(|q| b.weights[q] * b.xis[k][q] * cf.rhs_v[i * nq + q]).sum()).collect();
        let fw: Vec<f64> = (0..m).map(|k| (0..nq).map(|q| b.weights[q] * b.xis[k][q] * cf.rhs_w[i * nq + q]).sum()).collect();
        sys.a12.push(a12);
        sys.aphi.push(aphi);
        sys.ar.push(ar);
        sys.big_f.push(fv);
        sys.small_f.push(fw);
    }
    sys
}

/// Solves the modal system with second-order differences on the (uniform)
/// radial grid as one banded system, unknowns ordered node-major.
pub fn solve_modal_system(sys: &ModalSystem) -> NozzleResult<ModalState> {
    let n = sys.r.len();
    let m = sys.n_modes;
    if n < 4 {
        return Err(NozzleError::InsufficientGrid(format!("modal solve needs 4 radii, got {n}")));
    }
    let h = (sys.r[n - 1] - sys.r[0]) / (n - 1) as f64;
    let bs = 2 * m;
    let band = 3 * bs;
    let vi = |i: usize, k: usize| i * bs + k;
    let wi = |i: usize, k: usize| i * bs + m + k;
    let mut a = BandedMatrix::new(n * bs, band, band);
    let mut rhs = vec![0.0; n * bs];
    let (h2, h2i) = (1.0 / (h * h), 0.5 / h);
    for k in 0..m {
        // v(r_en) = 0, v'(r_en) = g_k
        a.set(vi(0, k), vi(0, k), 1.0);
        let row = vi(1, k);
        a.set(row, vi(0, k), -3.0 * h2i);
        a.set(row, vi(1, k), 4.0 * h2i);
        a.set(row, vi(2, k), -h2i);
        rhs[row] = sys.entrance[k];
        for blk in 2..n {
            let c = blk - 1;
            let row = vi(blk, k);
            a.add(row, vi(c + 1, k), h2);
            a.add(row, vi(c, k), -2.0 * h2);
            a.add(row, vi(c - 1, k), h2);
            for j in 0..m {
                let first = sys.a12[c][k * m + j] + sys.ar[c][k * m + j];
                a.add(row, vi(c + 1, j), first * h2i);
                a.add(row, vi(c - 1, j), -first * h2i);
                a.add(row, vi(c, j), sys.aphi[c][k * m + j]);
            }
            a.add(row, wi(c + 1, k), -sys.b1[c] * h2i);
            a.add(row, wi(c - 1, k), sys.b1[c] * h2i);
            a.add(row, wi(c, k), -sys.c[c]);
            rhs[row] = sys.big_f[c][k];
        }
        // w Neumann ends
        let row = wi(0, k);
        a.set(row, wi(0, k), -3.0 * h2i);
        a.set(row, wi(1, k), 4.0 * h2i);
        a.set(row, wi(2, k), -h2i);
        let row = wi(n - 1, k);
        a.set(row, wi(n - 1, k), 3.0 * h2i);
        a.set(row, wi(n - 2, k), -4.0 * h2i);
        a.set(row, wi(n - 3, k), h2i);
        for i in 1..n - 1 {
            let row = wi(i, k);
            let r = sys.r[i];
            a.add(row, wi(i + 1, k), h2 + 2.0 / r * h2i);
            a.add(row, wi(i - 1, k), h2 - 2.0 / r * h2i);
            a.add(row, wi(i, k), -2.0 * h2 - sys.omegas[k] / (r * r) - sys.g0[i]);
            a.add(row, vi(i + 1, k), -sys.h1[i] * h2i);
            a.add(row, vi(i - 1, k), sys.h1[i] * h2i);
            rhs[row] = sys.small_f[i][k];
        }
    }
    let x = a.solve(&rhs)?;
    let mut out = ModalState::zeros(n, m);
    for i in 0..n {
        for k in 0..m {
            out.v[i * m + k] = x[vi(i, k)];
            out.w[i * m + k] = x[wi(i, k)];
        }
    }
    Ok(out)
}

/// Potential perturbations and their derivatives on the grid.
#[derive(Debug, Clone)]
pub struct GridPotentials {
    pub chi: Vec<f64>,
    pub chi_r: Vec<f64>,
    pub chi_p: Vec<f64>,
    pub big_psi: Vec<f64>,
    pub big_psi_r: Vec<f64>,
    pub big_psi_p: Vec<f64>,
}

/// `chi = sum v_k xi_k + chi_bd`, `Psi = sum w_k xi_k + Psi_bd` on the grid,
/// with first derivatives.
pub fn reconstruct_fields(ws: &Workspace, modal: &ModalState) -> GridPotentials {
    let g = &ws.grid;
    let (nr, np, m) = (g.nr(), g.nphi(), modal.n_modes);
    let (dv, dw) = modal.radial_derivative(&ws.dr);
    let n = g.len();
    let mut out = GridPotentials {
        chi: vec![0.0; n],
        chi_r: vec![0.0; n],
        chi_p: vec![0.0; n],
        big_psi: vec![0.0; n],
        big_psi_r: vec![0.0; n],
        big_psi_p: vec![0.0; n],
    };
    for i in 0..nr {
        for j in 0..np {
            let k = g.idx(i, j);
            let modes = &ws.modes_g[j];
            let (cb, pb) = (&ws.chi_bd_g[k], &ws.psi_bd_g[k]);
            let (mut c0, mut c1, mut c2, mut p0, mut p1, mut p2) = (cb[0], cb[1], cb[3], pb[0], pb[1], pb[3]);
            for (kk, mv) in modes.iter().enumerate().take(m) {
                let ix = i * m + kk;
                c0 += modal.v[ix] * mv[0];
                c1 += dv[ix] * mv[0];
                c2 += modal.v[ix] * mv[1];
                p0 += modal.w[ix] * mv[0];
                p1 += dw[ix] * mv[0];
                p2 += modal.w[ix] * mv[1];
            }
            out.chi[k] = c0;
            out.chi_r[k] = c1;
            out.chi_p[k] = c2;
            out.big_psi[k] = p0;
            out.big_psi_r[k] = p1;
            out.big_psi_p[k] = p2;
        }
    }
    out
}

/// One frozen-coefficient linear step.
pub fn linear_step(ws: &Workspace, modal: &ModalState, frozen: &FrozenAtGauss) -> NozzleResult<ModalState> {
    let cf = assemble_coefficients(ws, modal, frozen)?;
    solve_modal_system(&galerkin_reduce(ws, &cf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::ProfileForm;

    fn small_case(nr: usize, nphi: usize, modes: usize) -> NozzleCase {
        let mut c = NozzleCase::demo();
        c.numerics.nr = nr;
        c.numerics.nphi = nphi;
        c.numerics.modes = modes;
        c
    }

    #[test]
    fn cutoff_endpoints() {
        let a = cutoff(2.0, 2.0, 3.0);
        let b = cutoff(3.0, 2.0, 3.0);
        assert_eq!(a, [1.0, 0.0, 0.0]);
        assert!(b[0].abs() < 1e-15 && b[1].abs() < 1e-15 && b[2].abs() < 1e-15);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let gas = GasLaw::new(1.4).unwrap();
        let (r, s0, u, e) = (2.3, 1.0, 2.4, 0.3);
        let z = 0.5 * u * u + 1.4 / 0.4 * s0 * 0.8f64.powf(0.4);
        let lin = background_linearization(&gas, r, s0, z, e, u);
        let h = 1e-6;
        let f = |z: f64, p1: f64, q1: f64| frak_f2(&gas, r, z, [p1, 0.0, 0.0], [q1, 0.0, 0.0], u);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
        assert!(rel((f(z, e, u + h) - f(z, e, u - h)) / (2.0 * h), lin.alpha1) < 1e-6);
        assert!(rel((f(z, e + h, u) - f(z, e - h, u)) / (2.0 * h), lin.b1) < 1e-6);
        assert!(rel((f(z + h, e, u) - f(z - h, e, u)) / (2.0 * h), lin.c) < 1e-6);
        let rho = |z: f64, q1: f64| density_closure(&gas, s0, z, [q1, 0.0, 0.0]).unwrap();
        assert!(rel((rho(z + h, u) - rho(z - h, u)) / (2.0 * h), lin.g0) < 1e-6);
        assert!(rel((rho(z, u + h) - rho(z, u - h)) / (2.0 * h), lin.h1) < 1e-6);
    }

    #[test]
    fn background_annihilates_residuals() {
        let ws = Workspace::new(&small_case(17, 9, 4)).unwrap();
        let frozen = freeze_background(&ws);
        let cf = assemble_coefficients(&ws, &ModalState::zeros(17, 5), &frozen).unwrap();
        assert!(cf.big_f.iter().all(|x| x.abs() < 1e-12));
        assert!(cf.small_f.iter().all(|x| x.abs() < 1e-12));
        assert!(cf.a12.iter().all(|x| *x == 0.0));
        assert!(cf.a22.iter().all(|x| *x < 0.0));
        let sol = linear_step(&ws, &ModalState::zeros(17, 5), &frozen).unwrap();
        assert!(sol.v.iter().chain(&sol.w).all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn doping_perturbation_enters_poisson_side_only() {
        let mut c = small_case(17, 9, 4);
        c.perturbation.eps = 1e-3;
        c.perturbation.b = Profile::cosine(c.geometry.phi0, vec![1.0]);
        let ws = Workspace::new(&c).unwrap();
        let cf = assemble_coefficients(&ws, &ModalState::zeros(17, 5), &freeze_background(&ws)).unwrap();
        assert!(cf.big_f.iter().all(|x| x.abs() < 1e-12));
        assert!(cf.small_f.iter().all(|x| (x + 1e-3).abs() < 1e-12));
    }

    #[test]
    fn lifting_traces() {
        let mut c = small_case(9, 9, 2);
        let phi0 = c.geometry.phi0;
        c.perturbation.eps = 0.01;
        c.perturbation.v_en = Profile { form: ProfileForm::EndTapered(vec![1.0]), phi0 };
        c.perturbation.e_en = Profile::cosine(phi0, vec![0.5, 0.2]);
        c.perturbation.phi_ex = Profile::cosine(phi0, vec![-0.3, 0.1]);
        let l = Lifting::new(&c);
        for phi in [0.0, 0.3, phi0] {
            let (en, ex) = (l.big_psi(2.0, phi), l.big_psi(3.0, phi));
            assert!((en[1] - 0.01 * c.perturbation.e_en.value(phi)).abs() < 1e-15);
            assert!((ex[1] - 0.01 * c.perturbation.phi_ex.value(phi)).abs() < 1e-15);
            let ce = l.chi(2.0, phi);
            assert!((ce[0] - 0.01 * 2.0 * c.perturbation.v_en.integral(phi)).abs() < 1e-15);
            assert!(l.chi(3.0, phi)[0].abs() < 1e-15);
        }
        assert!(l.big_psi(2.5, phi0)[3].abs() < 1e-14);
        let zero = Lifting::new(&NozzleCase::demo());
        assert_eq!(zero.chi(2.5, 0.2), [0.0; 6]);
        assert_eq!(zero.big_psi(2.5, 0.2), [0.0; 6]);
    }

    #[test]
    fn constant_poisson_mode_is_exact() {
        let n = 21;
        let r: Vec<f64> = (0..n).map(|i| 2.0 + i as f64 / (n - 1) as f64).collect();
        let (g0, f) = (0.7, 0.35);
        let sys = ModalSystem {
            n_modes: 1,
            a12: vec![vec![0.0]; n],
            aphi: vec![vec![0.0]; n],
            ar: vec![vec![0.0]; n],
            omegas: vec![0.0],
            b1: vec![0.0; n],
            c: vec![0.0; n],
            g0: vec![g0; n],
            h1: vec![0.0; n],
            big_f: vec![vec![0.0]; n],
            small_f: vec![vec![f]; n],
            entrance: vec![0.0],
            r,
        };
        let sol = solve_modal_system(&sys).unwrap();
        assert!(sol.w.iter().all(|w| (w + f / g0).abs() < 1e-10));
        assert!(sol.v.iter().all(|v| v.abs() < 1e-12));
    }
}
