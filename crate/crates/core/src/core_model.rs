//! State types, thermodynamic closures, Helmholtz velocity reconstruction and
//! the swirl source term.
//!
//! Fields live on a tensor grid `r_i x phi_j` stored row-major with `r` as
//! the outer index. Swirl is stored as `V = u_theta = Lambda / (r sin phi)`,
//! never as `Lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{NozzleError, NozzleResult};
use crate::numerics::{along_phi, along_r, Differentiator, Parity};

/// Polytropic gas `p = S rho^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasLaw {
    pub gamma: f64,
}

impl GasLaw {
    pub fn new(gamma: f64) -> NozzleResult<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(NozzleError::Validation("gamma must exceed 1".into()));
        }
        Ok(GasLaw { gamma })
    }
}

/// Conical wedge `r_en < r < r_ex`, `0 <= phi < phi0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NozzleGeometry {
    pub r_en: f64,
    pub r_ex: f64,
    pub phi0: f64,
}

impl NozzleGeometry {
    pub fn new(r_en: f64, r_ex: f64, phi0: f64) -> NozzleResult<Self> {
        if !(r_en > 1.0) {
            return Err(NozzleError::Validation("r_en must exceed 1".into()));
        }
        if !(r_ex > r_en) {
            return Err(NozzleError::Validation("r_ex must exceed r_en".into()));
        }
        if !(phi0 > 0.0 && phi0 < std::f64::consts::PI) {
            return Err(NozzleError::Validation("phi0 must lie in (0, pi)".into()));
        }
        Ok(NozzleGeometry { r_en, r_ex, phi0 })
    }

    pub fn length(&self) -> f64 {
        self.r_ex - self.r_en
    }
}

/// Uniform tensor grid including both ends in each direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Grid {
    pub fn uniform(geom: &NozzleGeometry, nr: usize, nphi: usize) -> Self {
        Self::span(geom.r_en, geom.r_ex, geom.phi0, nr, nphi)
    }

    pub fn span(r0: f64, r1: f64, phi0: f64, nr: usize, nphi: usize) -> Self {
        let r = (0..nr).map(|i| r0 + (r1 - r0) * i as f64 / (nr - 1) as f64).collect();
        let phi = (0..nphi).map(|j| phi0 * j as f64 / (nphi - 1) as f64).collect();
        Grid { r, phi }
    }

    pub fn nr(&self) -> usize {
        self.r.len()
    }

    pub fn nphi(&self) -> usize {
        self.phi.len()
    }

    pub fn len(&self) -> usize {
        self.nr() * self.nphi()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nphi() + j
    }

    pub fn hr(&self) -> f64 {
        self.r[1] - self.r[0]
    }

    pub fn hphi(&self) -> f64 {
        self.phi[1] - self.phi[0]
    }

    pub fn phi0(&self) -> f64 {
        *self.phi.last().unwrap()
    }

    /// Samples `f(r, phi)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &r in &self.r {
            for &p in &self.phi {
                out.push(f(r, p));
            }
        }
        out
    }
}

/// Fourth-order nodal derivatives on a [`Grid`]; axis ghosts follow the
/// field parity.
#[derive(Debug, Clone)]
pub struct GridCalculus {
    pub nr: usize,
    pub nphi: usize,
    dr: Differentiator,
    dphi_even: Differentiator,
    dphi_odd: Differentiator,
    dphi_none: Differentiator,
}

impl GridCalculus {
    pub fn new(grid: &Grid) -> Self {
        let (nr, np) = (grid.nr(), grid.nphi());
        GridCalculus {
            nr,
            nphi: np,
            dr: Differentiator::uniform(nr, grid.hr(), Parity::None),
            dphi_even: Differentiator::uniform(np, grid.hphi(), Parity::Even),
            dphi_odd: Differentiator::uniform(np, grid.hphi(), Parity::Odd),
            dphi_none: Differentiator::uniform(np, grid.hphi(), Parity::None),
        }
    }

    fn phi_op(&self, parity: Parity) -> &Differentiator {
        match parity {
            Parity::Even => &self.dphi_even,
            Parity::Odd => &self.dphi_odd,
            Parity::None => &self.dphi_none,
        }
    }

    pub fn d_r(&self, f: &[f64]) -> Vec<f64> {
        along_r(&self.dr.d1, f, self.nr, self.nphi)
    }

    pub fn d_rr(&self, f: &[f64]) -> Vec<f64> {
        along_r(&self.dr.d2, f, self.nr, self.nphi)
    }

    pub fn d_phi(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        along_phi(&self.phi_op(parity).d1, f, self.nr, self.nphi)
    }

    pub fn d_phiphi(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        along_phi(&self.phi_op(parity).d2, f, self.nr, self.nphi)
    }
}

/// Unknowns of the reformulated problem on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFields {
    pub grid: Grid,
    /// velocity-potential perturbation `chi = varphi - varphi_bar`
    pub chi: Vec<f64>,
    /// electric-potential perturbation `Psi = Phi - Phi_bar`
    pub big_psi: Vec<f64>,
    /// swirl stream component `psi`
    pub psi: Vec<f64>,
    /// entropy `S`
    pub entropy: Vec<f64>,
    /// `V = Lambda / (r sin phi) = u_theta`
    pub swirl: Vec<f64>,
}

impl FlowFields {
    /// Background state: zero perturbations, uniform entropy.
    pub fn background(grid: Grid, s0: f64) -> Self {
        let n = grid.len();
        FlowFields {
            chi: vec![0.0; n],
            big_psi: vec![0.0; n],
            psi: vec![0.0; n],
            entropy: vec![s0; n],
            swirl: vec![0.0; n],
            grid,
        }
    }

    /// `Lambda = r sin(phi) V`.
    pub fn angular_momentum(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut out = self.swirl.clone();
        for i in 0..g.nr() {
            for j in 0..g.nphi() {
                out[g.idx(i, j)] *= g.r[i] * g.phi[j].sin();
            }
        }
        out
    }

    /// Checks the structural invariants: finite values, psi = 0 on axis and
    /// wall, V = 0 on the axis.
    pub fn check_invariants(&self, tol: f64) -> NozzleResult<()> {
        let g = &self.grid;
        let all = [&self.chi, &self.big_psi, &self.psi, &self.entropy, &self.swirl];
        if all.iter().any(|f| f.len() != g.len()) {
            return Err(NozzleError::GridMismatch("field length differs from grid".into()));
        }
        if all.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
            return Err(NozzleError::Validation("non-finite field value".into()));
        }
        for i in 0..g.nr() {
            let a = self.psi[g.idx(i, 0)].abs().max(self.psi[g.idx(i, g.nphi() - 1)].abs());
            if a > tol {
                return Err(NozzleError::AxisRegularity { value: a });
            }
            if self.swirl[g.idx(i, 0)].abs() > tol {
                return Err(NozzleError::AxisRegularity { value: self.swirl[g.idx(i, 0)].abs() });
            }
        }
        Ok(())
    }
}

/// Velocity components in the orthonormal frame `{e_r, e_phi, e_theta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityTriple {
    pub u_r: f64,
    pub u_phi: f64,
    pub u_theta: f64,
}

impl VelocityTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.u_r, self.u_phi, self.u_theta]
    }
}

/// Velocity components sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u_r: Vec<f64>,
    pub u_phi: Vec<f64>,
    pub u_theta: Vec<f64>,
}

impl VelocityField {
    pub fn at(&self, k: usize) -> VelocityTriple {
        VelocityTriple { u_r: self.u_r[k], u_phi: self.u_phi[k], u_theta: self.u_theta[k] }
    }
}

#[inline]
fn norm_sq(p: [f64; 3]) -> f64 {
    p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
}

/// Enthalpy head `z - |p|^2 / 2`, rejected when nonpositive.
#[inline]
fn head(z: f64, p: [f64; 3]) -> NozzleResult<f64> {
    let h = z - 0.5 * norm_sq(p);
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(NozzleError::Cavitation { head: h, r: f64::NAN, phi: f64::NAN })
    }
}

/// `rho = [ (gamma-1)/(gamma eta) (z - |p|^2/2) ]^(1/(gamma-1))`.
pub fn density_closure(gas: &GasLaw, eta: f64, z: f64, p: [f64; 3]) -> NozzleResult<f64> {
    let g = gas.gamma;
    let h = head(z, p)?;
    Ok(((g - 1.0) / (g * eta) * h).powf(1.0 / (g - 1.0)))
}

/// `c^2 = (gamma-1)(z - |q|^2/2)`.
pub fn sound_speed_sq(gas: &GasLaw, z: f64, q: [f64; 3]) -> NozzleResult<f64> {
    Ok((gas.gamma - 1.0) * head(z, q)?)
}

/// Attaches a node location to location-free closure errors.
pub fn locate(err: NozzleError, r: f64, phi: f64) -> NozzleError {
    match err {
        NozzleError::Cavitation { head, .. } => NozzleError::Cavitation { head, r, phi },
        other => other,
    }
}

/// Components of `curl(psi e_theta)`: `(d_phi(psi sin phi)/(r sin phi),
/// -d_r(r psi)/r)`. The axis value of the first uses `2 d_phi psi / r`.
pub fn curl_theta(grid: &Grid, psi: &[f64], axis_tol: f64) -> NozzleResult<(Vec<f64>, Vec<f64>)> {
    if psi.len() != grid.len() {
        return Err(NozzleError::GridMismatch("psi length differs from grid".into()));
    }
    let worst = (0..grid.nr()).map(|i| psi[grid.idx(i, 0)].abs()).fold(0.0, f64::max);
    if worst > axis_tol {
        return Err(NozzleError::AxisRegularity { value: worst });
    }
    let calc = GridCalculus::new(grid);
    Ok(curl_theta_with(grid, &calc, psi))
}

pub(crate) fn curl_theta_with(grid: &Grid, calc: &GridCalculus, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dpsi_phi = calc.d_phi(psi, Parity::Odd);
    let dpsi_r = calc.d_r(psi);
    let mut cr = vec![0.0; grid.len()];
    let mut cp = vec![0.0; grid.len()];
    for i in 0..grid.nr() {
        let r = grid.r[i];
        for j in 0..grid.nphi() {
            let k = grid.idx(i, j);
            let phi = grid.phi[j];
            cr[k] = if j == 0 {
                2.0 * dpsi_phi[k] / r
            } else {
                (dpsi_phi[k] + phi.cos() / phi.sin() * psi[k]) / r
            };
            cp[k] = -(psi[k] + r * dpsi_r[k]) / r;
        }
    }
    (cr, cp)
}

/// `u = grad(varphi) + curl(psi e_theta) + V e_theta`, with the gradient given
/// as `(d_r varphi, d_phi varphi)`.
pub fn compose_velocity(
    grid: &Grid,
    grad_potential: (&[f64], &[f64]),
    curl_part: (&[f64], &[f64]),
    v_swirl: &[f64],
) -> NozzleResult<VelocityField> {
    let n = grid.len();
    let lens = [grad_potential.0.len(), grad_potential.1.len(), curl_part.0.len(), curl_part.1.len(), v_swirl.len()];
    if lens.iter().any(|&l| l != n) {
        return Err(NozzleError::GridMismatch(format!("expected {n} samples, got {lens:?}")));
    }
    let mut u_r = vec![0.0; n];
    let mut u_phi = vec![0.0; n];
    for i in 0..grid.nr() {
        for j in 0..grid.nphi() {
            let k = grid.idx(i, j);
            u_r[k] = grad_potential.0[k] + curl_part.0[k];
            u_phi[k] = grad_potential.1[k] / grid.r[i] + curl_part.1[k];
        }
    }
    Ok(VelocityField { u_r, u_phi, u_theta: v_swirl.to_vec() })
}

/// Pointwise inputs of [`swirl_source`].
#[derive(Debug, Clone, Copy)]
pub struct SwirlInputs {
    pub r: f64,
    pub phi: f64,
    /// entropy `S`
    pub s: f64,
    pub ds_dphi: f64,
    /// `V = u_theta`
    pub v: f64,
    pub dv_dphi: f64,
    /// electric potential value `Phi`
    pub z: f64,
    /// full velocity `t + grad(varphi)`
    pub q: [f64; 3],
}

/// `G = (d_phi S rho^(gamma-1)/(gamma-1) + V^2 cot(phi) + V d_phi V) / (r q_r)`.
pub fn swirl_source(gas: &GasLaw, a: &SwirlInputs) -> NozzleResult<f64> {
    let qr = a.q[0];
    if !(qr > 0.0) {
        return Err(NozzleError::Backflow { u_r: qr, r: a.r, phi: a.phi });
    }
    let rho = density_closure(gas, a.s, a.z, a.q).map_err(|e| locate(e, a.r, a.phi))?;
    let thermo = a.ds_dphi * rho.powf(gas.gamma - 1.0) / (gas.gamma - 1.0);
    let sphi = a.phi.sin();
    let swirl = if sphi.abs() < 1e-300 {
        a.v * a.dv_dphi
    } else {
        a.v * a.v * a.phi.cos() / sphi + a.v * a.dv_dphi
    };
    Ok((thermo + swirl) / (a.r * qr))
}

/// The unregularized form `Lambda d_phi Lambda / (r^2 sin^2 phi)` of the swirl
/// term, with `Lambda = r sin(phi) V`. Singular on the axis.
pub fn swirl_source_lambda_form(gas: &GasLaw, a: &SwirlInputs) -> NozzleResult<f64> {
    let qr = a.q[0];
    if !(qr > 0.0) {
        return Err(NozzleError::Backflow { u_r: qr, r: a.r, phi: a.phi });
    }
    let rho = density_closure(gas, a.s, a.z, a.q)?;
    let (s, c) = a.phi.sin_cos();
    let lam = a.r * s * a.v;
    let dlam = a.r * (c * a.v + s * a.dv_dphi);
    let thermo = a.ds_dphi * rho.powf(gas.gamma - 1.0) / (gas.gamma - 1.0);
    Ok((thermo + lam * dlam / (a.r * a.r * s * s)) / (a.r * qr))
}
