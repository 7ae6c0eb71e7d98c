//! Nested damped Picard iteration: potentials innermost, `psi` in the
//! middle, transport of `(S, Lambda)` outermost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case::{NozzleCase, Numerics};
use crate::core_model::{
    compose_velocity, curl_theta_with, density_closure, locate, swirl_source, FlowFields, SwirlInputs, VelocityField,
};
use crate::error::{NozzleError, NozzleResult};
use crate::linear_subsystem::{freeze, linear_step, reconstruct_fields, FrozenAtGauss, GridPotentials, ModalState, Workspace};
use crate::numerics::{composite_weights, loglog_slope, Parity};
use crate::verify_report::{hk_star_norm, residual_euler_poisson, PrimitiveFields, ResidualReport};
use crate::vorticity_transport::{solve_psi, trace_all, transport_scalars, TraceParity};

/// Tolerances, caps and damping of the three loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub tol_p: f64,
    pub tol_v: f64,
    pub tol_t: f64,
    pub max_iters: usize,
    pub relax: f64,
    /// cap on the H1 norm of any perturbation iterate
    pub budget: f64,
}

impl IterationConfig {
    pub fn from_numerics(n: &Numerics) -> Self {
        IterationConfig {
            tol_p: n.tol_p,
            tol_v: n.tol_v,
            tol_t: n.tol_t,
            max_iters: n.max_iters,
            relax: n.relax,
            budget: n.budget,
        }
    }

    pub fn validate(&self) -> NozzleResult<()> {
        if !(self.tol_p > 0.0 && self.tol_v > 0.0 && self.tol_t > 0.0) {
            return Err(NozzleError::Validation("tolerances must be positive".into()));
        }
        if !(self.relax > 0.0 && self.relax <= 1.0) {
            return Err(NozzleError::Validation(format!("relax = {} outside (0, 1]", self.relax)));
        }
        if self.max_iters == 0 {
            return Err(NozzleError::Validation("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitStatus {
    Converged,
    Diverged,
    SonicApproach,
    Cavitation,
    Backflow,
    HorizonBeforeExit,
}

impl ExitStatus {
    /// Maps a controlled failure to its status; other errors are returned.
    pub fn classify(err: &NozzleError) -> Option<(ExitStatus, Option<[f64; 2]>)> {
        match err {
            NozzleError::SonicApproach { r, phi, .. } => Some((ExitStatus::SonicApproach, Some([*r, *phi]))),
            NozzleError::Cavitation { r, phi, .. } => Some((ExitStatus::Cavitation, Some([*r, *phi]))),
            NozzleError::Backflow { r, phi, .. } => Some((ExitStatus::Backflow, Some([*r, *phi]))),
            NozzleError::HorizonBeforeExit { r_star, .. } => Some((ExitStatus::HorizonBeforeExit, Some([*r_star, 0.0]))),
            NozzleError::NonConvergence { .. } | NozzleError::BudgetExceeded { .. } => Some((ExitStatus::Diverged, None)),
            _ => None,
        }
    }
}

/// Shared damping: starts at `relax`, drops to `0.5` at the first increase
/// of any increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Damping {
    pub relax: f64,
    reduced: bool,
}

impl Damping {
    pub fn new(relax: f64) -> Self {
        Damping { relax, reduced: false }
    }

    fn observe(&mut self, previous: Option<f64>, current: f64) {
        if let Some(p) = previous {
            if current > p && !self.reduced {
                self.relax = self.relax.min(0.5);
                self.reduced = true;
            }
        }
    }
}

/// Increments and iterate norms of one loop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopHistory {
    pub total_iterations: usize,
    pub increments: Vec<f64>,
    pub norms: Vec<f64>,
    /// increments of the most recent call
    pub last_call: Vec<f64>,
}

impl LoopHistory {
    fn start_call(&mut self) {
        self.last_call.clear();
    }

    fn record(&mut self, increment: f64, norm: f64) {
        self.total_iterations += 1;
        self.increments.push(increment);
        self.norms.push(norm);
        self.last_call.push(increment);
    }

    fn previous(&self) -> Option<f64> {
        self.last_call.last().copied()
    }

    /// Whether the last three increments of the latest call decrease.
    pub fn monotone_tail(&self) -> bool {
        let t = &self.last_call;
        t.len() < 3 || t[t.len() - 3..].windows(2).all(|w| w[1] <= w[0])
    }

    /// Ratios of successive increments in the latest call.
    pub fn contraction(&self) -> Vec<f64> {
        self.last_call.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: ExitStatus,
    pub message: Option<String>,
    /// offending node `(r, phi)` for guard statuses
    pub location: Option<[f64; 2]>,
    pub grid: [usize; 2],
    pub modes: usize,
    pub config: IterationConfig,
    pub final_relax: f64,
    pub outer_iterations: usize,
    pub potentials: LoopHistory,
    pub vorticity: LoopHistory,
    pub transport: LoopHistory,
    pub monotone: [bool; 3],
    pub residuals: Option<ResidualReport>,
    pub min_mach: Option<f64>,
}

/// Fields, primitives and report of one solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub fields: Option<FlowFields>,
    pub primitives: Option<PrimitiveFields>,
    pub report: SolveReport,
}

/// Parseval H1 norm of the modal part:
/// `2 pi int r^2 sum_k (v_k^2 + v_k'^2 + omega_k v_k^2 / r^2) dr`, both unknowns.
pub fn modal_h1(ws: &Workspace, state: &ModalState) -> f64 {
    let g = &ws.grid;
    let m = state.n_modes;
    let w = composite_weights(g.nr(), g.hr());
    let (dv, dw) = state.radial_derivative(&ws.dr);
    let mut acc = 0.0;
    for i in 0..g.nr() {
        let r = g.r[i];
        let mut s = 0.0;
        for k in 0..m {
            let ix = i * m + k;
            let om = ws.basis.omegas[k] / (r * r);
            s += state.v[ix].powi(2) * (1.0 + om) + dv[ix].powi(2);
            s += state.w[ix].powi(2) * (1.0 + om) + dw[ix].powi(2);
        }
        acc += w[i] * r * r * s;
    }
    (2.0 * std::f64::consts::PI * acc).sqrt()
}

fn diff(a: &ModalState, b: &ModalState) -> ModalState {
    ModalState {
        n_modes: a.n_modes,
        v: a.v.iter().zip(&b.v).map(|(x, y)| x - y).collect(),
        w: a.w.iter().zip(&b.w).map(|(x, y)| x - y).collect(),
    }
}

fn blend(old: &[f64], new: &[f64], relax: f64) -> Vec<f64> {
    old.iter().zip(new).map(|(o, n)| o + relax * (n - o)).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Reference magnitudes of the background used as floors in the relative
/// convergence tests.
#[derive(Debug, Clone, Copy)]
struct Scales {
    velocity: f64,
    entropy: f64,
}

fn scales(ws: &Workspace) -> NozzleResult<Scales> {
    let g = &ws.grid;
    let w = composite_weights(g.nr(), g.hr());
    let radial: f64 = (0..g.nr()).map(|i| w[i] * g.r[i].powi(2) * ws.bg.u[i].powi(2)).sum();
    let velocity = (2.0 * std::f64::consts::PI * (1.0 - g.phi0().cos()) * radial).sqrt();
    let s0 = vec![ws.case.background.s0; g.len()];
    Ok(Scales { velocity, entropy: hk_star_norm(g, &s0, Parity::Even, 1)? })
}

fn grid_h1(ws: &Workspace, f: &[f64], parity: Parity) -> NozzleResult<f64> {
    hk_star_norm(&ws.grid, f, parity, 1)
}

fn check_budget(loop_name: &str, norm: f64, budget: f64) -> NozzleResult<()> {
    if norm > budget || !norm.is_finite() {
        Err(NozzleError::BudgetExceeded { loop_name: loop_name.into(), norm, budget })
    } else {
        Ok(())
    }
}

/// Fixed point of the frozen-coefficient map for `(chi, Psi)`.
pub fn picard_potentials(
    ws: &Workspace,
    frozen: &FrozenAtGauss,
    start: &ModalState,
    cfg: &IterationConfig,
    damping: &mut Damping,
    history: &mut LoopHistory,
) -> NozzleResult<ModalState> {
    let floor = scales(ws)?.velocity;
    let mut cur = start.clone();
    history.start_call();
    for _ in 0..cfg.max_iters {
        let step = linear_step(ws, &cur, frozen)?;
        let norm = modal_h1(ws, &step);
        let inc = modal_h1(ws, &diff(&step, &cur));
        damping.observe(history.previous(), inc);
        history.record(inc, norm);
        check_budget("potentials", norm, cfg.budget)?;
        if inc <= cfg.tol_p * (norm + floor) {
            return Ok(step);
        }
        cur = ModalState { n_modes: cur.n_modes, v: blend(&cur.v, &step.v, damping.relax), w: blend(&cur.w, &step.w, damping.relax) };
    }
    Err(NozzleError::NonConvergence { loop_name: "potentials".into(), iterations: cfg.max_iters })
}

/// Velocity `grad(varphi_bar + chi) + curl(psi e_theta) + V e_theta`.
pub fn velocity_on_grid(ws: &Workspace, pots: &GridPotentials, psi: &[f64], swirl: &[f64]) -> NozzleResult<VelocityField> {
    let g = &ws.grid;
    let (cr, cp) = curl_theta_with(g, &ws.calc, psi);
    let mut phi_r = pots.chi_r.clone();
    for i in 0..g.nr() {
        for j in 0..g.nphi() {
            phi_r[g.idx(i, j)] += ws.bg.u[i];
        }
    }
    compose_velocity(g, (&phi_r, &pots.chi_p), (&cr, &cp), swirl)
}

/// `G` evaluated on the interior nodes from the current fields.
pub fn vorticity_source(
    ws: &Workspace,
    pots: &GridPotentials,
    psi: &[f64],
    entropy: &[f64],
    swirl: &[f64],
) -> NozzleResult<Vec<f64>> {
    let g = &ws.grid;
    let u = velocity_on_grid(ws, pots, psi, swirl)?;
    let s_p = ws.calc.d_phi(entropy, Parity::Even);
    let v_p = ws.calc.d_phi(swirl, Parity::Odd);
    let mut out = vec![0.0; g.len()];
    for i in 0..g.nr() - 1 {
        for j in 1..g.nphi() - 1 {
            let k = g.idx(i, j);
            let inputs = SwirlInputs {
                r: g.r[i],
                phi: g.phi[j],
                s: entropy[k],
                ds_dphi: s_p[k],
                v: swirl[k],
                dv_dphi: v_p[k],
                z: ws.nodes[i].big_phi + pots.big_psi[k],
                q: u.at(k).as_array(),
            };
            out[k] = swirl_source(&ws.gas, &inputs)?;
        }
    }
    Ok(out)
}

/// One application of the `psi` map, relax-blended with `psi_prev`.
pub fn update_vorticity(
    ws: &Workspace,
    pots: &GridPotentials,
    entropy: &[f64],
    swirl: &[f64],
    psi_prev: &[f64],
    relax: f64,
) -> NozzleResult<Vec<f64>> {
    let step = solve_psi(&vorticity_source(ws, pots, psi_prev, entropy, swirl)?, &ws.grid)?;
    Ok(if relax == 1.0 { step } else { blend(psi_prev, &step, relax) })
}

/// Traces the current velocity back to the entrance and transports the
/// entrance entropy and angular momentum.
pub fn update_transport(
    ws: &Workspace,
    pots: &GridPotentials,
    psi: &[f64],
    swirl_prev: &[f64],
) -> NozzleResult<(Vec<f64>, Vec<f64>)> {
    let p = &ws.case.perturbation;
    let s0 = ws.case.background.s0;
    if p.is_zero() || (p.s_en.is_zero() && p.w_en.is_zero()) {
        let n = ws.grid.len();
        return Ok((vec![s0; n], vec![0.0; n]));
    }
    let u = velocity_on_grid(ws, pots, psi, swirl_prev)?;
    let feet = trace_all(&ws.grid, &u, TraceParity::default())?;
    transport_scalars(&ws.grid, &feet, |f| s0 + p.eps * p.s_en.value(f), |f| p.eps * p.w_en.value(f))
}

/// Density, velocity, potential and Mach number from the reformulated
/// unknowns.
pub fn derive_primitives(
    ws: &Workspace,
    pots: &GridPotentials,
    psi: &[f64],
    entropy: &[f64],
    swirl: &[f64],
) -> NozzleResult<PrimitiveFields> {
    let g = &ws.grid;
    let u = velocity_on_grid(ws, pots, psi, swirl)?;
    let mut rho = vec![0.0; g.len()];
    let mut big_phi = vec![0.0; g.len()];
    for i in 0..g.nr() {
        for j in 0..g.nphi() {
            let k = g.idx(i, j);
            let z = ws.nodes[i].big_phi + pots.big_psi[k];
            big_phi[k] = z;
            rho[k] = density_closure(&ws.gas, entropy[k], z, u.at(k).as_array()).map_err(|e| locate(e, g.r[i], g.phi[j]))?;
        }
    }
    Ok(PrimitiveFields {
        grid: g.clone(),
        gamma: ws.gas.gamma,
        rho,
        u_r: u.u_r,
        u_phi: u.u_phi,
        u_theta: u.u_theta,
        entropy: entropy.to_vec(),
        big_phi,
        mach: Vec::new(),
    }
    .with_mach())
}

struct State {
    modal: ModalState,
    psi: Vec<f64>,
    entropy: Vec<f64>,
    swirl: Vec<f64>,
    damping: Damping,
    potentials: LoopHistory,
    vorticity: LoopHistory,
    transport: LoopHistory,
    outer: usize,
}

fn iterate(ws: &Workspace, cfg: &IterationConfig, st: &mut State) -> NozzleResult<()> {
    let sc = scales(ws)?;
    for _ in 0..cfg.max_iters {
        st.outer += 1;
        st.vorticity.start_call();
        let mut settled = false;
        for _ in 0..cfg.max_iters {
            let frozen = freeze(ws, &st.psi, &st.entropy, &st.swirl);
            st.modal = picard_potentials(ws, &frozen, &st.modal, cfg, &mut st.damping, &mut st.potentials)?;
            let pots = reconstruct_fields(ws, &st.modal);
            let step = update_vorticity(ws, &pots, &st.entropy, &st.swirl, &st.psi, 1.0)?;
            let norm = grid_h1(ws, &step, Parity::Odd)?;
            let inc = grid_h1(ws, &sub(&step, &st.psi), Parity::Odd)?;
            st.damping.observe(st.vorticity.previous(), inc);
            st.vorticity.record(inc, norm);
            check_budget("vorticity", norm, cfg.budget)?;
            if inc <= cfg.tol_v * (norm + sc.velocity) {
                st.psi = step;
                settled = true;
                break;
            }
            st.psi = blend(&st.psi, &step, st.damping.relax);
        }
        if !settled {
            return Err(NozzleError::NonConvergence { loop_name: "vorticity".into(), iterations: cfg.max_iters });
        }
        let pots = reconstruct_fields(ws, &st.modal);
        let (s_new, v_new) = update_transport(ws, &pots, &st.psi, &st.swirl)?;
        let s0 = ws.case.background.s0;
        let s_dev: Vec<f64> = s_new.iter().map(|s| s - s0).collect();
        let norm = grid_h1(ws, &s_dev, Parity::Even)? + grid_h1(ws, &v_new, Parity::Odd)?;
        let inc = grid_h1(ws, &sub(&s_new, &st.entropy), Parity::Even)?
            + grid_h1(ws, &sub(&v_new, &st.swirl), Parity::Odd)?;
        st.damping.observe(st.transport.previous(), inc);
        st.transport.record(inc, norm);
        check_budget("transport", norm, cfg.budget)?;
        if inc <= cfg.tol_t * (norm + sc.entropy + sc.velocity) {
            st.entropy = s_new;
            st.swirl = v_new;
            return Ok(());
        }
        st.entropy = blend(&st.entropy, &s_new, st.damping.relax);
        st.swirl = blend(&st.swirl, &v_new, st.damping.relax);
    }
    Err(NozzleError::NonConvergence { loop_name: "transport".into(), iterations: cfg.max_iters })
}

/// Runs the nested iteration on a prepared workspace.
pub fn solve_workspace(ws: &Workspace, cfg: &IterationConfig) -> NozzleResult<Solution> {
    cfg.validate()?;
    let g = &ws.grid;
    let n = g.len();
    let mut st = State {
        modal: ModalState::zeros(g.nr(), ws.n_modes()),
        psi: vec![0.0; n],
        entropy: vec![ws.case.background.s0; n],
        swirl: vec![0.0; n],
        damping: Damping::new(cfg.relax),
        potentials: LoopHistory::default(),
        vorticity: LoopHistory::default(),
        transport: LoopHistory::default(),
        outer: 0,
    };
    let outcome = iterate(ws, cfg, &mut st);
    let (mut status, mut message, mut location) = (ExitStatus::Converged, None, None);
    if let Err(e) = outcome {
        let Some((s, loc)) = ExitStatus::classify(&e) else { return Err(e) };
        status = s;
        location = loc;
        message = Some(e.to_string());
    }
    let pots = reconstruct_fields(ws, &st.modal);
    let fields = FlowFields {
        grid: g.clone(),
        chi: pots.chi.clone(),
        big_psi: pots.big_psi.clone(),
        psi: st.psi.clone(),
        entropy: st.entropy.clone(),
        swirl: st.swirl.clone(),
    };
    let primitives = match derive_primitives(ws, &pots, &st.psi, &st.entropy, &st.swirl) {
        Ok(p) => Some(p),
        Err(e) => {
            if status == ExitStatus::Converged {
                let Some((s, loc)) = ExitStatus::classify(&e) else { return Err(e) };
                status = s;
                location = loc;
                message = Some(e.to_string());
            }
            None
        }
    };
    let residuals = match &primitives {
        Some(p) => Some(residual_euler_poisson(p, &ws.case)?),
        None => None,
    };
    let min_mach = primitives.as_ref().map(|p| p.mach.iter().copied().fold(f64::INFINITY, f64::min));
    let report = SolveReport {
        status,
        message,
        location,
        grid: [g.nr(), g.nphi()],
        modes: ws.n_modes(),
        config: *cfg,
        final_relax: st.damping.relax,
        outer_iterations: st.outer,
        monotone: [st.potentials.monotone_tail(), st.vorticity.monotone_tail(), st.transport.monotone_tail()],
        potentials: st.potentials,
        vorticity: st.vorticity,
        transport: st.transport,
        residuals,
        min_mach,
    };
    Ok(Solution { fields: Some(fields), primitives, report })
}

/// Report for a case that failed before any iterate existed.
fn early_failure(case: &NozzleCase, cfg: &IterationConfig, err: NozzleError) -> NozzleResult<Solution> {
    let Some((status, location)) = ExitStatus::classify(&err) else { return Err(err) };
    let n = &case.numerics;
    Ok(Solution {
        fields: None,
        primitives: None,
        report: SolveReport {
            status,
            message: Some(err.to_string()),
            location,
            grid: [n.nr, n.nphi],
            modes: n.modes,
            config: *cfg,
            final_relax: cfg.relax,
            outer_iterations: 0,
            potentials: LoopHistory::default(),
            vorticity: LoopHistory::default(),
            transport: LoopHistory::default(),
            monotone: [true; 3],
            residuals: None,
            min_mach: None,
        },
    })
}

/// Builds the workspace and runs the nested iteration. Controlled failures
/// become report statuses; invalid input is an error.
pub fn solve_case(case: &NozzleCase, cfg: &IterationConfig) -> NozzleResult<Solution> {
    cfg.validate()?;
    match Workspace::new(case) {
        Ok(ws) => solve_workspace(&ws, cfg),
        Err(e) => early_failure(case, cfg, e),
    }
}

/// H1_* norm of the deviation of the primitives from the background.
pub fn deviation_norm(ws: &Workspace, p: &PrimitiveFields) -> NozzleResult<f64> {
    let g = &ws.grid;
    let s0 = ws.case.background.s0;
    let mut dev: [Vec<f64>; 6] = Default::default();
    for k in 0..g.len() {
        let bn = &ws.nodes[k / g.nphi()];
        dev[0].push(p.rho[k] - bn.rho);
        dev[1].push(p.u_r[k] - bn.u);
        dev[2].push(p.u_phi[k]);
        dev[3].push(p.u_theta[k]);
        dev[4].push(p.entropy[k] - s0);
        dev[5].push(p.big_phi[k] - bn.big_phi);
    }
    let par = [Parity::Even, Parity::Even, Parity::Odd, Parity::Odd, Parity::Even, Parity::Even];
    let mut total = 0.0;
    for (f, q) in dev.iter().zip(par) {
        total += hk_star_norm(g, f, q, 1)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub deviation: f64,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    /// least-squares slope of `log(deviation)` against `log(eps)`
    pub slope: f64,
    pub warnings: Vec<String>,
}

/// Solves the template at each amplitude and fits the deviation growth.
pub fn scaling_study(template: &NozzleCase, epsilons: &[f64], cfg: &IterationConfig) -> NozzleResult<ScalingStudy> {
    let mut warnings = Vec::new();
    let mut fit: Vec<f64> = epsilons
        .iter()
        .copied()
        .filter(|&e| {
            if e == 0.0 {
                warnings.push("zero amplitude excluded from the fit".to_string());
                false
            } else {
                true
            }
        })
        .collect();
    // sorted so the fit does not depend on input order
    fit.sort_by(f64::total_cmp);
    if fit.len() < 3 {
        return Err(NozzleError::Validation(format!("need at least 3 nonzero amplitudes, got {}", fit.len())));
    }
    let (lo, hi) = fit.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e.abs()), b.max(e.abs())));
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(NozzleError::Validation("amplitudes must span at least two decades".into()));
    }
    let rows: NozzleResult<Vec<ScalingRow>> = fit
        .par_iter()
        .map(|&eps| {
            let mut case = template.clone();
            case.perturbation.eps = eps;
            let ws = Workspace::new(&case)?;
            let sol = solve_workspace(&ws, cfg)?;
            if sol.report.status != ExitStatus::Converged {
                return Err(NozzleError::StudyAborted(format!(
                    "eps = {eps:e} ended with {:?}: {}",
                    sol.report.status,
                    sol.report.message.unwrap_or_default()
                )));
            }
            let p = sol.primitives.as_ref().expect("converged solve has primitives");
            Ok(ScalingRow { eps, deviation: deviation_norm(&ws, p)?, outer_iterations: sol.report.outer_iterations })
        })
        .collect();
    let rows = rows?;
    let x: Vec<f64> = rows.iter().map(|r| r.eps.abs()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    Ok(ScalingStudy { slope: loglog_slope(&x, &y), rows, warnings })
}
