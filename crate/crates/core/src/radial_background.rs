//! Radial (1-D) Euler-Poisson background flow.
//!
//! The background solves
//!
//! ```text
//! rho' = (r^2 rho E + 2 m0^2 / (r^3 rho)) / (r^2 gamma S0 rho^(gamma-1) - m0^2 / (r^2 rho^2))
//! E'   = (rho - b) - 2 E / r
//! ```
//!
//! from `(rho0, E0)` at `r_en`, on the supersonic branch. The equivalent
//! `(M^2, r^2 E)` form is integrated independently as a consistency check.

use serde::{Deserialize, Serialize};

use crate::error::{NozzleError, NozzleResult};

/// Background ion density `b(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Doping {
    Constant(f64),
    /// Samples `(r_k, b_k)` with cubic Hermite interpolation.
    Table { r: Vec<f64>, b: Vec<f64> },
}

impl Doping {
    pub fn at(&self, r: f64) -> f64 {
        match self {
            Doping::Constant(b) => *b,
            Doping::Table { r: rs, b } => cubic_table(rs, b, r),
        }
    }
}

fn cubic_table(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let k = match xs.iter().position(|&v| v > x) {
        Some(0) => 0,
        Some(p) => p - 1,
        None => n - 2,
    }
    .min(n - 2);
    let slope = |i: usize| -> f64 {
        if i == 0 {
            (ys[1] - ys[0]) / (xs[1] - xs[0])
        } else if i == n - 1 {
            (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2])
        } else {
            (ys[i + 1] - ys[i - 1]) / (xs[i + 1] - xs[i - 1])
        }
    };
    hermite(xs[k], xs[k + 1], ys[k], slope(k), ys[k + 1], slope(k + 1), x).0
}

/// Cubic Hermite value and derivative on `[x0, x1]`.
pub(crate) fn hermite(x0: f64, x1: f64, y0: f64, d0: f64, y1: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dv = ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * h * d0 + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * h * d1)
        / h;
    (v, dv)
}

/// Data of the radial problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundParams {
    pub gamma: f64,
    pub m0: f64,
    pub s0: f64,
    pub rho0: f64,
    pub e0: f64,
    pub doping: Doping,
}

impl BackgroundParams {
    /// `rho_s = (m0^2 / (gamma r_en^4 S0))^(1/(gamma+1))`.
    pub fn rho_s(&self, r_en: f64) -> f64 {
        (self.m0 * self.m0 / (self.gamma * r_en.powi(4) * self.s0)).powf(1.0 / (self.gamma + 1.0))
    }

    /// `kappa0 = (m0^2 / (gamma S0))^(1/(gamma+1))`.
    pub fn kappa0(&self) -> f64 {
        (self.m0 * self.m0 / (self.gamma * self.s0)).powf(1.0 / (self.gamma + 1.0))
    }

    /// Entrance Mach number.
    pub fn mach0(&self, r_en: f64) -> f64 {
        let c0 = (self.gamma * self.s0 * self.rho0.powf(self.gamma - 1.0)).sqrt();
        self.m0 / (r_en * r_en * self.rho0 * c0)
    }

    /// Density with Mach number `M` at radius `r`: `kappa0 (1/(r^4 M^2))^(1/(gamma+1))`.
    pub fn density_from_mach_sq(&self, r: f64, m2: f64) -> f64 {
        self.kappa0() * (1.0 / (r.powi(4) * m2)).powf(1.0 / (self.gamma + 1.0))
    }

    pub fn mach_sq_from_density(&self, r: f64, rho: f64) -> f64 {
        self.m0 * self.m0 / (self.gamma * self.s0 * r.powi(4) * rho.powf(self.gamma + 1.0))
    }

    /// Checks the supersonic admissibility window at `r_en`, and the doping
    /// bound pointwise on `[r_en, r_ex]`.
    pub fn check_admissible(&self, r_en: f64, r_ex: f64) -> NozzleResult<()> {
        let bad = |m: String| Err(NozzleError::Admissibility(m));
        if !(self.gamma > 1.0) {
            return bad("gamma must exceed 1".into());
        }
        if !(self.m0 > 0.0) || !(self.s0 > 0.0) {
            return bad("m0 and S0 must be positive".into());
        }
        let rho_s = self.rho_s(r_en);
        if !(self.rho0 > 0.0 && self.rho0 < rho_s) {
            return bad(format!("rho0 = {} outside (0, rho_s = {rho_s})", self.rho0));
        }
        let mach0 = self.mach0(r_en);
        if !(mach0 > 1.0) {
            return bad(format!("entrance Mach number {mach0} is not supersonic"));
        }
        let n = 33;
        for k in 0..n {
            let r = r_en + (r_ex - r_en) * k as f64 / (n - 1) as f64;
            let b = self.doping.at(r);
            let cap = self.density_from_mach_sq(r, mach0 * mach0);
            if !(b > 0.0 && b < cap) {
                return bad(format!("doping b({r}) = {b} outside (0, {cap})"));
            }
        }
        Ok(())
    }
}

/// Right-hand side of the `(rho, E)` system.
pub fn rhs_rho_e(r: f64, rho: f64, e: f64, p: &BackgroundParams, sonic_tol: f64) -> NozzleResult<(f64, f64)> {
    let m2 = p.m0 * p.m0;
    let den = r * r * p.gamma * p.s0 * rho.powf(p.gamma - 1.0) - m2 / (r * r * rho * rho);
    if !(den.abs() >= sonic_tol) {
        return Err(NozzleError::SonicSingularity { r, denominator: den });
    }
    let num = r * r * rho * e + 2.0 * m2 / (r.powi(3) * rho);
    Ok((num / den, (rho - p.doping.at(r)) - 2.0 * e / r))
}

/// Right-hand side of the `(M^2, r^2 E)` system.
pub fn rhs_mach_e(r: f64, m_sq: f64, e: f64, p: &BackgroundParams, sonic_tol: f64) -> NozzleResult<(f64, f64)> {
    if !((m_sq - 1.0).abs() >= sonic_tol) {
        return Err(NozzleError::SonicSingularity { r, denominator: m_sq - 1.0 });
    }
    let g = p.gamma;
    let k0 = p.kappa0();
    let r4m = r.powi(4) * m_sq;
    let h1 = m_sq / (m_sq - 1.0)
        * ((2.0 / r) * (2.0 + (g - 1.0) * m_sq)
            + (g + 1.0) * k0 * k0 * r4m.powf((g - 1.0) / (g + 1.0)) * e / (p.m0 * p.m0));
    let h2 = r * r * (k0 * (1.0 / r4m).powf(1.0 / (g + 1.0)) - p.doping.at(r));
    Ok((h1, h2))
}

/// Integrator choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stepper {
    /// Dormand-Prince 5(4) with per-step error control.
    Adaptive { rtol: f64, atol: f64 },
    /// Classical RK4 with a fixed number of steps per output interval.
    Rk4 { substeps: usize },
}

/// Integration controls for the background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub stepper: Stepper,
    /// Lower/upper density margin `delta_bar`; `None` selects `1e-3 rho_s`.
    pub delta_bar: Option<f64>,
    /// Reject once `M^2 - 1` falls below this value.
    pub sonic_margin: f64,
    /// Internal refinement factor used for the potential quadratures.
    pub refine: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            stepper: Stepper::Adaptive { rtol: 1e-12, atol: 1e-14 },
            delta_bar: None,
            sonic_margin: 1e-3,
            refine: 8,
        }
    }
}

/// Sampled background solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialBackground {
    pub params: BackgroundParams,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub drho: Vec<f64>,
    pub e: Vec<f64>,
    pub de: Vec<f64>,
    pub u: Vec<f64>,
    pub mach: Vec<f64>,
    pub phi_bar: Vec<f64>,
    pub big_phi_bar: Vec<f64>,
    pub delta_bar: f64,
    /// First radius where the admissible band or the sonic margin is left,
    /// if it was reached while integrating.
    pub r_star: Option<f64>,
}

/// Background quantities at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundPoint {
    pub rho: f64,
    pub drho: f64,
    pub e: f64,
    pub u: f64,
    pub du: f64,
    pub phi_bar: f64,
    pub big_phi_bar: f64,
    /// `c^2 = gamma S0 rho^(gamma-1)`
    pub c2: f64,
}

impl RadialBackground {
    /// Builds a background from given `(rho, rho', E, E')` samples; velocity,
    /// Mach number and potentials are derived.
    pub fn from_samples(
        params: BackgroundParams,
        r: Vec<f64>,
        rho: Vec<f64>,
        drho: Vec<f64>,
        e: Vec<f64>,
        de: Vec<f64>,
    ) -> Self {
        let u: Vec<f64> = r.iter().zip(&rho).map(|(&r, &d)| params.m0 / (r * r * d)).collect();
        let mach = r.iter().zip(&rho).map(|(&r, &d)| params.mach_sq_from_density(r, d).sqrt()).collect();
        let mut bg = RadialBackground {
            params,
            r,
            rho,
            drho,
            e,
            de,
            u,
            mach,
            phi_bar: Vec::new(),
            big_phi_bar: Vec::new(),
            delta_bar: 0.0,
            r_star: None,
        };
        let (a, b) = background_potentials(&bg);
        bg.phi_bar = a;
        bg.big_phi_bar = b;
        bg
    }

    pub fn r_en(&self) -> f64 {
        self.r[0]
    }

    /// Bernoulli function `u^2/2 + gamma/(gamma-1) S0 rho^(gamma-1)` at sample `i`.
    pub fn bernoulli(&self, i: usize) -> f64 {
        let g = self.params.gamma;
        0.5 * self.u[i] * self.u[i] + g / (g - 1.0) * self.params.s0 * self.rho[i].powf(g - 1.0)
    }

    /// Cubic Hermite interpolation of every background quantity.
    pub fn at(&self, r: f64) -> BackgroundPoint {
        let n = self.r.len();
        let p = &self.params;
        let (rho, drho, e, phi_bar, big_phi_bar) = if n == 1 {
            (self.rho[0], self.drho[0], self.e[0], self.phi_bar[0], self.big_phi_bar[0])
        } else {
            let h = self.r[1] - self.r[0];
            let k = (((r - self.r[0]) / h).floor().max(0.0) as usize).min(n - 2);
            let (x0, x1) = (self.r[k], self.r[k + 1]);
            let (rho, drho) = hermite(x0, x1, self.rho[k], self.drho[k], self.rho[k + 1], self.drho[k + 1], r);
            let (e, _) = hermite(x0, x1, self.e[k], self.de[k], self.e[k + 1], self.de[k + 1], r);
            let (pb, _) = hermite(x0, x1, self.phi_bar[k], self.u[k], self.phi_bar[k + 1], self.u[k + 1], r);
            let (bp, _) = hermite(x0, x1, self.big_phi_bar[k], self.e[k], self.big_phi_bar[k + 1], self.e[k + 1], r);
            (rho, drho, e, pb, bp)
        };
        let u = p.m0 / (r * r * rho);
        let du = -u * (2.0 / r + drho / rho);
        let c2 = p.gamma * p.s0 * rho.powf(p.gamma - 1.0);
        BackgroundPoint { rho, drho, e, u, du, phi_bar, big_phi_bar, c2 }
    }

    /// Relative mass-flux defect `max |r^2 rho u - m0| / m0`.
    pub fn mass_flux_defect(&self) -> f64 {
        let m0 = self.params.m0;
        (0..self.r.len()).map(|i| (self.r[i].powi(2) * self.rho[i] * self.u[i] - m0).abs() / m0).fold(0.0, f64::max)
    }

    /// `max |(B - Phi_bar)(r) - (B - Phi_bar)(r_en)|`.
    pub fn k_defect(&self) -> f64 {
        let k0 = self.bernoulli(0) - self.big_phi_bar[0];
        (0..self.r.len()).map(|i| (self.bernoulli(i) - self.big_phi_bar[i] - k0).abs()).fold(0.0, f64::max)
    }
}

/// `varphi_bar(r) = int m0/(t^2 rho) + m0/(r_en^2 rho0)` and
/// `Phi_bar(r) = int E + B(r_en)`, by Hermite-corrected trapezoid quadrature
/// (fourth order) over the samples.
pub fn background_potentials(bg: &RadialBackground) -> (Vec<f64>, Vec<f64>) {
    let p = &bg.params;
    let n = bg.r.len();
    let f: Vec<f64> = (0..n).map(|i| p.m0 / (bg.r[i].powi(2) * bg.rho[i])).collect();
    let df: Vec<f64> = (0..n)
        .map(|i| {
            let (r, rho) = (bg.r[i], bg.rho[i]);
            -p.m0 * (2.0 * rho / r.powi(3) + bg.drho[i] / (r * r)) / (rho * rho)
        })
        .collect();
    let g = p.gamma;
    let u0 = p.m0 / (bg.r[0].powi(2) * p.rho0);
    let offset_big = 0.5 * u0 * u0 + g / (g - 1.0) * p.s0 * p.rho0.powf(g - 1.0);
    let mut phi = vec![u0; n];
    let mut big = vec![offset_big; n];
    for i in 1..n {
        let h = bg.r[i] - bg.r[i - 1];
        phi[i] = phi[i - 1] + 0.5 * h * (f[i - 1] + f[i]) + h * h / 12.0 * (df[i - 1] - df[i]);
        big[i] = big[i - 1] + 0.5 * h * (bg.e[i - 1] + bg.e[i]) + h * h / 12.0 * (bg.de[i - 1] - bg.de[i]);
    }
    (phi, big)
}

type State = [f64; 2];

fn axpy(y: &State, a: f64, k: &State) -> State {
    [y[0] + a * k[0], y[1] + a * k[1]]
}

/// One classical RK4 step.
fn rk4_step<F: Fn(f64, &State) -> NozzleResult<State>>(f: &F, r: f64, y: &State, h: f64) -> NozzleResult<State> {
    let k1 = f(r, y)?;
    let k2 = f(r + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
    let k3 = f(r + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
    let k4 = f(r + h, &axpy(y, h, &k3))?;
    Ok([
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

/// One Dormand-Prince step returning the 5th-order solution and an error estimate.
fn dp_step<F: Fn(f64, &State) -> NozzleResult<State>>(
    f: &F,
    r: f64,
    y: &State,
    h: f64,
) -> NozzleResult<(State, State)> {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut k = [[0.0; 2]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            ys[0] += h * A[s][j] * kj[0];
            ys[1] += h * A[s][j] * kj[1];
        }
        k[s] = f(r + C[s] * h, &ys)?;
    }
    let mut y5 = *y;
    let mut err = [0.0; 2];
    for s in 0..7 {
        for c in 0..2 {
            y5[c] += h * B5[s] * k[s][c];
            err[c] += h * (B5[s] - B4[s]) * k[s][c];
        }
    }
    Ok((y5, err))
}

/// Integrates `f` from `(r0, y0)` to `r1`; `event(r, y)` must stay positive
/// and its first zero is located by bisection. Returns the end state or the
/// event radius.
fn integrate_interval<F, E>(
    f: &F,
    event: &E,
    r0: f64,
    y0: State,
    r1: f64,
    stepper: Stepper,
) -> NozzleResult<Result<State, f64>>
where
    F: Fn(f64, &State) -> NozzleResult<State>,
    E: Fn(f64, &State) -> f64,
{
    let span = r1 - r0;
    if span == 0.0 {
        return Ok(Ok(y0));
    }
    let mut r = r0;
    let mut y = y0;
    let mut h = match stepper {
        Stepper::Rk4 { substeps } => span / substeps.max(1) as f64,
        Stepper::Adaptive { .. } => span / 4.0,
    };
    let step = |r: f64, y: &State, h: f64| -> NozzleResult<(State, Option<f64>)> {
        match stepper {
            Stepper::Rk4 { .. } => Ok((rk4_step(f, r, y, h)?, None)),
            Stepper::Adaptive { rtol, atol } => {
                let (y5, e) = dp_step(f, r, y, h)?;
                let mut norm = 0.0f64;
                for c in 0..2 {
                    let sc = atol + rtol * y[c].abs().max(y5[c].abs());
                    norm = norm.max((e[c] / sc).abs());
                }
                Ok((y5, Some(norm)))
            }
        }
    };
    let mut guard = 0usize;
    while r < r1 - 1e-14 * span.abs().max(1.0) {
        guard += 1;
        if guard > 10_000_000 {
            return Err(NozzleError::Resolution("background step count exceeded".into()));
        }
        let hh = h.min(r1 - r);
        let trial = step(r, &y, hh);
        let (yn, err) = match trial {
            Ok(v) => v,
            Err(NozzleError::SonicSingularity { .. }) if hh > 1e-12 => {
                // the event check below locates the sonic point; shrink first
                h = hh * 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Some(norm) = err {
            if norm > 1.0 {
                h = hh * (0.9 * norm.powf(-0.2)).max(0.2);
                continue;
            }
        }
        if event(r + hh, &yn) <= 0.0 {
            // bisection on the step length
            let (mut lo, mut hi) = (0.0, hh);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let ok = match step(r, &y, mid) {
                    Ok((ym, _)) => event(r + mid, &ym) > 0.0,
                    Err(_) => false,
                };
                if ok {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(Err(r + 0.5 * (lo + hi)));
        }
        r += hh;
        y = yn;
        if let Some(norm) = err {
            h = hh * (0.9 * norm.max(1e-10).powf(-0.2)).min(5.0);
        }
    }
    Ok(Ok(y))
}

fn events<'a>(params: &'a BackgroundParams, r_en: f64, cfg: &StepperConfig) -> (f64, impl Fn(f64, &State) -> f64 + 'a) {
    let rho_s = params.rho_s(r_en);
    let delta = cfg.delta_bar.unwrap_or(1e-3 * rho_s);
    let margin = cfg.sonic_margin;
    let ev = move |r: f64, y: &State| -> f64 {
        let rho = y[0];
        let band = (rho - delta).min(rho_s - delta - rho) / rho_s;
        let m2 = params.mach_sq_from_density(r, rho.max(1e-300));
        band.min(m2 - 1.0 - margin)
    };
    (delta, ev)
}

fn integrate_samples(
    params: &BackgroundParams,
    rs: &[f64],
    cfg: &StepperConfig,
) -> NozzleResult<(Vec<State>, Option<f64>)> {
    let r_en = rs[0];
    let (_, ev) = events(params, r_en, cfg);
    let f = |r: f64, y: &State| -> NozzleResult<State> {
        let (a, b) = rhs_rho_e(r, y[0], y[1], params, 0.0)?;
        Ok([a, b])
    };
    let mut out = vec![[params.rho0, params.e0]];
    for w in rs.windows(2) {
        let y = *out.last().unwrap();
        match integrate_interval(&f, &ev, w[0], y, w[1], cfg.stepper)? {
            Ok(yn) => out.push(yn),
            Err(r_star) => return Ok((out, Some(r_star))),
        }
    }
    Ok((out, None))
}

/// Integrates the background on `n` uniform samples of `[r_en, r_ex]`.
pub fn integrate_background(
    params: &BackgroundParams,
    r_en: f64,
    r_ex: f64,
    n: usize,
    cfg: &StepperConfig,
) -> NozzleResult<RadialBackground> {
    params.check_admissible(r_en, r_ex.max(r_en))?;
    if r_ex == r_en || n < 2 {
        let (d, e) = rhs_rho_e(r_en, params.rho0, params.e0, params, 0.0)?;
        let mut bg = RadialBackground::from_samples(params.clone(), vec![r_en], vec![params.rho0], vec![d], vec![params.e0], vec![e]);
        bg.delta_bar = events(params, r_en, cfg).0;
        return Ok(bg);
    }
    let refine = cfg.refine.max(1);
    let m = (n - 1) * refine + 1;
    let fine: Vec<f64> = (0..m).map(|k| r_en + (r_ex - r_en) * k as f64 / (m - 1) as f64).collect();
    let (states, hit) = integrate_samples(params, &fine, cfg)?;
    if let Some(r_star) = hit {
        return Err(NozzleError::HorizonBeforeExit { r_star, r_ex });
    }
    let mut rho = Vec::with_capacity(m);
    let mut drho = Vec::with_capacity(m);
    let mut e = Vec::with_capacity(m);
    let mut de = Vec::with_capacity(m);
    for (k, s) in states.iter().enumerate() {
        let (a, b) = rhs_rho_e(fine[k], s[0], s[1], params, 0.0)?;
        rho.push(s[0]);
        drho.push(a);
        e.push(s[1]);
        de.push(b);
    }
    let full = RadialBackground::from_samples(params.clone(), fine, rho, drho, e, de);
    let pick = |v: &Vec<f64>| -> Vec<f64> { (0..n).map(|i| v[i * refine]).collect() };
    let mut bg = RadialBackground {
        params: params.clone(),
        r: pick(&full.r),
        rho: pick(&full.rho),
        drho: pick(&full.drho),
        e: pick(&full.e),
        de: pick(&full.de),
        u: pick(&full.u),
        mach: pick(&full.mach),
        phi_bar: pick(&full.phi_bar),
        big_phi_bar: pick(&full.big_phi_bar),
        delta_bar: events(params, r_en, cfg).0,
        r_star: None,
    };
    // exact endpoint
    bg.r[n - 1] = r_ex;
    Ok(bg)
}

/// Locates the horizon `r*` on `[r_en, r_max]`, or `None` when the
/// background stays admissible up to `r_max`.
pub fn find_horizon(params: &BackgroundParams, r_en: f64, r_max: f64, cfg: &StepperConfig) -> NozzleResult<Option<f64>> {
    params.check_admissible(r_en, r_en)?;
    let n = 257;
    let rs: Vec<f64> = (0..n).map(|k| r_en + (r_max - r_en) * k as f64 / (n - 1) as f64).collect();
    Ok(integrate_samples(params, &rs, cfg)?.1)
}

/// Re-integrates the `(M^2, r^2 E)` form from the transformed initial data
/// and returns `max |M^2(rho) - M^2_direct|` over the samples.
pub fn crossform_check(bg: &RadialBackground, cfg: &StepperConfig) -> NozzleResult<f64> {
    let p = &bg.params;
    let r_en = bg.r[0];
    let f = |r: f64, y: &State| -> NozzleResult<State> {
        let (a, b) = rhs_mach_e(r, y[0], y[1] / (r * r), p, 0.0)?;
        Ok([a, b])
    };
    let never = |_: f64, _: &State| 1.0;
    let m0sq = p.mach0(r_en).powi(2);
    let mut y = [m0sq, r_en * r_en * p.e0];
    let mut worst = (p.mach_sq_from_density(r_en, bg.rho[0]) - m0sq).abs();
    for i in 1..bg.r.len() {
        y = match integrate_interval(&f, &never, bg.r[i - 1], y, bg.r[i], cfg.stepper)? {
            Ok(v) => v,
            Err(r) => return Err(NozzleError::SonicSingularity { r, denominator: 0.0 }),
        };
        let m2_rho = p.mach_sq_from_density(bg.r[i], bg.rho[i]);
        worst = worst.max((m2_rho - y[0]).abs());
    }
    Ok(worst)
}
