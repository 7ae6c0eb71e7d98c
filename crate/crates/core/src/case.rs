//! Problem description: geometry, gas, background data, boundary
//! perturbation profiles and numerical parameters.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::core_model::{GasLaw, NozzleGeometry};
use crate::eigenbasis::gauss_legendre;
use crate::error::{NozzleError, NozzleResult};
use crate::radial_background::{BackgroundParams, Stepper, StepperConfig};

/// Angular profile on `[0, phi0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProfileForm {
    /// `sum_k a_k cos(k pi phi / phi0)`
    Cosine(Vec<f64>),
    /// `sin^2(pi phi / (2 phi0)) * sum_k a_k cos(k pi phi / phi0)`
    AxisTapered(Vec<f64>),
    /// `sin^3(pi phi / phi0) * sum_k a_k cos(k pi phi / phi0)`
    EndTapered(Vec<f64>),
    /// Samples `(phi_k, f_k)`, monotone cubic interpolation.
    Table { phi: Vec<f64>, value: Vec<f64> },
}

/// A perturbation profile with its wedge angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub form: ProfileForm,
    pub phi0: f64,
}

impl Profile {
    pub fn zero(phi0: f64) -> Self {
        Profile { form: ProfileForm::Cosine(Vec::new()), phi0 }
    }

    pub fn cosine(phi0: f64, a: Vec<f64>) -> Self {
        Profile { form: ProfileForm::Cosine(a), phi0 }
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            ProfileForm::Cosine(a) | ProfileForm::AxisTapered(a) | ProfileForm::EndTapered(a) => {
                a.iter().all(|&x| x == 0.0)
            }
            ProfileForm::Table { value, .. } => value.iter().all(|&x| x == 0.0),
        }
    }

    /// `(f, f', f'')` at `phi`.
    pub fn eval(&self, phi: f64) -> [f64; 3] {
        let k0 = PI / self.phi0;
        let series = |a: &[f64]| -> [f64; 3] {
            let mut out = [0.0; 3];
            for (k, &ak) in a.iter().enumerate() {
                let w = k as f64 * k0;
                let (s, c) = (w * phi).sin_cos();
                out[0] += ak * c;
                out[1] -= ak * w * s;
                out[2] -= ak * w * w * c;
            }
            out
        };
        let product = |t: [f64; 3], c: [f64; 3]| -> [f64; 3] {
            [t[0] * c[0], t[1] * c[0] + t[0] * c[1], t[2] * c[0] + 2.0 * t[1] * c[1] + t[0] * c[2]]
        };
        match &self.form {
            ProfileForm::Cosine(a) => series(a),
            ProfileForm::AxisTapered(a) => {
                let (s, c) = (k0 * phi).sin_cos();
                let t = [0.5 * (1.0 - c), 0.5 * k0 * s, 0.5 * k0 * k0 * c];
                product(t, series(a))
            }
            ProfileForm::EndTapered(a) => {
                let (s, c) = (k0 * phi).sin_cos();
                let t = [s.powi(3), 3.0 * k0 * s * s * c, 3.0 * k0 * k0 * (2.0 * s * c * c - s.powi(3))];
                product(t, series(a))
            }
            ProfileForm::Table { phi: xs, value } => monotone_cubic(xs, value, phi),
        }
    }

    pub fn value(&self, phi: f64) -> f64 {
        self.eval(phi)[0]
    }

    pub fn d1(&self, phi: f64) -> f64 {
        self.eval(phi)[1]
    }

    /// `int_0^phi f`, by composite Gauss quadrature.
    pub fn integral(&self, phi: f64) -> f64 {
        if phi == 0.0 {
            return 0.0;
        }
        let (t, w) = gauss_legendre(12);
        let panels = 16;
        let h = phi / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let a = p as f64 * h;
            for (x, wq) in t.iter().zip(&w) {
                acc += 0.5 * h * wq * self.value(a + 0.5 * h * (x + 1.0));
            }
        }
        acc
    }
}

/// Fritsch-Carlson monotone cubic `(f, f', f'')`.
fn monotone_cubic(xs: &[f64], ys: &[f64], x: f64) -> [f64; 3] {
    let n = xs.len();
    if n == 0 {
        return [0.0; 3];
    }
    if n == 1 {
        return [ys[0], 0.0, 0.0];
    }
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        m[i] = if delta[i - 1] * delta[i] <= 0.0 { 0.0 } else { 0.5 * (delta[i - 1] + delta[i]) };
    }
    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
        } else {
            let a = m[i] / delta[i];
            let b = m[i + 1] / delta[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                m[i] = tau * a * delta[i];
                m[i + 1] = tau * b * delta[i];
            }
        }
    }
    let k = match xs.iter().position(|&v| v > x) {
        Some(0) => 0,
        Some(p) => p - 1,
        None => n - 2,
    }
    .min(n - 2);
    let h = xs[k + 1] - xs[k];
    let t = (x - xs[k]) / h;
    let (y0, y1, d0, d1) = (ys[k], ys[k + 1], m[k], m[k + 1]);
    let (t2, t3) = (t * t, t * t * t);
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1;
    let dv = ((6.0 * t2 - 6.0 * t) * (y0 - y1)) / h + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1;
    let ddv = ((12.0 * t - 6.0) * (y0 - y1)) / (h * h) + ((6.0 * t - 4.0) * d0 + (6.0 * t - 2.0) * d1) / h;
    [v, dv, ddv]
}

/// Boundary data as deviations from the background, scaled by `eps`.
///
/// `u_en = u(r_en) + eps du`, `S_en = S0 + eps dS`, `E_en = E0 + eps dE`,
/// `Phi_ex = E(r_ex) + eps dPhi` (exit radial field), `b = b(r) + eps db`;
/// `v_en`, `w_en` are pure perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub eps: f64,
    pub u_en: Profile,
    pub v_en: Profile,
    pub w_en: Profile,
    pub s_en: Profile,
    pub e_en: Profile,
    pub phi_ex: Profile,
    pub b: Profile,
}

impl Perturbation {
    pub fn zero(phi0: f64) -> Self {
        let z = Profile::zero(phi0);
        Perturbation {
            eps: 0.0,
            u_en: z.clone(),
            v_en: z.clone(),
            w_en: z.clone(),
            s_en: z.clone(),
            e_en: z.clone(),
            phi_ex: z.clone(),
            b: z,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.eps == 0.0
            || [&self.u_en, &self.v_en, &self.w_en, &self.s_en, &self.e_en, &self.phi_ex, &self.b]
                .iter()
                .all(|p| p.is_zero())
    }

    fn named(&self) -> [(&'static str, &Profile); 7] {
        [
            ("u_en", &self.u_en),
            ("v_en", &self.v_en),
            ("w_en", &self.w_en),
            ("S_en", &self.s_en),
            ("E_en", &self.e_en),
            ("Phi_ex", &self.phi_ex),
            ("b", &self.b),
        ]
    }

    /// Failed boundary compatibility conditions at tolerance `tol`.
    pub fn compatibility_failures(&self, phi0: f64, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |cond: String, v: f64| {
            if !(v.abs() <= tol) {
                out.push(format!("{cond} (got {v:e})"));
            }
        };
        check("w_en(0) = 0".into(), self.w_en.value(0.0));
        check("v_en(0) = 0".into(), self.v_en.value(0.0));
        check("v_en(phi0) = 0".into(), self.v_en.value(phi0));
        for (name, p) in self.named() {
            check(format!("d{name}/dphi(phi0) = 0"), p.d1(phi0));
        }
        out
    }
}

/// Numerical parameters with defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    pub nr: usize,
    pub nphi: usize,
    pub modes: usize,
    /// Gauss nodes of the eigenbasis; `None` selects `max(4 m, 32)`.
    pub quad_nodes: Option<usize>,
    pub tol_p: f64,
    pub tol_v: f64,
    pub tol_t: f64,
    pub max_iters: usize,
    pub relax: f64,
    /// Relative supersonic margin on `q_r^2 - c^2`.
    pub sonic_margin: f64,
    pub delta_bar: Option<f64>,
    pub ode_rtol: f64,
    /// Trust-region cap on the H1 norm of any perturbation iterate.
    pub budget: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            nr: 64,
            nphi: 16,
            modes: 8,
            quad_nodes: None,
            tol_p: 1e-10,
            tol_v: 1e-10,
            tol_t: 1e-10,
            max_iters: 50,
            relax: 1.0,
            sonic_margin: 0.02,
            delta_bar: None,
            ode_rtol: 1e-12,
            budget: 1e3,
        }
    }
}

impl Numerics {
    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            stepper: Stepper::Adaptive { rtol: self.ode_rtol, atol: 1e-2 * self.ode_rtol },
            delta_bar: self.delta_bar,
            ..StepperConfig::default()
        }
    }
}

/// Complete problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NozzleCase {
    pub geometry: NozzleGeometry,
    pub gas: GasLaw,
    pub background: BackgroundParams,
    pub perturbation: Perturbation,
    pub numerics: Numerics,
}

impl NozzleCase {
    /// Checks every documented invariant except profile compatibility.
    pub fn validate(&self) -> NozzleResult<()> {
        let g = &self.geometry;
        GasLaw::new(self.gas.gamma).map_err(|e| NozzleError::Validation(strip(e)))?;
        NozzleGeometry::new(g.r_en, g.r_ex, g.phi0).map_err(|e| NozzleError::Validation(strip(e)))?;
        if self.background.gamma != self.gas.gamma {
            return Err(NozzleError::Validation("background gamma differs from gas gamma".into()));
        }
        self.background
            .check_admissible(g.r_en, g.r_ex)
            .map_err(|e| NozzleError::Validation(strip(e)))?;
        let n = &self.numerics;
        if n.nr < 5 || n.nphi < 5 {
            return Err(NozzleError::Validation(format!("grid {}x{} below the 5x5 minimum", n.nr, n.nphi)));
        }
        if n.modes < 1 {
            return Err(NozzleError::Validation("modes must be at least 1".into()));
        }
        if !(n.relax > 0.0 && n.relax <= 1.0) {
            return Err(NozzleError::Validation(format!("relax = {} outside (0, 1]", n.relax)));
        }
        if !(n.tol_p > 0.0 && n.tol_v > 0.0 && n.tol_t > 0.0) {
            return Err(NozzleError::Validation("tolerances must be positive".into()));
        }
        for (name, p) in self.perturbation.named() {
            if (p.phi0 - g.phi0).abs() > 1e-14 {
                return Err(NozzleError::Validation(format!("profile {name} built for a different phi0")));
            }
        }
        Ok(())
    }

    /// Checks the boundary compatibility conditions at tolerance `1e-8`.
    pub fn check_compatibility(&self) -> NozzleResult<()> {
        let f = self.perturbation.compatibility_failures(self.geometry.phi0, 1e-8);
        if f.is_empty() {
            Ok(())
        } else {
            Err(NozzleError::Compatibility(f))
        }
    }

    pub fn eps(&self) -> f64 {
        self.perturbation.eps
    }

    /// The default test nozzle: `gamma = 1.4`, `r in [2, 3]`, `phi0 = pi/4`,
    /// entrance Mach 2, `b0 = 0.5`, no perturbation.
    pub fn demo() -> Self {
        let gamma = 1.4f64;
        let (r_en, phi0) = (2.0, PI / 4.0);
        let m0 = 2.0 * r_en * r_en * gamma.sqrt();
        NozzleCase {
            geometry: NozzleGeometry { r_en, r_ex: 3.0, phi0 },
            gas: GasLaw { gamma },
            background: BackgroundParams {
                gamma,
                m0,
                s0: 1.0,
                rho0: 1.0,
                e0: 0.0,
                doping: crate::radial_background::Doping::Constant(0.5),
            },
            perturbation: Perturbation::zero(phi0),
            numerics: Numerics::default(),
        }
    }
}

fn strip(e: NozzleError) -> String {
    match e {
        NozzleError::Validation(m) | NozzleError::Admissibility(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_family_is_compatible() {
        let phi0 = 0.7;
        let mut p = Perturbation::zero(phi0);
        p.eps = 1.0;
        p.u_en = Profile::cosine(phi0, vec![0.1, 0.3, -0.2]);
        p.w_en = Profile { form: ProfileForm::AxisTapered(vec![1.0, 0.5]), phi0 };
        p.v_en = Profile { form: ProfileForm::EndTapered(vec![1.0, -0.4]), phi0 };
        p.b = Profile::cosine(phi0, vec![1.0]);
        assert!(p.compatibility_failures(phi0, 1e-8).is_empty());
    }

    #[test]
    fn linear_swirl_fails_wall_condition() {
        let phi0 = 0.7;
        let mut p = Perturbation::zero(phi0);
        p.eps = 1.0;
        let xs: Vec<f64> = (0..=20).map(|i| phi0 * i as f64 / 20.0).collect();
        p.w_en = Profile { form: ProfileForm::Table { phi: xs.clone(), value: xs.clone() }, phi0 };
        let f = p.compatibility_failures(phi0, 1e-8);
        assert_eq!(f.len(), 1);
        assert!(f[0].contains("dw_en/dphi"));
    }

    #[test]
    fn tabulated_flat_end_passes() {
        let phi0 = 0.7;
        let mut p = Perturbation::zero(phi0);
        let xs: Vec<f64> = (0..=20).map(|i| phi0 * i as f64 / 20.0).collect();
        let mut ys: Vec<f64> = xs.iter().map(|x| (x * PI / phi0).cos()).collect();
        ys[20] = ys[19] + 1e-12 * (xs[20] - xs[19]);
        p.s_en = Profile { form: ProfileForm::Table { phi: xs, value: ys }, phi0 };
        assert!(p.compatibility_failures(phi0, 1e-8).is_empty());
    }

    #[test]
    fn profile_derivatives_match_differences() {
        let phi0 = 0.9;
        let forms = [
            ProfileForm::Cosine(vec![0.2, 1.0, 0.3]),
            ProfileForm::AxisTapered(vec![1.0, 0.5]),
            ProfileForm::EndTapered(vec![0.7, -0.2]),
        ];
        for form in forms {
            let p = Profile { form, phi0 };
            let (x, h) = (0.37, 1e-5);
            let fd1 = (p.value(x + h) - p.value(x - h)) / (2.0 * h);
            let fd2 = (p.value(x + h) - 2.0 * p.value(x) + p.value(x - h)) / (h * h);
            let e = p.eval(x);
            assert!((e[1] - fd1).abs() < 1e-8);
            assert!((e[2] - fd2).abs() < 1e-4);
        }
    }

    #[test]
    fn integral_of_cosine_series() {
        let phi0 = 0.8;
        let p = Profile::cosine(phi0, vec![2.0, 1.0]);
        let x = 0.5;
        let exact = 2.0 * x + (PI * x / phi0).sin() * phi0 / PI;
        assert!((p.integral(x) - exact).abs() < 1e-13);
    }

    #[test]
    fn monotone_table_has_no_overshoot() {
        let xs = vec![0.0, 0.1, 0.2, 0.3, 0.4];
        let ys = vec![0.0, 0.0, 1.0, 1.0, 1.0];
        for i in 0..=400 {
            let v = monotone_cubic(&xs, &ys, 0.4 * i as f64 / 400.0)[0];
            assert!((-1e-14..=1.0 + 1e-14).contains(&v));
        }
    }

    #[test]
    fn demo_case_is_valid() {
        let c = NozzleCase::demo();
        c.validate().unwrap();
        c.check_compatibility().unwrap();
        let mut bad = c.clone();
        bad.gas.gamma = 1.0;
        bad.background.gamma = 1.0;
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("gamma must exceed 1"), "{msg}");
    }
}
