use std::f64::consts::PI;

use nozzle_core::case::{NozzleCase, Profile, ProfileForm};
use nozzle_core::core_model::Grid;
use nozzle_core::numerics::Parity;
use nozzle_core::outer_iteration::{scaling_study, solve_case, ExitStatus, IterationConfig};
use nozzle_core::verify_report::{hk_star_norm, residual_euler_poisson};
use proptest::prelude::*;

fn small(mut c: NozzleCase) -> NozzleCase {
    c.numerics.nr = 24;
    c.numerics.nphi = 8;
    c.numerics.modes = 4;
    c
}

fn cfg(c: &NozzleCase) -> IterationConfig {
    IterationConfig::from_numerics(&c.numerics)
}

fn with_mach(mach: f64, b: f64) -> NozzleCase {
    let mut c = NozzleCase::demo();
    let bg = &mut c.background;
    let c0 = (bg.gamma * bg.s0 * bg.rho0.powf(bg.gamma - 1.0)).sqrt();
    bg.m0 = mach * 4.0 * bg.rho0 * c0;
    bg.doping = nozzle_core::radial_background::Doping::Constant(b);
    small(c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn background_is_a_fixed_point(mach in 1.5f64..3.0, b in 0.1f64..0.4) {
        let c = with_mach(mach, b);
        let sol = solve_case(&c, &cfg(&c)).unwrap();
        let r = &sol.report;
        prop_assert_eq!(r.status, ExitStatus::Converged);
        prop_assert!(r.outer_iterations <= 2);
        let cons = &r.residuals.as_ref().unwrap().conservation;
        prop_assert!(cons.mass_flux_spread < 1e-10);
        prop_assert!(cons.k_defect < 1e-8);
        let p = sol.primitives.unwrap();
        prop_assert!(p.u_phi.iter().chain(&p.u_theta).all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn entropy_stays_in_entrance_range(a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, eps in 1e-3f64..2e-2) {
        let mut c = small(NozzleCase::demo());
        let phi0 = c.geometry.phi0;
        c.perturbation.eps = eps;
        c.perturbation.s_en = Profile::cosine(phi0, vec![0.0, a1, a2]);
        c.perturbation.w_en = Profile { form: ProfileForm::AxisTapered(vec![1.0]), phi0 };
        let sol = solve_case(&c, &cfg(&c)).unwrap();
        prop_assert_eq!(sol.report.status, ExitStatus::Converged);
        let cons = &sol.report.residuals.as_ref().unwrap().conservation;
        let prof = &c.perturbation.s_en;
        let samples: Vec<f64> = (0..=400).map(|k| 1.0 + eps * prof.value(phi0 * k as f64 / 400.0)).collect();
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // interpolation at the feet may overshoot by a sliver
        let slack = 1e-3 * eps;
        prop_assert!(cons.s_min >= lo - slack && cons.s_max <= hi + slack,
            "S in [{}, {}], entrance [{lo}, {hi}]", cons.s_min, cons.s_max);
    }

    #[test]
    fn hk_norm_scales_linearly(scale in 0.1f64..10.0, k in 1usize..=3) {
        let g = Grid::span(2.0, 3.0, PI / 4.0, 17, 17);
        let f = g.sample(|r, phi| r * r * (4.0 * phi).cos());
        let fs: Vec<f64> = f.iter().map(|v| v * scale).collect();
        let a = hk_star_norm(&g, &f, Parity::Even, k).unwrap();
        let b = hk_star_norm(&g, &fs, Parity::Even, k).unwrap();
        prop_assert!((b - scale * a).abs() <= 1e-12 * b);
    }
}

#[test]
fn solves_are_deterministic() {
    let mut c = small(NozzleCase::demo());
    let phi0 = c.geometry.phi0;
    c.perturbation.eps = 1e-3;
    c.perturbation.e_en = Profile::cosine(phi0, vec![0.0, 1.0]);
    c.perturbation.s_en = Profile::cosine(phi0, vec![0.0, 1.0]);
    c.perturbation.w_en = Profile { form: ProfileForm::AxisTapered(vec![1.0]), phi0 };
    let a = solve_case(&c, &cfg(&c)).unwrap();
    let b = solve_case(&c, &cfg(&c)).unwrap();
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
}

#[test]
fn sweep_order_does_not_matter() {
    let mut c = small(NozzleCase::demo());
    c.perturbation.b = Profile::cosine(c.geometry.phi0, vec![1.0]);
    let a = scaling_study(&c, &[1e-4, 1e-3, 1e-2], &cfg(&c)).unwrap();
    let b = scaling_study(&c, &[1e-2, 1e-4, 1e-3], &cfg(&c)).unwrap();
    assert_eq!(a.slope.to_bits(), b.slope.to_bits());
}

#[test]
fn zero_amplitude_is_excluded_with_warning() {
    let mut c = small(NozzleCase::demo());
    c.perturbation.b = Profile::cosine(c.geometry.phi0, vec![1.0]);
    let s = scaling_study(&c, &[0.0, 1e-4, 1e-3, 1e-2], &cfg(&c)).unwrap();
    assert_eq!(s.rows.len(), 3);
    assert!(!s.warnings.is_empty());
}

#[test]
fn contraction_shrinks_with_amplitude() {
    let run = |eps: f64| {
        let mut c = small(NozzleCase::demo());
        let phi0 = c.geometry.phi0;
        c.perturbation.eps = eps;
        c.perturbation.s_en = Profile::cosine(phi0, vec![0.0, 1.0]);
        c.perturbation.w_en = Profile { form: ProfileForm::AxisTapered(vec![1.0]), phi0 };
        let sol = solve_case(&c, &cfg(&c)).unwrap();
        assert_eq!(sol.report.status, ExitStatus::Converged);
        sol.report.transport.contraction().first().copied().unwrap_or(0.0)
    };
    let (big, tiny) = (run(1e-2), run(1e-4));
    assert!(tiny <= big, "contraction {tiny} at 1e-4 vs {big} at 1e-2");
}

#[test]
fn full_relaxation_matches_default() {
    let mut c = small(NozzleCase::demo());
    c.perturbation.eps = 1e-3;
    c.perturbation.e_en = Profile::cosine(c.geometry.phi0, vec![0.0, 1.0]);
    c.numerics.relax = 1.0;
    let a = solve_case(&c, &cfg(&c)).unwrap();
    let mut loose = cfg(&c);
    loose.relax = 0.7;
    let b = solve_case(&c, &loose).unwrap();
    assert_eq!(a.report.status, ExitStatus::Converged);
    assert_eq!(b.report.status, ExitStatus::Converged);
    let (pa, pb) = (a.primitives.unwrap(), b.primitives.unwrap());
    let diff = pa.rho.iter().zip(&pb.rho).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "damped and undamped fixed points differ by {diff}");
}

#[test]
fn density_noise_raises_momentum_residual() {
    let mut c = NozzleCase::demo();
    c.numerics.nr = 32;
    c.numerics.nphi = 12;
    let sol = solve_case(&c, &cfg(&c)).unwrap();
    let clean = sol.primitives.unwrap();
    let base = residual_euler_poisson(&clean, &c).unwrap();
    let mut noisy = clean.clone();
    let mut state: u64 = 0x9e3779b97f4a7c15;
    for v in noisy.rho.iter_mut() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        *v *= 1.0 + 1e-3 * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
    }
    let dirty = residual_euler_poisson(&noisy, &c).unwrap();
    assert!(dirty.momentum_phi >= 10.0 * base.momentum_phi.max(1e-14), "{} vs {}", dirty.momentum_phi, base.momentum_phi);
    assert!(dirty.continuity >= 10.0 * base.continuity.max(1e-14));
}
