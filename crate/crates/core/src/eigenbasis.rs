//! Neumann eigenbasis of `-(sin(phi) xi')' = omega sin(phi) xi` on `(0, phi0)`.
//!
//! With `s = cos(phi)` the operator becomes `-((1 - s^2) xi_s)_s` on
//! `(cos(phi0), 1)` with the flat weight `ds`. The eigenpairs are computed by
//! Rayleigh-Ritz in orthonormal Legendre polynomials of the mapped variable;
//! the Neumann conditions are natural for this form.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{NozzleError, NozzleResult};

/// Legendre `P_n, P_n', P_n''` at `t` for `n = 0..=deg`.
pub(crate) fn legendre_table(deg: usize, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; deg + 1];
    let mut dp = vec![0.0; deg + 1];
    let mut ddp = vec![0.0; deg + 1];
    p[0] = 1.0;
    if deg >= 1 {
        p[1] = t;
        dp[1] = 1.0;
    }
    for n in 1..deg {
        let nf = n as f64;
        p[n + 1] = ((2.0 * nf + 1.0) * t * p[n] - nf * p[n - 1]) / (nf + 1.0);
        dp[n + 1] = dp[n - 1] + (2.0 * nf + 1.0) * p[n];
        ddp[n + 1] = ddp[n - 1] + (2.0 * nf + 1.0) * dp[n];
    }
    (p, dp, ddp)
}

/// Gauss-Legendre rule on `[-1, 1]` (Golub-Welsch, Newton-polished), nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut t: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut w = Vec::with_capacity(n);
    for x in t.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = legendre_table(n, *x);
            let step = p[n] / dp[n];
            *x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp, _) = legendre_table(n, *x);
        w.push(2.0 / ((1.0 - *x * *x) * dp[n] * dp[n]));
    }
    (t, w)
}

/// Orthonormal Neumann eigenbasis with its quadrature rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenBasis {
    pub phi0: f64,
    /// `omega_0 = 0 < omega_1 < ... < omega_m`
    pub omegas: Vec<f64>,
    /// Quadrature angles, ascending in `(0, phi0)`.
    pub nodes: Vec<f64>,
    /// Weights for `int f sin(phi) dphi`.
    pub weights: Vec<f64>,
    /// `xis[k][q] = xi_k(nodes[q])`
    pub xis: Vec<Vec<f64>>,
    /// `dxis[k][q] = xi_k'(nodes[q])`
    pub dxis: Vec<Vec<f64>>,
    /// `d2xis[k][q] = xi_k''(nodes[q])`
    pub d2xis: Vec<Vec<f64>>,
    /// Legendre coefficients of each mode in the mapped variable.
    coeffs: Vec<Vec<f64>>,
}

impl EigenBasis {
    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    fn map(&self, s: f64) -> f64 {
        let s0 = self.phi0.cos();
        (2.0 * s - (1.0 + s0)) / (1.0 - s0)
    }

    /// `(xi, d xi/d phi, d^2 xi/d phi^2)` of every mode at `phi`.
    pub fn mode_values(&self, phi: f64) -> Vec<[f64; 3]> {
        let s0 = self.phi0.cos();
        let (s, sn) = (phi.cos(), phi.sin());
        let deg = self.coeffs[0].len() - 1;
        let (p, dp, ddp) = legendre_table(deg, self.map(s));
        let jac = 2.0 / (1.0 - s0);
        let norm: Vec<f64> = (0..=deg).map(|i| ((2 * i + 1) as f64 / (1.0 - s0)).sqrt()).collect();
        self.coeffs
            .iter()
            .map(|c| {
                let (mut v, mut vs, mut vss) = (0.0, 0.0, 0.0);
                for i in 0..=deg {
                    v += c[i] * norm[i] * p[i];
                    vs += c[i] * norm[i] * dp[i] * jac;
                    vss += c[i] * norm[i] * ddp[i] * jac * jac;
                }
                [v, -sn * vs, -s * vs + sn * sn * vss]
            })
            .collect()
    }

    /// `c_k = <f, xi_k>` from samples of `f` at the quadrature nodes.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        self.xis
            .iter()
            .map(|xi| xi.iter().zip(&self.weights).zip(f).map(|((x, w), v)| x * w * v).sum())
            .collect()
    }

    /// Projection of a function given in closed form.
    pub fn project_fn(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let samples: Vec<f64> = self.nodes.iter().map(|&p| f(p)).collect();
        self.project(&samples)
    }

    /// Weighted inner product of two node-sampled functions.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    /// `sum_k c_k xi_k(phi)` at each requested angle.
    pub fn evaluate(&self, coeffs: &[f64], phis: &[f64]) -> NozzleResult<Vec<f64>> {
        let slack = 1e-12 * self.phi0.max(1.0);
        phis.iter()
            .map(|&phi| {
                if !(phi >= -slack && phi <= self.phi0 + slack) {
                    return Err(NozzleError::OutOfDomain { phi, phi0: self.phi0 });
                }
                let vals = self.mode_values(phi.clamp(0.0, self.phi0));
                Ok(coeffs.iter().zip(&vals).map(|(c, v)| c * v[0]).sum())
            })
            .collect()
    }

    /// Scales every stored mode sample (used to exercise the defect checks).
    pub fn scaled(&self, factor: f64) -> Self {
        let sc = |v: &Vec<Vec<f64>>| v.iter().map(|r| r.iter().map(|x| x * factor).collect()).collect();
        EigenBasis {
            xis: sc(&self.xis),
            dxis: sc(&self.dxis),
            d2xis: sc(&self.d2xis),
            coeffs: sc(&self.coeffs),
            ..self.clone()
        }
    }

    /// `max_{j,k} |<xi_j, xi_k> - delta_jk|`.
    pub fn gram_defect(&self) -> f64 {
        let n = self.n_modes();
        let mut worst = 0.0f64;
        for j in 0..n {
            for k in 0..n {
                let d = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(&self.xis[j], &self.xis[k]) - d).abs());
            }
        }
        worst
    }
}

fn build_once(phi0: f64, m_modes: usize, n_nodes: usize) -> NozzleResult<EigenBasis> {
    let deg = n_nodes - 1;
    let s0 = phi0.cos();
    let half = 0.5 * (1.0 - s0);
    let (t, wt) = gauss_legendre(n_nodes);
    let jac = 1.0 / half;
    let norm: Vec<f64> = (0..=deg).map(|i| ((2 * i + 1) as f64 / (1.0 - s0)).sqrt()).collect();
    // stiffness in the orthonormal polynomial basis
    let mut k = DMatrix::<f64>::zeros(deg + 1, deg + 1);
    let mut tables = Vec::with_capacity(n_nodes);
    for q in 0..n_nodes {
        let s = s0 + half * (t[q] + 1.0);
        let tab = legendre_table(deg, t[q]);
        let w = wt[q] * half * (1.0 - s * s);
        for i in 1..=deg {
            let di = norm[i] * tab.1[i] * jac;
            for j in 1..=deg {
                k[(i, j)] += w * di * norm[j] * tab.1[j] * jac;
            }
        }
        tables.push(tab);
    }
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..=deg).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut omegas = Vec::with_capacity(m_modes + 1);
    let mut coeffs = Vec::with_capacity(m_modes + 1);
    for &col in order.iter().take(m_modes + 1) {
        let mut c: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        // value at s = 1 (t = 1): P_i(1) = 1
        let at_axis: f64 = c.iter().zip(&norm).map(|(a, n)| a * n).sum();
        if at_axis < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        omegas.push(eig.eigenvalues[col].max(0.0));
        coeffs.push(c);
    }
    omegas[0] = 0.0;
    // nodes ascending in phi means descending in s
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    let mut xis = vec![Vec::with_capacity(n_nodes); m_modes + 1];
    let mut dxis = vec![Vec::with_capacity(n_nodes); m_modes + 1];
    let mut d2xis = vec![Vec::with_capacity(n_nodes); m_modes + 1];
    for q in (0..n_nodes).rev() {
        let s = s0 + half * (t[q] + 1.0);
        let phi = s.clamp(-1.0, 1.0).acos();
        let sn = phi.sin();
        nodes.push(phi);
        weights.push(wt[q] * half);
        let (p, dp, ddp) = &tables[q];
        for (kk, c) in coeffs.iter().enumerate() {
            let (mut v, mut vs, mut vss) = (0.0, 0.0, 0.0);
            for i in 0..=deg {
                v += c[i] * norm[i] * p[i];
                vs += c[i] * norm[i] * dp[i] * jac;
                vss += c[i] * norm[i] * ddp[i] * jac * jac;
            }
            xis[kk].push(v);
            dxis[kk].push(-sn * vs);
            d2xis[kk].push(-s * vs + sn * sn * vss);
        }
    }
    Ok(EigenBasis { phi0, omegas, nodes, weights, xis, dxis, d2xis, coeffs })
}

/// Builds `m_modes + 1` eigenpairs with an `n_nodes`-point Gauss rule and
/// checks the top eigenvalue against a rebuild on twice as many nodes.
pub fn build_basis(phi0: f64, m_modes: usize, n_nodes: usize) -> NozzleResult<EigenBasis> {
    if !(phi0 > 0.0 && phi0 <= std::f64::consts::PI) {
        return Err(NozzleError::Validation(format!("phi0 = {phi0} outside (0, pi]")));
    }
    if m_modes < 1 || n_nodes < 4 * m_modes {
        return Err(NozzleError::InsufficientGrid(format!(
            "need m_modes >= 1 and n_nodes >= 4 m_modes (got {m_modes}, {n_nodes})"
        )));
    }
    let basis = build_once(phi0, m_modes, n_nodes)?;
    let fine = build_once(phi0, m_modes, 2 * n_nodes)?;
    let (a, b) = (basis.omegas[m_modes], fine.omegas[m_modes]);
    if (a - b).abs() > 1e-8 * b.abs().max(1.0) {
        return Err(NozzleError::Resolution(format!(
            "top eigenvalue {a} changes to {b} under node doubling"
        )));
    }
    Ok(basis)
}

/// `max_{j,k >= 1} |<xi_j'/sqrt(w_j), xi_k'/sqrt(w_k)> - delta_jk|`.
pub fn check_derivative_basis(basis: &EigenBasis) -> f64 {
    let n = basis.n_modes();
    let mut worst = 0.0f64;
    for j in 1..n {
        for k in 1..n {
            let d = if j == k { 1.0 } else { 0.0 };
            let g = basis.inner(&basis.dxis[j], &basis.dxis[k]) / (basis.omegas[j] * basis.omegas[k]).sqrt();
            worst = worst.max((g - d).abs());
        }
    }
    worst
}

/// Default node count for `m` modes.
pub fn default_nodes(m_modes: usize) -> usize {
    (4 * m_modes).max(32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (t, w) = gauss_legendre(7);
        let i: f64 = t.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((i - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn constant_mode() {
        for phi0 in [0.3, PI / 4.0, 2.0] {
            let b = build_basis(phi0, 3, 32).unwrap();
            assert!(b.omegas[0].abs() < 1e-12);
            let c = (1.0 - phi0.cos()).powf(-0.5);
            assert!(b.xis[0].iter().all(|x| (x - c).abs() < 1e-10));
        }
    }

    #[test]
    fn full_sphere_is_legendre() {
        let b = build_basis(PI, 10, 44).unwrap();
        for k in 0..=10 {
            let w = (k * (k + 1)) as f64;
            assert!((b.omegas[k] - w).abs() <= 1e-6 * w.max(1.0));
        }
        // xi_2 proportional to P_2(cos phi)
        let norm = (5.0f64 / 2.0).sqrt();
        for (q, &phi) in b.nodes.iter().enumerate() {
            let s = phi.cos();
            assert!((b.xis[2][q] - norm * 0.5 * (3.0 * s * s - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn hemisphere_keeps_even_modes() {
        let b = build_basis(PI / 2.0, 5, 32).unwrap();
        for n in 0..=5 {
            let w = (2 * n * (2 * n + 1)) as f64;
            assert!((b.omegas[n] - w).abs() <= 1e-6 * w.max(1.0));
        }
    }

    #[test]
    fn orthonormal_and_derivative_orthonormal() {
        let b = build_basis(PI / 4.0, 8, 32).unwrap();
        assert!(b.gram_defect() <= 1e-10);
        assert!(check_derivative_basis(&b) <= 1e-8);
        let one = build_basis(PI / 4.0, 1, 8).unwrap();
        assert!(check_derivative_basis(&one) <= 1e-8);
        let d = check_derivative_basis(&b.scaled(2.0));
        assert!((d - 3.0).abs() < 1e-6);
    }

    #[test]
    fn project_recovers_modes_and_constants() {
        let b = build_basis(PI / 4.0, 6, 32).unwrap();
        for j in 0..=6 {
            let c = b.project(&b.xis[j]);
            for (k, ck) in c.iter().enumerate() {
                let d = if j == k { 1.0 } else { 0.0 };
                assert!((ck - d).abs() < 1e-10);
            }
        }
        let c = b.project_fn(|_| 3.0);
        assert!((c[0] - 3.0 * (1.0 - (PI / 4.0).cos()).sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn neumann_ends_and_evaluate() {
        let phi0 = 1.1;
        let b = build_basis(phi0, 5, 40).unwrap();
        for v in b.mode_values(phi0).iter().chain(b.mode_values(0.0).iter()) {
            assert!(v[1].abs() < 1e-8);
        }
        let mut e0 = vec![0.0; 6];
        e0[0] = 1.0;
        let vals = b.evaluate(&e0, &[0.0, 0.5, phi0]).unwrap();
        assert!(vals.iter().all(|v| (v - (1.0 - phi0.cos()).powf(-0.5)).abs() < 1e-10));
        assert!(matches!(b.evaluate(&e0, &[phi0 + 0.1]), Err(NozzleError::OutOfDomain { .. })));
        assert!(b.evaluate(&[0.0; 6], &[0.3]).unwrap()[0] == 0.0);
    }

    #[test]
    fn eigen_relation_contraction() {
        // <xi_j'' + cot(phi) xi_j', xi_k> = -omega_j delta_jk
        let b = build_basis(0.9, 6, 32).unwrap();
        for j in 0..=6 {
            let f: Vec<f64> = (0..b.nodes.len())
                .map(|q| b.d2xis[j][q] + b.dxis[j][q] * b.nodes[q].cos() / b.nodes[q].sin())
                .collect();
            for k in 0..=6 {
                let d = if j == k { -b.omegas[j] } else { 0.0 };
                assert!((b.inner(&f, &b.xis[k]) - d).abs() < 1e-8 * b.omegas[6]);
            }
        }
    }

    #[test]
    fn projection_converges_spectrally() {
        let phi0 = PI / 4.0;
        let f = |p: f64| (p * PI / phi0).cos() + 0.3 * (2.0 * p * PI / phi0).cos();
        let mut errs = Vec::new();
        for m in [2usize, 4, 8] {
            let b = build_basis(phi0, m, 32).unwrap();
            let c = b.project_fn(f);
            let pts: Vec<f64> = (0..=50).map(|i| phi0 * i as f64 / 50.0).collect();
            let v = b.evaluate(&c, &pts).unwrap();
            errs.push(pts.iter().zip(&v).map(|(p, v)| (f(*p) - v).abs()).fold(0.0, f64::max));
        }
        assert!(errs[1] < errs[0] * 0.1 && errs[2] < errs[1] * 0.1, "{errs:?}");
    }
}
