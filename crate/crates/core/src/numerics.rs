//! Finite-difference stencils, interpolation weights, composite quadrature and
//! a banded LU solver.

use crate::error::{NozzleError, NozzleResult};

/// Reflection symmetry used to build ghost values across the axis phi = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// No ghost nodes, stencils are shifted one-sided.
    None,
    /// f(-x) = f(x)
    Even,
    /// f(-x) = -f(x)
    Odd,
}

impl Parity {
    /// Parity of the derivative of a function with this parity.
    pub fn derivative(self) -> Parity {
        match self {
            Parity::None => Parity::None,
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Parity::Odd => -1.0,
            _ => 1.0,
        }
    }
}

/// Fornberg's recursion: weights `c[k][j]` for the k-th derivative at `z`
/// from samples at `x[j]`, for k = 0..=m.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Sparse weight row: (node index, weight).
pub type Row = Vec<(usize, f64)>;

/// Picks `width` consecutive logical indices around `center` on a grid of
/// `n` nodes; negative indices are allowed when a parity ghost exists.
fn window(center: f64, width: usize, n: usize, parity: Parity) -> (isize, isize) {
    let half = (width as f64 - 1.0) / 2.0;
    let mut lo = (center - half).round() as isize;
    let lo_min = if parity == Parity::None { 0 } else { -(n as isize - 1) };
    let hi_max = n as isize - 1;
    if lo < lo_min {
        lo = lo_min;
    }
    if lo + width as isize - 1 > hi_max {
        lo = hi_max - width as isize + 1;
    }
    (lo, lo + width as isize - 1)
}

/// Weight rows for derivatives 0..=m of a uniform-grid function evaluated at
/// coordinate `x` (grid `x_i = i h`).
pub fn uniform_point_weights(
    x: f64,
    h: f64,
    n: usize,
    width: usize,
    m: usize,
    parity: Parity,
) -> Vec<Row> {
    let width = width.min(n);
    let (lo, hi) = window(x / h, width, n, parity);
    let nodes: Vec<f64> = (lo..=hi).map(|i| i as f64 * h).collect();
    let c = fornberg(x, &nodes, m);
    c.iter()
        .map(|ck| {
            let mut row: Row = Vec::with_capacity(width);
            for (t, i) in (lo..=hi).enumerate() {
                let (idx, s) = if i < 0 { ((-i) as usize, parity.sign()) } else { (i as usize, 1.0) };
                if let Some(e) = row.iter_mut().find(|e| e.0 == idx) {
                    e.1 += s * ck[t];
                } else {
                    row.push((idx, s * ck[t]));
                }
            }
            row
        })
        .collect()
}

/// Nodal first and second derivative operators on a uniform grid: five-point
/// stencils, centered inside, shifted one-sided at the ends (or mirrored
/// through the left end when a parity is given).
#[derive(Debug, Clone)]
pub struct Differentiator {
    pub d1: Vec<Row>,
    pub d2: Vec<Row>,
}

impl Differentiator {
    pub fn uniform(n: usize, h: f64, parity: Parity) -> Self {
        Self::with_width(n, h, parity, 5)
    }

    pub fn with_width(n: usize, h: f64, parity: Parity, width: usize) -> Self {
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for i in 0..n {
            let rows = uniform_point_weights(i as f64 * h, h, n, width, 2, parity);
            d1.push(rows[1].clone());
            d2.push(rows[2].clone());
        }
        Differentiator { d1, d2 }
    }

    pub fn first(&self, f: &[f64]) -> Vec<f64> {
        apply_rows(&self.d1, f)
    }

    pub fn second(&self, f: &[f64]) -> Vec<f64> {
        apply_rows(&self.d2, f)
    }
}

pub fn apply_row(row: &Row, f: &[f64]) -> f64 {
    row.iter().map(|&(i, w)| w * f[i]).sum()
}

pub fn apply_rows(rows: &[Row], f: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| apply_row(r, f)).collect()
}

/// Applies a 1-D operator along the first (r) index of a row-major
/// `nr x nphi` field.
pub fn along_r(rows: &[Row], f: &[f64], nr: usize, nphi: usize) -> Vec<f64> {
    let mut out = vec![0.0; nr * nphi];
    for (i, row) in rows.iter().enumerate() {
        for &(k, w) in row {
            let src = &f[k * nphi..(k + 1) * nphi];
            let dst = &mut out[i * nphi..(i + 1) * nphi];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}

/// Applies a 1-D operator along the second (phi) index.
pub fn along_phi(rows: &[Row], f: &[f64], nr: usize, nphi: usize) -> Vec<f64> {
    let mut out = vec![0.0; nr * nphi];
    for i in 0..nr {
        let src = &f[i * nphi..(i + 1) * nphi];
        for (j, row) in rows.iter().enumerate() {
            out[i * nphi + j] = apply_row(row, src);
        }
    }
    out
}

/// Composite fourth-order weights on `n` uniform nodes of spacing `h`:
/// Simpson, closed with a 3/8 panel when the interval count is odd.
pub fn composite_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => {}
        2 => {
            w[0] = h / 2.0;
            w[1] = h / 2.0;
        }
        3 => {
            w[0] = h / 3.0;
            w[1] = 4.0 * h / 3.0;
            w[2] = h / 3.0;
        }
        _ => {
            let intervals = n - 1;
            let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
            let mut k = 0;
            while k < simpson_end {
                w[k] += h / 3.0;
                w[k + 1] += 4.0 * h / 3.0;
                w[k + 2] += h / 3.0;
                k += 2;
            }
            if simpson_end < intervals {
                let s = simpson_end;
                w[s] += 3.0 * h / 8.0;
                w[s + 1] += 9.0 * h / 8.0;
                w[s + 2] += 9.0 * h / 8.0;
                w[s + 3] += 3.0 * h / 8.0;
            }
        }
    }
    w
}

/// Banded matrix with LU factorization by partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    factored: bool,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, width, data: vec![0.0; n * width], pivots: Vec::new(), factored: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // row window starts at column i - kl
        let off = j as isize - i as isize + self.kl as isize;
        debug_assert!(off >= 0 && (off as usize) < self.width, "entry ({i},{j}) outside band");
        i * self.width + off as usize
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off as usize >= self.width {
            return 0.0;
        }
        self.data[i * self.width + off as usize]
    }

    /// Adds `v` to entry (i, j); panics when (i, j) is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let off = j as isize - i as isize;
        assert!(
            off >= -(self.kl as isize) && off <= self.ku as isize,
            "entry ({i},{j}) outside declared band"
        );
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorization.
    pub fn factor(&mut self) -> NozzleResult<()> {
        let n = self.n;
        let scale = self.data.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
        let mut smallest = f64::INFINITY;
        self.pivots = vec![0; n];
        let reach = self.kl + self.ku;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            smallest = smallest.min(best);
            if best <= 1e-14 * scale {
                return Err(NozzleError::SingularSystem { pivot: best });
            }
            self.pivots[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let a = self.slot(k, c);
                    let b = self.slot(p, c);
                    self.data.swap(a, b);
                }
            }
            let piv = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let sik = self.slot(i, k);
                let l = self.data[sik] / piv;
                self.data[sik] = l;
                if l != 0.0 {
                    for c in k + 1..=last_col {
                        let skc = self.slot(k, c);
                        let sic = self.slot(i, c);
                        self.data[sic] -= l * self.data[skc];
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves with a factored matrix.
    pub fn solve_factored(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored, "factor() first");
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let last_row = (k + self.kl).min(n - 1);
            let xk = x[k];
            for i in k + 1..=last_row {
                x[i] -= self.data[self.slot(i, k)] * xk;
            }
        }
        let reach = self.kl + self.ku;
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut s = x[k];
            for c in k + 1..=last_col {
                s -= self.data[self.slot(k, c)] * x[c];
            }
            x[k] = s / self.data[self.slot(k, k)];
        }
        x
    }

    /// Factors and solves in one call.
    pub fn solve(mut self, b: &[f64]) -> NozzleResult<Vec<f64>> {
        self.factor()?;
        Ok(self.solve_factored(b))
    }
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
