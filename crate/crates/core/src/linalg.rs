//! Dense real and complex matrix kernels.
//!
//! Storage is `nalgebra::DMatrix`; the factorizations themselves live here so
//! that their output conventions (ordering, signs, eigenvector phase) are fixed
//! and reproducible.
//!
//! * [`svd`]: one-sided Jacobi on the triangular factor of a Householder QR.
//! * [`pinv`]: Moore-Penrose pseudoinverse with a relative singular-value cutoff.
//! * [`eig`]: general real eigenproblem via Hessenberg reduction and
//!   Francis double-shift QR, eigenvectors by back substitution.
//! * [`sym_eig`]: cyclic Jacobi for symmetric matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

const EPS: f64 = f64::EPSILON;
const MAX_JACOBI_SWEEPS: usize = 100;
const MAX_QR_ITERS_PER_EIGENVALUE: usize = 60;

/// Truncation rule for a singular value spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankSpec {
    Full,
    Fixed(usize),
    /// Smallest rank whose cumulative squared singular values reach this
    /// fraction of the total.
    Energy(f64),
}

impl RankSpec {
    fn check(&self, max_rank: usize) -> Result<()> {
        match *self {
            RankSpec::Full => Ok(()),
            RankSpec::Fixed(r) if r >= 1 && r <= max_rank => Ok(()),
            RankSpec::Fixed(r) => Err(Error::Range(format!(
                "fixed rank {r} outside 1..={max_rank}"
            ))),
            RankSpec::Energy(tau) if tau > 0.0 && tau <= 1.0 => Ok(()),
            RankSpec::Energy(tau) => Err(Error::Range(format!(
                "energy threshold {tau} outside (0, 1]"
            ))),
        }
    }

    /// Resolves the rule against a non-increasing singular value list.
    pub fn resolve(&self, sigma: &[f64]) -> Result<usize> {
        self.check(sigma.len())?;
        Ok(match *self {
            RankSpec::Full => sigma.len(),
            RankSpec::Fixed(r) => r,
            RankSpec::Energy(tau) => energy_rank(sigma.iter().map(|s| s * s), tau),
        })
    }
}

/// Smallest `k` such that the first `k` weights carry `tau` of the total.
/// Returns 1 for an all-zero spectrum.
pub(crate) fn energy_rank(weights: impl Iterator<Item = f64> + Clone, tau: f64) -> usize {
    let total: f64 = weights.clone().sum();
    if total <= 0.0 {
        return 1;
    }
    let target = tau * total;
    let mut acc = 0.0;
    let mut count = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        count = i + 1;
        if acc >= target {
            return count;
        }
    }
    count.max(1)
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: DVector<f64>,
    pub v: Matrix,
    pub rank: usize,
}

impl SvdResult {
    /// `U Σ Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct EigResult {
    pub values: DVector<Complex64>,
    pub vectors: ComplexMatrix,
}

pub fn ensure_nonempty(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "{what} is empty ({}x{})",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Rejects NaN/Inf, naming the first offending (row, col), zero-based.
pub fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let x = a[(i, j)];
            if !x.is_finite() {
                return Err(Error::Validation(format!(
                    "{what} has non-finite entry {x} at (row {i}, col {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Truncated singular value decomposition.
pub fn svd(a: &Matrix, rank_spec: RankSpec) -> Result<SvdResult> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    rank_spec.check(a.nrows().min(a.ncols()))?;

    let full = thin_svd(a)?;
    let r = rank_spec.resolve(full.sigma.as_slice())?;
    Ok(truncate(full, r))
}

fn truncate(full: SvdResult, r: usize) -> SvdResult {
    if r == full.rank {
        return full;
    }
    SvdResult {
        u: full.u.columns(0, r).into_owned(),
        sigma: full.sigma.rows(0, r).into_owned(),
        v: full.v.columns(0, r).into_owned(),
        rank: r,
    }
}

fn thin_svd(a: &Matrix) -> Result<SvdResult> {
    if a.nrows() >= a.ncols() {
        tall_svd(a)
    } else {
        let t = tall_svd(&a.transpose())?;
        Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
            rank: t.rank,
        })
    }
}

fn tall_svd(a: &Matrix) -> Result<SvdResult> {
    let (n, m) = a.shape();
    debug_assert!(n >= m);
    let (q, r) = if n > m {
        let qr = a.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, a.clone())
    };

    let (w, v) = one_sided_jacobi(r)?;

    let mut order: Vec<(usize, f64)> = (0..m).map(|j| (j, w.column(j).norm())).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let mut u_small = Matrix::zeros(m, m);
    let mut v_sorted = Matrix::zeros(m, m);
    let mut sigma = DVector::zeros(m);
    for (dst, &(src, s)) in order.iter().enumerate() {
        sigma[dst] = s;
        v_sorted.set_column(dst, &v.column(src));
        if s > 0.0 {
            u_small.set_column(dst, &(w.column(src) / s));
        }
    }
    let s_max = sigma[0];
    complete_orthonormal(&mut u_small, |j| sigma[j] <= s_max * EPS * m as f64 || sigma[j] == 0.0);

    let mut u = match q {
        Some(q) => q * u_small,
        None => u_small,
    };

    for j in 0..m {
        if dominant_is_negative(u.column(j).iter().copied()) {
            u.column_mut(j).neg_mut();
            v_sorted.column_mut(j).neg_mut();
        }
    }

    Ok(SvdResult {
        u,
        sigma,
        v: v_sorted,
        rank: m,
    })
}

fn dominant_is_negative(xs: impl Iterator<Item = f64>) -> bool {
    let mut best = 0.0f64;
    let mut neg = false;
    for x in xs {
        if x.abs() > best {
            best = x.abs();
            neg = x < 0.0;
        }
    }
    neg
}

/// Hestenes one-sided Jacobi: returns `W = A V` with mutually orthogonal
/// columns and the accumulated orthogonal `V`.
fn one_sided_jacobi(mut w: Matrix) -> Result<(Matrix, Matrix)> {
    let (n, m) = w.shape();
    let mut v = Matrix::identity(m, m);
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..m.saturating_sub(1) {
            for q in p + 1..m {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::Convergence {
        size: m,
        sweeps: MAX_JACOBI_SWEEPS,
    })
}

fn rotate_columns(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let (ap, aq) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = c * ap - s * aq;
        a[(i, q)] = s * ap + c * aq;
    }
}

/// Replaces the flagged columns of `u` by unit vectors orthogonal to every
/// other column (two passes of classical Gram-Schmidt, seeded from the
/// current column and then from the standard basis).
fn complete_orthonormal(u: &mut Matrix, needs_fix: impl Fn(usize) -> bool) {
    let (n, m) = u.shape();
    let fixed: Vec<usize> = (0..m).filter(|&j| needs_fix(j)).collect();
    if fixed.is_empty() {
        return;
    }
    let mut basis_seed = 0;
    for &j in &fixed {
        let mut seeds: Vec<DVector<f64>> = vec![u.column(j).into_owned()];
        seeds.extend((0..n).map(|k| DVector::from_fn(n, |i, _| if i == (basis_seed + k) % n { 1.0 } else { 0.0 })));
        for (k, seed) in seeds.into_iter().enumerate() {
            let mut x = seed;
            for _ in 0..2 {
                for c in 0..m {
                    if c == j || (fixed.contains(&c) && c > j) {
                        continue;
                    }
                    let proj = u.column(c).dot(&x);
                    x.axpy(-proj, &u.column(c), 1.0);
                }
            }
            let nrm = x.norm();
            if nrm > 0.5 {
                u.set_column(j, &(x / nrm));
                if k > 0 {
                    basis_seed += k;
                }
                break;
            }
        }
    }
}

/// Moore-Penrose pseudoinverse. Singular values at or below `tol · σ₁` are
/// treated as zero; `None` selects `max(rows, cols) · ε`.
pub fn pinv(a: &Matrix, tol: Option<f64>) -> Result<Matrix> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    let tol = tol.unwrap_or_else(|| default_pinv_tol(a));
    if tol < 0.0 || !tol.is_finite() {
        return Err(Error::Range(format!("pinv tolerance {tol} must be finite and >= 0")));
    }
    let s = thin_svd(a)?;
    let cutoff = tol * s.sigma[0];
    let mut vs = s.v.clone();
    for j in 0..s.rank {
        let sj = s.sigma[j];
        let inv = if sj > cutoff && sj > 0.0 { 1.0 / sj } else { 0.0 };
        vs.column_mut(j).scale_mut(inv);
    }
    Ok(vs * s.u.transpose())
}

pub fn default_pinv_tol(a: &Matrix) -> f64 {
    a.nrows().max(a.ncols()) as f64 * EPS
}

/// Minimum-norm least-squares solution of `A x = b` for complex `A` and real
/// `b`, via the real embedding `[[Re A, -Im A], [Im A, Re A]]`.
pub fn complex_lstsq(a: &ComplexMatrix, b: &DVector<f64>) -> Result<DVector<Complex64>> {
    let (n, r) = a.shape();
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, expected {n}",
            b.len()
        )));
    }
    let mut big = Matrix::zeros(2 * n, 2 * r);
    for j in 0..r {
        for i in 0..n {
            let z = a[(i, j)];
            big[(i, j)] = z.re;
            big[(i, j + r)] = -z.im;
            big[(i + n, j)] = z.im;
            big[(i + n, j + r)] = z.re;
        }
    }
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(b);
    let x = pinv(&big, None)? * rhs;
    Ok(DVector::from_fn(r, |j, _| Complex64::new(x[j], x[j + r])))
}

/// Eigendecomposition of a general real square matrix.
///
/// Eigenvalues are sorted by modulus (descending), then by `|arg|`
/// (ascending), with the positive-imaginary member of a conjugate pair first,
/// so pairs are adjacent. Each eigenvector has unit 2-norm and its first
/// non-negligible component on the positive real axis. Conjugate eigenvalue
/// pairs carry exactly conjugate eigenvectors.
pub fn eig(a: &Matrix) -> Result<EigResult> {
    ensure_nonempty(a, "matrix")?;
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "matrix")?;
    let n = a.nrows();

    let mut h = a.clone();
    let mut v = Matrix::identity(n, n);
    hessenberg(&mut h, &mut v);
    let (d, e) = schur_vectors(&mut h, &mut v)?;

    let mut pairs: Vec<(Complex64, DVector<Complex64>)> = Vec::with_capacity(n);
    let mut j = 0;
    while j < n {
        if e[j] == 0.0 {
            let w = DVector::from_fn(n, |i, _| Complex64::new(v[(i, j)], 0.0));
            pairs.push((Complex64::new(d[j], 0.0), w));
            j += 1;
        } else {
            // Columns j, j+1 hold the real and imaginary parts for d + i e[j].
            let w = DVector::from_fn(n, |i, _| Complex64::new(v[(i, j)], v[(i, j + 1)]));
            let wc = w.map(|z| z.conj());
            pairs.push((Complex64::new(d[j], e[j]), w));
            pairs.push((Complex64::new(d[j + 1], e[j + 1]), wc));
            j += 2;
        }
    }
    for (_, w) in pairs.iter_mut() {
        normalize_phase(w);
    }
    pairs.sort_by(|(x, _), (y, _)| {
        y.norm()
            .total_cmp(&x.norm())
            .then(x.arg().abs().total_cmp(&y.arg().abs()))
            .then((x.im < 0.0).cmp(&(y.im < 0.0)))
    });

    let values = DVector::from_iterator(n, pairs.iter().map(|(l, _)| *l));
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (k, (_, w)) in pairs.iter().enumerate() {
        vectors.set_column(k, w);
    }
    Ok(EigResult { values, vectors })
}

fn normalize_phase(w: &mut DVector<Complex64>) {
    let nrm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if nrm == 0.0 {
        return;
    }
    let max = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lead = w
        .iter()
        .find(|z| z.norm() > 1e-10 * max)
        .copied()
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = lead.conj() / lead.norm();
    for z in w.iter_mut() {
        *z = *z * phase / nrm;
    }
}

/// Orthogonal reduction to upper Hessenberg form, accumulating the
/// transformation into `v` (Householder, EISPACK `orthes`/`ortran`).
fn hessenberg(h: &mut Matrix, v: &mut Matrix) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }

    for m in (1..high).rev() {
        if h[(m, m - 1)] == 0.0 {
            continue;
        }
        for i in m + 1..=high {
            ort[i] = h[(i, m - 1)];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * v[(i, j)];
            }
            g = (g / ort[m]) / h[(m, m - 1)];
            for i in m..=high {
                v[(i, j)] += g * ort[i];
            }
        }
    }
    for j in 0..n {
        for i in j + 2..n {
            h[(i, j)] = 0.0;
        }
    }
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

/// Francis double-shift QR on a Hessenberg matrix followed by back
/// substitution (EISPACK `hqr2`). On return `v` holds the eigenvectors in
/// real storage; the returned `(d, e)` are real and imaginary eigenvalue parts.
#[allow(clippy::many_single_char_names, unused_assignments)]
fn schur_vectors(h: &mut Matrix, v: &mut Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let nn = h.nrows();
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    let low = 0usize;
    let high = nn - 1;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut t, mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0usize;
    while n >= low as isize {
        let nu = n as usize;
        let mut l = nu;
        while l > low {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < EPS * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            h[(nu, nu)] += exshift;
            d[nu] = h[(nu, nu)];
            e[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == nu - 1 {
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            x = h[(nu, nu)];

            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
                x = h[(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in nu - 1..nn {
                    z = h[(nu - 1, j)];
                    h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                    h[(nu, j)] = q * h[(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[(i, nu - 1)];
                    h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                    h[(i, nu)] = q * h[(i, nu)] - p * z;
                }
                for i in low..=high {
                    z = v[(i, nu - 1)];
                    v[(i, nu - 1)] = q * z + p * v[(i, nu)];
                    v[(i, nu)] = q * v[(i, nu)] - p * z;
                }
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }

            // Exceptional shifts break cycles on pathological inputs.
            if iter == 10 {
                exshift += x;
                for i in low..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;
            if iter > MAX_QR_ITERS_PER_EIGENVALUE {
                return Err(Error::Convergence {
                    size: nn,
                    sweeps: MAX_QR_ITERS_PER_EIGENVALUE,
                });
            }

            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < EPS * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            let mut k = m;
            while k < nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    for i in low..=high {
                        p = x * v[(i, k)] + y * v[(i, k + 1)];
                        if notlast {
                            p += z * v[(i, k + 2)];
                            v[(i, k + 2)] -= p * r;
                        }
                        v[(i, k)] -= p;
                        v[(i, k + 1)] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }

    if norm == 0.0 {
        return Ok((d, e));
    }

    // Back substitution on the quasi-triangular Schur form.
    for n in (0..nn).rev() {
        p = d[n];
        q = e[n];
        if q == 0.0 {
            let mut l = n;
            h[(n, n)] = 1.0;
            for i in (0..n).rev() {
                w = h[(i, i)] - p;
                r = 0.0;
                for j in l..=n {
                    r += h[(i, j)] * h[(j, n)];
                }
                if e[i] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        h[(i, n)] = if w != 0.0 { -r / w } else { -r / (EPS * norm) };
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        q = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        t = (x * s - z * r) / q;
                        h[(i, n)] = t;
                        h[(i + 1, n)] = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    t = h[(i, n)].abs();
                    if (EPS * t) * t > 1.0 {
                        for j in i..=n {
                            h[(j, n)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            let mut l = n - 1;
            if h[(n, n - 1)].abs() > h[(n - 1, n)].abs() {
                h[(n - 1, n - 1)] = q / h[(n, n - 1)];
                h[(n - 1, n)] = -(h[(n, n)] - p) / h[(n, n - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -h[(n - 1, n)], h[(n - 1, n - 1)] - p, q);
                h[(n - 1, n - 1)] = cr;
                h[(n - 1, n)] = ci;
            }
            h[(n, n - 1)] = 0.0;
            h[(n, n)] = 1.0;
            for i in (0..n.saturating_sub(1)).rev() {
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l..=n {
                    ra += h[(i, j)] * h[(j, n - 1)];
                    sa += h[(i, j)] * h[(j, n)];
                }
                w = h[(i, i)] - p;
                if e[i] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h[(i, n - 1)] = cr;
                        h[(i, n)] = ci;
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                        let vi = (d[i] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = EPS * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) =
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h[(i, n - 1)] = cr;
                        h[(i, n)] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            h[(i + 1, n - 1)] = (-ra - w * h[(i, n - 1)] + q * h[(i, n)]) / x;
                            h[(i + 1, n)] = (-sa - w * h[(i, n)] - q * h[(i, n - 1)]) / x;
                        } else {
                            let (cr, ci) =
                                cdiv(-r - y * h[(i, n - 1)], -s - y * h[(i, n)], z, q);
                            h[(i + 1, n - 1)] = cr;
                            h[(i + 1, n)] = ci;
                        }
                    }
                    t = h[(i, n - 1)].abs().max(h[(i, n)].abs());
                    if (EPS * t) * t > 1.0 {
                        for j in i..=n {
                            h[(j, n - 1)] /= t;
                            h[(j, n)] /= t;
                        }
                    }
                }
            }
        }
    }

    for j in (low..nn).rev() {
        for i in low..=high {
            let mut acc = 0.0;
            for k in low..=j.min(high) {
                acc += v[(i, k)] * h[(k, j)];
            }
            v[(i, j)] = acc;
        }
    }
    Ok((d, e))
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order; each eigenvector is signed so
/// its largest-magnitude component is positive.
pub fn sym_eig(a: &Matrix) -> Result<(DVector<f64>, Matrix)> {
    ensure_nonempty(a, "matrix")?;
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "symmetric eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "matrix")?;
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n, n);
    let scale = a.norm();
    let negligible = 1e-3 * EPS * scale;

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0;
        for q in 1..n {
            for p in 0..q {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 0.1 * EPS * scale || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= negligible {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                rotate_columns(&mut m, p, q, c, s);
                for k in 0..n {
                    let (mp, mq) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mp - s * mq;
                    m[(q, k)] = s * mp + c * mq;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                rotate_columns(&mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        return Err(Error::Convergence {
            size: n,
            sweeps: MAX_JACOBI_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        if dominant_is_negative(col.iter().copied()) {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Largest absolute entry of `MᵀM − I`.
pub fn orthonormality_residual(m: &Matrix) -> f64 {
    let g = m.transpose() * m;
    let n = g.nrows();
    (g - Matrix::identity(n, n)).amax()
}
