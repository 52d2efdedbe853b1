#![allow(dead_code)]

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use romkit_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// `n × r` with orthonormal columns (QR of a random matrix, oracle: nalgebra).
pub fn random_orthonormal(rng: &mut impl Rng, n: usize, r: usize) -> Matrix {
    let q = random_matrix(rng, n, r).qr().q();
    q.columns(0, r).into_owned()
}

pub fn rotation_block(rho: f64, theta: f64) -> [[f64; 2]; 2] {
    [[rho * theta.cos(), -rho * theta.sin()], [rho * theta.sin(), rho * theta.cos()]]
}

/// A stable linear system `M = Q B Qᵀ` of rank `r` in `n` dimensions with
/// well separated nonzero eigenvalues of modulus in [0.7, 0.99].
pub struct LinearSystem {
    pub m: Matrix,
    pub eigenvalues: Vec<Complex64>,
    pub x0: DVector<f64>,
}

pub fn stable_system(rng: &mut impl Rng, n: usize, r: usize) -> LinearSystem {
    // moduli from a shuffled grid so every pair differs by at least 0.05
    let mut grid: Vec<f64> = (0..6).map(|i| 0.7 + 0.057 * i as f64).collect();
    for i in (1..grid.len()).rev() {
        grid.swap(i, rng.gen_range(0..=i));
    }
    let mut b = Matrix::zeros(r, r);
    let mut eigenvalues = Vec::new();
    let mut i = 0;
    let mut g = 0;
    let pairs = if r >= 2 { rng.gen_range(0..=r / 2) } else { 0 };
    for _ in 0..pairs {
        let rho = grid[g];
        let theta = rng.gen_range(0.3..2.5);
        let blk = rotation_block(rho, theta);
        for p in 0..2 {
            for q in 0..2 {
                b[(i + p, i + q)] = blk[p][q];
            }
        }
        eigenvalues.push(Complex64::from_polar(rho, theta));
        eigenvalues.push(Complex64::from_polar(rho, -theta));
        i += 2;
        g += 1;
    }
    while i < r {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        b[(i, i)] = sign * grid[g];
        eigenvalues.push(Complex64::new(sign * grid[g], 0.0));
        i += 1;
        g += 1;
    }
    let q = random_orthonormal(rng, n, r);
    let c = DVector::from_fn(r, |_, _| {
        let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        s * rng.gen_range(0.5..1.5)
    });
    LinearSystem {
        m: &q * b * q.transpose(),
        eigenvalues,
        x0: q * c,
    }
}

/// Columns `x₀, Mx₀, …, M^{count−1}x₀` by direct powers.
pub fn simulate(m: &Matrix, x0: &DVector<f64>, count: usize) -> Matrix {
    let mut out = Matrix::zeros(x0.len(), count);
    let mut x = x0.clone();
    for k in 0..count {
        out.set_column(k, &x);
        x = m * x;
    }
    out
}

/// Largest distance from each expected eigenvalue to its nearest unused
/// match among `found` (greedy, order independent).
pub fn spectrum_distance(found: &[Complex64], expected: &[Complex64]) -> f64 {
    if found.len() != expected.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; found.len()];
    let mut worst = 0.0f64;
    for e in expected {
        let (j, d) = found
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, f)| (j, (f - e).norm()))
            .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// 2-D rotation snapshots `R(θ)^k (1, 0)`.
pub fn rotation_snapshots(theta: f64, count: usize) -> Matrix {
    Matrix::from_fn(2, count, |i, k| {
        let a = theta * k as f64;
        if i == 0 {
            a.cos()
        } else {
            a.sin()
        }
    })
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.amax()
}
