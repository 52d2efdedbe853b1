//! Active subspaces: dominant directions of the uncentered gradient
//! covariance `C = Σ wᵢ ∇fᵢ ∇fᵢᵀ` of a scalar function.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, RankSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub point: DVector<f64>,
    pub gradient: DVector<f64>,
    pub weight: f64,
}

impl GradientSample {
    pub fn new(point: DVector<f64>, gradient: DVector<f64>, weight: f64) -> Self {
        GradientSample { point, gradient, weight }
    }
}

/// Builds samples with uniform weights from column-wise points and gradients.
pub fn samples_from_columns(points: &Matrix, gradients: &Matrix) -> Result<Vec<GradientSample>> {
    if points.shape() != gradients.shape() {
        return Err(Error::Dimension(format!(
            "points are {}x{}, gradients {}x{}",
            points.nrows(),
            points.ncols(),
            gradients.nrows(),
            gradients.ncols()
        )));
    }
    let m = points.ncols();
    Ok((0..m)
        .map(|j| {
            GradientSample::new(
                points.column(j).into_owned(),
                gradients.column(j).into_owned(),
                1.0 / m as f64,
            )
        })
        .collect())
}

/// `Σ wᵢ gᵢ gᵢᵀ` with the weights normalized to sum to one.
pub fn covariance(samples: &[GradientSample]) -> Result<Matrix> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Validation("covariance needs at least one gradient sample".into()))?;
    let n = first.gradient.len();
    if n == 0 {
        return Err(Error::Dimension("gradients have no components".into()));
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if s.gradient.len() != n || s.point.len() != n {
            return Err(Error::Dimension(format!(
                "sample {i} has point length {} and gradient length {}, expected {n}",
                s.point.len(),
                s.gradient.len()
            )));
        }
        if !(s.weight.is_finite() && s.weight >= 0.0) {
            return Err(Error::Validation(format!("sample {i} has weight {}", s.weight)));
        }
        if let Some(k) = s.gradient.iter().chain(s.point.iter()).position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("sample {i} has a non-finite entry at component {}", k % n)));
        }
        total += s.weight;
    }
    if total <= 0.0 {
        return Err(Error::Validation("sample weights sum to zero".into()));
    }
    let mut c = Matrix::zeros(n, n);
    for s in samples {
        c.ger(s.weight / total, &s.gradient, &s.gradient, 1.0);
    }
    // exact symmetry regardless of accumulation order
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimRule {
    Fixed(usize),
    /// Largest ratio between consecutive nonzero eigenvalues.
    Gap,
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSubspace {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: Matrix,
    active_dim: Option<usize>,
}

pub fn decompose(c: &Matrix) -> Result<ActiveSubspace> {
    if !c.is_square() {
        return Err(Error::Dimension(format!("covariance is {}x{}", c.nrows(), c.ncols())));
    }
    linalg::ensure_nonempty(c, "covariance")?;
    linalg::ensure_finite(c, "covariance")?;
    let scale = c.amax().max(1.0);
    let asym = (c - c.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::Validation(format!("covariance is not symmetric (max |C - Cᵀ| = {asym:e})")));
    }
    let (mut values, vectors) = linalg::sym_eig(c)?;
    let lmax = values.max().max(1.0);
    for (i, v) in values.iter_mut().enumerate() {
        if *v < -1e-10 * lmax {
            return Err(Error::Validation(format!(
                "covariance is not positive semidefinite (eigenvalue {} = {v:e})",
                i + 1
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(ActiveSubspace {
        eigenvalues: values,
        eigenvectors: vectors,
        active_dim: None,
    })
}

impl ActiveSubspace {
    pub fn from_parts(eigenvalues: DVector<f64>, eigenvectors: Matrix, active_dim: Option<usize>) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.shape() != (n, n) || n == 0 {
            return Err(Error::Dimension(format!(
                "{n} eigenvalues with a {}x{} eigenvector matrix",
                eigenvectors.nrows(),
                eigenvectors.ncols()
            )));
        }
        if let Some(k) = active_dim {
            if k == 0 || k > n {
                return Err(Error::Range(format!("active dimension {k} outside 1..={n}")));
            }
        }
        Ok(ActiveSubspace {
            eigenvalues,
            eigenvectors,
            active_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn active_dim(&self) -> Option<usize> {
        self.active_dim
    }

    pub fn select_dim(mut self, rule: DimRule) -> Result<Self> {
        let n = self.dim();
        let lam = self.eigenvalues.as_slice();
        if lam.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate(
                "all covariance eigenvalues are zero; the function looks constant".into(),
            ));
        }
        let k = match rule {
            DimRule::Fixed(k) => {
                if k == 0 || k > n {
                    return Err(Error::Range(format!("active dimension {k} outside 1..={n}")));
                }
                k
            }
            DimRule::Gap => {
                let mut best: Option<(usize, f64)> = None;
                for i in 0..n.saturating_sub(1) {
                    if lam[i + 1] > 0.0 {
                        let ratio = lam[i] / lam[i + 1];
                        if best.map_or(true, |(_, b)| ratio > b) {
                            best = Some((i + 1, ratio));
                        }
                    }
                }
                match best {
                    Some((k, _)) => k,
                    None => lam.iter().filter(|&&v| v > 0.0).count(),
                }
            }
            DimRule::Energy(tau) => {
                if !(tau > 0.0 && tau <= 1.0) {
                    return Err(Error::Range(format!("energy threshold {tau} outside (0, 1]")));
                }
                linalg::energy_rank(lam.iter().copied(), tau)
            }
        };
        self.active_dim = Some(k);
        Ok(self)
    }

    /// `W₁`, the first `active_dim` eigenvectors.
    pub fn w1(&self) -> Result<Matrix> {
        let k = self.require_dim()?;
        Ok(self.eigenvectors.columns(0, k).into_owned())
    }

    pub fn project(&self, x: &[f64]) -> Result<DVector<f64>> {
        let k = self.require_dim()?;
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("point has {} components, expected {}", x.len(), self.dim())));
        }
        let x = DVector::from_column_slice(x);
        Ok(self.eigenvectors.columns(0, k).tr_mul(&x))
    }

    /// Active coordinates of every column of `points` (result is `k × M`).
    pub fn project_points(&self, points: &Matrix) -> Result<Matrix> {
        let k = self.require_dim()?;
        if points.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "points have {} rows, expected {}",
                points.nrows(),
                self.dim()
            )));
        }
        Ok(self.eigenvectors.columns(0, k).tr_mul(points))
    }

    /// Sufficient-summary rows `(y₁..y_k, f)`, one per sample, as an `M × (k+1)` matrix.
    pub fn summary_data(&self, points: &Matrix, values: &[f64]) -> Result<Matrix> {
        if values.len() != points.ncols() {
            return Err(Error::Dimension(format!(
                "{} values for {} points",
                values.len(),
                points.ncols()
            )));
        }
        let y = self.project_points(points)?;
        let k = y.nrows();
        Ok(Matrix::from_fn(values.len(), k + 1, |i, j| if j < k { y[(j, i)] } else { values[i] }))
    }

    fn require_dim(&self) -> Result<usize> {
        self.active_dim
            .ok_or_else(|| Error::Validation("active dimension has not been selected".into()))
    }
}

/// Local linear regression gradients: for every point, fit `f ≈ c + gᵀ(x - xᵢ)`
/// over its `n_neighbors` nearest points (itself included).
pub fn estimate_gradients(points: &Matrix, values: &[f64], n_neighbors: usize) -> Result<Vec<GradientSample>> {
    let (n, m) = points.shape();
    if values.len() != m {
        return Err(Error::Dimension(format!("{} values for {m} points", values.len())));
    }
    linalg::ensure_nonempty(points, "sample points")?;
    linalg::ensure_finite(points, "sample points")?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("value {i} is not finite")));
    }
    if m < n + 1 {
        return Err(Error::Validation(format!("{m} samples cannot determine gradients in {n} dimensions")));
    }
    if n_neighbors < n + 1 || n_neighbors > m {
        return Err(Error::Range(format!(
            "n_neighbors = {n_neighbors} must lie in {}..={m}",
            n + 1
        )));
    }

    let grads: Vec<Result<DVector<f64>>> = (0..m)
        .into_par_iter()
        .map(|i| local_gradient(points, values, i, n_neighbors))
        .collect();
    let weight = 1.0 / m as f64;
    grads
        .into_iter()
        .enumerate()
        .map(|(i, g)| Ok(GradientSample::new(points.column(i).into_owned(), g?, weight)))
        .collect()
}

fn local_gradient(points: &Matrix, values: &[f64], i: usize, k: usize) -> Result<DVector<f64>> {
    let (n, m) = points.shape();
    let xi = points.column(i);
    let mut order: Vec<(f64, usize)> = (0..m)
        .map(|j| ((points.column(j) - xi).norm_squared(), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nbrs = &order[..k];

    let mut design = Matrix::from_fn(k, n + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            points[(c - 1, nbrs[r].1)] - xi[c - 1]
        }
    });
    let scales: Vec<f64> = (0..=n)
        .map(|c| {
            let s = design.column(c).amax();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for (c, s) in scales.iter().enumerate() {
        design.column_mut(c).unscale_mut(*s);
    }
    let rhs = DVector::from_iterator(k, nbrs.iter().map(|&(_, j)| values[j]));

    let svd = linalg::svd(&design, RankSpec::Full)?;
    let smax = svd.sigma[0];
    let smin = svd.sigma[svd.sigma.len() - 1];
    if !(smin > 1e-10 * smax) {
        return Err(Error::Conditioning(format!(
            "neighborhood of point {i} is degenerate (σ_min/σ_max = {:e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let utb = svd.u.tr_mul(&rhs);
    let coef = &svd.v * utb.component_div(&svd.sigma);
    Ok(DVector::from_fn(n, |d, _| coef[d + 1] / scales[d + 1]))
}
