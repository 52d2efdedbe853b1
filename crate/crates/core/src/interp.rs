//! Scattered-data interpolation used both over parameter space (PODI) and in
//! physical space (mesh morphing).
//!
//! Every output column is interpolated independently; RBF systems share one
//! kernel matrix across columns.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Queries closer than this to a node return that node's values.
pub const NODE_SNAP: f64 = 1e-12;
/// Kernel matrices with `σ_min / σ_max` below this are rejected as singular.
const KERNEL_RCOND: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InterpolatorKind {
    /// `φ(d) = exp(−(εd)²)`
    RbfGaussian { epsilon: f64 },
    /// `φ(d) = d² ln d`, `φ(0) = 0`
    RbfThinPlate,
    /// `φ(d) = √(1 + (εd)²)`
    RbfMultiquadric { epsilon: f64 },
    /// Shepard weights `‖x − xᵢ‖⁻ᵖ`
    Idw { power: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolatorConfig {
    #[serde(flatten)]
    pub kind: InterpolatorKind,
    /// Ridge term `λ` added to the kernel diagonal; ignored by IDW.
    #[serde(default)]
    pub regularization: f64,
}

impl InterpolatorConfig {
    pub fn idw(power: f64) -> Self {
        InterpolatorConfig {
            kind: InterpolatorKind::Idw { power },
            regularization: 0.0,
        }
    }

    pub fn gaussian(epsilon: f64, regularization: f64) -> Self {
        InterpolatorConfig {
            kind: InterpolatorKind::RbfGaussian { epsilon },
            regularization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self.kind {
            InterpolatorKind::RbfGaussian { epsilon } | InterpolatorKind::RbfMultiquadric { epsilon } => {
                positive("epsilon", epsilon)?
            }
            InterpolatorKind::Idw { power } => positive("IDW power", power)?,
            InterpolatorKind::RbfThinPlate => {}
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::Validation(format!(
                "regularization must be >= 0, got {}",
                self.regularization
            )));
        }
        Ok(())
    }

    /// True when the fitted interpolant reproduces its nodes exactly.
    pub fn is_interpolating(&self) -> bool {
        matches!(self.kind, InterpolatorKind::Idw { .. }) || self.regularization == 0.0
    }
}

/// Radial kernel value at distance `d`.
pub fn kernel(kind: InterpolatorKind, d: f64) -> f64 {
    match kind {
        InterpolatorKind::RbfGaussian { epsilon } => (-(epsilon * d).powi(2)).exp(),
        InterpolatorKind::RbfThinPlate => {
            if d == 0.0 {
                0.0
            } else {
                d * d * d.ln()
            }
        }
        InterpolatorKind::RbfMultiquadric { epsilon } => (epsilon * d).hypot(1.0),
        InterpolatorKind::Idw { .. } => unreachable!("IDW has no kernel"),
    }
}

fn distance(centers: &Matrix, j: usize, x: &[f64]) -> f64 {
    centers
        .column(j)
        .iter()
        .zip(x)
        .map(|(c, x)| (c - x) * (c - x))
        .sum::<f64>()
        .sqrt()
}

/// A fitted interpolant over `n` centers in `dim` dimensions with `k` outputs.
#[derive(Debug, Clone)]
pub struct Interpolant {
    config: InterpolatorConfig,
    /// `dim × n`
    centers: Matrix,
    /// `n × k`: node values for IDW, kernel weights for RBF.
    coefficients: Matrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryInfo {
    /// Query snapped to this node.
    pub node: Option<usize>,
    /// Query lies outside the axis-aligned bounding box of the centers.
    pub extrapolated: bool,
}

impl Interpolant {
    /// `centers` is `dim × n`, `values` is `n × k`.
    pub fn fit(config: InterpolatorConfig, centers: &Matrix, values: &Matrix) -> Result<Self> {
        config.validate()?;
        let n = centers.ncols();
        if n == 0 || centers.nrows() == 0 {
            return Err(Error::Dimension("interpolation needs at least one center".into()));
        }
        if values.nrows() != n {
            return Err(Error::Dimension(format!(
                "{} value rows for {n} centers",
                values.nrows()
            )));
        }
        linalg::ensure_finite(centers, "interpolation centers")?;
        linalg::ensure_finite(values, "interpolation values")?;
        for j in 1..n {
            for i in 0..j {
                let d = distance(centers, i, centers.column(j).as_slice());
                if d <= NODE_SNAP {
                    return Err(Error::Validation(format!(
                        "duplicate interpolation centers {i} and {j} (distance {d:e})"
                    )));
                }
            }
        }

        let coefficients = match config.kind {
            InterpolatorKind::Idw { .. } => values.clone(),
            kind => {
                if kind == InterpolatorKind::RbfThinPlate && config.regularization == 0.0 && n > 1 {
                    log::warn!("thin-plate kernel without polynomial term may be singular; consider regularization > 0");
                }
                let mut k = Matrix::from_fn(n, n, |i, j| {
                    kernel(kind, distance(centers, i, centers.column(j).as_slice()))
                });
                for i in 0..n {
                    k[(i, i)] += config.regularization;
                }
                solve_kernel_system(&k, values)?
            }
        };
        let dim = centers.nrows();
        let lower = (0..dim).map(|d| centers.row(d).min()).collect();
        let upper = (0..dim).map(|d| centers.row(d).max()).collect();
        Ok(Interpolant {
            config,
            centers: centers.clone(),
            coefficients,
            lower,
            upper,
        })
    }

    pub fn config(&self) -> &InterpolatorConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.centers.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<(DVector<f64>, QueryInfo)> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "query has {} components, interpolant expects {}",
                x.len(),
                self.dim()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("query component {i} is not finite")));
        }
        let extrapolated = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .any(|(v, (lo, hi))| v < lo || v > hi);
        let n = self.centers.ncols();
        let dists: Vec<f64> = (0..n).map(|j| distance(&self.centers, j, x)).collect();

        match self.config.kind {
            InterpolatorKind::Idw { power } => {
                let (nearest, dmin) = dists
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::INFINITY), |best, (j, d)| if d < best.1 { (j, d) } else { best });
                if dmin <= NODE_SNAP {
                    let out = self.coefficients.row(nearest).transpose();
                    return Ok((out, QueryInfo { node: Some(nearest), extrapolated }));
                }
                let w = shepard_weights(&dists, power);
                let out = self.coefficients.tr_mul(&DVector::from_vec(w));
                Ok((out, QueryInfo { node: None, extrapolated }))
            }
            kind => {
                let phi = DVector::from_iterator(n, dists.iter().map(|&d| kernel(kind, d)));
                let out = self.coefficients.tr_mul(&phi);
                Ok((out, QueryInfo { node: None, extrapolated }))
            }
        }
    }
}

/// Normalized Shepard weights for distances that are all strictly positive.
/// Computed relative to the smallest distance so large powers do not
/// overflow.
pub fn shepard_weights(dists: &[f64], power: f64) -> Vec<f64> {
    let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = dists.iter().map(|&d| (dmin / d).powf(power)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn solve_kernel_system(k: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let s = linalg::svd(k, linalg::RankSpec::Full)?;
    let smax = s.sigma[0];
    let smin = s.sigma[s.rank - 1];
    if smax == 0.0 || smin <= KERNEL_RCOND * smax {
        return Err(Error::Conditioning(format!(
            "kernel matrix is numerically singular (sigma_min/sigma_max = {:e}); use regularization > 0",
            if smax == 0.0 { 0.0 } else { smin / smax }
        )));
    }
    let mut coeff = s.u.tr_mul(rhs);
    for i in 0..s.rank {
        coeff.row_mut(i).scale_mut(1.0 / s.sigma[i]);
    }
    Ok(&s.v * coeff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(xs: &[f64]) -> Matrix {
        Matrix::from_row_slice(1, xs.len(), xs)
    }

    #[test]
    fn kernels_at_known_distances() {
        let g = InterpolatorKind::RbfGaussian { epsilon: 2.0 };
        assert_eq!(kernel(g, 0.0), 1.0);
        assert_abs_diff_eq!(kernel(g, 0.5), (-1.0f64).exp(), epsilon = 1e-16);
        assert_eq!(kernel(InterpolatorKind::RbfThinPlate, 0.0), 0.0);
        assert_abs_diff_eq!(kernel(InterpolatorKind::RbfThinPlate, 2.0), 4.0 * 2f64.ln(), epsilon = 1e-15);
        let mq = InterpolatorKind::RbfMultiquadric { epsilon: 1.0 };
        assert_abs_diff_eq!(kernel(mq, 1.0), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(InterpolatorConfig::idw(0.0).validate().is_err());
        assert!(InterpolatorConfig::gaussian(-1.0, 0.0).validate().is_err());
        assert!(InterpolatorConfig::gaussian(1.0, -1e-3).validate().is_err());
        assert!(InterpolatorConfig::gaussian(1.0, 0.0).validate().is_ok());
    }

    #[test]
    fn config_json_shape() {
        let c: InterpolatorConfig =
            serde_json::from_str(r#"{"kind":"rbf-gaussian","epsilon":1.5,"regularization":0.1}"#).unwrap();
        assert_eq!(c, InterpolatorConfig::gaussian(1.5, 0.1));
        let c: InterpolatorConfig = serde_json::from_str(r#"{"kind":"idw","power":2}"#).unwrap();
        assert_eq!(c, InterpolatorConfig::idw(2.0));
    }

    #[test]
    fn idw_snaps_to_nodes_and_weights_sum_to_one() {
        let f = Interpolant::fit(InterpolatorConfig::idw(2.0), &line(&[0.0, 1.0, 3.0]), &Matrix::from_column_slice(3, 1, &[5.0, 7.0, 11.0]))
            .unwrap();
        let (v, info) = f.evaluate(&[1.0]).unwrap();
        assert_eq!(v[0], 7.0);
        assert_eq!(info.node, Some(1));
        let w = shepard_weights(&[0.5, 1.5, 2.0], 3.0);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn duplicate_centers_rejected() {
        let err = Interpolant::fit(InterpolatorConfig::idw(2.0), &line(&[0.0, 0.0]), &Matrix::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn singular_kernel_reports_conditioning() {
        // Thin-plate on two points at distance 1: φ(1) = 0 and φ(0) = 0.
        let cfg = InterpolatorConfig {
            kind: InterpolatorKind::RbfThinPlate,
            regularization: 0.0,
        };
        let err = Interpolant::fit(cfg, &line(&[0.0, 1.0]), &Matrix::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, Error::Conditioning(_)));
        let cfg = InterpolatorConfig { regularization: 1e-3, ..cfg };
        assert!(Interpolant::fit(cfg, &line(&[0.0, 1.0]), &Matrix::zeros(2, 1)).is_ok());
    }

    #[test]
    fn extrapolation_flag() {
        let f = Interpolant::fit(InterpolatorConfig::idw(2.0), &line(&[0.0, 1.0]), &Matrix::zeros(2, 1)).unwrap();
        assert!(!f.evaluate(&[0.5]).unwrap().1.extrapolated);
        assert!(f.evaluate(&[1.5]).unwrap().1.extrapolated);
        assert!(matches!(f.evaluate(&[0.5, 0.1]), Err(Error::Dimension(_))));
    }
}
