//! POD with interpolation: an orthonormal basis from the snapshot SVD, modal
//! coefficients as projections onto it, and per-mode interpolation of those
//! coefficients over the sampled parameter space.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::interp::{Interpolant, InterpolatorConfig, InterpolatorKind};
use crate::io;
use crate::linalg::{self, Matrix, RankSpec};
use crate::snapshots::SnapshotSet;

pub const SECTION_TAG: &[u8; 4] = b"PODI";

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub modes: Matrix,
    pub singular_values: DVector<f64>,
    /// Fraction of `Σσ²` captured by the retained modes.
    pub energy_fraction: f64,
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_dof(&self) -> usize {
        self.modes.nrows()
    }
}

pub fn pod(set: &SnapshotSet, rank_spec: RankSpec) -> Result<PodBasis> {
    let data = set.data();
    let full = linalg::svd(data, RankSpec::Full)?;
    let r = rank_spec.resolve(full.sigma.as_slice())?;
    let floor = data.nrows().max(data.ncols()) as f64 * f64::EPSILON * full.sigma[0];
    if let Some(i) = (0..r).find(|&i| full.sigma[i] == 0.0 || full.sigma[i] <= floor) {
        return Err(Error::RankDeficient { rank: r, index: i + 1 });
    }
    let total: f64 = full.sigma.iter().map(|s| s * s).sum();
    let kept: f64 = full.sigma.iter().take(r).map(|s| s * s).sum();
    Ok(PodBasis {
        modes: full.u.columns(0, r).into_owned(),
        singular_values: full.sigma.rows(0, r).into_owned(),
        energy_fraction: kept / total,
    })
}

/// Modal coefficients `modesᵀ · data`, one column per snapshot.
pub fn project(basis: &PodBasis, set: &SnapshotSet) -> Result<Matrix> {
    project_matrix(basis, set.data())
}

pub fn project_matrix(basis: &PodBasis, data: &Matrix) -> Result<Matrix> {
    if data.nrows() != basis.n_dof() {
        return Err(Error::Dimension(format!(
            "data has {} DOFs, basis has {}",
            data.nrows(),
            basis.n_dof()
        )));
    }
    Ok(basis.modes.tr_mul(data))
}

#[derive(Debug, Clone)]
pub struct PodiModel {
    basis: PodBasis,
    train_params: Matrix,
    coeffs: Matrix,
    interpolant: Interpolant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodiEvaluation {
    pub field: DVector<f64>,
    pub coefficients: DVector<f64>,
    /// Query outside the bounding box of the training parameters.
    pub extrapolated: bool,
    pub snapped_to: Option<usize>,
}

pub fn fit_podi(set: &SnapshotSet, rank_spec: RankSpec, interp: InterpolatorConfig) -> Result<PodiModel> {
    interp.validate()?;
    let params = set
        .params()
        .ok_or_else(|| Error::Validation("PODI needs a parameter point for every snapshot".into()))?
        .clone();
    let basis = pod(set, rank_spec)?;
    let coeffs = project(&basis, set)?;
    PodiModel::from_parts(basis, params, coeffs, interp)
}

impl PodiModel {
    pub fn from_parts(basis: PodBasis, train_params: Matrix, coeffs: Matrix, interp: InterpolatorConfig) -> Result<Self> {
        if coeffs.nrows() != basis.rank() || coeffs.ncols() != train_params.ncols() {
            return Err(Error::Dimension(format!(
                "coefficients are {}x{}, expected {}x{}",
                coeffs.nrows(),
                coeffs.ncols(),
                basis.rank(),
                train_params.ncols()
            )));
        }
        let interpolant = Interpolant::fit(interp, &train_params, &coeffs.transpose())?;
        Ok(PodiModel {
            basis,
            train_params,
            coeffs,
            interpolant,
        })
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn train_params(&self) -> &Matrix {
        &self.train_params
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.coeffs
    }

    pub fn interpolator(&self) -> &InterpolatorConfig {
        self.interpolant.config()
    }

    pub fn n_params(&self) -> usize {
        self.train_params.nrows()
    }

    /// `modes · ĉ(μ)`.
    pub fn evaluate(&self, mu: &[f64]) -> Result<PodiEvaluation> {
        let (coefficients, info) = self.interpolant.evaluate(mu)?;
        if info.extrapolated {
            log::info!("PODI query {mu:?} lies outside the training parameter box");
        }
        Ok(PodiEvaluation {
            field: &self.basis.modes * &coefficients,
            coefficients,
            extrapolated: info.extrapolated,
            snapped_to: info.node,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let r = self.basis.rank();
        let cfg = self.interpolator();
        let (kind, shape) = match cfg.kind {
            InterpolatorKind::Idw { power } => (0u32, power),
            InterpolatorKind::RbfGaussian { epsilon } => (1, epsilon),
            InterpolatorKind::RbfThinPlate => (2, 0.0),
            InterpolatorKind::RbfMultiquadric { epsilon } => (3, epsilon),
        };
        let mut body = Vec::new();
        body.extend_from_slice(&(r as u64).to_le_bytes());
        body.extend_from_slice(&(self.n_params() as u64).to_le_bytes());
        body.extend_from_slice(&kind.to_le_bytes());
        io::put_f64s(&mut body, [shape, cfg.regularization, self.basis.energy_fraction]);
        io::put_f64s(&mut body, self.basis.singular_values.iter().copied());
        io::put_f64s(&mut body, self.basis.modes.iter().copied());
        io::put_f64s(&mut body, self.train_params.iter().copied());
        io::put_f64s(&mut body, self.coeffs.iter().copied());
        io::encode_model(self.basis.n_dof(), self.train_params.ncols(), SECTION_TAG, &body)
    }

    pub fn from_bytes(bytes: &[u8], source: &str) -> Result<Self> {
        let (h, mut r) = io::decode_model(bytes, SECTION_TAG, source)?;
        let n = usize::try_from(h.n_dof).map_err(|_| r.error_at(8, "n_dof too large"))?;
        let m = usize::try_from(h.m).map_err(|_| r.error_at(16, "m too large"))?;
        let rank = r.usize("rank")?;
        let np = r.usize("parameter count")?;
        let kind_at = r.position();
        let kind = r.u32("interpolator kind")?;
        let shape = r.f64("interpolator shape")?;
        let regularization = r.f64("regularization")?;
        let energy_fraction = r.f64("energy fraction")?;
        let kind = match kind {
            0 => InterpolatorKind::Idw { power: shape },
            1 => InterpolatorKind::RbfGaussian { epsilon: shape },
            2 => InterpolatorKind::RbfThinPlate,
            3 => InterpolatorKind::RbfMultiquadric { epsilon: shape },
            other => return Err(r.error_at(kind_at, format!("unknown interpolator kind {other}"))),
        };
        let mul = |a: usize, b: usize| a.checked_mul(b).unwrap_or(usize::MAX);
        let sigma = r.f64s(rank, "singular values")?;
        let modes = r.f64s(mul(n, rank), "modes")?;
        let params = r.f64s(mul(np, m), "training parameters")?;
        let coeffs = r.f64s(mul(rank, m), "coefficients")?;
        r.finish()?;
        let basis = PodBasis {
            modes: Matrix::from_vec(n, rank, modes),
            singular_values: DVector::from_vec(sigma),
            energy_fraction,
        };
        PodiModel::from_parts(
            basis,
            Matrix::from_vec(np, m, params),
            Matrix::from_vec(rank, m, coeffs),
            InterpolatorConfig { kind, regularization },
        )
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let bytes = self.to_bytes();
        io::atomic_write(path, |w| w.write_all(&bytes))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = io::read_file(path)?;
        PodiModel::from_bytes(&bytes, &path.display().to_string())
    }
}
