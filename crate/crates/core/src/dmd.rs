//! Exact dynamic mode decomposition.
//!
//! Given snapshots `x₁ … x_m`, the best-fit linear map `A = Ṡ S⁺` between the
//! shifted matrices is never formed. Instead the truncated SVD
//! `S ≈ U_r Σ_r V_rᵀ` yields the projected operator
//! `Ã = U_rᵀ Ṡ V_r Σ_r⁻¹`, whose eigenpairs `Ã W = W Λ` give the exact modes
//! `Φ = Ṡ V_r Σ_r⁻¹ W`. Amplitudes are the least-squares fit `b = Φ⁺ x₁`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{self, ByteReader};
use crate::linalg::{self, ComplexMatrix, Matrix, RankSpec};
use crate::snapshots::{split_shifted, SnapshotSet};

pub const SECTION_TAG: &[u8; 4] = b"DMD1";

#[derive(Debug, Clone, PartialEq)]
pub struct DmdModel {
    modes: ComplexMatrix,
    eigenvalues: DVector<Complex64>,
    amplitudes: DVector<Complex64>,
    dt: f64,
    m_snapshots: usize,
}

/// A state vector together with the relative size of the imaginary part that
/// was discarded when taking the real part.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub state: DVector<f64>,
    pub imag_ratio: f64,
    /// Modes dropped because their eigenvalue is zero (forecast only).
    pub excluded_modes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    pub eigenvalue: Complex64,
    /// Continuous-time rate `ln(λ) / dt`, principal branch.
    pub rate: Complex64,
    pub modulus: f64,
    /// Cycles per unit time, `arg(λ) / (2π dt)`.
    pub frequency: f64,
}

pub fn fit(set: &SnapshotSet, rank_spec: RankSpec) -> Result<DmdModel> {
    let (s, sdot) = split_shifted(set)?;
    let svd = linalg::svd(&s, rank_spec)?;
    let r = svd.rank;
    check_rank(&svd.sigma, s.nrows().max(s.ncols()), r)?;

    // Ṡ V_r Σ_r⁻¹, shared by the reduced operator and the modes.
    let mut sdot_v_sinv = &sdot * &svd.v;
    for j in 0..r {
        sdot_v_sinv.column_mut(j).scale_mut(1.0 / svd.sigma[j]);
    }
    let reduced = svd.u.tr_mul(&sdot_v_sinv);
    let eig = linalg::eig(&reduced)?;

    let modes = sdot_v_sinv.map(|x| Complex64::new(x, 0.0)) * &eig.vectors;
    for j in 0..r {
        let nrm = modes.column(j).norm();
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(Error::RankDeficient { rank: r, index: j + 1 });
        }
    }
    let first = set.data().column(0).into_owned();
    let amplitudes = linalg::complex_lstsq(&modes, &first)?;

    Ok(DmdModel {
        modes,
        eigenvalues: eig.values,
        amplitudes,
        dt: set.dt(),
        m_snapshots: set.m(),
    })
}

fn check_rank(sigma: &DVector<f64>, max_dim: usize, r: usize) -> Result<()> {
    let floor = max_dim as f64 * f64::EPSILON * sigma[0];
    if let Some(i) = (0..r).find(|&i| sigma[i] == 0.0 || sigma[i] <= floor) {
        return Err(Error::RankDeficient { rank: r, index: i + 1 });
    }
    Ok(())
}

fn real_part(v: &DVector<Complex64>) -> (DVector<f64>, f64) {
    let re = v.map(|z| z.re);
    let im_norm = v.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let re_norm = re.norm();
    let ratio = if im_norm == 0.0 {
        0.0
    } else if re_norm == 0.0 {
        f64::INFINITY
    } else {
        im_norm / re_norm
    };
    (re, ratio)
}

impl DmdModel {
    /// Assembles a model from stored parts, checking shapes and finiteness.
    pub fn from_parts(
        modes: ComplexMatrix,
        eigenvalues: DVector<Complex64>,
        amplitudes: DVector<Complex64>,
        dt: f64,
        m_snapshots: usize,
    ) -> Result<Self> {
        let (n, r) = modes.shape();
        if r == 0 || n == 0 || eigenvalues.len() != r || amplitudes.len() != r {
            return Err(Error::Dimension(format!(
                "modes {n}x{r}, {} eigenvalues, {} amplitudes",
                eigenvalues.len(),
                amplitudes.len()
            )));
        }
        if r > n || r + 1 > m_snapshots {
            return Err(Error::Dimension(format!(
                "rank {r} exceeds n_dof {n} or m_snapshots - 1 = {}",
                m_snapshots.saturating_sub(1)
            )));
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        if !modes.iter().all(finite) || !eigenvalues.iter().all(finite) || !amplitudes.iter().all(finite) {
            return Err(Error::Validation("model holds non-finite values".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {dt}")));
        }
        Ok(DmdModel {
            modes,
            eigenvalues,
            amplitudes,
            dt,
            m_snapshots,
        })
    }

    pub fn modes(&self) -> &ComplexMatrix {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &DVector<Complex64> {
        &self.eigenvalues
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_dof(&self) -> usize {
        self.modes.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn m_snapshots(&self) -> usize {
        self.m_snapshots
    }

    fn combine(&self, factors: impl Iterator<Item = Complex64>) -> DVector<Complex64> {
        let weights = DVector::from_iterator(self.rank(), factors.zip(self.amplitudes.iter()).map(|(f, b)| f * b));
        &self.modes * weights
    }

    /// `Re(Φ diag(Λᵏ) b)`: the state after `k` steps from the first snapshot.
    pub fn reconstruct(&self, k: u32) -> StateEstimate {
        let z = self.combine(self.eigenvalues.iter().map(|l| l.powu(k)));
        let (state, imag_ratio) = real_part(&z);
        StateEstimate {
            state,
            imag_ratio,
            excluded_modes: Vec::new(),
        }
    }

    /// Reconstructions for steps `0..count` as columns.
    pub fn reconstruct_steps(&self, count: usize) -> Matrix {
        let mut out = Matrix::zeros(self.n_dof(), count);
        for k in 0..count {
            out.set_column(k, &self.reconstruct(k as u32).state);
        }
        out
    }

    /// `Re(Φ diag(exp(ω t)) b)` with `ω = ln(λ)/dt`. Modes with `λ = 0` have
    /// no logarithm; they are left out and reported.
    pub fn forecast(&self, t: f64) -> Result<StateEstimate> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Range(format!("forecast time must be finite and >= 0, got {t}")));
        }
        let mut excluded = Vec::new();
        let factors: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if *l == Complex64::new(0.0, 0.0) {
                    excluded.push(i);
                    Complex64::new(0.0, 0.0)
                } else {
                    (l.ln() / self.dt * t).exp()
                }
            })
            .collect();
        if !excluded.is_empty() {
            log::warn!("forecast: modes {excluded:?} have zero eigenvalue and were excluded");
        }
        let (state, imag_ratio) = real_part(&self.combine(factors.into_iter()));
        Ok(StateEstimate {
            state,
            imag_ratio,
            excluded_modes: excluded,
        })
    }

    pub fn spectrum(&self) -> Vec<SpectralLine> {
        self.eigenvalues
            .iter()
            .map(|&l| SpectralLine {
                eigenvalue: l,
                rate: l.ln() / self.dt,
                modulus: l.norm(),
                frequency: l.arg() / (2.0 * PI * self.dt),
            })
            .collect()
    }

    /// `‖reconstruction − data‖_F / ‖data‖_F` over the training snapshots.
    pub fn training_error(&self, set: &SnapshotSet) -> Result<f64> {
        if set.n_dof() != self.n_dof() {
            return Err(Error::Dimension(format!(
                "snapshots have {} DOFs, model has {}",
                set.n_dof(),
                self.n_dof()
            )));
        }
        let rec = self.reconstruct_steps(set.m());
        let denom = set.data().norm();
        let err = (rec - set.data()).norm();
        Ok(if denom == 0.0 { err } else { err / denom })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let r = self.rank();
        let mut body = Vec::with_capacity(16 + 16 * r * (self.n_dof() + 2));
        body.extend_from_slice(&(r as u64).to_le_bytes());
        body.extend_from_slice(&self.dt.to_le_bytes());
        let interleave = |z: &Complex64| [z.re, z.im];
        io::put_f64s(&mut body, self.eigenvalues.iter().flat_map(interleave));
        io::put_f64s(&mut body, self.amplitudes.iter().flat_map(interleave));
        io::put_f64s(&mut body, self.modes.iter().flat_map(interleave));
        io::encode_model(self.n_dof(), self.m_snapshots, SECTION_TAG, &body)
    }

    pub fn from_bytes(bytes: &[u8], source: &str) -> Result<Self> {
        let (h, mut r) = io::decode_model(bytes, SECTION_TAG, source)?;
        let n = usize::try_from(h.n_dof).map_err(|_| r.error_at(8, "n_dof too large"))?;
        let m = usize::try_from(h.m).map_err(|_| r.error_at(16, "m too large"))?;
        let rank = r.usize("rank")?;
        let dt = r.f64("dt")?;
        let complex = |r: &mut ByteReader<'_>, count: usize, what: &str| -> Result<Vec<Complex64>> {
            let raw = r.f64s(count.checked_mul(2).unwrap_or(usize::MAX), what)?;
            Ok(raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
        };
        let eigenvalues = complex(&mut r, rank, "eigenvalues")?;
        let amplitudes = complex(&mut r, rank, "amplitudes")?;
        let modes = complex(&mut r, n.checked_mul(rank).unwrap_or(usize::MAX), "modes")?;
        r.finish()?;
        DmdModel::from_parts(
            ComplexMatrix::from_vec(n, rank, modes),
            DVector::from_vec(eigenvalues),
            DVector::from_vec(amplitudes),
            dt,
            m,
        )
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let bytes = self.to_bytes();
        io::atomic_write(path, |w| w.write_all(&bytes))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = io::read_file(path)?;
        DmdModel::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> SnapshotSet {
        SnapshotSet::new(Matrix::from_fn(rows, cols, f)).unwrap()
    }

    #[test]
    fn scalar_decay() {
        let set = series(1, 4, |_, k| 0.5f64.powi(k as i32));
        let model = fit(&set, RankSpec::Fixed(1)).unwrap();
        assert_abs_diff_eq!(model.eigenvalues()[0].re, 0.5, epsilon = 1e-12);
        assert_eq!(model.eigenvalues()[0].im, 0.0);
        for k in 0..4 {
            let x = model.reconstruct(k).state[0];
            assert_abs_diff_eq!(x, 0.5f64.powi(k as i32), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(model.reconstruct(5).state[0], 0.03125, epsilon = 1e-10);
        assert_abs_diff_eq!(model.forecast(2.5).unwrap().state[0], 0.5f64.powf(2.5), epsilon = 1e-10);
        assert_abs_diff_eq!(0.5f64.powf(2.5), 0.176777, epsilon = 1e-6);
    }

    #[test]
    fn constant_snapshots_identity_dynamics() {
        let v = [3.0, -1.0, 2.0];
        let set = series(3, 3, |i, _| v[i]);
        let model = fit(&set, RankSpec::Fixed(1)).unwrap();
        assert_abs_diff_eq!(model.eigenvalues()[0].re, 1.0, epsilon = 1e-14);
        let mode = model.modes().column(0);
        let scale = mode[0].re / v[0];
        for i in 0..3 {
            assert_abs_diff_eq!(mode[i].re, scale * v[i], epsilon = 1e-14);
        }
        assert!(model.training_error(&set).unwrap() <= 1e-14);
    }

    #[test]
    fn rotation_spectrum_and_powers() {
        let theta: f64 = 0.3;
        let set = series(2, 20, |i, k| {
            let a = theta * k as f64;
            if i == 0 { a.cos() } else { a.sin() }
        });
        let model = fit(&set, RankSpec::Fixed(2)).unwrap();
        let l = model.eigenvalues();
        assert_abs_diff_eq!(l[0].re, theta.cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(l[0].im, theta.sin(), epsilon = 1e-10);
        assert_eq!(l[1], l[0].conj());
        let x10 = model.reconstruct(10);
        assert_abs_diff_eq!(x10.state[0], 3.0f64.cos(), epsilon = 1e-8);
        assert_abs_diff_eq!(x10.state[1], 3.0f64.sin(), epsilon = 1e-8);
        assert!(x10.imag_ratio <= 1e-8);
    }

    #[test]
    fn spectrum_lines() {
        let model = DmdModel::from_parts(
            ComplexMatrix::from_element(3, 3, Complex64::new(1.0, 0.0)),
            DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0), Complex64::new(0.0, 1.0)]),
            DVector::from_element(3, Complex64::new(1.0, 0.0)),
            1.0,
            4,
        )
        .unwrap();
        let s = model.spectrum();
        assert_eq!(s[0].rate, Complex64::new(0.0, 0.0));
        assert_eq!(s[0].modulus, 1.0);
        assert_eq!(s[0].frequency, 0.0);
        assert_abs_diff_eq!(s[1].rate.re, -0.693147, epsilon = 1e-6);
        assert_abs_diff_eq!(s[2].frequency, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn zero_eigenvalue_excluded_from_forecast() {
        let model = DmdModel::from_parts(
            ComplexMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0].map(|x| Complex64::new(x, 0.0))),
            DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
            DVector::from_vec(vec![Complex64::new(2.0, 0.0), Complex64::new(3.0, 0.0)]),
            1.0,
            3,
        )
        .unwrap();
        let f = model.forecast(1.0).unwrap();
        assert_eq!(f.excluded_modes, vec![1]);
        assert_eq!(f.state.as_slice(), &[2.0, 0.0]);
        assert!(matches!(model.forecast(-1.0), Err(Error::Range(_))));
    }

    #[test]
    fn rank_deficiency_reported() {
        let set = series(3, 4, |i, _| i as f64 + 1.0);
        let err = fit(&set, RankSpec::Fixed(2)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 2, index: 2 }), "{err}");
        let one = series(3, 1, |_, _| 1.0);
        assert!(matches!(fit(&one, RankSpec::Fixed(1)), Err(Error::Dimension(_))));
    }

    #[test]
    fn bytes_round_trip() {
        let theta: f64 = 0.7;
        let set = series(3, 8, |i, k| (theta * k as f64 + i as f64).sin() * 0.9f64.powi(k as i32));
        let model = fit(&set, RankSpec::Fixed(2)).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"ROMK");
        let back = DmdModel::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        let mut bad = bytes.clone();
        bad[28] = b'X';
        assert!(matches!(DmdModel::from_bytes(&bad, "mem"), Err(Error::Format { .. })));
    }
}
