//! Linear private precoders (MF, ZF, MMSE) and the SVD common precoder.
//!
//! Every column is normalized to unit Euclidean norm, and its global phase is
//! fixed so the result does not depend on the SVD backend: a private column
//! `p_j` is rotated until `ĥ_j p_j` is real and nonnegative, the common
//! precoder until `Σ_i ĥ_i p_c` is. When that reference is zero the first
//! nonzero entry of the column is made real and nonnegative instead.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stream_channel, CMatrix, CVector, SystemConfig};

/// Below this relative singular value a Gram matrix is treated as singular.
const RANK_TOL: f64 = 1e-12;
const PHASE_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderKind {
    Mf,
    Zf,
    Mmse,
}

impl PrecoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PrecoderKind::Mf => "mf",
            PrecoderKind::Zf => "zf",
            PrecoderKind::Mmse => "mmse",
        }
    }
}

impl std::str::FromStr for PrecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(PrecoderKind::Mf),
            "zf" => Ok(PrecoderKind::Zf),
            "mmse" => Ok(PrecoderKind::Mmse),
            other => Err(Error::Config(format!("unknown precoder `{other}`"))),
        }
    }
}

/// Unit-norm common and private precoder columns `[p_c, p_1, …, p_M]`.
#[derive(Clone, Debug)]
pub struct PrecoderSet {
    pub common: CVector,
    /// `N_t x M`, one column per private stream.
    pub private: CMatrix,
    pub kind: PrecoderKind,
}

impl PrecoderSet {
    /// Builds both precoders from the estimate `Ĥ` (never the true channel).
    pub fn build(kind: PrecoderKind, cfg: &SystemConfig, estimate: &CMatrix) -> Result<Self> {
        let streams = stream_channel(cfg, estimate)?;
        let private = make_private_precoder(kind, &streams, cfg.noise_var, cfg.total_power)?;
        let mut common = make_common_precoder(estimate)?;
        let reference = (&streams * &common).sum();
        align_phase(&mut common, reference);
        Ok(PrecoderSet { common, private, kind })
    }

    pub fn streams(&self) -> usize {
        self.private.ncols()
    }

    pub fn n_tx(&self) -> usize {
        self.common.len()
    }

    /// Squared column norms `[‖p_c‖², ‖p_1‖², …]`.
    pub fn column_norms_sq(&self) -> Vec<f64> {
        std::iter::once(self.common.norm_squared())
            .chain(self.private.column_iter().map(|c| c.norm_squared()))
            .collect()
    }
}

/// Private precoder before column normalization. `streams` holds one row of
/// `Ĥ` per private stream.
pub fn private_precoder_unnormalized(
    kind: PrecoderKind,
    streams: &CMatrix,
    noise_var: f64,
    total_power: f64,
) -> Result<CMatrix> {
    let m = streams.nrows();
    if m == 0 || streams.ncols() == 0 {
        return Err(Error::Domain("empty channel".into()));
    }
    let herm = streams.adjoint();
    match kind {
        PrecoderKind::Mf => Ok(herm),
        PrecoderKind::Zf => {
            if m > streams.ncols() {
                return Err(Error::Domain(format!(
                    "zero forcing needs streams <= antennas, got {m} > {}",
                    streams.ncols()
                )));
            }
            let sv = streams.singular_values();
            let max = sv.max();
            if max.is_nan() || max <= 0.0 || sv.min() <= RANK_TOL * max {
                return Err(Error::Singular("channel estimate is rank deficient, zero forcing undefined".into()));
            }
            let gram = streams * &herm;
            let inv = gram.try_inverse().ok_or_else(|| Error::Singular("Gram matrix not invertible".into()))?;
            Ok(herm * inv)
        }
        PrecoderKind::Mmse => {
            if !(noise_var > 0.0 && total_power > 0.0) {
                return Err(Error::Domain("MMSE loading needs positive powers".into()));
            }
            let loading = m as f64 * noise_var / total_power;
            let gram = streams * &herm + DMatrix::identity(m, m) * Complex64::new(loading, 0.0);
            let inv =
                gram.try_inverse().ok_or_else(|| Error::Singular("regularized Gram matrix not invertible".into()))?;
            Ok(herm * inv)
        }
    }
}

/// Column-normalized private precoder, `N_t x M`.
pub fn make_private_precoder(
    kind: PrecoderKind,
    streams: &CMatrix,
    noise_var: f64,
    total_power: f64,
) -> Result<CMatrix> {
    let mut p = private_precoder_unnormalized(kind, streams, noise_var, total_power)?;
    for j in 0..p.ncols() {
        let norm = p.column(j).norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Domain(format!("precoder column {j} has norm {norm}")));
        }
        let mut col = p.column(j) / Complex64::new(norm, 0.0);
        let reference = streams.row(j).transpose().dot(&col);
        align_phase(&mut col, reference);
        p.set_column(j, &col);
    }
    Ok(p)
}

/// Right singular vector of `estimate` for its largest singular value.
pub fn make_common_precoder(estimate: &CMatrix) -> Result<CVector> {
    if estimate.is_empty() || estimate.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::Domain("common precoder of a zero channel".into()));
    }
    let svd = estimate.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Domain("SVD did not return right singular vectors".into()))?;
    let top = svd.singular_values.imax();
    let mut v: CVector = v_t.row(top).adjoint();
    let norm = v.norm();
    v /= Complex64::new(norm, 0.0);
    let reference = (estimate * &v).sum();
    align_phase(&mut v, reference);
    Ok(v)
}

/// Rotates `v` so that `reference · e^{iθ}` is real nonnegative; falls back
/// to the first nonzero entry of `v` when the reference vanishes.
fn align_phase(v: &mut CVector, reference: Complex64) {
    let anchor = if reference.norm() > PHASE_TOL {
        reference
    } else {
        match v.iter().find(|z| z.norm() > PHASE_TOL) {
            Some(&z) => z,
            None => return,
        }
    };
    let rot = anchor.conj() / anchor.norm();
    *v *= rot;
}
