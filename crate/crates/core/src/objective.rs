//! Closed-form MSE objectives of the adaptive allocators and their gradients.
//!
//! Both objectives measure `‖s − T·y‖²`, where `y` stacks the received
//! samples on the stream rows and `T` adds the combined row used for the
//! common symbol. With `φ^(i,q) = h_i p_q` and `φ^(i,c) = h_i p_c`:
//!
//! ```text
//! E[ε] = −2 a_c Σ_i Re φ^(i,c) − 2 Σ_j a_j Re φ^(j,j)
//!        + 2 a_c² Σ_i |φ^(i,c)|² + 2 Σ_j a_j² Σ_l |φ^(l,j)|²
//!        + 2 Σ_r a_r² Σ_{i<q} Re{φ^(i,r)* φ^(q,r)}
//!        + a_c² Σ_{l≠j} φ^(l,c)* φ^(j,c) + M(1 + 2σ_n²) + 1
//! ```
//!
//! The robust objective is the same expectation conditioned on `Ĥ`, which
//! adds `2 M σ_e² ‖p‖²` to the curvature of every coefficient. Each
//! coefficient enters through its own quadratic only, so the objective is a
//! separable quadratic `c + Σ_i (κ_i a_i² − 2 b_i a_i)` (see
//! [`SeparableQuadratic`]).

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    build_transform, complex_normal, complex_normal_matrix, stream_channel, substream, transmit_signal, CMatrix,
    CVector, RngDomain, SystemConfig,
};
use crate::precoders::PrecoderSet;

/// Power allocation coefficients `[a_c, a_1, …, a_M]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        PowerVector(coeffs)
    }

    pub fn zeros(streams: usize) -> Self {
        PowerVector(vec![0.0; streams + 1])
    }

    pub fn from_parts(common: f64, private: &[f64]) -> Self {
        let mut v = Vec::with_capacity(private.len() + 1);
        v.push(common);
        v.extend_from_slice(private);
        PowerVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of private streams `M`.
    pub fn streams(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn common(&self) -> f64 {
        self.0[0]
    }

    pub fn private(&self, j: usize) -> f64 {
        self.0[j + 1]
    }

    pub fn private_slice(&self) -> &[f64] {
        &self.0[1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `Σ a_i²`, the transmit power with unit-norm precoder columns.
    pub fn power(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    /// `δ = a_c² / Σ a_i²`; zero for the all-zero vector.
    pub fn common_fraction(&self) -> f64 {
        let p = self.power();
        if p > 0.0 {
            self.0[0] * self.0[0] / p
        } else {
            0.0
        }
    }
}

/// Which channel the coupling coefficients were computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingSource {
    Estimate,
    True,
}

/// Cached inner products between stream rows and precoder columns, plus the
/// aggregates every closed form, gradient and step bound reuses.
#[derive(Clone, Debug)]
pub struct CouplingTable {
    /// `φ^(i,q)`: row `i` of the channel times private column `q`.
    pub phi_private: CMatrix,
    /// `φ^(i,c)`: row `i` times the common precoder.
    pub phi_common: CVector,
    /// `Σ_l |φ^(l,j)|²` per private column.
    pub gain_private: Vec<f64>,
    /// `Σ_{q<r} f_{q,r}^(j) = Σ_{q<r} Re{φ^(q,j)* φ^(r,j)}` per private column.
    pub cross_private: Vec<f64>,
    /// `Σ_i |φ^(i,c)|²`.
    pub gain_common: f64,
    /// `f^(c) = Σ_{q≠r} φ^(q,c)* φ^(r,c)`; real because terms pair up as conjugates.
    pub cross_common: f64,
    /// `[‖p_c‖², ‖p_1‖², …, ‖p_M‖²]`, used by the robust terms.
    pub precoder_norms_sq: Vec<f64>,
    pub source: CouplingSource,
}

impl CouplingTable {
    /// Coupling of a full `N_r x N_t` channel: only the stream rows are used.
    pub fn build(cfg: &SystemConfig, channel: &CMatrix, p: &PrecoderSet, source: CouplingSource) -> Result<Self> {
        let streams = stream_channel(cfg, channel)?;
        Self::from_stream_channel(&streams, p, source)
    }

    /// Coupling of an `M x N_t` matrix whose rows already map onto the streams.
    pub fn from_stream_channel(streams: &CMatrix, p: &PrecoderSet, source: CouplingSource) -> Result<Self> {
        if streams.ncols() != p.n_tx() || streams.nrows() != p.streams() {
            return Err(Error::Domain(format!(
                "channel is {}x{} but precoders are {}x{}",
                streams.nrows(),
                streams.ncols(),
                p.n_tx(),
                p.streams()
            )));
        }
        let phi_private = streams * &p.private;
        let phi_common = streams * &p.common;
        Self::from_phi(phi_private, phi_common, p.column_norms_sq(), source)
    }

    /// Table from raw coupling coefficients, e.g. synthetic instances.
    pub fn from_phi(
        phi_private: CMatrix,
        phi_common: CVector,
        precoder_norms_sq: Vec<f64>,
        source: CouplingSource,
    ) -> Result<Self> {
        let m = phi_private.ncols();
        if phi_private.nrows() != m || phi_common.len() != m || precoder_norms_sq.len() != m + 1 {
            return Err(Error::Domain(format!(
                "coupling shapes disagree: phi {}x{}, common {}, norms {}",
                phi_private.nrows(),
                m,
                phi_common.len(),
                precoder_norms_sq.len()
            )));
        }
        let gain_private = (0..m).map(|j| phi_private.column(j).iter().map(|z| z.norm_sqr()).sum()).collect();
        let cross_private = (0..m)
            .map(|j| {
                let col = phi_private.column(j);
                let mut acc = 0.0;
                for q in 0..m {
                    for r in q + 1..m {
                        acc += (col[q].conj() * col[r]).re;
                    }
                }
                acc
            })
            .collect();
        let gain_common = phi_common.iter().map(|z| z.norm_sqr()).sum();
        let mut cross = Complex64::new(0.0, 0.0);
        for q in 0..m {
            for r in 0..m {
                if q != r {
                    cross += phi_common[q].conj() * phi_common[r];
                }
            }
        }
        Ok(CouplingTable {
            phi_private,
            phi_common,
            gain_private,
            cross_private,
            gain_common,
            cross_common: cross.re,
            precoder_norms_sq,
            source,
        })
    }

    pub fn streams(&self) -> usize {
        self.phi_private.ncols()
    }

    /// `Σ_i Re φ^(i,c)`.
    pub fn common_real_sum(&self) -> f64 {
        self.phi_common.iter().map(|z| z.re).sum()
    }

    /// `Re φ^(j,j)`.
    pub fn direct_real(&self, j: usize) -> f64 {
        self.phi_private[(j, j)].re
    }

    /// True when every coupling coefficient vanishes.
    pub fn is_zero(&self) -> bool {
        self.phi_private.iter().chain(self.phi_common.iter()).all(|z| z.norm_sqr() == 0.0)
    }

    fn check(&self, a: &PowerVector) -> Result<()> {
        if a.len() != self.streams() + 1 {
            return Err(Error::Domain(format!(
                "{} streams need {} coefficients, got {}",
                self.streams(),
                self.streams() + 1,
                a.len()
            )));
        }
        Ok(())
    }
}

fn check_err_var(err_var: f64) -> Result<()> {
    if !(err_var >= 0.0 && err_var.is_finite()) {
        return Err(Error::Domain(format!("err_var must be nonnegative, got {err_var}")));
    }
    Ok(())
}

/// `M(1 + 2σ_n²) + 1`, the MSE at `a = 0`.
pub fn mse_constant(streams: usize, noise_var: f64) -> f64 {
    streams as f64 * (1.0 + 2.0 * noise_var) + 1.0
}

/// Unconditional MSE evaluated on the channel the table was built from.
pub fn mse_apa(a: &PowerVector, ct: &CouplingTable, noise_var: f64) -> Result<f64> {
    mse_apar(a, ct, 0.0, noise_var)
}

/// MSE conditioned on the estimate, including the `M σ_e² ‖p‖²` terms.
pub fn mse_apar(a: &PowerVector, ct: &CouplingTable, err_var: f64, noise_var: f64) -> Result<f64> {
    ct.check(a)?;
    check_err_var(err_var)?;
    let m = ct.streams();
    let mf = m as f64;
    let ac = a.common();
    let norms = &ct.precoder_norms_sq;

    let mut mse = -2.0 * ac * ct.common_real_sum();
    for j in 0..m {
        mse -= 2.0 * a.private(j) * ct.direct_real(j);
    }
    for j in 0..m {
        let aj = a.private(j);
        mse += 2.0 * aj * aj * (ct.gain_private[j] + mf * err_var * norms[j + 1]);
    }
    mse += 2.0 * ac * ac * (ct.gain_common + mf * err_var * norms[0]);
    for r in 0..m {
        let ar = a.private(r);
        mse += 2.0 * ar * ar * ct.cross_private[r];
    }
    mse += ac * ac * ct.cross_common;
    Ok(mse + mse_constant(m, noise_var))
}

/// Gradient of [`mse_apa`].
pub fn grad_apa(a: &PowerVector, ct: &CouplingTable) -> Result<Vec<f64>> {
    ct.check(a)?;
    let m = ct.streams();
    let ac = a.common();
    let mut g = Vec::with_capacity(m + 1);
    g.push(4.0 * ac * ct.gain_common + 2.0 * ac * ct.cross_common - 2.0 * ct.common_real_sum());
    for i in 0..m {
        let ai = a.private(i);
        g.push(4.0 * ai * ct.gain_private[i] + 4.0 * ai * ct.cross_private[i] - 2.0 * ct.direct_real(i));
    }
    Ok(g)
}

/// Gradient of [`mse_apar`].
pub fn grad_apar(a: &PowerVector, ct: &CouplingTable, err_var: f64) -> Result<Vec<f64>> {
    ct.check(a)?;
    check_err_var(err_var)?;
    let m = ct.streams();
    let mf = m as f64;
    let ac = a.common();
    let norms = &ct.precoder_norms_sq;
    let mut g = Vec::with_capacity(m + 1);
    g.push(
        4.0 * ac * (ct.gain_common + mf * err_var * norms[0]) + 2.0 * ac * ct.cross_common - 2.0 * ct.common_real_sum(),
    );
    for i in 0..m {
        let ai = a.private(i);
        g.push(
            4.0 * ai * (ct.gain_private[i] + mf * err_var * norms[i + 1]) + 4.0 * ai * ct.cross_private[i]
                - 2.0 * ct.direct_real(i),
        );
    }
    Ok(g)
}

/// `c + Σ_i (κ_i a_i² − 2 b_i a_i)`, the separable form of both objectives.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableQuadratic {
    pub constant: f64,
    /// `κ_i`, half the second derivative along `a_i`.
    pub curvature: Vec<f64>,
    /// `b_i`.
    pub linear: Vec<f64>,
}

impl SeparableQuadratic {
    /// Quadratic of the robust objective; `err_var = 0` gives the plain one.
    pub fn from_coupling(ct: &CouplingTable, err_var: f64, noise_var: f64) -> Result<Self> {
        check_err_var(err_var)?;
        let m = ct.streams();
        let robust = 2.0 * m as f64 * err_var;
        let norms = &ct.precoder_norms_sq;
        let mut curvature = Vec::with_capacity(m + 1);
        let mut linear = Vec::with_capacity(m + 1);
        curvature.push(2.0 * ct.gain_common + ct.cross_common + robust * norms[0]);
        linear.push(ct.common_real_sum());
        for j in 0..m {
            curvature.push(2.0 * ct.gain_private[j] + 2.0 * ct.cross_private[j] + robust * norms[j + 1]);
            linear.push(ct.direct_real(j));
        }
        Ok(SeparableQuadratic { constant: mse_constant(m, noise_var), curvature, linear })
    }

    pub fn value(&self, a: &[f64]) -> f64 {
        self.constant
            + a.iter()
                .zip(self.curvature.iter().zip(&self.linear))
                .map(|(&x, (&k, &b))| k * x * x - 2.0 * b * x)
                .sum::<f64>()
    }

    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        a.iter().zip(self.curvature.iter().zip(&self.linear)).map(|(&x, (&k, &b))| 2.0 * k * x - 2.0 * b).collect()
    }

    /// Second derivatives `∂²E/∂a_i²`.
    pub fn second_derivatives(&self) -> Vec<f64> {
        self.curvature.iter().map(|k| 2.0 * k).collect()
    }
}

/// Closed-form minimizer of the relaxed (unconstrained) objective.
#[derive(Clone, Debug)]
pub struct Minimizer {
    /// `a_i^(o) = b_i / κ_i`.
    pub coeffs: PowerVector,
    /// Contribution `κ_i a_i² − 2 b_i a_i = −b_i² / κ_i` of each coefficient at its minimum.
    pub min_terms: Vec<f64>,
    /// Objective value at the minimizer.
    pub mse_min: f64,
}

/// Minimizer of the plain (`err_var = 0`) or robust objective.
pub fn unconstrained_minimizer(ct: &CouplingTable, err_var: f64, noise_var: f64) -> Result<Minimizer> {
    let quad = SeparableQuadratic::from_coupling(ct, err_var, noise_var)?;
    if let Some(i) = quad.curvature.iter().position(|&k| k.is_nan() || k <= 0.0) {
        return Err(Error::Degenerate(format!("coefficient {i} has curvature {}", quad.curvature[i])));
    }
    let coeffs: Vec<f64> = quad.linear.iter().zip(&quad.curvature).map(|(b, k)| b / k).collect();
    let min_terms: Vec<f64> = quad.linear.iter().zip(&quad.curvature).map(|(b, k)| -b * b / k).collect();
    let mse_min = quad.constant + min_terms.iter().sum::<f64>();
    Ok(Minimizer { coeffs: PowerVector::new(coeffs), min_terms, mse_min })
}

/// Excess conditional MSE of `a_o + a_e` over the robust minimizer `a_o`.
///
/// For a separable quadratic the cross terms `2κ_i a_o,i a_e,i` cancel the
/// linear terms exactly, leaving `Σ κ_i a_e,i²`, which is nonnegative for any
/// perturbation.
pub fn excess_over_minimizer(quad: &SeparableQuadratic, perturbation: &[f64]) -> f64 {
    perturbation.iter().zip(&quad.curvature).map(|(e, k)| k * e * e).sum()
}

/// Channel model sampled by [`mse_oracle`].
#[derive(Clone, Copy, Debug)]
pub enum OracleChannel<'a> {
    /// Fixed `M x N_t` stream channel.
    Fixed(&'a CMatrix),
    /// `Ĥ + H̃` with a fresh `H̃ ~ CN(0, err_var)` per draw.
    Conditional { estimate: &'a CMatrix, err_var: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Monte-Carlo estimate of `E‖s − T y‖²` by direct simulation of the link.
///
/// Draws unit-variance symbols, `CN(0, σ_n²)` noise and, for the conditional
/// variant, a CSIT error per sample. Does not touch the coupling table.
pub fn mse_oracle(
    a: &PowerVector,
    channel: OracleChannel<'_>,
    p: &PrecoderSet,
    noise_var: f64,
    n_draws: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    let m = p.streams();
    let (base, err_var) = match channel {
        OracleChannel::Fixed(h) => (h, 0.0),
        OracleChannel::Conditional { estimate, err_var } => {
            check_err_var(err_var)?;
            (estimate, err_var)
        }
    };
    if base.nrows() != m || base.ncols() != p.n_tx() {
        return Err(Error::Domain(format!(
            "oracle channel is {}x{}, precoders need {}x{}",
            base.nrows(),
            base.ncols(),
            m,
            p.n_tx()
        )));
    }
    if n_draws < 2 {
        return Err(Error::Domain("oracle needs at least two draws".into()));
    }
    let t = build_transform(m)?;
    let mut rng = substream(seed, RngDomain::Oracle, 0, 0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_draws {
        let s = CVector::from_fn(m + 1, |_, _| complex_normal(&mut rng, 1.0));
        let x = transmit_signal(p, a, &s)?;
        let mut y = if err_var > 0.0 {
            let h = base + complex_normal_matrix(&mut rng, m, p.n_tx(), err_var);
            h * x
        } else {
            base * x
        };
        for yi in y.iter_mut() {
            *yi += complex_normal(&mut rng, noise_var);
        }
        let err = (s - t.apply(&y)?).norm_squared();
        sum += err;
        sum_sq += err * err;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(OracleEstimate { mean, std_error: (var / n).sqrt(), draws: n_draws })
}

/// Random nonnegative coefficients with `Σ a² ≈ scale²`, for tests and demos.
pub fn random_coefficients<R: Rng + ?Sized>(rng: &mut R, streams: usize, scale: f64) -> PowerVector {
    PowerVector::new((0..=streams).map(|_| rng.random::<f64>() * scale).collect())
}
