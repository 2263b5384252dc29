//! Scenario configuration, channel generation and the RS transmit model.
//!
//! The channel known at the transmitter is the estimate `Ĥ`; the true channel
//! is `H = Ĥ + H̃`, where the error `H̃` has i.i.d. `CN(0, σ_e²)` entries. The
//! estimate entries are drawn `CN(0, 1 − σ_e²)` so that every entry of the
//! true channel has unit variance and the SNR (`E_tr / σ_n²`) means the same
//! thing across error-variance sweeps.
//!
//! Randomness is counter based: every draw is addressed by
//! `(master_seed, domain, index, segment)` and maps to its own ChaCha8
//! keystream window, so Monte-Carlo trials can be evaluated in any order and
//! on any number of workers with bitwise-identical results.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::PowerVector;
use crate::precoders::PrecoderSet;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Dimensions, powers and seed of one downlink scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Transmit antennas at the base station (`N_t`).
    pub n_tx: usize,
    /// Receive antennas of each user (`N_k`); its length is the user count `K`.
    pub rx_antennas_per_user: Vec<usize>,
    /// Private streams of each user (`M_k`).
    pub streams_per_user: Vec<usize>,
    /// Receiver noise power `σ_n²`.
    pub noise_var: f64,
    /// Per-entry CSIT error variance `σ_e²`.
    pub err_var: f64,
    /// Total transmit power `E_tr`.
    pub total_power: f64,
    pub master_seed: u64,
}

impl SystemConfig {
    /// `users` users with `rx` antennas and `streams` private streams each.
    pub fn symmetric(n_tx: usize, users: usize, rx: usize, streams: usize) -> Self {
        SystemConfig {
            n_tx,
            rx_antennas_per_user: vec![rx; users],
            streams_per_user: vec![streams; users],
            noise_var: 1.0,
            err_var: 0.0,
            total_power: 1.0,
            master_seed: 0,
        }
    }

    pub fn with_err_var(mut self, err_var: f64) -> Self {
        self.err_var = err_var;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    /// Sets `E_tr` so that `E_tr / σ_n²` equals the given SNR.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.total_power = self.noise_var * 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.total_power / self.noise_var).log10()
    }

    pub fn users(&self) -> usize {
        self.rx_antennas_per_user.len()
    }

    /// Total receive antennas `N_r`.
    pub fn n_rx(&self) -> usize {
        self.rx_antennas_per_user.iter().sum()
    }

    /// Total private streams `M`.
    pub fn n_streams(&self) -> usize {
        self.streams_per_user.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if self.n_tx == 0 {
            return cfg_err("n_tx must be at least 1".into());
        }
        if self.rx_antennas_per_user.is_empty() {
            return cfg_err("at least one user is required".into());
        }
        if self.rx_antennas_per_user.len() != self.streams_per_user.len() {
            return cfg_err(format!(
                "rx_antennas_per_user has {} entries but streams_per_user has {}",
                self.rx_antennas_per_user.len(),
                self.streams_per_user.len()
            ));
        }
        for (k, (&n_k, &m_k)) in self.rx_antennas_per_user.iter().zip(&self.streams_per_user).enumerate() {
            if n_k == 0 {
                return cfg_err(format!("user {k} has no receive antennas"));
            }
            if m_k > n_k {
                return cfg_err(format!("user {k} has {m_k} streams but only {n_k} antennas"));
            }
        }
        if self.n_streams() == 0 {
            return cfg_err("at least one private stream is required".into());
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return cfg_err(format!("noise_var must be positive, got {}", self.noise_var));
        }
        if !(0.0..=1.0).contains(&self.err_var) {
            return cfg_err(format!("err_var must lie in [0, 1], got {}", self.err_var));
        }
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return cfg_err(format!("total_power must be positive, got {}", self.total_power));
        }
        Ok(())
    }

    /// Row of `H` carrying each private stream: the first `M_k` antennas of
    /// user `k`, users in order.
    pub fn stream_rows(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.n_streams());
        let mut offset = 0;
        for (&n_k, &m_k) in self.rx_antennas_per_user.iter().zip(&self.streams_per_user) {
            rows.extend(offset..offset + m_k);
            offset += n_k;
        }
        rows
    }

    /// User index owning each private stream.
    pub fn stream_owner(&self) -> Vec<usize> {
        self.streams_per_user.iter().enumerate().flat_map(|(k, &m_k)| std::iter::repeat_n(k, m_k)).collect()
    }
}

/// One draw of the estimated channel and its CSIT error.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    /// `H`, always `estimate + error`.
    pub true_channel: CMatrix,
    /// `Ĥ`, what the transmitter knows.
    pub estimate: CMatrix,
    /// `H̃`.
    pub error: CMatrix,
}

impl ChannelRealization {
    pub fn from_parts(estimate: CMatrix, error: CMatrix) -> Result<Self> {
        if estimate.shape() != error.shape() {
            return Err(Error::Domain(format!("estimate is {:?} but error is {:?}", estimate.shape(), error.shape())));
        }
        Ok(ChannelRealization { true_channel: &estimate + &error, estimate, error })
    }
}

/// Independent random streams used by the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngDomain {
    Estimate,
    Error,
    Allocation,
    Oracle,
}

impl RngDomain {
    fn tag(self) -> u64 {
        match self {
            RngDomain::Estimate => 0x9e37_79b9_7f4a_7c15,
            RngDomain::Error => 0xbf58_476d_1ce4_e5b9,
            RngDomain::Allocation => 0x94d0_49bb_1331_11eb,
            RngDomain::Oracle => 0xd6e8_feb8_6659_fd93,
        }
    }
}

/// Keystream window `segment` of stream `index` in the given domain.
pub fn substream(master_seed: u64, domain: RngDomain, index: u64, segment: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ domain.tag());
    rng.set_stream(index);
    // 2^32 words per segment, far more than any single draw consumes
    rng.set_word_pos(u128::from(segment) << 32);
    rng
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let scale = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

pub fn complex_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMatrix {
    if var == 0.0 {
        return CMatrix::zeros(rows, cols);
    }
    // row-major fill keeps the draw order independent of nalgebra's storage
    let mut m = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_normal(rng, var);
        }
    }
    m
}

/// Channel estimate `Ĥ` for outer trial `channel_index`.
pub fn generate_estimate(cfg: &SystemConfig, channel_index: u64) -> Result<CMatrix> {
    cfg.validate()?;
    let mut rng = substream(cfg.master_seed, RngDomain::Estimate, channel_index, 0);
    Ok(complex_normal_matrix(&mut rng, cfg.n_rx(), cfg.n_tx, 1.0 - cfg.err_var))
}

/// CSIT error `H̃` for inner draw `error_index` of outer trial `channel_index`.
pub fn generate_error(cfg: &SystemConfig, channel_index: u64, error_index: u64) -> Result<CMatrix> {
    cfg.validate()?;
    let mut rng = substream(cfg.master_seed, RngDomain::Error, channel_index, error_index);
    Ok(complex_normal_matrix(&mut rng, cfg.n_rx(), cfg.n_tx, cfg.err_var))
}

/// Estimate and first error draw of trial `trial_index`.
pub fn generate_channel(cfg: &SystemConfig, trial_index: u64) -> Result<ChannelRealization> {
    let estimate = generate_estimate(cfg, trial_index)?;
    let error = generate_error(cfg, trial_index, 0)?;
    ChannelRealization::from_parts(estimate, error)
}

/// Rows of `channel` that carry the private streams, in stream order.
pub fn stream_channel(cfg: &SystemConfig, channel: &CMatrix) -> Result<CMatrix> {
    if channel.nrows() != cfg.n_rx() || channel.ncols() != cfg.n_tx {
        return Err(Error::Domain(format!(
            "channel is {}x{}, scenario expects {}x{}",
            channel.nrows(),
            channel.ncols(),
            cfg.n_rx(),
            cfg.n_tx
        )));
    }
    Ok(channel.select_rows(cfg.stream_rows().iter()))
}

/// The `(M+1) x M` matrix stacking an all-ones row over the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformMatrix {
    pub entries: DMatrix<f64>,
}

impl TransformMatrix {
    pub fn streams(&self) -> usize {
        self.entries.ncols()
    }

    /// `T·y`: the sum of all entries followed by the entries themselves.
    pub fn apply(&self, y: &CVector) -> Result<CVector> {
        let m = self.streams();
        if y.len() != m {
            return Err(Error::Domain(format!("transform expects {m} entries, got {}", y.len())));
        }
        let mut out = CVector::zeros(m + 1);
        for r in 0..=m {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..m {
                acc += y[c] * self.entries[(r, c)];
            }
            out[r] = acc;
        }
        Ok(out)
    }
}

pub fn build_transform(m: usize) -> Result<TransformMatrix> {
    if m == 0 {
        return Err(Error::Domain("transform needs at least one stream".into()));
    }
    let mut entries = DMatrix::zeros(m + 1, m);
    for c in 0..m {
        entries[(0, c)] = 1.0;
        entries[(c + 1, c)] = 1.0;
    }
    Ok(TransformMatrix { entries })
}

/// `x = a_c s_c p_c + Σ_m a_m s_m p_m`; `symbols` is `[s_c, s_1, …, s_M]`.
pub fn transmit_signal(p: &PrecoderSet, a: &PowerVector, symbols: &CVector) -> Result<CVector> {
    let m = p.streams();
    if a.len() != m + 1 || symbols.len() != m + 1 {
        return Err(Error::Domain(format!(
            "{m} streams need {} coefficients and symbols, got {} and {}",
            m + 1,
            a.len(),
            symbols.len()
        )));
    }
    let mut x = &p.common * (symbols[0] * a.common());
    for j in 0..m {
        x.axpy(symbols[j + 1] * a.private(j), &p.private.column(j), Complex64::new(1.0, 0.0));
    }
    Ok(x)
}
