//! SINRs, instantaneous rates and the nested Monte-Carlo ergodic sum rate.
//!
//! Every private stream is received on its own antenna row (see
//! [`SystemConfig::stream_rows`]). The common symbol is decoded on each of
//! a user's rows, and the user's common rate is the smallest of them, since
//! the common message must be decodable wherever the user looks for it.

use nalgebra::{Dyn, Matrix, Storage, U1};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{
    grid_search_delta, grid_search_full, random_allocation_with, run_apa, run_apar, uniform_allocation, AllocOptions,
    Goal, PrivateRule, DEFAULT_GRID_BUDGET,
};
use crate::error::{Error, Result};
use crate::model::{
    complex_normal_matrix, generate_error, generate_estimate, stream_channel, substream, CMatrix, RngDomain,
    SystemConfig,
};
use crate::objective::{CouplingSource, CouplingTable, PowerVector};
use crate::precoders::{PrecoderKind, PrecoderSet};

/// Which channel enters the signal term of each SINR.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModel {
    /// True channel in numerator and denominator.
    #[default]
    TrueChannel,
    /// Estimate in the numerator, true channel in the interference term.
    PaperLiteral,
}

fn gain<S>(h: &CMatrix, row: usize, p: &Matrix<Complex64, Dyn, U1, S>) -> f64
where
    S: Storage<Complex64, Dyn, U1>,
{
    h.row(row).transpose().dot(p).norm_sqr()
}

fn check_shapes(streams: &CMatrix, p: &PrecoderSet, a: &PowerVector) -> Result<()> {
    if streams.nrows() != p.streams() || streams.ncols() != p.n_tx() || a.len() != p.streams() + 1 {
        return Err(Error::Domain(format!(
            "channel {}x{}, precoders {}x{}, {} coefficients",
            streams.nrows(),
            streams.ncols(),
            p.n_tx(),
            p.streams(),
            a.len()
        )));
    }
    Ok(())
}

/// Interference-plus-noise on `row` from every private stream, optionally skipping one.
fn private_interference(h: &CMatrix, row: usize, p: &PrecoderSet, a: &PowerVector, skip: Option<usize>) -> f64 {
    (0..p.streams())
        .filter(|&i| Some(i) != skip)
        .map(|i| a.private(i).powi(2) * gain(h, row, &p.private.column(i)))
        .sum()
}

/// `γ_c = a_c² |h p_c|² / (Σ_i a_i² |h p_i|² + σ²)` on stream row `row`.
///
/// `signal` is the channel used in the numerator, `interference` the one in
/// the denominator; both are `M x N_t` stream channels.
pub fn sinr_common(
    row: usize,
    signal: &CMatrix,
    interference: &CMatrix,
    p: &PrecoderSet,
    a: &PowerVector,
    noise_var: f64,
) -> Result<f64> {
    check_shapes(signal, p, a)?;
    check_shapes(interference, p, a)?;
    let num = a.common().powi(2) * gain(signal, row, &p.common);
    Ok(num / (private_interference(interference, row, p, a, None) + noise_var))
}

/// `γ_k = a_k² |h_k p_k|² / (Σ_{i≠k} a_i² |h_k p_i|² + σ²)`, common stream removed by SIC.
pub fn sinr_private(
    k: usize,
    signal: &CMatrix,
    interference: &CMatrix,
    p: &PrecoderSet,
    a: &PowerVector,
    noise_var: f64,
) -> Result<f64> {
    check_shapes(signal, p, a)?;
    check_shapes(interference, p, a)?;
    let num = a.private(k).powi(2) * gain(signal, k, &p.private.column(k));
    Ok(num / (private_interference(interference, k, p, a, Some(k)) + noise_var))
}

/// `log2(1 + γ)`.
pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Rates of one channel use.
#[derive(Clone, Debug, PartialEq)]
pub struct InstantRates {
    /// Common rate per stream row.
    pub common_per_row: Vec<f64>,
    pub private: Vec<f64>,
}

impl InstantRates {
    /// Common rate of each user: the minimum over its rows.
    pub fn common_per_user(&self, owner: &[usize], users: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; users];
        for (r, &k) in owner.iter().enumerate() {
            out[k] = out[k].min(self.common_per_row[r]);
        }
        for x in &mut out {
            if !x.is_finite() {
                *x = 0.0;
            }
        }
        out
    }
}

/// Rates of the RS transmission on stream channels.
pub fn instantaneous_rates(
    estimate: &CMatrix,
    true_channel: &CMatrix,
    p: &PrecoderSet,
    a: &PowerVector,
    noise_var: f64,
    model: RateModel,
) -> Result<InstantRates> {
    let signal = match model {
        RateModel::TrueChannel => true_channel,
        RateModel::PaperLiteral => estimate,
    };
    let m = p.streams();
    let mut common_per_row = Vec::with_capacity(m);
    let mut private = Vec::with_capacity(m);
    for k in 0..m {
        common_per_row.push(rate(sinr_common(k, signal, true_channel, p, a, noise_var)?));
        private.push(rate(sinr_private(k, signal, true_channel, p, a, noise_var)?));
    }
    Ok(InstantRates { common_per_row, private })
}

/// Private rates of conventional MU-MIMO: no common stream, no SIC, only
/// the private precoder and coefficients.
pub fn conventional_rates(
    estimate: &CMatrix,
    true_channel: &CMatrix,
    private_precoder: &CMatrix,
    coeffs: &[f64],
    noise_var: f64,
    model: RateModel,
) -> Result<Vec<f64>> {
    let m = private_precoder.ncols();
    if coeffs.len() != m || true_channel.nrows() != m || true_channel.ncols() != private_precoder.nrows() {
        return Err(Error::Domain("conventional rates: shape mismatch".into()));
    }
    let signal = match model {
        RateModel::TrueChannel => true_channel,
        RateModel::PaperLiteral => estimate,
    };
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let g = |h: &CMatrix, i: usize| h.row(k).transpose().dot(&private_precoder.column(i)).norm_sqr();
        let num = coeffs[k].powi(2) * g(signal, k);
        let den: f64 = (0..m).filter(|&i| i != k).map(|i| coeffs[i].powi(2) * g(true_channel, i)).sum();
        out.push(rate(num / (den + noise_var)));
    }
    Ok(out)
}

/// Transmission strategies compared in the sum-rate experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Conventional MU-MIMO, uniform private power.
    ConvUpa,
    /// Conventional MU-MIMO, random private power.
    ConvRandom,
    /// RS with the common coefficient forced to zero and uniform private power.
    RsUpaAc0,
    /// RS, uniform private power, common fraction by exhaustive search.
    RsEsUpa,
    /// RS, random private power, common fraction by exhaustive search.
    RsEsRandom,
    /// RS, every coefficient by exhaustive search over the power simplex.
    RsEsFull,
    RsRandom,
    RsApa,
    RsApar,
}

impl Scheme {
    pub const ALL: [Scheme; 9] = [
        Scheme::ConvUpa,
        Scheme::ConvRandom,
        Scheme::RsUpaAc0,
        Scheme::RsEsUpa,
        Scheme::RsEsRandom,
        Scheme::RsEsFull,
        Scheme::RsRandom,
        Scheme::RsApa,
        Scheme::RsApar,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::ConvUpa => "conv-upa",
            Scheme::ConvRandom => "conv-random",
            Scheme::RsUpaAc0 => "rs-upa-ac0",
            Scheme::RsEsUpa => "rs-es-upa",
            Scheme::RsEsRandom => "rs-es-random",
            Scheme::RsEsFull => "rs-es-full",
            Scheme::RsRandom => "rs-random",
            Scheme::RsApa => "rs-apa",
            Scheme::RsApar => "rs-apar",
        }
    }

    pub fn is_conventional(self) -> bool {
        matches!(self, Scheme::ConvUpa | Scheme::ConvRandom)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|sc| sc.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// Everything the per-channel evaluation needs besides the scenario.
#[derive(Clone, Debug)]
pub struct RateOptions {
    pub precoder: PrecoderKind,
    pub model: RateModel,
    pub alloc: AllocOptions,
    /// Common-fraction grid step of the exhaustive searches.
    pub delta_step: f64,
    /// Squared-fraction step of [`Scheme::RsEsFull`].
    pub full_grid_step: f64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            precoder: PrecoderKind::Zf,
            model: RateModel::default(),
            alloc: AllocOptions::fixed_step(),
            delta_step: 0.1,
            full_grid_step: 0.1,
            jobs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub scheme: Scheme,
    /// `E[R̄_{c,k}]`, outer mean of each user's average common rate.
    pub avg_common: Vec<f64>,
    /// `E[R̄_m]` per private stream.
    pub avg_private: Vec<f64>,
    /// `min_k E[R̄_{c,k}]`.
    pub common_term: f64,
    /// `Σ_m E[R̄_m]`.
    pub private_sum: f64,
    /// `S_r = common_term + private_sum`.
    pub ergodic_sum_rate: f64,
    /// Mean `a_c² / Σ a²` of the allocations used.
    pub ac_sq_fraction: f64,
    pub n_channel_draws: usize,
    pub n_error_draws: usize,
    /// Channel draws dropped because the precoder or allocator failed.
    pub failed_draws: usize,
}

/// Rates of one channel averaged over its error draws.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAverages {
    /// `R̄_{c,k}` per user; zero for conventional schemes.
    pub common: Vec<f64>,
    /// `R̄_m` per private stream.
    pub private: Vec<f64>,
}

impl ChannelAverages {
    /// `min_k R̄_{c,k} + Σ_m R̄_m` for this channel alone.
    pub fn sum_rate(&self) -> f64 {
        let min_common = self.common.iter().cloned().fold(f64::INFINITY, f64::min);
        min_common + self.private.iter().sum::<f64>()
    }
}

/// An estimate and the true channels of its error draws.
#[derive(Clone, Debug)]
pub struct ChannelDraw {
    pub estimate_full: CMatrix,
    /// Stream rows of the estimate.
    pub estimate: CMatrix,
    /// Stream rows of `Ĥ + H̃` for each error draw.
    pub truths: Vec<CMatrix>,
}

impl ChannelDraw {
    pub fn generate(cfg: &SystemConfig, channel_index: u64, n_errors: usize) -> Result<Self> {
        let estimate_full = generate_estimate(cfg, channel_index)?;
        let estimate = stream_channel(cfg, &estimate_full)?;
        let truths = (0..n_errors as u64)
            .map(|e| {
                let err = generate_error(cfg, channel_index, e)?;
                stream_channel(cfg, &(&estimate_full + err))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelDraw { estimate_full, estimate, truths })
    }
}

/// Averages of RS rates, or of conventional rates when `conventional` is set,
/// over the draws in `truths`.
pub fn average_rates(
    cfg: &SystemConfig,
    estimate: &CMatrix,
    truths: &[CMatrix],
    p: &PrecoderSet,
    a: &PowerVector,
    model: RateModel,
    conventional: bool,
) -> Result<ChannelAverages> {
    let owner = cfg.stream_owner();
    let users = cfg.users();
    let mut common = vec![0.0; users];
    let mut private = vec![0.0; p.streams()];
    for h in truths {
        if conventional {
            let r = conventional_rates(estimate, h, &p.private, a.private_slice(), cfg.noise_var, model)?;
            for (acc, v) in private.iter_mut().zip(r) {
                *acc += v;
            }
        } else {
            let r = instantaneous_rates(estimate, h, p, a, cfg.noise_var, model)?;
            for (acc, v) in common.iter_mut().zip(r.common_per_user(&owner, users)) {
                *acc += v;
            }
            for (acc, v) in private.iter_mut().zip(&r.private) {
                *acc += v;
            }
        }
    }
    let n = truths.len() as f64;
    common.iter_mut().chain(private.iter_mut()).for_each(|x| *x /= n);
    Ok(ChannelAverages { common, private })
}

/// Error draws the transmitter generates itself to score exhaustive-search
/// candidates. They share the error statistics but not the samples of the
/// evaluation draws.
fn planning_truths(cfg: &SystemConfig, channel_index: u64, estimate: &CMatrix, n: usize) -> Vec<CMatrix> {
    let mut rng = substream(cfg.master_seed, RngDomain::Allocation, channel_index, 1);
    (0..n)
        .map(|_| estimate + complex_normal_matrix(&mut rng, estimate.nrows(), estimate.ncols(), cfg.err_var))
        .collect()
}

/// Allocation a scheme picks for one channel estimate.
pub fn scheme_allocation(
    scheme: Scheme,
    cfg: &SystemConfig,
    channel_index: u64,
    estimate: &CMatrix,
    p: &PrecoderSet,
    opts: &RateOptions,
    n_planning: usize,
) -> Result<PowerVector> {
    let mut alloc_rng = substream(cfg.master_seed, RngDomain::Allocation, channel_index, 0);
    let plan = || planning_truths(cfg, channel_index, estimate, n_planning);
    match scheme {
        Scheme::ConvUpa | Scheme::RsUpaAc0 => uniform_allocation(cfg, 0.0),
        Scheme::ConvRandom => {
            let mut a = random_allocation_with(cfg, &mut alloc_rng);
            a.as_mut_slice()[0] = 0.0;
            crate::alloc::project(&mut a, cfg.total_power);
            Ok(a)
        }
        Scheme::RsRandom => Ok(random_allocation_with(cfg, &mut alloc_rng)),
        Scheme::RsApa | Scheme::RsApar => {
            let ct = CouplingTable::from_stream_channel(estimate, p, CouplingSource::Estimate)?;
            let run = if scheme == Scheme::RsApa {
                run_apa(&ct, cfg, &opts.alloc)?
            } else {
                run_apar(&ct, cfg, &opts.alloc)?
            };
            let a = run.final_coeffs().clone();
            if a.power() == 0.0 {
                return Err(Error::Degenerate("allocator returned the zero vector".into()));
            }
            Ok(a)
        }
        Scheme::RsEsUpa | Scheme::RsEsRandom => {
            let rule = if scheme == Scheme::RsEsUpa {
                PrivateRule::Uniform
            } else {
                // a different private direction per channel
                PrivateRule::Random { seed: cfg.master_seed ^ channel_index.wrapping_mul(0x2545_f491_4f6c_dd1d) }
            };
            let truths = plan();
            let search = grid_search_delta(cfg, rule, opts.delta_step, Goal::Maximize, |a| {
                Ok(average_rates(cfg, estimate, &truths, p, a, opts.model, false)?.sum_rate())
            })?;
            Ok(search.coeffs)
        }
        Scheme::RsEsFull => {
            let truths = plan();
            let search = grid_search_full(
                cfg.n_streams(),
                opts.full_grid_step,
                cfg.total_power,
                DEFAULT_GRID_BUDGET,
                Goal::Maximize,
                |a| Ok(average_rates(cfg, estimate, &truths, p, a, opts.model, false)?.sum_rate()),
            )?;
            Ok(search.coeffs)
        }
    }
}

struct ChannelResult {
    averages: ChannelAverages,
    ac_fraction: f64,
}

fn evaluate_channel(
    cfg: &SystemConfig,
    scheme: Scheme,
    channel_index: u64,
    n_errors: usize,
    opts: &RateOptions,
) -> Result<ChannelResult> {
    let d = ChannelDraw::generate(cfg, channel_index, n_errors)?;
    let p = PrecoderSet::build(opts.precoder, cfg, &d.estimate_full)?;
    let a = scheme_allocation(scheme, cfg, channel_index, &d.estimate, &p, opts, n_errors)?;
    let averages = average_rates(cfg, &d.estimate, &d.truths, &p, &a, opts.model, scheme.is_conventional())?;
    Ok(ChannelResult { averages, ac_fraction: a.common_fraction() })
}

pub(crate) fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Ergodic sum rate of one scheme over `n_channels` estimates, each
/// averaged over `n_errors` CSIT-error draws.
///
/// Channels are evaluated in parallel, but partial results are combined in
/// channel order, so the report does not depend on the worker count.
pub fn ergodic_sum_rate(
    cfg: &SystemConfig,
    scheme: Scheme,
    n_channels: usize,
    n_errors: usize,
    opts: &RateOptions,
) -> Result<RateReport> {
    cfg.validate()?;
    if n_channels == 0 || n_errors == 0 {
        return Err(Error::Config("need at least one channel and one error draw".into()));
    }
    let results: Vec<Result<ChannelResult>> = with_pool(opts.jobs, || {
        (0..n_channels as u64).into_par_iter().map(|c| evaluate_channel(cfg, scheme, c, n_errors, opts)).collect()
    })?;

    let users = cfg.users();
    let m = cfg.n_streams();
    let mut common = vec![0.0; users];
    let mut private = vec![0.0; m];
    let mut ac = 0.0;
    let mut ok = 0usize;
    let mut failed = 0usize;
    for r in results {
        match r {
            Ok(r) => {
                ok += 1;
                for (acc, v) in common.iter_mut().zip(&r.averages.common) {
                    *acc += v;
                }
                for (acc, v) in private.iter_mut().zip(&r.averages.private) {
                    *acc += v;
                }
                ac += r.ac_fraction;
            }
            Err(e) if e.is_numerical() => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if ok == 0 {
        return Err(Error::Degenerate(format!("all {n_channels} channel draws failed")));
    }
    let n = ok as f64;
    common.iter_mut().chain(private.iter_mut()).for_each(|x| *x /= n);
    let common_term = common.iter().cloned().fold(f64::INFINITY, f64::min);
    let private_sum: f64 = private.iter().sum();
    Ok(RateReport {
        scheme,
        avg_common: common,
        avg_private: private,
        common_term,
        private_sum,
        ergodic_sum_rate: common_term + private_sum,
        ac_sq_fraction: ac / n,
        n_channel_draws: ok,
        n_error_draws: n_errors,
        failed_draws: failed,
    })
}
