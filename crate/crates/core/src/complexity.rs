//! Analytic FLOP counts of the allocators and measured per-iteration cost.
//!
//! The counts assume the symmetric case `N_t = N_r = M = n` and a complex
//! multiply-add budget of 6 + 2 FLOPs. Measured times are reported in
//! separate fields and never mixed into the model.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::alloc::{gradient_step, Objective};
use crate::error::{Error, Result};
use crate::model::{generate_estimate, SystemConfig};
use crate::objective::{CouplingSource, CouplingTable, PowerVector};
use crate::precoders::{PrecoderKind, PrecoderSet};

/// Length-`n` complex inner product.
pub fn dot_flops(n: u64) -> u64 {
    8 * n - 2
}

/// Squared norm of a length-`n` complex vector.
pub fn norm_flops(n: u64) -> u64 {
    7 * n - 2
}

/// `41/2 n³ + 19 n² + 5/2 n + 4`.
pub fn flops_apa(n: u64) -> u64 {
    (41 * n.pow(3) + 38 * n.pow(2) + 5 * n + 8) / 2
}

/// `41/2 n³ + 19 n² + 19/2 n + 6`: APA plus one norm and two extra products.
pub fn flops_apar(n: u64) -> u64 {
    (41 * n.pow(3) + 38 * n.pow(2) + 19 * n + 12) / 2
}

/// FLOPs to score one exhaustive-search candidate: every SINR of the `n`
/// streams needs `n + 1` channel-precoder products.
pub fn es_candidate_flops(n: u64) -> u64 {
    n * (n + 1) * dot_flops(n) + 4 * n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Algorithm {
    Apa,
    Apar,
    /// Exhaustive search of conventional MU-MIMO (no common stream).
    EsSdma,
    /// Exhaustive search of the common fraction for RS.
    EsRs,
    /// Exhaustive search over every RS coefficient.
    FullGrid,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Apa => "rs-apa",
            Algorithm::Apar => "rs-apar",
            Algorithm::EsSdma => "sdma-es",
            Algorithm::EsRs => "rs-es",
            Algorithm::FullGrid => "rs-es-full",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlopReport {
    pub algorithm: Algorithm,
    /// Per iteration, or per candidate for the searches.
    pub flops_per_iteration: u64,
    /// Iterations, or candidates for the searches.
    pub iterations: u64,
    pub total: u128,
    pub big_o: &'static str,
}

impl FlopReport {
    fn new(algorithm: Algorithm, flops_per_iteration: u64, iterations: u64, big_o: &'static str) -> Self {
        FlopReport {
            algorithm,
            flops_per_iteration,
            iterations,
            total: u128::from(flops_per_iteration) * u128::from(iterations),
            big_o,
        }
    }

    pub fn apa(n: u64, iterations: u64) -> Self {
        Self::new(Algorithm::Apa, flops_apa(n), iterations, "O(I_a N_t (M+1)^2)")
    }

    pub fn apar(n: u64, iterations: u64) -> Self {
        Self::new(Algorithm::Apar, flops_apar(n), iterations, "O(I_a N_t (M+1)^2)")
    }

    /// Search over `candidates` power splits.
    pub fn search(algorithm: Algorithm, n: u64, candidates: u64) -> Result<Self> {
        let big_o = match algorithm {
            Algorithm::EsSdma => "O(N_t I_o^2 M^3)",
            Algorithm::EsRs | Algorithm::FullGrid => "O(N_t I_o^2 (M+1)^3)",
            _ => return Err(Error::Domain(format!("{} is not a search", algorithm.label()))),
        };
        Ok(Self::new(algorithm, es_candidate_flops(n), candidates, big_o))
    }
}

/// Order of growth of each allocation scheme, as `(scheme, order)`.
pub fn big_o_table() -> Vec<(&'static str, &'static str)> {
    vec![
        ("SDMA-ES", "O(N_t I_o^2 M^3)"),
        ("WMMSE", "O(I_w N_t M^3)"),
        ("RS-ES", "O(N_t I_o^2 (M+1)^3)"),
        ("RS-APA", "O(I_a N_t (M+1)^2)"),
        ("RS-APA-R", "O(I_a N_t (M+1)^2)"),
        ("CF", "O(N_t^3)"),
    ]
}

/// Median wall-clock cost of allocator iterations.
#[derive(Clone, Copy, Debug)]
pub struct IterationTiming {
    pub n: usize,
    /// Building the coupling table plus the first update.
    pub first: Duration,
    /// One update with the table cached.
    pub cached: Duration,
}

impl IterationTiming {
    pub fn ratio(&self) -> f64 {
        self.cached.as_secs_f64() / self.first.as_secs_f64()
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

/// Times `repetitions` runs of `iterations` APA-R updates on an `n x n` ZF
/// instance; the precoder itself is computed outside the timed region.
pub fn measure_iteration_cost(n: usize, iterations: usize, repetitions: usize, seed: u64) -> Result<IterationTiming> {
    if n == 0 || iterations < 2 || repetitions == 0 {
        return Err(Error::Config("timing needs n >= 1, two iterations and one repetition".into()));
    }
    let cfg = SystemConfig::symmetric(n, n, 1, 1).with_err_var(0.1).with_snr_db(10.0).with_seed(seed);
    let objective = Objective::Robust { err_var: cfg.err_var };
    let mut firsts = Vec::with_capacity(repetitions);
    let mut cached = Vec::with_capacity(repetitions * (iterations - 1));
    for r in 0..repetitions {
        let h = generate_estimate(&cfg, r as u64)?;
        let p = PrecoderSet::build(PrecoderKind::Zf, &cfg, &h)?;
        let mu = 1e-3;
        let start = Instant::now();
        let ct = CouplingTable::build(&cfg, &h, &p, CouplingSource::Estimate)?;
        let mut a = gradient_step(&PowerVector::zeros(n), &ct, objective, mu, Some(cfg.total_power))?;
        firsts.push(start.elapsed());
        for _ in 1..iterations {
            let t = Instant::now();
            a = gradient_step(&a, &ct, objective, mu, Some(cfg.total_power))?;
            cached.push(t.elapsed());
        }
        std::hint::black_box(&a);
    }
    Ok(IterationTiming { n, first: median(firsts), cached: median(cached) })
}
