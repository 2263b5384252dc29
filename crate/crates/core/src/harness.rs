//! Experiment presets and CSV-emitting sweeps.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{run_allocator, AllocOptions, Objective, StepRule, DEFAULT_ITERATIONS, FIXED_STEP};
use crate::complexity::{flops_apa, flops_apar, measure_iteration_cost, FlopReport};
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::objective::{CouplingSource, CouplingTable};
use crate::precoders::{PrecoderKind, PrecoderSet};
use crate::rates::{average_rates, ergodic_sum_rate, with_pool, ChannelDraw, RateModel, RateOptions, Scheme};

/// Header of the sweep tables.
pub const SWEEP_HEADER: &str =
    "snr_db,err_var,scheme,esr,common_term,private_sum,ac_sq_fraction,n_channels,n_errors,seed";

/// One experiment, loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: SystemConfig,
    pub precoder: PrecoderKind,
    pub schemes: Vec<Scheme>,
    pub snr_grid_db: Vec<f64>,
    pub err_var_grid: Vec<f64>,
    pub n_channels: usize,
    pub n_errors: usize,
    /// Fixed step size; `None` uses half the stability bound.
    #[serde(default)]
    pub mu: Option<f64>,
    pub iterations: usize,
    #[serde(default)]
    pub rate_model: RateModel,
    /// Grid step of the common-fraction searches.
    pub delta_step: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl ExperimentSpec {
    /// Four transmit antennas, two users with two antennas and two streams
    /// each, ZF, `σ_e² = 0.1`, SNR 0 to 30 dB, 200 x 50 draws.
    pub fn snr_sweep_preset() -> Self {
        ExperimentSpec {
            scenario: SystemConfig::symmetric(4, 2, 2, 2).with_err_var(0.1).with_seed(1),
            precoder: PrecoderKind::Zf,
            schemes: vec![Scheme::ConvUpa, Scheme::RsEsUpa, Scheme::RsApa, Scheme::RsApar],
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            err_var_grid: vec![0.1],
            n_channels: 200,
            n_errors: 50,
            mu: Some(FIXED_STEP),
            iterations: DEFAULT_ITERATIONS,
            rate_model: RateModel::TrueChannel,
            delta_step: 0.1,
            output: None,
            jobs: None,
        }
    }

    /// The same scenario at 20 dB over `σ_e² ∈ {0, 0.05, 0.1, 0.2}`.
    pub fn error_sweep_preset() -> Self {
        ExperimentSpec {
            schemes: vec![Scheme::ConvUpa, Scheme::RsApa, Scheme::RsApar],
            snr_grid_db: vec![20.0],
            err_var_grid: vec![0.0, 0.05, 0.1, 0.2],
            ..Self::snr_sweep_preset()
        }
    }

    /// Allocator traces at 10 dB.
    pub fn convergence_preset() -> Self {
        ExperimentSpec {
            schemes: vec![Scheme::RsApa, Scheme::RsApar],
            snr_grid_db: vec![10.0],
            n_channels: 50,
            n_errors: 20,
            ..Self::snr_sweep_preset()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.schemes.is_empty() || self.snr_grid_db.is_empty() || self.err_var_grid.is_empty() {
            return Err(Error::Config("schemes and grids must be non-empty".into()));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return Err(Error::Config(format!("scheme `{s}` listed twice")));
            }
        }
        if let Some(s) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("SNR {s} is not finite")));
        }
        if let Some(e) = self.err_var_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Config(format!("err_var {e} outside [0, 1]")));
        }
        if self.n_channels == 0 || self.n_errors == 0 {
            return Err(Error::Config("n_channels and n_errors must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::Config(format!("mu must be positive, got {mu}")));
            }
        }
        if !(self.delta_step > 0.0 && self.delta_step <= 0.5) {
            return Err(Error::Config(format!("delta_step must lie in (0, 0.5], got {}", self.delta_step)));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn alloc_options(&self) -> AllocOptions {
        AllocOptions {
            step: match self.mu {
                Some(mu) => StepRule::Fixed(mu),
                None => StepRule::default(),
            },
            iterations: self.iterations,
            ..AllocOptions::default()
        }
    }

    pub fn rate_options(&self) -> RateOptions {
        RateOptions {
            precoder: self.precoder,
            model: self.rate_model,
            alloc: self.alloc_options(),
            delta_step: self.delta_step,
            jobs: self.jobs,
            ..RateOptions::default()
        }
    }

    fn scenario_at(&self, snr_db: f64, err_var: f64) -> SystemConfig {
        self.scenario.clone().with_err_var(err_var).with_snr_db(snr_db)
    }
}

/// One row of a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub err_var: f64,
    pub scheme: Scheme,
    pub esr: f64,
    pub common_term: f64,
    pub private_sum: f64,
    pub ac_sq_fraction: f64,
    pub n_channels: usize,
    pub n_errors: usize,
    pub seed: u64,
}

fn sweep(spec: &ExperimentSpec, points: &[(f64, f64)]) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let opts = spec.rate_options();
    let mut rows = Vec::new();
    for &(snr_db, err_var) in points {
        let cfg = spec.scenario_at(snr_db, err_var);
        for &scheme in &spec.schemes {
            let r = ergodic_sum_rate(&cfg, scheme, spec.n_channels, spec.n_errors, &opts)?;
            rows.push(SweepRow {
                snr_db,
                err_var,
                scheme,
                esr: r.ergodic_sum_rate,
                common_term: r.common_term,
                private_sum: r.private_sum,
                ac_sq_fraction: r.ac_sq_fraction,
                n_channels: r.n_channel_draws,
                n_errors: r.n_error_draws,
                seed: cfg.master_seed,
            });
        }
    }
    Ok(rows)
}

/// Rows per (SNR, scheme) at the first error variance of the spec.
pub fn run_snr_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    let err_var = *spec.err_var_grid.first().ok_or_else(|| Error::Config("empty err_var grid".into()))?;
    let points: Vec<_> = spec.snr_grid_db.iter().map(|&s| (s, err_var)).collect();
    sweep(spec, &points)
}

/// Rows per (error variance, scheme) at the first SNR of the spec.
pub fn run_error_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    let snr = *spec.snr_grid_db.first().ok_or_else(|| Error::Config("empty SNR grid".into()))?;
    let points: Vec<_> = spec.err_var_grid.iter().map(|&e| (snr, e)).collect();
    sweep(spec, &points)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Mean objective and sum rate after each allocator iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub iteration: usize,
    pub scheme: Scheme,
    pub mse: f64,
    pub esr: f64,
    pub common_term: f64,
    pub private_sum: f64,
    pub ac_sq_fraction: f64,
    pub snr_db: f64,
    pub err_var: f64,
    pub n_channels: usize,
    pub n_errors: usize,
    pub seed: u64,
}

struct Trace {
    mse: Vec<f64>,
    common: Vec<Vec<f64>>,
    private: Vec<f64>,
    ac: Vec<f64>,
}

/// Allocator traces at the first grid point; `mu` overrides the spec.
/// Only the adaptive schemes have a trajectory; others are rejected.
pub fn run_convergence(spec: &ExperimentSpec, mu: Option<f64>) -> Result<Vec<ConvergenceRow>> {
    spec.validate()?;
    let snr_db = spec.snr_grid_db[0];
    let err_var = spec.err_var_grid[0];
    let cfg = spec.scenario_at(snr_db, err_var);
    let mut alloc = spec.alloc_options();
    if let Some(mu) = mu {
        alloc.step = StepRule::Fixed(mu);
    }
    let iters = alloc.iterations;
    let mut rows = Vec::new();
    for &scheme in &spec.schemes {
        let objective = match scheme {
            Scheme::RsApa => Objective::Plain,
            Scheme::RsApar => Objective::Robust { err_var },
            other => return Err(Error::Config(format!("scheme `{other}` has no iterations to trace"))),
        };
        let traces: Vec<Result<Trace>> = with_pool(spec.jobs, || {
            (0..spec.n_channels as u64)
                .into_par_iter()
                .map(|c| {
                    let d = ChannelDraw::generate(&cfg, c, spec.n_errors)?;
                    let p = PrecoderSet::build(spec.precoder, &cfg, &d.estimate_full)?;
                    let ct = CouplingTable::from_stream_channel(&d.estimate, &p, CouplingSource::Estimate)?;
                    let run = run_allocator(&ct, &cfg, objective, &alloc)?;
                    let mut common = Vec::with_capacity(iters);
                    let mut private = Vec::with_capacity(iters);
                    let mut ac = Vec::with_capacity(iters);
                    for a in &run.trajectory {
                        let avg = average_rates(&cfg, &d.estimate, &d.truths, &p, a, spec.rate_model, false)?;
                        private.push(avg.private.iter().sum());
                        common.push(avg.common);
                        ac.push(a.common_fraction());
                    }
                    Ok(Trace { mse: run.mse_history, common, private, ac })
                })
                .collect()
        })?;
        let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
        let n = traces.len() as f64;
        for t in 0..iters {
            let mut common = vec![0.0; cfg.users()];
            let (mut mse, mut private, mut ac) = (0.0, 0.0, 0.0);
            for tr in &traces {
                mse += tr.mse[t];
                private += tr.private[t];
                ac += tr.ac[t];
                for (acc, v) in common.iter_mut().zip(&tr.common[t]) {
                    *acc += v;
                }
            }
            let common_term = common.iter().map(|c| c / n).fold(f64::INFINITY, f64::min);
            rows.push(ConvergenceRow {
                iteration: t + 1,
                scheme,
                mse: mse / n,
                esr: common_term + private / n,
                common_term,
                private_sum: private / n,
                ac_sq_fraction: ac / n,
                snr_db,
                err_var,
                n_channels: spec.n_channels,
                n_errors: spec.n_errors,
                seed: cfg.master_seed,
            });
        }
    }
    Ok(rows)
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Model FLOPs plus measured time per iteration. The two `*_wallclock_us`
/// columns are measurements and differ from run to run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub n: u64,
    pub scheme: &'static str,
    pub flops_per_iteration: u64,
    pub iterations: u64,
    pub total_flops: u128,
    pub big_o: &'static str,
    pub first_iter_wallclock_us: f64,
    pub cached_iter_wallclock_us: f64,
}

/// Rows per (n, scheme) for the adaptive allocators; `repetitions = 0`
/// skips the timing and leaves the wall-clock columns at zero.
pub fn run_complexity_table(
    n_grid: &[u64],
    iterations: u64,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<ComplexityRow>> {
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::Config("n grid must be non-empty and positive".into()));
    }
    let mut rows = Vec::new();
    for &n in n_grid {
        let (first, cached) = if repetitions > 0 {
            let t = measure_iteration_cost(n as usize, iterations.max(2) as usize, repetitions, seed)?;
            (t.first.as_secs_f64() * 1e6, t.cached.as_secs_f64() * 1e6)
        } else {
            (0.0, 0.0)
        };
        for report in [FlopReport::apa(n, iterations), FlopReport::apar(n, iterations)] {
            rows.push(ComplexityRow {
                n,
                scheme: report.algorithm.label(),
                flops_per_iteration: report.flops_per_iteration,
                iterations: report.iterations,
                total_flops: report.total,
                big_o: report.big_o,
                first_iter_wallclock_us: first,
                cached_iter_wallclock_us: cached,
            });
        }
        debug_assert!(flops_apar(n) > flops_apa(n));
    }
    Ok(rows)
}

pub fn write_complexity_csv<W: Write>(rows: &[ComplexityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one self-check of [`run_validation`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Gradient, convexity and Monte-Carlo checks of the closed forms on random
/// instances of the scenario.
pub fn run_validation(scenario: &SystemConfig, instances: usize, oracle_draws: usize) -> Result<Vec<ValidationCheck>> {
    use crate::model::{generate_channel, stream_channel, substream, RngDomain};
    use crate::objective::{grad_apar, mse_apar, mse_oracle, random_coefficients, OracleChannel, SeparableQuadratic};

    scenario.validate()?;
    if instances == 0 || oracle_draws < 2 {
        return Err(Error::Config("validation needs instances and at least two oracle draws".into()));
    }
    let err_var = if scenario.err_var > 0.0 { scenario.err_var } else { 0.1 };
    let cfg = scenario.clone().with_err_var(err_var);
    let m = cfg.n_streams();
    let mut rng = substream(cfg.master_seed, RngDomain::Allocation, u64::MAX, 0);
    let mut grad_worst: f64 = 0.0;
    let mut curv_min = f64::INFINITY;
    let mut oracle_worst: f64 = 0.0;
    for i in 0..instances {
        let kind = [PrecoderKind::Mf, PrecoderKind::Zf, PrecoderKind::Mmse][i % 3];
        let real = generate_channel(&cfg, i as u64)?;
        let est = stream_channel(&cfg, &real.estimate)?;
        let p = PrecoderSet::build(kind, &cfg, &real.estimate)?;
        let ct = CouplingTable::from_stream_channel(&est, &p, CouplingSource::Estimate)?;
        let mut a = random_coefficients(&mut rng, m, 1.0);
        crate::alloc::project(&mut a, cfg.total_power);

        let g = grad_apar(&a, &ct, err_var)?;
        let h = 1e-6;
        let mut num = 0.0;
        for (j, gj) in g.iter().enumerate() {
            let mut up = a.clone();
            let mut dn = a.clone();
            up.as_mut_slice()[j] += h;
            dn.as_mut_slice()[j] -= h;
            let fd =
                (mse_apar(&up, &ct, err_var, cfg.noise_var)? - mse_apar(&dn, &ct, err_var, cfg.noise_var)?) / (2.0 * h);
            num += (fd - gj).powi(2);
        }
        let den: f64 = g.iter().map(|x| x * x).sum();
        grad_worst = grad_worst.max((num / den.max(f64::MIN_POSITIVE)).sqrt());

        let quad = SeparableQuadratic::from_coupling(&ct, err_var, cfg.noise_var)?;
        curv_min = quad.curvature.iter().cloned().fold(curv_min, f64::min);

        let closed = mse_apar(&a, &ct, err_var, cfg.noise_var)?;
        let o = mse_oracle(
            &a,
            OracleChannel::Conditional { estimate: &est, err_var },
            &p,
            cfg.noise_var,
            oracle_draws,
            cfg.master_seed.wrapping_add(i as u64),
        )?;
        oracle_worst = oracle_worst.max((closed - o.mean).abs() / o.std_error);
    }
    Ok(vec![
        ValidationCheck {
            name: "gradient",
            passed: grad_worst < 1e-6,
            detail: format!("worst relative finite-difference error {grad_worst:.2e}"),
        },
        ValidationCheck {
            name: "convexity",
            passed: curv_min > 0.0,
            detail: format!("smallest curvature {curv_min:.3e}"),
        },
        ValidationCheck {
            name: "oracle",
            // worst case over all instances, so wider than a single 3-sigma band
            passed: oracle_worst <= 4.0,
            detail: format!("worst deviation {oracle_worst:.2} standard errors over {oracle_draws} draws"),
        },
    ])
}
