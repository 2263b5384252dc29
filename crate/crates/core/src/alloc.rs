//! Gradient-descent power allocators (APA, APA-R), their step-size bounds,
//! and the baseline allocations they are compared against.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{substream, RngDomain, SystemConfig};
use crate::objective::{grad_apa, grad_apar, mse_apa, mse_apar, CouplingTable, PowerVector};

/// Coefficient magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Step size used by the reference sum-rate experiments.
pub const FIXED_STEP: f64 = 0.004;
pub const DEFAULT_ITERATIONS: usize = 30;
pub const DEFAULT_STEP_FRACTION: f64 = 0.5;
/// Largest candidate count [`grid_search_full`] accepts unless told otherwise.
pub const DEFAULT_GRID_BUDGET: u128 = 2_000_000;

/// Which objective the allocator descends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// Unconditional MSE (APA).
    Plain,
    /// MSE conditioned on the estimate (APA-R).
    Robust { err_var: f64 },
}

impl Objective {
    fn err_var(self) -> f64 {
        match self {
            Objective::Plain => 0.0,
            Objective::Robust { err_var } => err_var,
        }
    }

    pub fn mse(self, a: &PowerVector, ct: &CouplingTable, noise_var: f64) -> Result<f64> {
        match self {
            Objective::Plain => mse_apa(a, ct, noise_var),
            Objective::Robust { err_var } => mse_apar(a, ct, err_var, noise_var),
        }
    }

    pub fn gradient(self, a: &PowerVector, ct: &CouplingTable) -> Result<Vec<f64>> {
        match self {
            Objective::Plain => grad_apa(a, ct),
            Objective::Robust { err_var } => grad_apar(a, ct, err_var),
        }
    }
}

/// Stability limits of the gradient recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct StepBounds {
    /// `λ_j`; the private recursion contracts iff `μ < 1/(2λ_j)`.
    pub lambda_private: Vec<f64>,
    /// `λ_c`; the common recursion contracts iff `μ < 1/λ_c`.
    pub lambda_common: f64,
    /// `min(1/λ_c, 1/(2λ_j))` over the positive `λ`s.
    pub mu_max: f64,
}

impl StepBounds {
    /// False when some `λ` is not positive, i.e. the objective is flat or
    /// concave along that coefficient.
    pub fn is_stable(&self) -> bool {
        self.lambda_common > 0.0 && self.lambda_private.iter().all(|&l| l > 0.0)
    }
}

/// Step bounds of the plain or robust objective.
///
/// The error of each coefficient evolves as `e[t+1] = (1 − 2μκ) e[t]` with
/// `κ` half its second derivative, so `λ_j = κ_j / 2` and `λ_c = κ_c`.
pub fn step_bounds(ct: &CouplingTable, objective: Objective) -> Result<StepBounds> {
    let err_var = objective.err_var();
    if !(err_var >= 0.0 && err_var.is_finite()) {
        return Err(Error::Domain(format!("err_var must be nonnegative, got {err_var}")));
    }
    let m = ct.streams();
    let robust = m as f64 * err_var;
    let norms = &ct.precoder_norms_sq;
    let lambda_private: Vec<f64> =
        (0..m).map(|j| ct.gain_private[j] + ct.cross_private[j] + robust * norms[j + 1]).collect();
    let lambda_common = 2.0 * ct.gain_common + ct.cross_common + 2.0 * robust * norms[0];
    let mut mu_max = f64::INFINITY;
    if lambda_common > 0.0 {
        mu_max = mu_max.min(1.0 / lambda_common);
    }
    for &l in &lambda_private {
        if l > 0.0 {
            mu_max = mu_max.min(1.0 / (2.0 * l));
        }
    }
    Ok(StepBounds { lambda_private, lambda_common, mu_max })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// `μ = fraction · mu_max`.
    Auto {
        fraction: f64,
    },
    Fixed(f64),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Auto { fraction: DEFAULT_STEP_FRACTION }
    }
}

#[derive(Clone, Debug)]
pub struct AllocOptions {
    pub step: StepRule,
    /// Length of the trajectory, including the starting point.
    pub iterations: usize,
    /// Clamp to nonnegative and rescale to `Σ a² = E_tr` after each update.
    pub projection: bool,
    /// Starting point; the zero vector when `None`.
    pub start: Option<PowerVector>,
    /// Largest coefficient change below which the run counts as converged.
    pub tolerance: f64,
}

impl Default for AllocOptions {
    fn default() -> Self {
        AllocOptions {
            step: StepRule::default(),
            iterations: DEFAULT_ITERATIONS,
            projection: true,
            start: None,
            tolerance: 1e-12,
        }
    }
}

impl AllocOptions {
    /// Fixed `μ = 0.004`, 30 iterations, projection on.
    pub fn fixed_step() -> Self {
        AllocOptions { step: StepRule::Fixed(FIXED_STEP), ..Self::default() }
    }

    /// Projection off, for comparing against the closed-form minimizer.
    pub fn unprojected(iterations: usize) -> Self {
        AllocOptions { iterations, projection: false, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct AllocatorRun {
    /// `a[1], …, a[I_t]`, starting point first.
    pub trajectory: Vec<PowerVector>,
    /// Objective at each trajectory entry.
    pub mse_history: Vec<f64>,
    pub step_size: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `mu_max` of the objective that was descended.
    pub bound_used: f64,
}

impl AllocatorRun {
    pub fn final_coeffs(&self) -> &PowerVector {
        self.trajectory.last().expect("trajectory is never empty")
    }

    pub fn final_mse(&self) -> f64 {
        *self.mse_history.last().expect("history is never empty")
    }
}

/// Clamps negatives to zero and rescales by `β = sqrt(E_tr / Σ a²)`.
/// Leaves an all-zero vector untouched.
pub fn project(a: &mut PowerVector, total_power: f64) {
    for x in a.as_mut_slice() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let p = a.power();
    if p > 0.0 {
        let beta = (total_power / p).sqrt();
        for x in a.as_mut_slice() {
            *x *= beta;
        }
    }
}

/// One update `a − μ∇E`, projected onto `Σ a² = target` when a target is given.
pub fn gradient_step(
    a: &PowerVector,
    ct: &CouplingTable,
    objective: Objective,
    mu: f64,
    target: Option<f64>,
) -> Result<PowerVector> {
    let g = objective.gradient(a, ct)?;
    let mut next = a.clone();
    for (x, gi) in next.as_mut_slice().iter_mut().zip(&g) {
        *x -= mu * gi;
    }
    if next.as_slice().iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT) {
        return Err(Error::Divergence { mu, iteration: 0 });
    }
    if let Some(total_power) = target {
        project(&mut next, total_power);
    }
    Ok(next)
}

/// Runs `iterations − 1` gradient updates from the start point.
pub fn run_allocator(
    ct: &CouplingTable,
    cfg: &SystemConfig,
    objective: Objective,
    opts: &AllocOptions,
) -> Result<AllocatorRun> {
    if opts.iterations == 0 {
        return Err(Error::Config("allocator needs at least one iteration".into()));
    }
    let m = ct.streams();
    let bounds = step_bounds(ct, objective)?;
    let mu = match opts.step {
        StepRule::Fixed(mu) => mu,
        StepRule::Auto { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Config(format!("step fraction must lie in (0, 1), got {fraction}")));
            }
            fraction * bounds.mu_max
        }
    };
    let mut a = match &opts.start {
        Some(s) if s.len() != m + 1 => {
            return Err(Error::Domain(format!("start has {} coefficients, need {}", s.len(), m + 1)))
        }
        Some(s) => s.clone(),
        None => PowerVector::zeros(m),
    };
    let degenerate = ct.is_zero();
    if !degenerate && !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Config(format!("step size must be positive and finite, got {mu}")));
    }

    let mut trajectory = Vec::with_capacity(opts.iterations);
    let mut mse_history = Vec::with_capacity(opts.iterations);
    mse_history.push(objective.mse(&a, ct, cfg.noise_var)?);
    trajectory.push(a.clone());
    let mut converged = degenerate;
    for t in 1..opts.iterations {
        if !degenerate {
            let target = opts.projection.then_some(cfg.total_power);
            let next = gradient_step(&a, ct, objective, mu, target).map_err(|e| match e {
                Error::Divergence { mu, .. } => Error::Divergence { mu, iteration: t + 1 },
                e => e,
            })?;
            let change = next.as_slice().iter().zip(a.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            converged = change <= opts.tolerance;
            a = next;
        }
        mse_history.push(objective.mse(&a, ct, cfg.noise_var)?);
        trajectory.push(a.clone());
    }
    Ok(AllocatorRun {
        trajectory,
        mse_history,
        step_size: mu,
        iterations: opts.iterations,
        converged,
        bound_used: bounds.mu_max,
    })
}

/// APA on whichever channel the table was built from.
pub fn run_apa(ct: &CouplingTable, cfg: &SystemConfig, opts: &AllocOptions) -> Result<AllocatorRun> {
    run_allocator(ct, cfg, Objective::Plain, opts)
}

/// APA-R with the scenario's CSIT error variance; `ct` should come from `Ĥ`.
pub fn run_apar(ct: &CouplingTable, cfg: &SystemConfig, opts: &AllocOptions) -> Result<AllocatorRun> {
    run_allocator(ct, cfg, Objective::Robust { err_var: cfg.err_var }, opts)
}

fn check_fraction(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Domain(format!("common fraction must lie in [0, 1], got {delta}")));
    }
    Ok(())
}

/// `a_c = sqrt(δ E_tr)` and `a_i = sqrt((1 − δ) E_tr / M)`.
pub fn uniform_allocation(cfg: &SystemConfig, delta: f64) -> Result<PowerVector> {
    check_fraction(delta)?;
    let m = cfg.n_streams();
    if m == 0 {
        return Err(Error::Domain("no private streams".into()));
    }
    let private = ((1.0 - delta) * cfg.total_power / m as f64).sqrt();
    Ok(PowerVector::from_parts((delta * cfg.total_power).sqrt(), &vec![private; m]))
}

/// Uniform nonnegative draws rescaled to `Σ a² = E_tr`.
pub fn random_allocation_with<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> PowerVector {
    let m = cfg.n_streams();
    loop {
        let mut a = PowerVector::new((0..=m).map(|_| rng.random::<f64>()).collect());
        if a.power() > 0.0 {
            project(&mut a, cfg.total_power);
            return a;
        }
    }
}

pub fn random_allocation(cfg: &SystemConfig, seed: u64) -> PowerVector {
    random_allocation_with(cfg, &mut substream(seed, RngDomain::Allocation, 0, 0))
}

/// Random private coefficients carrying `(1 − δ) E_tr`, common gets `δ E_tr`.
pub fn random_private_allocation<R: Rng + ?Sized>(cfg: &SystemConfig, delta: f64, rng: &mut R) -> Result<PowerVector> {
    check_fraction(delta)?;
    let m = cfg.n_streams();
    let mut private: Vec<f64> = loop {
        let v: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        if v.iter().any(|&x| x > 0.0) {
            break v;
        }
    };
    let norm_sq: f64 = private.iter().map(|x| x * x).sum();
    let scale = ((1.0 - delta) * cfg.total_power / norm_sq).sqrt();
    for x in &mut private {
        *x *= scale;
    }
    Ok(PowerVector::from_parts((delta * cfg.total_power).sqrt(), &private))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Goal {
    Minimize,
    Maximize,
}

impl Goal {
    fn better(self, candidate: f64, best: f64) -> bool {
        match self {
            Goal::Minimize => candidate < best,
            Goal::Maximize => candidate > best,
        }
    }
}

/// How the private power is split for a given common fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrivateRule {
    Uniform,
    /// One random private direction, shared by every `δ` on the grid.
    Random {
        seed: u64,
    },
}

/// `{0, step, 2·step, …}` up to 1, with 1 appended when the step does not divide it.
pub fn delta_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::Config(format!("grid step must lie in (0, 0.5], got {step}")));
    }
    let n = (1.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(1.0)).collect();
    if 1.0 - grid[n] > 1e-9 {
        grid.push(1.0);
    }
    Ok(grid)
}

#[derive(Clone, Debug)]
pub struct DeltaSearch {
    pub delta: f64,
    pub coeffs: PowerVector,
    pub value: f64,
    /// Every `(δ, metric)` pair evaluated, in grid order.
    pub evaluated: Vec<(f64, f64)>,
}

/// Exhaustive search over the common fraction; ties go to the smaller `δ`.
pub fn grid_search_delta<F>(
    cfg: &SystemConfig,
    rule: PrivateRule,
    step: f64,
    goal: Goal,
    mut metric: F,
) -> Result<DeltaSearch>
where
    F: FnMut(&PowerVector) -> Result<f64>,
{
    let grid = delta_grid(step)?;
    let mut best: Option<(f64, PowerVector, f64)> = None;
    let mut evaluated = Vec::with_capacity(grid.len());
    for &delta in &grid {
        let a = match rule {
            PrivateRule::Uniform => uniform_allocation(cfg, delta)?,
            PrivateRule::Random { seed } => {
                random_private_allocation(cfg, delta, &mut substream(seed, RngDomain::Allocation, 0, 0))?
            }
        };
        let v = metric(&a)?;
        evaluated.push((delta, v));
        let replace = match &best {
            None => true,
            Some((_, _, bv)) => goal.better(v, *bv),
        };
        if replace {
            best = Some((delta, a, v));
        }
    }
    let (delta, coeffs, value) = best.expect("grid is never empty");
    Ok(DeltaSearch { delta, coeffs, value, evaluated })
}

fn grid_divisions(step: f64) -> Result<u64> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("grid step must lie in (0, 1], got {step}")));
    }
    let g = (1.0 / step).round();
    if (g * step - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("grid step {step} does not divide 1")));
    }
    Ok(g as u64)
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Points of the discretized power simplex: compositions of `1/step` into
/// `M + 1` nonnegative parts, `C(1/step + M, M)`.
pub fn candidate_count(streams: usize, step: f64) -> Result<u128> {
    let g = grid_divisions(step)?;
    Ok(binomial(g + streams as u64, streams as u64))
}

/// Count quoted for 12 streams at step 0.001. It does not follow from the
/// composition count and is kept only for reference.
pub const QUOTED_ES_CANDIDATES: u128 = 5_005_000;

#[derive(Clone, Debug)]
pub struct FullSearch {
    pub coeffs: PowerVector,
    pub value: f64,
    pub candidates: u128,
}

/// Exhaustive search over every coefficient vector with squared fractions
/// on the `step` lattice; ties go to the first candidate in lexicographic
/// order of the fractions.
pub fn grid_search_full<F>(
    streams: usize,
    step: f64,
    total_power: f64,
    budget: u128,
    goal: Goal,
    mut metric: F,
) -> Result<FullSearch>
where
    F: FnMut(&PowerVector) -> Result<f64>,
{
    let candidates = candidate_count(streams, step)?;
    if candidates > budget {
        return Err(Error::Budget { count: candidates, budget });
    }
    let g = grid_divisions(step)? as usize;
    let parts = streams + 1;
    let mut counts = vec![0usize; parts];
    let mut best: Option<(PowerVector, f64)> = None;

    // Walk the compositions recursively: fill slots left to right, the last
    // slot takes whatever remains.
    #[allow(clippy::too_many_arguments)]
    fn walk<F>(
        slot: usize,
        remaining: usize,
        counts: &mut Vec<usize>,
        g: usize,
        total_power: f64,
        goal: Goal,
        metric: &mut F,
        best: &mut Option<(PowerVector, f64)>,
    ) -> Result<()>
    where
        F: FnMut(&PowerVector) -> Result<f64>,
    {
        let last = counts.len() - 1;
        if slot == last {
            counts[last] = remaining;
            let a = PowerVector::new(counts.iter().map(|&c| (c as f64 / g as f64 * total_power).sqrt()).collect());
            let v = metric(&a)?;
            let replace = match best {
                None => true,
                Some((_, bv)) => goal.better(v, *bv),
            };
            if replace {
                *best = Some((a, v));
            }
            return Ok(());
        }
        for c in 0..=remaining {
            counts[slot] = c;
            walk(slot + 1, remaining - c, counts, g, total_power, goal, metric, best)?;
        }
        Ok(())
    }

    walk(0, g, &mut counts, g, total_power, goal, &mut metric, &mut best)?;
    let (coeffs, value) = best.expect("at least one candidate");
    Ok(FullSearch { coeffs, value, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_estimate, CMatrix, CVector};
    use crate::objective::{unconstrained_minimizer, CouplingSource};
    use crate::precoders::{PrecoderKind, PrecoderSet};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn scalar_table(phi: f64, phi_c: f64) -> CouplingTable {
        CouplingTable::from_phi(
            CMatrix::from_element(1, 1, Complex64::new(phi, 0.0)),
            CVector::from_element(1, Complex64::new(phi_c, 0.0)),
            vec![1.0, 1.0],
            CouplingSource::True,
        )
        .unwrap()
    }

    fn instance(trial: u64, err_var: f64) -> (SystemConfig, CouplingTable) {
        let cfg = SystemConfig::symmetric(4, 2, 2, 2).with_err_var(err_var).with_snr_db(10.0).with_seed(21);
        let h = generate_estimate(&cfg, trial).unwrap();
        let p = PrecoderSet::build(PrecoderKind::Zf, &cfg, &h).unwrap();
        let ct = CouplingTable::build(&cfg, &h, &p, CouplingSource::Estimate).unwrap();
        (cfg, ct)
    }

    #[test]
    fn scalar_bounds() {
        let b = step_bounds(&scalar_table(1.0, 0.0), Objective::Plain).unwrap();
        assert_eq!(b.lambda_private, vec![1.0]);
        assert_eq!(b.mu_max, 0.5);
        assert!(!b.is_stable());
    }

    #[test]
    fn robust_bounds_add_the_error_terms() {
        for trial in 0..5 {
            let (_, ct) = instance(trial, 0.1);
            let plain = step_bounds(&ct, Objective::Plain).unwrap();
            assert_eq!(step_bounds(&ct, Objective::Robust { err_var: 0.0 }).unwrap(), plain);
            let robust = step_bounds(&ct, Objective::Robust { err_var: 0.1 }).unwrap();
            for j in 0..4 {
                let extra = robust.lambda_private[j] - plain.lambda_private[j];
                assert_abs_diff_eq!(extra, 4.0 * 0.1 * ct.precoder_norms_sq[j + 1], epsilon = 1e-12);
            }
            assert!(robust.mu_max < plain.mu_max);
        }
    }

    #[test]
    fn unprojected_scalar_recursion_is_geometric() {
        let ct = scalar_table(1.0, 1.0);
        let cfg = SystemConfig::symmetric(1, 1, 1, 1);
        let opts = AllocOptions { step: StepRule::Fixed(0.1), ..AllocOptions::unprojected(20) };
        let run = run_apa(&ct, &cfg, &opts).unwrap();
        let target = unconstrained_minimizer(&ct, 0.0, 1.0).unwrap().coeffs.private(0);
        // a[t] = a_o (1 − (1 − 4μλ)^(t−1)) from a zero start
        let ratio: f64 = 1.0 - 4.0 * 0.1 * 1.0;
        for (t, a) in run.trajectory.iter().enumerate() {
            let expected = target * (1.0 - ratio.powi(t as i32));
            assert_abs_diff_eq!(a.private(0), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_channel_stays_at_start() {
        let ct = scalar_table(0.0, 0.0);
        let cfg = SystemConfig::symmetric(1, 1, 1, 1);
        let run = run_apa(&ct, &cfg, &AllocOptions::default()).unwrap();
        assert!(run.trajectory.iter().all(|a| a.power() == 0.0));
        assert_eq!(run.trajectory.len(), DEFAULT_ITERATIONS);
    }

    #[test]
    fn projection_holds_the_power_constraint() {
        for trial in 0..10 {
            let (cfg, ct) = instance(trial, 0.1);
            for run in [
                run_apa(&ct, &cfg, &AllocOptions::default()).unwrap(),
                run_apar(&ct, &cfg, &AllocOptions::fixed_step()).unwrap(),
            ] {
                assert_eq!(run.trajectory.len(), run.iterations);
                assert_eq!(run.mse_history.len(), run.iterations);
                for a in &run.trajectory[1..] {
                    assert!((a.power() - cfg.total_power).abs() < 1e-10);
                    assert!(a.as_slice().iter().all(|&x| x >= 0.0));
                }
            }
        }
    }

    #[test]
    fn robust_without_error_matches_plain() {
        let (cfg, ct) = instance(3, 0.0);
        let a = run_apa(&ct, &cfg, &AllocOptions::default()).unwrap();
        let b = run_apar(&ct, &cfg, &AllocOptions::default()).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn unprojected_descent_is_monotone() {
        for trial in 0..10 {
            let (cfg, ct) = instance(trial, 0.1);
            let run = run_apar(&ct, &cfg, &AllocOptions::unprojected(200)).unwrap();
            for w in run.mse_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn minimizer_is_a_fixed_point() {
        let (cfg, ct) = instance(1, 0.0);
        let min = unconstrained_minimizer(&ct, 0.0, cfg.noise_var).unwrap();
        let opts = AllocOptions { start: Some(min.coeffs.clone()), ..AllocOptions::unprojected(10) };
        let run = run_apa(&ct, &cfg, &opts).unwrap();
        for a in &run.trajectory {
            for (x, y) in a.as_slice().iter().zip(min.coeffs.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_step_diverges() {
        let ct = scalar_table(1.0, 1.0);
        let cfg = SystemConfig::symmetric(1, 1, 1, 1);
        let opts = AllocOptions { step: StepRule::Fixed(1.1), ..AllocOptions::unprojected(200) };
        match run_apa(&ct, &cfg, &opts) {
            Err(Error::Divergence { mu, .. }) => assert_eq!(mu, 1.1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn uniform_examples() {
        let mut cfg = SystemConfig::symmetric(4, 2, 2, 2);
        cfg.total_power = 4.0;
        assert_eq!(uniform_allocation(&cfg, 0.0).unwrap().as_slice(), &[0.0, 1.0, 1.0, 1.0, 1.0]);
        let full = uniform_allocation(&cfg, 1.0).unwrap();
        assert_eq!(full.as_slice(), &[2.0, 0.0, 0.0, 0.0, 0.0]);
        for d in [0.1, 0.37, 0.9] {
            assert_abs_diff_eq!(uniform_allocation(&cfg, d).unwrap().power(), 4.0, epsilon = 1e-12);
        }
        assert!(uniform_allocation(&cfg, 1.5).is_err());
    }

    #[test]
    fn random_allocations_are_distinct_and_reproducible() {
        let cfg = SystemConfig::symmetric(4, 2, 2, 2).with_snr_db(10.0);
        let draws: Vec<_> = (0..3).map(|s| random_allocation(&cfg, s)).collect();
        for a in &draws {
            assert_abs_diff_eq!(a.power(), cfg.total_power, epsilon = 1e-10);
            assert!((0.0..=1.0).contains(&a.common_fraction()));
        }
        assert_ne!(draws[0], draws[1]);
        assert_ne!(draws[1], draws[2]);
        assert_eq!(random_allocation(&cfg, 1), draws[1]);
    }

    #[test]
    fn delta_search_examples() {
        let cfg = SystemConfig::symmetric(4, 2, 2, 2);
        let flat = grid_search_delta(&cfg, PrivateRule::Uniform, 0.1, Goal::Maximize, |_| Ok(1.0)).unwrap();
        assert_eq!(flat.delta, 0.0);

        let coarse = grid_search_delta(&cfg, PrivateRule::Uniform, 0.5, Goal::Minimize, |_| Ok(0.0)).unwrap();
        let deltas: Vec<f64> = coarse.evaluated.iter().map(|e| e.0).collect();
        assert_eq!(deltas, vec![0.0, 0.5, 1.0]);

        let vertex = grid_search_delta(&cfg, PrivateRule::Uniform, 0.1, Goal::Minimize, |a| {
            Ok((a.common_fraction() - 0.3).powi(2))
        })
        .unwrap();
        assert_abs_diff_eq!(vertex.delta, 0.3, epsilon = 1e-12);

        let random =
            grid_search_delta(&cfg, PrivateRule::Random { seed: 4 }, 0.25, Goal::Maximize, |a| Ok(a.common_fraction()))
                .unwrap();
        assert_eq!(random.delta, 1.0);
        assert!(delta_grid(0.0).is_err());
        assert!(delta_grid(0.6).is_err());
        assert_eq!(delta_grid(0.3).unwrap().last(), Some(&1.0));
    }

    #[test]
    fn full_grid_counts_and_enumerates() {
        assert_eq!(candidate_count(2, 0.25).unwrap(), 15);
        assert_eq!(candidate_count(1, 0.5).unwrap(), 3);
        let mut seen = Vec::new();
        grid_search_full(1, 0.5, 1.0, 10, Goal::Minimize, |a| {
            seen.push(a.common_fraction());
            Ok(0.0)
        })
        .unwrap();
        assert_eq!(seen.len(), 3);
        for (s, e) in seen.iter().zip([0.0, 0.5, 1.0]) {
            assert_abs_diff_eq!(*s, e, epsilon = 1e-12);
        }
        let mut calls = 0;
        let r = grid_search_full(2, 0.25, 2.0, 100, Goal::Maximize, |a| {
            calls += 1;
            assert_abs_diff_eq!(a.power(), 2.0, epsilon = 1e-12);
            Ok(a.private(1))
        })
        .unwrap();
        assert_eq!(calls, 15);
        assert_eq!(r.candidates, 15);
        assert_abs_diff_eq!(r.coeffs.private(1), 2f64.sqrt(), epsilon = 1e-12);
        assert!(matches!(grid_search_full(4, 0.01, 1.0, 1000, Goal::Minimize, |_| Ok(0.0)), Err(Error::Budget { .. })));
    }

    #[test]
    fn full_grid_is_no_worse_than_apa() {
        let cfg = SystemConfig::symmetric(2, 2, 1, 1).with_snr_db(0.0).with_seed(5);
        for trial in 0..5 {
            let h = generate_estimate(&cfg, trial).unwrap();
            let p = PrecoderSet::build(PrecoderKind::Zf, &cfg, &h).unwrap();
            let ct = CouplingTable::build(&cfg, &h, &p, CouplingSource::True).unwrap();
            let apa = run_apa(&ct, &cfg, &AllocOptions { iterations: 500, ..Default::default() }).unwrap();
            let grid = grid_search_full(2, 0.01, cfg.total_power, DEFAULT_GRID_BUDGET, Goal::Minimize, |a| {
                mse_apa(a, &ct, cfg.noise_var)
            })
            .unwrap();
            assert!(grid.value <= apa.final_mse() + 1e-2, "{} vs {}", grid.value, apa.final_mse());
        }
    }
}
