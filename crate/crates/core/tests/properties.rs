use rsapa::alloc::{grid_search_full, run_apa, AllocOptions, Goal};
use rsapa::harness::{run_convergence, run_error_sweep, run_snr_sweep, write_sweep_csv, ExperimentSpec};
use rsapa::model::{generate_channel, generate_estimate, stream_channel, SystemConfig};
use rsapa::objective::{
    grad_apa, mse_apa, mse_oracle, random_coefficients, CouplingSource, CouplingTable, OracleChannel,
};
use rsapa::precoders::{PrecoderKind, PrecoderSet};
use rsapa::rates::{
    ergodic_sum_rate, instantaneous_rates, sinr_common, sinr_private, ChannelDraw, RateOptions, Scheme,
};
use rsapa::PowerVector;

fn scenario() -> SystemConfig {
    SystemConfig::symmetric(4, 2, 2, 2).with_seed(99)
}

#[test]
fn plain_gradient_matches_finite_differences_on_true_channel() {
    let cfg = scenario().with_err_var(0.1).with_snr_db(15.0);
    let mut rng = rsapa::model::substream(4, rsapa::model::RngDomain::Allocation, 0, 0);
    for trial in 0..20 {
        let real = generate_channel(&cfg, trial).unwrap();
        let p = PrecoderSet::build(PrecoderKind::Mmse, &cfg, &real.estimate).unwrap();
        let ct = CouplingTable::build(&cfg, &real.true_channel, &p, CouplingSource::True).unwrap();
        let a = random_coefficients(&mut rng, 4, 5.0);
        let g = grad_apa(&a, &ct).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let mut up = a.clone();
            let mut dn = a.clone();
            up.as_mut_slice()[i] += 1e-6;
            dn.as_mut_slice()[i] -= 1e-6;
            let fd = (mse_apa(&up, &ct, 1.0).unwrap() - mse_apa(&dn, &ct, 1.0).unwrap()) / 2e-6;
            assert!((fd - gi).abs() <= 1e-6 * gi.abs().max(1.0), "{fd} vs {gi}");
        }
    }
}

#[test]
fn oracle_agrees_with_plain_closed_form() {
    let cfg = scenario().with_snr_db(0.0);
    let h = generate_estimate(&cfg, 3).unwrap();
    let s = stream_channel(&cfg, &h).unwrap();
    let p = PrecoderSet::build(PrecoderKind::Zf, &cfg, &h).unwrap();
    let ct = CouplingTable::from_stream_channel(&s, &p, CouplingSource::True).unwrap();
    let a = PowerVector::new(vec![0.3, 0.5, 0.2, 0.4, 0.6]);
    let closed = mse_apa(&a, &ct, 1.0).unwrap();
    let est = mse_oracle(&a, OracleChannel::Fixed(&s), &p, 1.0, 40_000, 5).unwrap();
    assert!((closed - est.mean).abs() < 3.0 * est.std_error, "{closed} vs {est:?}");
}

#[test]
fn projected_apa_lands_near_the_simplex_optimum() {
    let cfg = scenario().with_snr_db(0.0);
    let h = generate_estimate(&cfg, 0).unwrap();
    let p = PrecoderSet::build(PrecoderKind::Zf, &cfg, &h).unwrap();
    let ct = CouplingTable::build(&cfg, &h, &p, CouplingSource::Estimate).unwrap();
    let run = run_apa(&ct, &cfg, &AllocOptions { iterations: 2000, ..Default::default() }).unwrap();
    let grid = grid_search_full(4, 0.01, cfg.total_power, 5_000_000, Goal::Minimize, |a| mse_apa(a, &ct, 1.0)).unwrap();
    // the 0.01 lattice only bounds the constrained minimum from above
    assert!((run.final_coeffs().power() - cfg.total_power).abs() < 1e-10);
    assert!(run.final_mse() <= grid.value + 1e-3, "allocator {} vs grid {}", run.final_mse(), grid.value);
}

#[test]
fn sinr_matches_raw_dot_products() {
    let cfg = scenario().with_err_var(0.2).with_snr_db(10.0);
    let real = generate_channel(&cfg, 7).unwrap();
    let h = stream_channel(&cfg, &real.true_channel).unwrap();
    let p = PrecoderSet::build(PrecoderKind::Mf, &cfg, &real.estimate).unwrap();
    let a = rsapa::alloc::random_allocation(&cfg, 3);
    for k in 0..4 {
        let g = |i: usize| {
            let col = if i == 0 { p.common.clone() } else { p.private.column(i - 1).into_owned() };
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for n in 0..4 {
                acc += h[(k, n)] * col[n];
            }
            acc.norm_sqr()
        };
        let coeff = a.as_slice();
        let interference: f64 = (1..5).map(|i| coeff[i] * coeff[i] * g(i)).sum();
        let common = coeff[0] * coeff[0] * g(0) / (interference + 1.0);
        let own = coeff[k + 1] * coeff[k + 1] * g(k + 1);
        let private = own / (interference - own + 1.0);
        assert!((sinr_common(k, &h, &h, &p, &a, 1.0).unwrap() - common).abs() < 1e-12 * common.max(1.0));
        assert!((sinr_private(k, &h, &h, &p, &a, 1.0).unwrap() - private).abs() < 1e-12 * private.max(1.0));
    }
}

#[test]
fn single_error_draw_without_error_is_instantaneous() {
    let cfg = scenario().with_snr_db(10.0);
    let opts = RateOptions::default();
    let report = ergodic_sum_rate(&cfg, Scheme::RsUpaAc0, 1, 1, &opts).unwrap();
    let d = ChannelDraw::generate(&cfg, 0, 1).unwrap();
    assert_eq!(d.truths[0], d.estimate);
    let p = PrecoderSet::build(PrecoderKind::Zf, &cfg, &d.estimate_full).unwrap();
    let a = rsapa::alloc::uniform_allocation(&cfg, 0.0).unwrap();
    let r = instantaneous_rates(&d.estimate, &d.truths[0], &p, &a, 1.0, Default::default()).unwrap();
    assert_eq!(report.avg_private, r.private);
    // perfect ZF: each private SINR is the interference-free E_tr/M |h_k p_k|^2
    let hand: f64 = (0..4)
        .map(|k| {
            let g = d.estimate.row(k).transpose().dot(&p.private.column(k)).norm_sqr();
            (1.0 + cfg.total_power / 4.0 * g).log2()
        })
        .sum();
    assert!((report.ergodic_sum_rate - hand).abs() < 1e-9);
}

#[test]
fn single_user_common_term_is_that_users_rate() {
    let cfg = SystemConfig::symmetric(2, 1, 2, 2).with_err_var(0.1).with_snr_db(10.0);
    let r = ergodic_sum_rate(&cfg, Scheme::RsApa, 5, 4, &RateOptions::default()).unwrap();
    assert_eq!(r.avg_common.len(), 1);
    assert_eq!(r.common_term, r.avg_common[0]);
}

#[test]
fn robust_rs_beats_conventional_at_20_db() {
    let cfg = scenario().with_err_var(0.1).with_snr_db(20.0);
    let opts = RateOptions::default();
    let rs = ergodic_sum_rate(&cfg, Scheme::RsApar, 200, 50, &opts).unwrap();
    let conv = ergodic_sum_rate(&cfg, Scheme::ConvUpa, 200, 50, &opts).unwrap();
    assert!(rs.ergodic_sum_rate >= conv.ergodic_sum_rate);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let cfg = scenario().with_err_var(0.1).with_snr_db(20.0);
    for scheme in [Scheme::RsApar, Scheme::RsEsRandom, Scheme::ConvRandom] {
        let one = ergodic_sum_rate(&cfg, scheme, 16, 4, &RateOptions { jobs: Some(1), ..Default::default() }).unwrap();
        let many = ergodic_sum_rate(&cfg, scheme, 16, 4, &RateOptions { jobs: Some(4), ..Default::default() }).unwrap();
        assert_eq!(one, many);
    }
}

#[test]
fn esr_grows_with_snr_for_fixed_allocations() {
    let opts = RateOptions::default();
    for scheme in [Scheme::ConvUpa, Scheme::RsUpaAc0] {
        let mut last = 0.0;
        for snr in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
            let cfg = scenario().with_err_var(0.1).with_snr_db(snr);
            let esr = ergodic_sum_rate(&cfg, scheme, 20, 5, &opts).unwrap().ergodic_sum_rate;
            assert!(esr >= last);
            last = esr;
        }
    }
}

#[test]
fn identical_specs_give_identical_csv() {
    let spec = ExperimentSpec {
        n_channels: 6,
        n_errors: 3,
        snr_grid_db: vec![0.0, 20.0],
        schemes: vec![Scheme::ConvUpa, Scheme::RsEsUpa, Scheme::RsApar],
        ..ExperimentSpec::snr_sweep_preset()
    };
    let render = |jobs| {
        let rows = run_snr_sweep(&ExperimentSpec { jobs, ..spec.clone() }).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        buf
    };
    assert_eq!(render(Some(1)), render(Some(3)));
}

#[test]
fn error_free_apa_and_apar_rows_coincide() {
    let spec = ExperimentSpec {
        schemes: vec![Scheme::RsApa, Scheme::RsApar],
        err_var_grid: vec![0.0],
        n_channels: 10,
        n_errors: 2,
        ..ExperimentSpec::error_sweep_preset()
    };
    let rows = run_error_sweep(&spec).unwrap();
    assert_eq!(rows[0].esr, rows[1].esr);
}

// Holds for well-conditioned matched-filter couplings with the default step.
// ZF couplings at the fixed 0.004 step keep drifting well past 30 iterations.
#[test]
fn thirty_iterations_are_close_to_three_hundred() {
    let spec = ExperimentSpec {
        precoder: PrecoderKind::Mf,
        mu: None,
        n_channels: 40,
        n_errors: 10,
        iterations: 300,
        schemes: vec![Scheme::RsApar],
        ..ExperimentSpec::convergence_preset()
    };
    let rows = run_convergence(&spec, None).unwrap();
    let at = |t: usize| rows.iter().find(|r| r.iteration == t).unwrap();
    let (short, long) = (at(30), at(300));
    assert!((short.esr - long.esr).abs() <= 0.01 * long.esr, "{} vs {}", short.esr, long.esr);
    assert!((short.mse - long.mse).abs() <= 0.01 * long.mse, "{} vs {}", short.mse, long.mse);
}
