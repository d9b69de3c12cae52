use sps_core::harness::*;
use sps_core::kernels::KernelFamily;

fn cfg() -> RunConfig {
    RunConfig {
        kernel: KernelFamily::SquaredExponential,
        theta_rho: vec![4.0], theta_v: 8.0, theta_0: 4.0,
        n: 1000, dim: 2, domain: (0.0, 100.0),
        n_realizations: 1, replicates: 10, seed: 1234,
        method: Method::Sps, mle_starts: 10,
        blocks: BlocksSpec::SpatialGrid(vec![3, 3]),
        nugget: true, alpha: None, test_fraction: 0.1,
        mspe_against_truth: true, n_grid: None, epsilons: None,
        theta_grid: None, noiseless: false,
        eps_primal: None, eps_dual: None, stage1_max_iters: None,
    }
}

#[test]
fn converged_pipeline() {
    let mut c = cfg();
    c.stage1_max_iters = Some(20000);
    let rep = run_benchmark(&c, None).unwrap();
    println!(
        "converged: theta_bar={:?} stdev={:?} mspe={:.4} conv={}",
        rep.theta_bar.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
        rep.stdev_theta.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
        rep.mspe_mean, rep.all_converged
    );
}

#[test]
fn diag_identity_probe() {
    use sps_core::sampler::{distance_weights, sample_covariance};
    use sps_core::stage1::{solve_stage1, Stage1Config, kkt_certificate};
    use sps_core::stage2::invert_precision;
    let locs = draw_locations(100, 2, (0.0, 33.0), 42, 0).unwrap();
    let truth = sps_core::kernels::CovarianceParams::new(KernelFamily::SquaredExponential, vec![4.0], 8.0, 4.0).unwrap();
    let ds = sps_core::sampler::sample_grf(&locs, &truth, 1, 42).unwrap();
    let s = sample_covariance(&ds);
    let g = distance_weights(&ds.locs).unwrap();
    for iters in [60usize, 500, 20000] {
        let mut cfg = Stage1Config::for_problem_size(100);
        cfg.max_iters = iters;
        let est = solve_stage1(&s, &g, &cfg).unwrap();
        let c_hat = invert_precision(&est).unwrap();
        let diag_c: f64 = (0..100).map(|i| c_hat[(i, i)]).sum::<f64>() / 100.0;
        let diag_target: f64 = (0..100).map(|i| s[(i, i)] + cfg.alpha * g.matrix()[(i, i)]).sum::<f64>() / 100.0;
        let kkt = kkt_certificate(&s, &g, cfg.alpha, &est.p_hat).unwrap();
        println!(
            "iters={iters:6} conv={} pri={:.2e} dual={:.2e} avg diag C_hat={diag_c:.4} target={diag_target:.4} kkt=({:.2e},{:.2e})",
            est.converged, est.primal_residual, est.dual_residual, kkt.max_violation_nonzero, kkt.max_violation_zero
        );
    }
}
