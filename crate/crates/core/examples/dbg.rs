use hdci::*;

fn main() {
    let t0 = std::time::Instant::now();
    let n = 500usize; let p = 200usize; let k = 3usize;
    let log_p = (p as f64).ln();
    for c in [0.25_f64, 0.5, 0.75, 1.0, 1.4142] {
        let lam = c * (log_p / n as f64).sqrt();
        let cfg = ExperimentConfig {
            schema_version: 1,
            sampler: SamplerConfig {
                seed: 0, n, p,
                covariance: CovarianceKind::Identity,
                beta: BetaSpec::RandomSupport { k, magnitude: 0.5 },
                sigma: 1.0,
            },
            ci: CiConfig {
                alpha: 0.05, k,
                mode: CiMode::OracleNormality,
                lambda_n_override: Some(lam),
                ..Default::default()
            },
            family: CiFamily::Sparse,
            xi: XiSpec::Coordinate { index: 0 },
            replicates: 400,
            base_seed: 42,
            sweep: None,
        };
        let r = run_experiment(&cfg, 0).unwrap();
        let cell = &r.per_cell[0];
        println!("c={c}: coverage={:.3} len={:.4} fail={:.3} [{:?}]",
            cell.empirical_coverage, cell.mean_length, cell.failure_fraction, t0.elapsed());
    }
}
