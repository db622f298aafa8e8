use nalgebra::DMatrix;
use proptest::prelude::*;
use splinegee::simgen::{
    binary_correlation_bounds, gen_example1, gen_example2, latent_correlation, replication_rng, sample_mvn,
    BinarySampler, Example1Config, Example2Config, MvnSampler,
};
use splinegee::stats::bivariate_normal_cdf;
use splinegee::{GeeError, WorkingCorrelation};

const DRAWS: usize = 100_000;

fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(d, d, |a, b| {
        rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0)
    });
    (mean, cov)
}

fn corr(cov: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt()
}

#[test]
fn mvn_sampler_reproduces_mean_and_covariance() {
    let target = WorkingCorrelation::ar1(0.7).build_correlation(4).unwrap() * 2.0;
    let mean = [1.0, -2.0, 0.0, 3.0];
    let s = MvnSampler::new(&mean, &target).unwrap();
    let mut rng = replication_rng(1, 0);
    let draws: Vec<Vec<f64>> = (0..DRAWS).map(|_| s.sample(&mut rng)).collect();
    let (m, c) = moments(&draws);
    for k in 0..4 {
        assert!((m[k] - mean[k]).abs() < 0.02);
    }
    assert!((&c - &target).amax() < 0.04);
    let eye = sample_mvn(&[0.0; 3], &DMatrix::identity(3, 3), &mut rng).unwrap();
    assert_eq!(eye.len(), 3);
    let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(MvnSampler::new(&[0.0, 0.0], &not_pd), Err(GeeError::NotPositiveDefinite(_))));
}

#[test]
fn example1_errors_are_exchangeable_with_unit_variance() {
    // with the true mean removed, the residuals are the generated errors
    let (data, truth) = gen_example1(&Example1Config::new(20_000, 4), &mut replication_rng(2, 0)).unwrap();
    let rows: Vec<Vec<f64>> = data
        .clusters
        .iter()
        .map(|c| {
            (0..c.len())
                .map(|j| {
                    let lin: f64 = (0..3).map(|k| c.x[(j, k)] * truth.beta[k]).sum();
                    let add: f64 = (0..3).map(|l| truth.raw(l, c.z[(j, l)])).sum();
                    c.y[j] - lin - add
                })
                .collect()
        })
        .collect();
    let (m, c) = moments(&rows);
    for j in 0..4 {
        assert!(m[j].abs() < 0.02);
        assert!((c[(j, j)] - 1.0).abs() < 0.04);
        for k in 0..j {
            assert!((corr(&c, j, k) - 0.5).abs() < 0.02);
        }
    }
}

#[test]
fn example1_covariates_follow_their_design() {
    let (data, _) = gen_example1(&Example1Config::new(5_000, 4), &mut replication_rng(3, 0)).unwrap();
    let obs: Vec<Vec<f64>> = data
        .clusters
        .iter()
        .flat_map(|c| (0..c.len()).map(move |j| vec![c.z[(j, 0)], c.z[(j, 1)], c.z[(j, 2)], c.x[(j, 0)]]))
        .collect();
    let (m, _) = moments(&obs);
    for l in 0..3 {
        // probability-integral transform of a standard normal
        assert!((m[l] - 0.5).abs() < 0.01);
    }
    assert!(m[3].abs() < 0.02);
    assert!(obs.iter().all(|r| r[..3].iter().all(|z| (0.0..=1.0).contains(z))));
}

#[test]
fn binary_sampler_independent_when_rho_is_zero() {
    let p = [0.2, 0.5, 0.8];
    let s = BinarySampler::new(&p, 0.0).unwrap();
    let mut rng = replication_rng(4, 0);
    let draws: Vec<Vec<f64>> = (0..DRAWS).map(|_| s.sample(&mut rng)).collect();
    let (m, c) = moments(&draws);
    for k in 0..3 {
        assert!((m[k] - p[k]).abs() < 0.006);
        for j in 0..k {
            assert!(corr(&c, j, k).abs() < 0.02);
        }
    }
}

#[test]
fn binary_sampler_hits_target_correlation_with_heterogeneous_means() {
    let p = [0.15, 0.4, 0.55, 0.9];
    let rho = 0.1;
    let s = BinarySampler::new(&p, rho).unwrap();
    let mut rng = replication_rng(5, 0);
    let draws: Vec<Vec<f64>> = (0..DRAWS).map(|_| s.sample(&mut rng)).collect();
    let (m, c) = moments(&draws);
    for k in 0..4 {
        assert!((m[k] - p[k]).abs() < 0.006);
        for j in 0..k {
            assert!((corr(&c, j, k) - rho).abs() < 0.02, "({j},{k}): {}", corr(&c, j, k));
        }
    }
}

#[test]
fn example2_marginal_success_rate_matches_linear_predictor() {
    let (data, truth) = gen_example2(&Example2Config::new(2_500), &mut replication_rng(6, 0)).unwrap();
    let (mut y, mut p) = (0.0, 0.0);
    for c in &data.clusters {
        for j in 0..c.len() {
            let eta: f64 = (0..3).map(|k| c.x[(j, k)] * truth.beta[k]).sum::<f64>()
                + truth.raw(0, c.z[(j, 0)])
                + truth.raw(1, c.z[(j, 1)]);
            p += 1.0 / (1.0 + (-eta).exp());
            y += c.y[j];
        }
    }
    let n = data.n_obs() as f64;
    assert!(((y - p) / n).abs() < 0.01);
}

#[test]
fn tetrachoric_at_half_is_the_sine_transform() {
    for rho in [-0.6, -0.2, 0.1, 0.35, 0.8] {
        let r = latent_correlation(0.5, 0.5, rho).unwrap();
        let expect = (std::f64::consts::FRAC_PI_2 * rho).sin();
        assert!((r - expect).abs() < 1e-6, "{rho}: {r} vs {expect}");
    }
}

#[test]
fn infeasible_binary_correlation_is_rejected() {
    let (lo, hi) = binary_correlation_bounds(0.1, 0.9);
    assert!(hi < 0.2 && lo < 0.0);
    assert!(matches!(
        latent_correlation(0.1, 0.9, 0.5),
        Err(GeeError::InfeasibleCorrelation { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn latent_correlation_inverts_the_joint_success_probability(
        p1 in 0.05f64..0.95,
        p2 in 0.05f64..0.95,
        u in 0.05f64..0.95,
    ) {
        let (lo, hi) = binary_correlation_bounds(p1, p2);
        let rho = lo + (hi - lo) * u;
        let r = latent_correlation(p1, p2, rho).unwrap();
        prop_assert!(r.abs() <= 1.0);
        let q1 = splinegee::stats::normal_quantile(p1).unwrap();
        let q2 = splinegee::stats::normal_quantile(p2).unwrap();
        let p11 = bivariate_normal_cdf(q1, q2, r).unwrap();
        let implied = (p11 - p1 * p2) / (p1 * (1.0 - p1) * p2 * (1.0 - p2)).sqrt();
        prop_assert!((implied - rho).abs() < 1e-8);
    }
}
