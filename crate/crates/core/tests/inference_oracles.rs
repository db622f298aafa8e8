use nalgebra::{DMatrix, DVector};
use splinegee::inference::{
    estimate_alpha, estimate_dispersion, estimate_sigma, pointwise_ci, sandwich_beta, sandwich_joint,
    simultaneous_band, ProjectionWeight, SigmaEstimate,
};
use splinegee::simgen::{gen_example1, gen_example2, replication_rng, Example1Config, Example2Config, MvnSampler};
use splinegee::two_step::{fit_component, fit_pilot};
use splinegee::{ClusteredDataset, CorrelationStructure, GeeError, GeeModelSpec, GeeProblem, LinkFamily, PilotFit};

fn gaussian_pilot(n: usize, m: usize, seed: u64) -> (ClusteredDataset, PilotFit) {
    let (data, _) = gen_example1(&Example1Config::new(n, m), &mut replication_rng(seed, 0)).unwrap();
    let spec = GeeModelSpec::new(LinkFamily::gaussian(), CorrelationStructure::Ex);
    let pilot = fit_pilot(&data, &spec, 3).unwrap();
    (data, pilot)
}

fn binary_pilot(n: usize, seed: u64) -> (ClusteredDataset, PilotFit) {
    let (data, _) = gen_example2(&Example2Config::new(n), &mut replication_rng(seed, 0)).unwrap();
    let spec = GeeModelSpec::new(LinkFamily::LogitBernoulli, CorrelationStructure::Ex);
    let pilot = fit_pilot(&data, &spec, 3).unwrap();
    (data, pilot)
}

/// Dense `V_i = A^{1/2} R A^{1/2}` and `Delta_i` from scratch.
fn dense_v_and_delta(problem: &GeeProblem, coef: &[f64]) -> Vec<(DMatrix<f64>, Vec<f64>)> {
    let b = DVector::from_column_slice(coef);
    problem
        .clusters
        .iter()
        .map(|c| {
            let eta: Vec<f64> = (&c.design * &b)
                .iter()
                .zip(&c.offset)
                .map(|(e, o)| e + o)
                .collect();
            let (mu, delta) = problem.link.mu_and_delta(&eta).unwrap();
            let a = problem.link.marginal_variance(&mu).unwrap();
            let r = problem.working.build_correlation(c.len()).unwrap();
            let v = DMatrix::from_fn(c.len(), c.len(), |j, k| a[j].sqrt() * r[(j, k)] * a[k].sqrt());
            (v, delta)
        })
        .collect()
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

#[test]
fn meat_equals_bread_when_sigma_is_the_working_covariance() {
    for (data, pilot) in [gaussian_pilot(40, 5, 1), binary_pilot(40, 2)] {
        let problem = pilot.problem(&data).unwrap();
        let coef = pilot.coefficients();
        let sig = SigmaEstimate::PerCluster(dense_v_and_delta(&problem, &coef).into_iter().map(|(v, _)| v).collect());
        let s = sandwich_joint(&data, &pilot, &sig).unwrap();
        assert!(max_rel(&s.phi, &s.psi) < 1e-10);
        let psi_inv = s.psi.clone().try_inverse().unwrap();
        assert!(max_rel(&s.cov, &psi_inv) < 1e-8);
    }
}

#[test]
fn joint_sandwich_matches_dense_reference() {
    for (data, pilot) in [gaussian_pilot(40, 5, 3), binary_pilot(40, 4)] {
        let problem = pilot.problem(&data).unwrap();
        let coef = pilot.coefficients();
        let sigma = estimate_sigma(&problem, &coef).unwrap();
        let s = sandwich_joint(&data, &pilot, &sigma).unwrap();
        let p = coef.len();
        let (mut psi, mut phi) = (DMatrix::zeros(p, p), DMatrix::zeros(p, p));
        for (i, (c, (v, delta))) in problem.clusters.iter().zip(dense_v_and_delta(&problem, &coef)).enumerate() {
            let dd = DMatrix::from_diagonal(&DVector::from_vec(delta)) * &c.design;
            let a_sqrt: Vec<f64> = (0..c.len()).map(|j| v[(j, j)].sqrt()).collect();
            let vinv = v.try_inverse().unwrap();
            let sig = sigma.cluster_sigma(i, &a_sqrt).unwrap();
            psi += dd.transpose() * &vinv * &dd;
            phi += dd.transpose() * &vinv * sig * &vinv * &dd;
        }
        let psi_inv = psi.clone().try_inverse().unwrap();
        let cov = &psi_inv * &phi * &psi_inv;
        assert!(max_rel(&s.psi, &psi) < 1e-10);
        assert!(max_rel(&s.phi, &phi) < 1e-10);
        assert!(max_rel(&s.cov, &cov) < 1e-8);
    }
}

#[test]
fn weighted_projection_reproduces_joint_beta_block() {
    for (data, pilot) in [gaussian_pilot(50, 5, 5), binary_pilot(50, 6)] {
        let problem = pilot.problem(&data).unwrap();
        let sigma = estimate_sigma(&problem, &pilot.coefficients()).unwrap();
        let joint = sandwich_joint(&data, &pilot, &sigma).unwrap();
        let proj = sandwich_beta(&data, &pilot, &sigma, ProjectionWeight::Weighted).unwrap();
        let d1 = data.d1();
        let block = joint.cov.view((0, 0), (d1, d1)).into_owned();
        assert!(max_rel(&proj.cov, &block) < 1e-8);
        let unweighted = sandwich_beta(&data, &pilot, &sigma, ProjectionWeight::Unweighted).unwrap();
        let (w, u) = (proj.standard_errors(), unweighted.standard_errors());
        assert!(u.iter().all(|s| s.is_finite() && *s > 0.0));
        let rel = w.iter().zip(&u).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
        assert!(rel > 1e-6 && rel < 0.2, "{w:?} vs {u:?}");
    }
}

#[test]
fn moment_estimators_recover_known_correlation() {
    let m = 5;
    for (structure, alpha) in [(CorrelationStructure::Ex, 0.5), (CorrelationStructure::Ar1, 0.6)] {
        let w = match structure {
            CorrelationStructure::Ex => splinegee::WorkingCorrelation::exchangeable(alpha),
            _ => splinegee::WorkingCorrelation::ar1(alpha),
        };
        let cov = w.build_correlation(m).unwrap() * 4.0;
        let sampler = MvnSampler::new(&vec![0.0; m], &cov).unwrap();
        let mut rng = replication_rng(11, 0);
        // Pearson residuals at dispersion 1 are the raw draws
        let res: Vec<Vec<f64>> = (0..20_000).map(|_| sampler.sample(&mut rng)).collect();
        let phi = estimate_dispersion(&res, 0).unwrap();
        assert!((phi - 4.0).abs() < 0.1, "{phi}");
        let a = estimate_alpha(&res, structure, 0).unwrap();
        assert!((a - alpha).abs() < 0.02, "{structure:?}: {a}");
        let ind = estimate_alpha(&res, CorrelationStructure::Ind, 0).unwrap();
        assert_eq!(ind, 0.0);
    }
}

#[test]
fn pilot_alpha_estimate_is_calibrated() {
    let (_, pilot) = gaussian_pilot(300, 8, 21);
    assert!((pilot.working.alpha - 0.5).abs() < 0.06, "{}", pilot.working.alpha);
    match pilot.link {
        LinkFamily::IdentityGaussian { dispersion } => assert!((dispersion - 1.0).abs() < 0.15, "{dispersion}"),
        _ => unreachable!(),
    }
}

#[test]
fn shared_correlation_estimate_has_unit_diagonal() {
    let (data, pilot) = gaussian_pilot(200, 6, 8);
    let problem = pilot.problem(&data).unwrap();
    match estimate_sigma(&problem, &pilot.coefficients()).unwrap() {
        SigmaEstimate::SharedCorrelation { r_hat } => {
            for j in 0..6 {
                assert!((r_hat[(j, j)] - 1.0).abs() < 1e-12);
                for k in 0..6 {
                    if j != k {
                        assert!((r_hat[(j, k)] - 0.5).abs() < 0.15);
                    }
                }
            }
        }
        other => panic!("expected a shared correlation, got {other:?}"),
    }
}

#[test]
fn pointwise_interval_matches_manual_quadratic_form() {
    let (data, pilot) = gaussian_pilot(80, 5, 9);
    let problem = pilot.problem(&data).unwrap();
    let sigma = estimate_sigma(&problem, &pilot.coefficients()).unwrap();
    let fit = fit_component(&data, &pilot, 0, 4, Some(&sigma), &Default::default()).unwrap();
    let cov = &fit.covariance.as_ref().unwrap().cov;
    for z in [0.0, 0.13, 0.5, 0.97, 1.0] {
        let b = DVector::from_vec(fit.basis.eval(z).unwrap());
        let sd = (b.transpose() * cov * &b)[(0, 0)].sqrt();
        let est = b.dot(&DVector::from_column_slice(&fit.gamma));
        let ci = pointwise_ci(&fit, z, 0.05).unwrap();
        assert!((ci.estimate - est).abs() < 1e-12);
        assert!((ci.sd - sd).abs() < 1e-12);
        assert!((ci.upper - est - 1.959_963_984_540_054 * sd).abs() < 1e-10);
        assert!((est - ci.lower - 1.959_963_984_540_054 * sd).abs() < 1e-10);
    }
    assert!(matches!(
        simultaneous_band(&fit, &[0.5], 0.05),
        Err(GeeError::BandRequiresLinearSplines(3))
    ));
    assert!(pointwise_ci(&fit, 0.5, 1e-13).is_err());
}
