use std::ffi::CStr;
use std::ptr;

use splinegee::simgen::{gen_example1, replication_rng, Example1Config};
use splinegee_ffi::*;

struct Flat {
    ids: Vec<i64>,
    y: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
}

fn flat_example(n: usize, m: usize, seed: u64) -> (Flat, splinegee::ClusteredDataset) {
    let (data, _) = gen_example1(&Example1Config::new(n, m), &mut replication_rng(seed, 0)).unwrap();
    let mut f = Flat {
        ids: vec![],
        y: vec![],
        x: vec![],
        z: vec![],
    };
    // interleave clusters so that grouping by id is exercised
    for j in 0..m {
        for (i, c) in data.clusters.iter().enumerate() {
            f.ids.push(i as i64 + 1);
            f.y.push(c.y[j]);
            f.x.extend(c.x.row(j).iter());
            f.z.extend(c.z.row(j).iter());
        }
    }
    (f, data)
}

fn last_error() -> String {
    let p = sgee_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn fit_through_the_c_abi_matches_the_rust_api() {
    let (f, data) = flat_example(60, 5, 4);
    unsafe {
        let mut ds = ptr::null_mut();
        let st = sgee_dataset_new(f.y.len(), f.ids.as_ptr(), f.y.as_ptr(), f.x.as_ptr(), 3, f.z.as_ptr(), 3, &mut ds);
        assert_eq!(st, SgeeStatus::Ok);
        assert_eq!(sgee_dataset_n_clusters(ds), 60);

        let opts = sgee_fit_options_default();
        let mut fit = ptr::null_mut();
        assert_eq!(sgee_fit(ds, &opts, &mut fit), SgeeStatus::Ok);
        assert_eq!(sgee_fit_n_beta(fit), 3);
        assert_eq!(sgee_fit_n_components(fit), 3);

        let mut beta = [0.0; 3];
        let mut se = [0.0; 3];
        assert_eq!(sgee_fit_beta(fit, beta.as_mut_ptr(), 3), SgeeStatus::Ok);
        assert_eq!(sgee_fit_beta_se(fit, se.as_mut_ptr(), 3), SgeeStatus::Ok);
        let direct = splinegee::fit_dataset(&data, &splinegee::FitOptions::default()).unwrap();
        assert_eq!(beta.to_vec(), direct.beta().to_vec());
        assert_eq!(se.to_vec(), direct.beta_std_errors());

        let (mut est, mut lo, mut hi) = (0.0, 0.0, 0.0);
        assert_eq!(sgee_fit_component_eval(fit, 0, 0.3, 0.95, &mut est, &mut lo, &mut hi), SgeeStatus::Ok);
        assert!(lo < est && est < hi);
        assert_eq!(
            sgee_fit_component_eval(fit, 0, 1.5, 0.95, &mut est, &mut lo, &mut hi),
            SgeeStatus::DomainError
        );
        assert!(last_error().starts_with("domain"));
        assert_eq!(
            sgee_fit_component_eval(fit, 7, 0.5, 0.95, &mut est, &mut lo, &mut hi),
            SgeeStatus::DomainError
        );

        let mut json = ptr::null_mut();
        assert_eq!(sgee_fit_report_json(fit, &mut json), SgeeStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        sgee_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["coefficients"].as_array().unwrap().len(), 3);

        let mut short = [0.0; 2];
        assert_eq!(sgee_fit_beta(fit, short.as_mut_ptr(), 2), SgeeStatus::InvalidArgument);

        sgee_fit_free(fit);
        sgee_dataset_free(ds);
    }
}

#[test]
fn null_and_invalid_inputs_are_reported() {
    unsafe {
        let mut ds = ptr::null_mut();
        let y = [0.5, 0.7];
        let ids = [1i64, 1];
        let z = [0.2, 1.4];
        assert_eq!(
            sgee_dataset_new(2, ptr::null(), y.as_ptr(), ptr::null(), 0, z.as_ptr(), 1, &mut ds),
            SgeeStatus::NullPointer
        );
        assert!(ds.is_null());
        assert_eq!(
            sgee_dataset_new(2, ids.as_ptr(), y.as_ptr(), ptr::null(), 0, z.as_ptr(), 1, &mut ds),
            SgeeStatus::DomainError
        );
        let mut fit = ptr::null_mut();
        assert_eq!(sgee_fit(ptr::null(), ptr::null(), &mut fit), SgeeStatus::NullPointer);
        assert!(last_error().contains("null"));
        let mut opts = sgee_fit_options_default();
        opts.correlation = 9;
        let (f, _) = flat_example(10, 3, 1);
        assert_eq!(
            sgee_dataset_new(f.y.len(), f.ids.as_ptr(), f.y.as_ptr(), f.x.as_ptr(), 3, f.z.as_ptr(), 3, &mut ds),
            SgeeStatus::Ok
        );
        assert_eq!(sgee_fit(ds, &opts, &mut fit), SgeeStatus::InvalidArgument);
        sgee_dataset_free(ds);
        sgee_dataset_free(ptr::null_mut());
        sgee_fit_free(ptr::null_mut());
        sgee_string_free(ptr::null_mut());
        assert_eq!(sgee_fit_n_beta(ptr::null()), 0);
    }
}

#[test]
fn simulate_json_is_deterministic() {
    unsafe {
        let run = || {
            let mut out = ptr::null_mut();
            assert_eq!(sgee_simulate_json(2, 12, 0, 3, 1, 42, 1, &mut out), SgeeStatus::Ok);
            let s = CStr::from_ptr(out).to_str().unwrap().to_owned();
            sgee_string_free(out);
            s
        };
        assert_eq!(run(), run());
        let mut out = ptr::null_mut();
        assert_eq!(sgee_simulate_json(3, 12, 0, 3, 1, 42, 1, &mut out), SgeeStatus::InvalidArgument);
        assert!(out.is_null());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(sgee_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
