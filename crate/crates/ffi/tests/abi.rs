use std::ffi::{CStr, CString};
use std::ptr;

use qpwgan::autodiff::checkpoint::save_checkpoint;
use qpwgan::autodiff::{MlpNetwork, Tensor};
use qpwgan::rng::SeededRng;
use qpwgan_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(qp_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn measure(coords: &[f64], weights: Option<&[f64]>, dim: usize) -> *mut QpMeasure {
    let mut m = ptr::null_mut();
    let w = weights.map_or(ptr::null(), |w| w.as_ptr());
    let st = unsafe { qp_measure_new(coords.as_ptr(), w, coords.len() / dim, dim, &mut m) };
    assert_eq!(st, QpStatus::Ok, "{}", last_error());
    m
}

// Two points on a line moved onto two others; the crossing matching is
// never optimal for p = 2 so the answer is known by hand.
#[test]
fn exact_ot_on_a_hand_checked_pair() {
    let mu = measure(&[0.0, 1.0], None, 1);
    let nu = measure(&[2.0, 4.0], None, 1);
    unsafe {
        assert_eq!(qp_measure_len(mu), 2);
        assert_eq!(qp_measure_dim(mu), 1);
        let (mut v, mut plan, mut phi, mut psi) = (0.0, [0.0; 4], [0.0; 2], [0.0; 2]);
        let st = qp_ot_exact(
            mu,
            nu,
            2.0,
            2.0,
            &mut v,
            plan.as_mut_ptr(),
            phi.as_mut_ptr(),
            psi.as_mut_ptr(),
        );
        assert_eq!(st, QpStatus::Ok);
        // 0.5 * (4/2 + 9/2)
        assert!((v - 3.25).abs() < 1e-12, "{v}");
        assert!((plan[0] - 0.5).abs() < 1e-12 && (plan[3] - 0.5).abs() < 1e-12);
        assert!(plan[1].abs() < 1e-12 && plan[2].abs() < 1e-12);
        let dual = 0.5 * (phi[0] + phi[1] + psi[0] + psi[1]);
        assert!((dual - v).abs() < 1e-9);

        let mut w = 0.0;
        assert_eq!(qp_wasserstein(mu, nu, 2.0, 2.0, &mut w), QpStatus::Ok);
        assert!((w - 3.25f64.sqrt()).abs() < 1e-12);

        // Optional outputs may be null.
        let st = qp_ot_exact(
            mu,
            nu,
            2.0,
            1.0,
            &mut v,
            ptr::null_mut(),
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(st, QpStatus::Ok);
        assert!((v - 2.5).abs() < 1e-12);
        qp_measure_free(mu);
        qp_measure_free(nu);
    }
}

#[test]
fn sorted_matching_and_c_transform() {
    unsafe {
        let xs = [3.0, 0.0, 1.0];
        let ys = [1.0, 2.0, 5.0];
        let mut v = 0.0;
        assert_eq!(
            qp_ot_1d_sorted(xs.as_ptr(), ys.as_ptr(), 3, 2.0, 1.0, &mut v),
            QpStatus::Ok
        );
        assert!((v - 4.0 / 3.0).abs() < 1e-12, "{v}");

        // min over b of |b - y|^2 / 2 - phi(b), y = 1
        let b = [0.0, 3.0];
        let phi = [0.0, 2.5];
        let y = [1.0];
        let mut k = 9usize;
        let st = qp_c_transform(
            phi.as_ptr(),
            b.as_ptr(),
            2,
            1,
            y.as_ptr(),
            2.0,
            2.0,
            &mut v,
            &mut k,
        );
        assert_eq!(st, QpStatus::Ok);
        assert_eq!(k, 1);
        assert!((v + 0.5).abs() < 1e-12);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    unsafe {
        let mut m = ptr::null_mut();
        let c = [0.0, 1.0];
        assert_eq!(
            qp_measure_new(ptr::null(), ptr::null(), 2, 1, &mut m),
            QpStatus::NullPointer
        );
        assert!(m.is_null());
        assert!(last_error().contains("coords"));

        let bad = [0.7, 0.7];
        assert_eq!(
            qp_measure_new(c.as_ptr(), bad.as_ptr(), 2, 1, &mut m),
            QpStatus::InvalidMeasure
        );
        assert!(!last_error().is_empty());
        assert_eq!(
            qp_measure_new(c.as_ptr(), ptr::null(), 2, 0, &mut m),
            QpStatus::InvalidArgument
        );
        assert_eq!(
            qp_measure_new(c.as_ptr(), ptr::null(), usize::MAX, 2, &mut m),
            QpStatus::InvalidArgument
        );
        let nan = [f64::NAN, 1.0];
        assert_ne!(
            qp_measure_new(nan.as_ptr(), ptr::null(), 2, 1, &mut m),
            QpStatus::Ok
        );

        let a = measure(&[0.0, 1.0], None, 1);
        let b = measure(&[0.0, 1.0, 2.0, 3.0], None, 2);
        let mut v = 0.0;
        assert_eq!(
            qp_wasserstein(a, b, 2.0, 2.0, &mut v),
            QpStatus::DimensionMismatch
        );
        assert_eq!(
            qp_wasserstein(a, a, 2.0, 0.5, &mut v),
            QpStatus::InvalidArgument
        );
        assert_eq!(
            qp_wasserstein(a, ptr::null(), 2.0, 2.0, &mut v),
            QpStatus::NullPointer
        );
        assert_eq!(qp_wasserstein(a, a, 2.0, 2.0, &mut v), QpStatus::Ok);
        assert!(last_error().is_empty());

        let xs = [0.0, 1.0];
        assert_eq!(
            qp_ot_1d_sorted(xs.as_ptr(), xs.as_ptr(), 2, 2.0, 2.0, ptr::null_mut()),
            QpStatus::NullPointer
        );

        assert_eq!(qp_measure_len(ptr::null()), 0);
        qp_measure_free(ptr::null_mut());
        qp_measure_free(a);
        qp_measure_free(b);

        let name = CStr::from_ptr(qp_status_name(QpStatus::DimensionMismatch));
        assert_eq!(name.to_str().unwrap(), "dimension mismatch");
        let ver = CStr::from_ptr(qp_version());
        assert_eq!(ver.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn generator_round_trip_matches_rust_eval() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    let net = MlpNetwork::toy(3, 2, &mut SeededRng::new(11)).unwrap();
    save_checkpoint(&net, &path).unwrap();
    let z: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
    let want = net.eval(&Tensor::from_vec(5, 3, z.clone())).unwrap();

    unsafe {
        let mut g = ptr::null_mut();
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(qp_generator_load(cpath.as_ptr(), &mut g), QpStatus::Ok);
        assert_eq!(qp_generator_input_dim(g), 3);
        assert_eq!(qp_generator_output_dim(g), 2);
        let mut got = vec![0.0; 10];
        assert_eq!(
            qp_generator_apply(g, z.as_ptr(), 5, got.as_mut_ptr()),
            QpStatus::Ok
        );
        assert_eq!(got, want.data);
        qp_generator_free(g);

        let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(qp_generator_load(missing.as_ptr(), &mut g), QpStatus::Io);
        assert!(g.is_null());
    }
}
