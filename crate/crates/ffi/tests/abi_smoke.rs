//! Exercises the C ABI end to end from Rust: reference problem, relax,
//! extract, simulate, file round trips.

use std::ffi::CString;
use std::ptr;

use momheat_ffi::*;

fn tmp(name: &str) -> CString {
    let dir = std::env::temp_dir().join(format!("momheat-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    CString::new(dir.join(name).to_str().unwrap()).unwrap()
}

#[test]
fn pipeline_through_the_abi() {
    unsafe {
        let mut problem: *mut MhProblem = ptr::null_mut();
        assert_eq!(
            mh_problem_reference(0, 4, &mut problem),
            MhStatus::Ok,
            "reference problem"
        );
        assert!(!problem.is_null());

        let mut moments: *mut MhMoments = ptr::null_mut();
        let st = mh_relax(problem, &mut moments);
        assert!(
            matches!(st, MhStatus::Ok | MhStatus::NotOptimal),
            "relax status {st:?}"
        );
        assert!(!moments.is_null());

        let mut objective = f64::NAN;
        assert_eq!(mh_moments_objective(moments, &mut objective), MhStatus::Ok);
        assert!(objective.is_finite() && objective >= -1e-9);
        let mut degree = 0u32;
        assert_eq!(mh_moments_degree(moments, &mut degree), MhStatus::Ok);
        assert_eq!(degree, 4);

        // Moments file round trip.
        let mpath = tmp("moments.txt");
        assert_eq!(mh_moments_save(moments, mpath.as_ptr()), MhStatus::Ok);
        let mut mo2: *mut MhMoments = ptr::null_mut();
        assert_eq!(mh_moments_load(mpath.as_ptr(), &mut mo2), MhStatus::Ok);
        let mut obj2 = f64::NAN;
        assert_eq!(mh_moments_objective(mo2, &mut obj2), MhStatus::Ok);
        assert_eq!(objective.to_bits(), obj2.to_bits());
        mh_moments_free(mo2);

        // Extraction: linear kernel, m = 0, p = 3 at degree 4.
        let mut ctrl: *mut MhController = ptr::null_mut();
        assert_eq!(
            mh_extract(moments, MhForm::Linear, 0, 3, 0, 0, &mut ctrl),
            MhStatus::Ok
        );
        let mut count = 0usize;
        assert_eq!(mh_controller_coeff_count(ctrl, &mut count), MhStatus::Ok);
        assert_eq!(count, 1);
        let mut coeffs = vec![0.0f64; count];
        assert_eq!(
            mh_controller_coeffs(ctrl, coeffs.as_mut_ptr(), count),
            MhStatus::Ok
        );
        assert!(coeffs[0].is_finite());

        // Budget violation surfaces as InvalidArgument with a message.
        let mut bad: *mut MhController = ptr::null_mut();
        let st = mh_extract(moments, MhForm::Linear, 0, 9, 0, 0, &mut bad);
        assert_eq!(st, MhStatus::InvalidArgument);
        assert!(!mh_last_error_message().is_null());

        // Controller file round trip.
        let cpath = tmp("controller.toml");
        assert_eq!(mh_controller_save(ctrl, cpath.as_ptr()), MhStatus::Ok);
        let mut ctrl2: *mut MhController = ptr::null_mut();
        assert_eq!(mh_controller_load(cpath.as_ptr(), &mut ctrl2), MhStatus::Ok);

        // Simulation with the extracted controller and with zero control.
        let mut trace: *mut MhTrace = ptr::null_mut();
        assert_eq!(
            mh_simulate(problem, ctrl2, 0.05, 1e-3, 0.2, &mut trace),
            MhStatus::Ok
        );
        let mut cost = f64::NAN;
        assert_eq!(mh_trace_cost(trace, &mut cost), MhStatus::Ok);
        assert!(cost.is_finite() && cost > 0.0);
        let mut has_blowup = -1;
        let mut tb = 0.0;
        assert_eq!(mh_trace_blowup(trace, &mut has_blowup, &mut tb), MhStatus::Ok);
        assert_eq!(has_blowup, 0);
        let ypath = tmp("y.csv");
        let upath = tmp("u.csv");
        assert_eq!(
            mh_trace_write_csv(trace, ypath.as_ptr(), upath.as_ptr(), 5),
            MhStatus::Ok
        );
        mh_trace_free(trace);

        let mut ztrace: *mut MhTrace = ptr::null_mut();
        assert_eq!(
            mh_simulate(problem, ptr::null(), 0.05, 1e-3, 0.05, &mut ztrace),
            MhStatus::Ok
        );
        mh_trace_free(ztrace);

        // LQR through the ABI.
        let mut lqr: *mut MhController = ptr::null_mut();
        assert_eq!(mh_lqr(problem, 0.05, &mut lqr), MhStatus::Ok);
        let mut n = 0usize;
        assert_eq!(mh_controller_coeff_count(lqr, &mut n), MhStatus::Ok);
        assert_eq!(n, 19);
        let mut lt: *mut MhTrace = ptr::null_mut();
        assert_eq!(
            mh_simulate(problem, lqr, 0.05, 1e-3, 0.3, &mut lt),
            MhStatus::Ok
        );
        let mut final_norm = f64::NAN;
        assert_eq!(mh_trace_final_sup_norm(lt, &mut final_norm), MhStatus::Ok);
        assert!(final_norm < 0.2, "LQR should be decaying: {final_norm}");
        mh_trace_free(lt);
        mh_controller_free(lqr);

        mh_controller_free(ctrl);
        mh_controller_free(ctrl2);
        mh_moments_free(moments);
        mh_problem_free(problem);
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(
            mh_problem_from_config(ptr::null(), ptr::null_mut()),
            MhStatus::NullPointer
        );
        let mut out: *mut MhProblem = ptr::null_mut();
        let missing = CString::new("/nonexistent/momheat.toml").unwrap();
        assert_eq!(
            mh_problem_from_config(missing.as_ptr(), &mut out),
            MhStatus::IoError
        );
        assert!(!mh_last_error_message().is_null());
        let mut m: *mut MhMoments = ptr::null_mut();
        assert_eq!(mh_relax(ptr::null(), &mut m), MhStatus::NullPointer);
        assert_eq!(mh_trace_cost(ptr::null(), &mut 0.0), MhStatus::NullPointer);
    }
}
