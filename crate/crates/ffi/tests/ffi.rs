use std::ffi::{CStr, CString};
use std::ptr;

use csp_refute_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn sample_evaluate_refute() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(csp_instance_sample(c("builtin:neq").as_ptr(), 8, 20.0, 3, &mut inst), CspStatus::Ok);
        let (mut n, mut m) = (0usize, 0usize);
        assert_eq!(csp_instance_shape(inst, &mut n, &mut m), CspStatus::Ok);
        assert_eq!(n, 8);

        let mut opt = 0.0;
        let mut x = vec![0u32; n];
        assert_eq!(csp_brute_opt(inst, &mut opt, x.as_mut_ptr()), CspStatus::Ok);
        let mut v = 0.0;
        assert_eq!(csp_eval_value(inst, x.as_ptr(), n, &mut v), CspStatus::Ok);
        assert_eq!(v, opt);

        let mut cert = ptr::null_mut();
        assert_eq!(csp_refute(inst, 2, 0, 0.2, 0, &mut cert), CspStatus::Ok);
        let mut bound = 0.0;
        let mut certified = 0;
        assert_eq!(csp_certificate_bound(cert, &mut bound, &mut certified), CspStatus::Ok);
        assert!(bound >= opt);
        assert_eq!(certified, 1);

        let mut js = ptr::null_mut();
        assert_eq!(csp_certificate_to_json(cert, &mut js), CspStatus::Ok);
        assert!(CStr::from_ptr(js).to_str().unwrap().contains("final_bound"));
        csp_string_free(js);
        csp_certificate_free(cert);

        let mut text = ptr::null_mut();
        assert_eq!(csp_instance_to_json(inst, &mut text), CspStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(csp_instance_from_json(text, &mut back), CspStatus::Ok);
        let mut text2 = ptr::null_mut();
        assert_eq!(csp_instance_to_json(back, &mut text2), CspStatus::Ok);
        assert_eq!(CStr::from_ptr(text), CStr::from_ptr(text2));
        csp_string_free(text);
        csp_string_free(text2);
        csp_instance_free(back);
        csp_instance_free(inst);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(csp_instance_from_json(c("{not json").as_ptr(), &mut inst), CspStatus::Format);
        assert!(!csp_last_error_message().is_null());
        assert_eq!(csp_instance_from_json(ptr::null(), &mut inst), CspStatus::NullPointer);
        assert_eq!(
            csp_instance_sample(c("builtin:nosuch").as_ptr(), 8, 20.0, 0, &mut inst),
            CspStatus::InvalidParameters
        );
        let mut v = 0.0;
        assert_eq!(csp_eval_value(ptr::null(), ptr::null(), 0, &mut v), CspStatus::NullPointer);
        csp_instance_free(ptr::null_mut());
        csp_certificate_free(ptr::null_mut());
        csp_string_free(ptr::null_mut());
    }
}

#[test]
fn opt_t_of_one_in_three() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(csp_opt_t(c("builtin:1in3").as_ptr(), 2, 0.1, &mut v), CspStatus::Ok);
    }
    assert!((0.0..=1.0).contains(&v));
}

#[test]
fn header_compiles_as_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = format!("{dir}/include/csp_refute.h");
    if !std::path::Path::new(&header).exists() {
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"csp_refute.h\"\nint main(void){ CspStatus s = CSP_STATUS_OK; (void)csp_last_error_message; return (int)s; }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(format!("{dir}/include"))
        .arg(&src)
        .status();
    if let Ok(s) = status {
        assert!(s.success());
    }
}
