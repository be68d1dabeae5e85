use std::ffi::{CStr, CString};
use std::ptr;

use adaptau_ffi::*;

fn last_error() -> String {
    let p = adaptau_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions() {
    let mut w = f64::NAN;
    unsafe {
        assert_eq!(adaptau_lambert_w(std::f64::consts::E, &mut w), AdaptauStatus::Ok);
        assert!((w - 1.0).abs() < 1e-12);
        assert_eq!(adaptau_lambert_w(-1.0, &mut w), AdaptauStatus::InvalidArgument);
        assert!(last_error().contains("Lambert"));
        assert_eq!(adaptau_lambert_w(0.0, ptr::null_mut()), AdaptauStatus::NullPointer);

        let mut tau = 0.0;
        assert_eq!(adaptau_tau_user(2.0, 2.0, 1.0, 0.15, &mut tau), AdaptauStatus::Ok);
        assert!((tau - 0.15).abs() < 1e-15);
        assert_eq!(adaptau_tau_user(1.0, 0.0, -1.0, 0.15, &mut tau), AdaptauStatus::InvalidArgument);

        // delta mu 0.4 over log(100*1000 / (2*500)) = log 100
        assert_eq!(adaptau_tau0(0.5, 0.1, 100, 1000, 500, 0.02, 1.0, &mut tau), AdaptauStatus::Ok);
        assert!((tau - 0.4 / 100f64.ln()).abs() < 1e-12);
        assert_eq!(adaptau_tau0(0.5, 0.1, 100, 1000, 500, 0.5, 0.1, &mut tau), AdaptauStatus::InvalidArgument);
    }
}

#[test]
fn train_evaluate_and_checkpoint() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(adaptau_dataset_synthetic(80, 120, 12.0, 4, &mut ds), AdaptauStatus::Ok);
        let (mut n, mut m, mut tr, mut te) = (0, 0, 0, 0);
        assert_eq!(adaptau_dataset_shape(ds, &mut n, &mut m, &mut tr, &mut te), AdaptauStatus::Ok);
        assert_eq!((n, m), (80, 120));
        assert!(tr > te && te > 0);

        let mut cfg = adaptau_train_config_default();
        cfg.dim = 16;
        cfg.negatives = 8;
        cfg.batch_size = 64;
        cfg.lr = 0.01;
        let mut trainer = ptr::null_mut();
        assert_eq!(adaptau_trainer_new(ds, &cfg, &mut trainer), AdaptauStatus::Ok);
        adaptau_dataset_free(ds);

        let (mut first, mut loss, mut tau0) = (0.0, 0.0, 0.0);
        assert_eq!(adaptau_trainer_epoch(trainer, &mut first, ptr::null_mut()), AdaptauStatus::Ok);
        for _ in 0..4 {
            assert_eq!(adaptau_trainer_epoch(trainer, &mut loss, &mut tau0), AdaptauStatus::Ok);
        }
        assert!(loss < first);
        assert!((0.02..=1.0).contains(&tau0));

        let (mut recall, mut ndcg) = (0.0, 0.0);
        assert_eq!(adaptau_trainer_evaluate(trainer, 20, &mut recall, &mut ndcg), AdaptauStatus::Ok);
        assert!(recall > 0.0 && recall <= 1.0 && ndcg > 0.0);
        assert_eq!(adaptau_trainer_evaluate(trainer, 0, &mut recall, &mut ndcg), AdaptauStatus::InvalidArgument);

        let mut tau_u = 0.0;
        assert_eq!(adaptau_trainer_user_tau(trainer, 3, &mut tau_u), AdaptauStatus::Ok);
        assert!(tau_u > 0.0);
        assert_eq!(adaptau_trainer_user_tau(trainer, 80, &mut tau_u), AdaptauStatus::InvalidArgument);

        let mut table = ptr::null_mut();
        assert_eq!(adaptau_trainer_table(trainer, &mut table), AdaptauStatus::Ok);
        adaptau_trainer_free(trainer);
        let mut score = 0.0;
        assert_eq!(adaptau_table_score(table, 0, 0, &mut score), AdaptauStatus::Ok);
        assert!(score.abs() <= 1.0 + 1e-12);
        assert_eq!(adaptau_table_score(table, 80, 0, &mut score), AdaptauStatus::InvalidArgument);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("emb.bin").to_str().unwrap()).unwrap();
        assert_eq!(adaptau_table_save(table, path.as_ptr()), AdaptauStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(adaptau_table_load(path.as_ptr(), &mut loaded), AdaptauStatus::Ok);
        let (mut ln, mut lm, mut ld) = (0, 0, 0);
        assert_eq!(adaptau_table_shape(loaded, &mut ln, &mut lm, &mut ld), AdaptauStatus::Ok);
        assert_eq!((ln, lm, ld), (80, 120, 16));
        adaptau_table_free(table);
        adaptau_table_free(loaded);
    }
}

#[test]
fn errors_and_null_handles() {
    unsafe {
        let mut ds = ptr::null_mut();
        let missing = CString::new("/nonexistent/interactions.txt").unwrap();
        let status = adaptau_dataset_load(missing.as_ptr(), AdaptauFormat::PairList, 0.8, 0, &mut ds);
        assert_eq!(status, AdaptauStatus::Io);
        assert!(ds.is_null());
        assert_eq!(
            adaptau_dataset_load(ptr::null(), AdaptauFormat::PairList, 0.8, 0, &mut ds),
            AdaptauStatus::NullPointer
        );
        assert_eq!(adaptau_trainer_epoch(ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), AdaptauStatus::NullPointer);
        assert!(last_error().contains("trainer"));

        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("pairs.txt");
        std::fs::write(&file, "0\t1\n0\tx\n").unwrap();
        let path = CString::new(file.to_str().unwrap()).unwrap();
        assert_eq!(adaptau_dataset_load(path.as_ptr(), AdaptauFormat::PairList, 0.8, 0, &mut ds), AdaptauStatus::Parse);
        assert!(last_error().contains(":2:"));

        adaptau_dataset_free(ptr::null_mut());
        adaptau_trainer_free(ptr::null_mut());
        adaptau_table_free(ptr::null_mut());
    }
}

#[test]
fn invalid_config_is_rejected() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(adaptau_dataset_synthetic(30, 40, 6.0, 1, &mut ds), AdaptauStatus::Ok);
        let mut cfg = adaptau_train_config_default();
        cfg.dim = 0;
        let mut trainer = ptr::null_mut();
        assert_eq!(adaptau_trainer_new(ds, &cfg, &mut trainer), AdaptauStatus::InvalidArgument);
        assert!(trainer.is_null());
        adaptau_dataset_free(ds);
    }
}
