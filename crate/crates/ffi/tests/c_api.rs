use std::ffi::{CStr, CString};
use std::ptr;

use gsr_ffi::*;

const TINY: &str = r#"
seeds = [0, 1]

[dataset.sbm]
block_sizes = [20, 20]
p_in = 0.3
p_out = 0.02
feature_dim = 8
feature_signal = 3.0
noise_edge_fraction = 0.0
seed = 3

[deepwalk]
walks_per_node = 2
walk_length = 10
dim = 8
epochs = 1

[pretrain]
epochs = 1
batch_size = 16
queue_size = 31
hidden_dim = 8
out_dim = 4
decoder_hidden_dim = 4

[finetune]
max_epochs = 20
patience = 5
"#;

fn last_error() -> String {
    let p = gsr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tiny_config() -> *mut GsrConfig {
    let text = CString::new(TINY).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { gsr_config_from_toml(text.as_ptr(), &mut cfg) }, GsrStatus::Ok);
    cfg
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { gsr_string_free(p) };
    s
}

#[test]
fn run_through_handles() {
    let cfg = tiny_config();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { gsr_dataset_from_config(cfg, &mut ds) }, GsrStatus::Ok);
    assert_eq!(unsafe { gsr_dataset_num_nodes(ds) }, 40);
    assert!(unsafe { gsr_dataset_num_edges(ds) } > 0);

    let mut report = ptr::null_mut();
    assert_eq!(unsafe { gsr_run(ds, cfg, ptr::null(), &mut report) }, GsrStatus::Ok);
    assert_eq!(unsafe { gsr_report_num_runs(report) }, 2);
    let mean = unsafe { gsr_report_mean_accuracy(report) };
    assert!((0.0..=1.0).contains(&mean));
    let mut acc = -1.0;
    assert_eq!(unsafe { gsr_report_run_accuracy(report, 1, &mut acc) }, GsrStatus::Ok);
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(unsafe { gsr_report_run_accuracy(report, 2, &mut acc) }, GsrStatus::OutOfRange);
    assert!(last_error().contains("out of range"));

    let mut fp = ptr::null_mut();
    assert_eq!(unsafe { gsr_report_fingerprint(report, &mut fp) }, GsrStatus::Ok);
    let fp = take_string(fp);
    assert_eq!(fp.len(), 64);

    // Same inputs, same fingerprint.
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { gsr_run(ds, cfg, ptr::null(), &mut again) }, GsrStatus::Ok);
    let mut fp2 = ptr::null_mut();
    assert_eq!(unsafe { gsr_report_fingerprint(again, &mut fp2) }, GsrStatus::Ok);
    assert_eq!(take_string(fp2), fp);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { gsr_report_to_json(report, &mut json) }, GsrStatus::Ok);
    assert!(take_string(json).contains("\"mean_acc\""));

    let variant = CString::new("gcn").unwrap();
    let mut gcn = ptr::null_mut();
    assert_eq!(unsafe { gsr_run(ds, cfg, variant.as_ptr(), &mut gcn) }, GsrStatus::Ok);
    assert_eq!(unsafe { gsr_report_num_runs(gcn) }, 2);

    unsafe {
        gsr_report_free(gcn);
        gsr_report_free(again);
        gsr_report_free(report);
        gsr_dataset_free(ds);
        gsr_config_free(cfg);
    }
}

#[test]
fn config_overrides_and_errors() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { gsr_config_new(&mut cfg) }, GsrStatus::Ok);
    let ok = CString::new("pretrain.alpha=0.25").unwrap();
    assert_eq!(unsafe { gsr_config_set(cfg, ok.as_ptr()) }, GsrStatus::Ok);
    assert!(gsr_last_error().is_null());
    let bad = CString::new("pretrain.alpha=3").unwrap();
    assert_eq!(unsafe { gsr_config_set(cfg, bad.as_ptr()) }, GsrStatus::InvalidConfig);
    assert!(last_error().contains("alpha"));
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { gsr_config_to_toml(cfg, &mut text) }, GsrStatus::Ok);
    assert!(take_string(text).contains("alpha = 0.25"));
    unsafe { gsr_config_free(cfg) };
}

#[test]
fn null_and_missing_inputs() {
    assert_eq!(unsafe { gsr_config_new(ptr::null_mut()) }, GsrStatus::NullArgument);
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { gsr_dataset_load(ptr::null(), &mut ds) }, GsrStatus::NullArgument);
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let status = unsafe { gsr_dataset_load(missing.as_ptr(), &mut ds) };
    assert_ne!(status, GsrStatus::Ok);
    assert!(ds.is_null());
    assert!(last_error().contains("nope"));
    assert_eq!(unsafe { gsr_dataset_num_nodes(ptr::null()) }, 0);
    assert!(unsafe { gsr_report_mean_accuracy(ptr::null()) }.is_nan());
    unsafe {
        gsr_dataset_free(ptr::null_mut());
        gsr_report_free(ptr::null_mut());
        gsr_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gsr.h")).unwrap();
    for name in [
        "typedef struct GsrDataset GsrDataset",
        "typedef struct GsrConfig GsrConfig",
        "typedef struct GsrReport GsrReport",
        "GSR_STATUS_OK = 0",
        "gsr_last_error",
        "gsr_string_free",
        "gsr_run",
        "gsr_report_fingerprint",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
