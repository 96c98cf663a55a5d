use std::ffi::{CStr, CString};
use std::ptr;

use gmeb::graph::{edge_homophily, generate_sbm, make_splits, write_graph_bundle, SbmParams, SplitFractions};
use gmeb_ffi::*;

fn last_error() -> String {
    let p = gmeb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn sbm(seed: u64) -> *mut GmebGraph {
    let mut g = ptr::null_mut();
    let s = unsafe { gmeb_graph_generate_sbm(90, 3, 0.1, 0.01, 8, 1.0, seed, &mut g) };
    assert_eq!(s, GmebStatus::Ok);
    assert!(!g.is_null());
    g
}

#[test]
fn generated_graph_matches_the_library() {
    let g = sbm(7);
    let mut stats = GmebGraphStats::default();
    let mut h = -1.0;
    unsafe {
        assert_eq!(gmeb_graph_stats(g, &mut stats), GmebStatus::Ok);
        assert_eq!(gmeb_graph_homophily(g, &mut h), GmebStatus::Ok);
        gmeb_graph_free(g);
    }
    let params = SbmParams {
        n: 90,
        num_classes: 3,
        p_in: 0.1,
        p_out: 0.01,
        feat_dim: 8,
        feat_signal: 1.0,
    };
    let lib = generate_sbm(&params, 7).unwrap();
    assert_eq!(stats.num_nodes, 90);
    assert_eq!(stats.num_edges, lib.num_edges());
    assert_eq!(stats.num_classes, 3);
    assert_eq!(stats.feat_dim, 8);
    assert_eq!(h, edge_homophily(&lib).value);
    assert_eq!(stats.edge_homophily, h);
}

#[test]
fn bundle_round_trip_through_the_abi() {
    let params = SbmParams {
        n: 40,
        num_classes: 2,
        p_in: 0.2,
        p_out: 0.02,
        feat_dim: 3,
        feat_signal: 1.0,
    };
    let lib = generate_sbm(&params, 1).unwrap();
    let splits = make_splits(&lib, &SplitFractions::default(), 2).unwrap().spec;
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_graph_bundle(tmp.path(), "toy", &lib, &splits).unwrap();
    let path = CString::new(dir.to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    let mut stats = GmebGraphStats::default();
    unsafe {
        assert_eq!(gmeb_graph_load(path.as_ptr(), &mut g), GmebStatus::Ok);
        assert_eq!(gmeb_graph_stats(g, &mut stats), GmebStatus::Ok);
        gmeb_graph_free(g);
    }
    assert_eq!(stats.num_nodes, 40);
    assert_eq!(stats.num_edges, lib.num_edges());

    let missing = CString::new(tmp.path().join("nope").to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    let s = unsafe { gmeb_graph_load(missing.as_ptr(), &mut g) };
    assert_ne!(s, GmebStatus::Ok);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    let mut h = 0.0;
    let s = unsafe { gmeb_graph_homophily(ptr::null(), &mut h) };
    assert_eq!(s, GmebStatus::NullPointer);
    assert!(last_error().contains("null"));
    let s = unsafe { gmeb_graph_load(ptr::null(), ptr::null_mut()) };
    assert_eq!(s, GmebStatus::NullPointer);
    unsafe {
        gmeb_graph_free(ptr::null_mut());
        gmeb_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_generator_settings_fail_cleanly() {
    let mut g = ptr::null_mut();
    let s = unsafe { gmeb_graph_generate_sbm(10, 1, 0.1, 0.01, 4, 1.0, 0, &mut g) };
    assert_ne!(s, GmebStatus::Ok);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn transforms_match_the_library() {
    let p = [0.1, 0.6, 0.3];
    let mut out = [0.0; 3];
    unsafe {
        assert_eq!(gmeb_transform_probs(GmebTransform::Top1, 0.0, p.as_ptr(), 3, out.as_mut_ptr()), GmebStatus::Ok);
        assert_eq!(out, [0.0, 1.0, 0.0]);
        assert_eq!(gmeb_transform_probs(GmebTransform::Quantize, 2.0, p.as_ptr(), 3, out.as_mut_ptr()), GmebStatus::Ok);
        assert_eq!(out.to_vec(), gmeb::defenses::inference::quantize(&p, 2));
        assert_eq!(gmeb_transform_probs(GmebTransform::Redirect, 0.5, p.as_ptr(), 3, out.as_mut_ptr()), GmebStatus::Ok);
        assert_eq!(out.to_vec(), gmeb::defenses::inference::redirect(&p, 0.5));
        let s = gmeb_transform_probs(GmebTransform::Quantize, 2.5, p.as_ptr(), 3, out.as_mut_ptr());
        assert_eq!(s, GmebStatus::InvalidArgument);
        let bad = [0.5, f64::NAN];
        let s = gmeb_transform_probs(GmebTransform::Top1, 0.0, bad.as_ptr(), 2, out.as_mut_ptr());
        assert_eq!(s, GmebStatus::InvalidArgument);
    }
}

#[test]
fn scalar_metrics() {
    assert_eq!(gmeb_e_ave(0.9, 0.1, 0.12), 1);
    assert_eq!(gmeb_e_ave(0.5, 0.5, 0.1), 0);
    let a = [0usize, 1, 2, 2];
    let b = [0usize, 1, 1, 2];
    let mut f = 0.0;
    assert_eq!(unsafe { gmeb_fidelity(a.as_ptr(), b.as_ptr(), 4, &mut f) }, GmebStatus::Ok);
    assert_eq!(f, 0.75);
}

#[test]
fn track_run_returns_jsonl() {
    let cfg = r#"{
        "datasets": [{"name": "s", "sbm": {"n": 60, "num_classes": 3, "p_in": 0.15,
            "p_out": 0.01, "feat_dim": 6, "feat_signal": 1.5}}],
        "defenses": [{"kind": "Integrity"}, {"kind": "OP_low"}],
        "track": "ownership",
        "seeds": [0]
    }"#;
    let cfg = CString::new(cfg).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { gmeb_run_track_json(cfg.as_ptr(), &mut out) };
    assert_eq!(s, GmebStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { gmeb_string_free(out) };
    let recs = gmeb::harness::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| !r.is_error()));

    let bad = CString::new(r#"{"track": "sideways"}"#).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { gmeb_run_track_json(bad.as_ptr(), &mut out) };
    assert_eq!(s, GmebStatus::Config);
    assert!(out.is_null());
}

#[test]
fn header_declares_the_abi() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gmeb.h")).unwrap();
    for sym in [
        "gmeb_last_error",
        "gmeb_graph_load",
        "gmeb_graph_generate_sbm",
        "gmeb_graph_free",
        "gmeb_graph_stats",
        "gmeb_graph_homophily",
        "gmeb_run_track_json",
        "gmeb_string_free",
        "gmeb_transform_probs",
        "gmeb_e_ave",
        "gmeb_fidelity",
        "GMEB_STATUS_OK",
        "typedef struct GmebGraph GmebGraph",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}
