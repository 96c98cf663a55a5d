//! C ABI over the benchmark engine.
//!
//! Every fallible call returns a [`GmebStatus`]; on anything but
//! `GMEB_STATUS_OK` the message is available from [`gmeb_last_error`] on the
//! same thread. Handles are opaque and must be released with their `_free`
//! function. Strings returned by the library are released with
//! [`gmeb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gmeb::defenses::inference;
use gmeb::graph::{edge_homophily, generate_sbm, load_graph_bundle, structural_stats, Graph, SbmParams};
use gmeb::harness::{run_track, write_jsonl, ExperimentConfig};
use gmeb::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmebStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGraph = 3,
    Io = 4,
    Format = 5,
    Config = 6,
    Budget = 7,
    Training = 8,
    Panic = 9,
}

impl From<&Error> for GmebStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Bundle { .. } | Error::InvalidGraph(_) => GmebStatus::InvalidGraph,
            Error::InvalidArgument(_) | Error::Shape(_) => GmebStatus::InvalidArgument,
            Error::Diverged { .. } | Error::Defense { .. } => GmebStatus::Training,
            Error::BudgetExhausted { .. } | Error::DegenerateBudget { .. } => GmebStatus::Budget,
            Error::Format(_) | Error::Json(_) | Error::Csv(_) => GmebStatus::Format,
            Error::Config(_) => GmebStatus::Config,
            Error::Io(_) => GmebStatus::Io,
        }
    }
}

/// Response transforms exposed by [`gmeb_transform_probs`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmebTransform {
    /// One-hot argmax; `param` unused.
    Top1 = 0,
    /// Rounding to `2^param` levels, then renormalised.
    Quantize = 1,
    /// Runner-up mass moved to the least likely class; `param` is the strength.
    Redirect = 2,
    /// Reversed vector below confidence `param`.
    Misinform = 3,
}

/// Opaque graph handle.
pub struct GmebGraph {
    graph: Graph,
}

/// Structural summary of a graph.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GmebGraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_classes: usize,
    pub feat_dim: usize,
    pub avg_degree: f64,
    pub density: f64,
    pub edge_homophily: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: GmebStatus, msg: impl Into<String>) -> GmebStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), GmebStatus>) -> GmebStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GmebStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(GmebStatus::Panic, msg)
        }
    }
}

fn lib_err(e: Error) -> GmebStatus {
    fail(GmebStatus::from(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, GmebStatus> {
    if p.is_null() {
        return Err(fail(GmebStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GmebStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn graph_arg<'a>(g: *const GmebGraph) -> Result<&'a Graph, GmebStatus> {
    g.as_ref()
        .map(|h| &h.graph)
        .ok_or_else(|| fail(GmebStatus::NullPointer, "graph handle is null"))
}

fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, GmebStatus> {
    // SAFETY: the caller guarantees a non-null `p` is valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| fail(GmebStatus::NullPointer, format!("{what} is null")))
}

fn into_handle(graph: Graph, out: *mut *mut GmebGraph) -> Result<(), GmebStatus> {
    let slot = out_arg(out, "out")?;
    *slot = Box::into_raw(Box::new(GmebGraph { graph }));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn gmeb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a graph bundle directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gmeb_graph_load(dir: *const c_char, out: *mut *mut GmebGraph) -> GmebStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let bundle = load_graph_bundle(dir).map_err(lib_err)?;
        into_handle(bundle.graph, out)
    })
}

/// Generates a planted-partition graph.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gmeb_graph_generate_sbm(
    n: usize,
    num_classes: usize,
    p_in: f64,
    p_out: f64,
    feat_dim: usize,
    feat_signal: f64,
    seed: u64,
    out: *mut *mut GmebGraph,
) -> GmebStatus {
    guard(|| {
        let params = SbmParams {
            n,
            num_classes,
            p_in,
            p_out,
            feat_dim,
            feat_signal,
        };
        let g = generate_sbm(&params, seed).map_err(lib_err)?;
        into_handle(g, out)
    })
}

/// Releases a graph handle. Null is ignored.
///
/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gmeb_graph_free(g: *mut GmebGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gmeb_graph_stats(g: *const GmebGraph, out: *mut GmebGraphStats) -> GmebStatus {
    guard(|| {
        let g = graph_arg(g)?;
        let s = structural_stats(g);
        *out_arg(out, "out")? = GmebGraphStats {
            num_nodes: s.num_nodes,
            num_edges: s.num_edges,
            num_classes: g.num_classes(),
            feat_dim: g.feat_dim(),
            avg_degree: s.avg_degree,
            density: s.density,
            edge_homophily: s.edge_homophily,
        };
        Ok(())
    })
}

/// Edge homophily; 0 for a graph without edges.
///
/// # Safety
/// `g` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gmeb_graph_homophily(g: *const GmebGraph, out: *mut f64) -> GmebStatus {
    guard(|| {
        let g = graph_arg(g)?;
        *out_arg(out, "out")? = edge_homophily(g).value;
        Ok(())
    })
}

/// Runs one track of a JSON experiment config and returns its records as
/// JSONL. Release `*out` with [`gmeb_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn gmeb_run_track_json(config_json: *const c_char, out: *mut *mut c_char) -> GmebStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let slot = out_arg(out, "out")?;
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| fail(GmebStatus::Config, format!("config: {e}")))?;
        let records = run_track(&cfg, 0, cfg.root_seed).map_err(lib_err)?;
        let mut buf = Vec::new();
        write_jsonl(&records, &mut buf).map_err(lib_err)?;
        let s = CString::new(buf).map_err(|_| fail(GmebStatus::Format, "record text has a NUL"))?;
        *slot = s.into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gmeb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Applies a response transform to one probability vector of length `len`,
/// writing `len` values to `out` (which may alias `probs`).
///
/// # Safety
/// `probs` must be readable and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gmeb_transform_probs(
    kind: GmebTransform,
    param: f64,
    probs: *const f64,
    len: usize,
    out: *mut f64,
) -> GmebStatus {
    guard(|| {
        if probs.is_null() || out.is_null() {
            return Err(fail(GmebStatus::NullPointer, "probs or out is null"));
        }
        if len == 0 {
            return Err(fail(GmebStatus::InvalidArgument, "empty probability vector"));
        }
        let p = std::slice::from_raw_parts(probs, len).to_vec();
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(fail(GmebStatus::InvalidArgument, "probabilities must be finite and >= 0"));
        }
        let r = match kind {
            GmebTransform::Top1 => inference::top1(&p),
            GmebTransform::Quantize => {
                if !(param >= 1.0 && param <= 16.0 && param.fract() == 0.0) {
                    return Err(fail(GmebStatus::InvalidArgument, "bits must be an integer in 1..=16"));
                }
                inference::quantize(&p, param as u32)
            }
            GmebTransform::Redirect => inference::redirect(&p, param),
            GmebTransform::Misinform => inference::misinform(&p, param),
        };
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&r);
        Ok(())
    })
}

/// 1 when `subject` is strictly above both references, else 0.
#[no_mangle]
pub extern "C" fn gmeb_e_ave(subject: f64, clean: f64, random: f64) -> u8 {
    gmeb::defenses::e_ave(subject, clean, random)
}

/// Fraction of positions where two label arrays of length `len` agree.
///
/// # Safety
/// `a` and `b` must be readable for `len` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gmeb_fidelity(a: *const usize, b: *const usize, len: usize, out: *mut f64) -> GmebStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(fail(GmebStatus::NullPointer, "label array is null"));
        }
        let (a, b) = (std::slice::from_raw_parts(a, len), std::slice::from_raw_parts(b, len));
        let mask: Vec<usize> = (0..len).collect();
        *out_arg(out, "out")? = gmeb::metrics::fidelity(a, b, &mask).value;
        Ok(())
    })
}
