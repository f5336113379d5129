//! C interface to geognn.
//!
//! Objects cross the boundary as opaque handles created by `gg_*_load` or
//! `gg_*_new` style calls and released with the matching `gg_*_free`.
//! Every fallible call returns a [`GgStatus`]; on failure the message is
//! available from [`gg_last_error`] on the same thread. Panics are caught
//! and reported as `GG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use geognn::featpipe::{normalize_apply, NormalizationStats};
use geognn::graphstore::{sample_ego, EgoSubgraph, FanoutSpec, TransactionGraph};
use geognn::manifold::{
    exp_map0, hyperbolic_distance, klein_mean, klein_to_poincare, log_map0, poincare_to_klein, Curvature,
    KleinMeanMode, KleinPoint, PoincarePoint, TangentVector,
};
use geognn::models::{load_checkpoint, GraphBatch, Model};
use geognn::{rng, Error};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Shape = 4,
    Ingestion = 5,
    Format = 6,
    NonFiniteGradient = 7,
    Config = 8,
    Io = 9,
    Panic = 10,
}

impl From<&Error> for GgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => GgStatus::InvalidInput,
            Error::Domain(_) => GgStatus::Domain,
            Error::Shape { .. } => GgStatus::Shape,
            Error::Ingestion { .. } => GgStatus::Ingestion,
            Error::Format { .. } => GgStatus::Format,
            Error::NonFiniteGradient(_) => GgStatus::NonFiniteGradient,
            Error::Config(_) => GgStatus::Config,
            Error::Io { .. } => GgStatus::Io,
        }
    }
}

/// Loaded transaction graph.
pub struct GgGraph(TransactionGraph);

/// Sampled ego subgraph.
pub struct GgSubgraph(EgoSubgraph);

/// Trained model restored from a checkpoint.
pub struct GgModel(Model);

/// Fitted normalization statistics.
pub struct GgStats(NormalizationStats);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GgStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            GgStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            GgStatus::from(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GgStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidInput(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn optional_path(p: *const c_char, what: &'static str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        path(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next `gg_*` call on the same thread.
#[no_mangle]
pub extern "C" fn gg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- manifold ----------------------------------------------------------

/// Exponential map at the origin: `dim` tangent coordinates to a ball point.
///
/// # Safety
/// `v` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gg_exp0(c: f64, v: *const f64, dim: usize, out: *mut f64) -> GgStatus {
    guard(|| {
        let c = Curvature::new(c)?;
        let v = TangentVector::new(slice(v, dim, "v")?.to_vec(), c)?;
        slice_mut(out, dim, "out")?.copy_from_slice(exp_map0(&v)?.coords());
        Ok(())
    })
}

/// Logarithmic map at the origin.
///
/// # Safety
/// `x` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gg_log0(c: f64, x: *const f64, dim: usize, out: *mut f64) -> GgStatus {
    guard(|| {
        let c = Curvature::new(c)?;
        let x = PoincarePoint::new(slice(x, dim, "x")?.to_vec(), c)?;
        slice_mut(out, dim, "out")?.copy_from_slice(log_map0(&x)?.coords());
        Ok(())
    })
}

/// Poincaré coordinates to Klein coordinates.
///
/// # Safety
/// `x` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gg_poincare_to_klein(c: f64, x: *const f64, dim: usize, out: *mut f64) -> GgStatus {
    guard(|| {
        let c = Curvature::new(c)?;
        let x = PoincarePoint::new(slice(x, dim, "x")?.to_vec(), c)?;
        slice_mut(out, dim, "out")?.copy_from_slice(poincare_to_klein(&x).coords());
        Ok(())
    })
}

/// Klein coordinates to Poincaré coordinates.
///
/// # Safety
/// `x` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gg_klein_to_poincare(c: f64, x: *const f64, dim: usize, out: *mut f64) -> GgStatus {
    guard(|| {
        let c = Curvature::new(c)?;
        let x = KleinPoint::new(slice(x, dim, "x")?.to_vec(), c)?;
        slice_mut(out, dim, "out")?.copy_from_slice(klein_to_poincare(&x).coords());
        Ok(())
    })
}

/// Unweighted Klein-model mean of `n` ball points stored row-major.
///
/// # Safety
/// `points` must point to `n * dim` doubles and `out` to `dim`.
#[no_mangle]
pub unsafe extern "C" fn gg_klein_mean(c: f64, points: *const f64, n: usize, dim: usize, out: *mut f64) -> GgStatus {
    guard(|| {
        let c = Curvature::new(c)?;
        if dim == 0 {
            return Err(Error::InvalidInput("dim must be positive".into()).into());
        }
        let flat = slice(points, n * dim, "points")?;
        let pts = flat
            .chunks(dim)
            .map(|row| PoincarePoint::new(row.to_vec(), c))
            .collect::<Result<Vec<_>, _>>()?;
        let mean = klein_mean(&pts, KleinMeanMode::Unweighted)?;
        slice_mut(out, dim, "out")?.copy_from_slice(mean.coords());
        Ok(())
    })
}

/// Geodesic distance between two ball points.
///
/// # Safety
/// `x` and `y` must point to `dim` doubles; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn gg_distance(c: f64, x: *const f64, y: *const f64, dim: usize, out: *mut f64) -> GgStatus {
    guard(|| {
        let c = Curvature::new(c)?;
        let x = PoincarePoint::new(slice(x, dim, "x")?.to_vec(), c)?;
        let y = PoincarePoint::new(slice(y, dim, "y")?.to_vec(), c)?;
        let d = hyperbolic_distance(&x, &y)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = d;
        Ok(())
    })
}

// ---- graphs and subgraphs ----------------------------------------------

/// Loads an edge list plus optional feature and label files (NULL to skip).
///
/// # Safety
/// Paths must be NUL-terminated strings or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gg_graph_load(
    edges: *const c_char,
    features: *const c_char,
    labels: *const c_char,
    out: *mut *mut GgGraph,
) -> GgStatus {
    guard(|| {
        let e = path(edges, "edges")?;
        let f = optional_path(features, "features")?;
        let l = optional_path(labels, "labels")?;
        let g = TransactionGraph::load(&e, f.as_deref(), l.as_deref())?;
        emit(out, GgGraph(g))
    })
}

/// Number of nodes, or 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gg_graph_node_count(graph: *const GgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.node_count())
}

/// Number of feature columns, or 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gg_graph_feature_dim(graph: *const GgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.feature_dim())
}

/// # Safety
/// `graph` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gg_graph_free(graph: *mut GgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Samples the ego subgraph of `seed` with `depth` per-hop fan-outs. The
/// draw is determined by `(rng_seed, seed)`.
///
/// # Safety
/// `fanouts` must point to `depth` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gg_sample_ego(
    graph: *const GgGraph,
    seed: usize,
    fanouts: *const usize,
    depth: usize,
    rng_seed: u64,
    out: *mut *mut GgSubgraph,
) -> GgStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        if fanouts.is_null() && depth > 0 {
            return Err(Failure::Null("fanouts"));
        }
        let f = if depth == 0 { Vec::new() } else { std::slice::from_raw_parts(fanouts, depth).to_vec() };
        let spec = FanoutSpec::new(f)?;
        let mut r = rng::stream(rng_seed, &[seed as u64]);
        emit(out, GgSubgraph(sample_ego(&g.0, seed, &spec, &mut r)?))
    })
}

/// Node count of a subgraph, or 0 for NULL.
///
/// # Safety
/// `sub` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gg_subgraph_len(sub: *const GgSubgraph) -> usize {
    sub.as_ref().map_or(0, |s| s.0.len())
}

/// Copies up to `cap` original node ids (seed first) into `out` and
/// returns the total count.
///
/// # Safety
/// `out` must hold `cap` values or be NULL with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn gg_subgraph_nodes(sub: *const GgSubgraph, out: *mut usize, cap: usize) -> usize {
    let Some(s) = sub.as_ref() else { return 0 };
    if !out.is_null() {
        for (i, &v) in s.0.nodes.iter().take(cap).enumerate() {
            *out.add(i) = v;
        }
    }
    s.0.len()
}

/// # Safety
/// `sub` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gg_subgraph_free(sub: *mut GgSubgraph) {
    if !sub.is_null() {
        drop(Box::from_raw(sub));
    }
}

// ---- normalization and models ------------------------------------------

/// Loads normalization statistics written by the `normalize` stage.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gg_stats_load(file: *const c_char, out: *mut *mut GgStats) -> GgStatus {
    guard(|| {
        let p = path(file, "path")?;
        emit(out, GgStats(NormalizationStats::load(&p)?))
    })
}

/// Normalizes a subgraph's features in place.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn gg_subgraph_normalize(sub: *mut GgSubgraph, stats: *const GgStats) -> GgStatus {
    guard(|| {
        let s = sub.as_mut().ok_or(Failure::Null("sub"))?;
        let st = handle(stats, "stats")?;
        if s.0.feature_dim != st.0.names().len() {
            return Err(Error::InvalidInput(format!(
                "subgraph has {} features, stats cover {}",
                s.0.feature_dim,
                st.0.names().len()
            ))
            .into());
        }
        normalize_apply(&mut s.0.features, &st.0)?;
        Ok(())
    })
}

/// # Safety
/// `stats` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gg_stats_free(stats: *mut GgStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// Restores a model from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gg_model_load(file: *const c_char, out: *mut *mut GgModel) -> GgStatus {
    guard(|| {
        let p = path(file, "path")?;
        emit(out, GgModel(load_checkpoint(&p)?))
    })
}

/// Feature width the model expects, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gg_model_input_dim(model: *const GgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.input_dim)
}

/// Predicted class index (0..7) of the subgraph's seed.
///
/// # Safety
/// Both handles must be live; `class_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gg_model_predict(
    model: *const GgModel,
    sub: *const GgSubgraph,
    class_out: *mut u32,
) -> GgStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let s = handle(sub, "sub")?;
        let out = class_out.as_mut().ok_or(Failure::Null("class_out"))?;
        if s.0.feature_dim != m.0.input_dim {
            return Err(Error::InvalidInput(format!(
                "model expects {} features, subgraph has {}",
                m.0.input_dim, s.0.feature_dim
            ))
            .into());
        }
        let batch = GraphBatch::from_subgraphs(&[&s.0])?;
        *out = m.0.predict(&batch)?[0] as u32;
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gg_model_free(model: *mut GgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
