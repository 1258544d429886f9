//! C ABI over the groundcue library.
//!
//! Every fallible function returns a [`GcStatus`]. On failure a message is
//! kept per thread and can be read with [`gc_last_error`]. Objects crossing
//! the boundary are opaque handles released with their matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use groundcue::cues::{extract_cues, RedCueParams};
use groundcue::error::{ImagingError, PipelineError};
use groundcue::eval::compute_metrics;
use groundcue::geometry::{iou, BBox};
use groundcue::imaging::{preprocess, EnhanceParams, ImageBuffer};
use groundcue::pipeline::{GroundingTask, Pipeline, PipelineConfig, Provenance};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Imaging = 3,
    Io = 4,
    Config = 5,
    Backend = 6,
    Task = 7,
    Eval = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Half-open pixel box: `x_min <= x < x_max`, `y_min <= y < y_max`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GcBox {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcEnhanceParams {
    pub clahe_clip_limit: f64,
    pub tile_cols: u32,
    pub tile_rows: u32,
    pub unsharp_sigma: f64,
    pub unsharp_amount: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcCueParams {
    pub r_min: u8,
    pub g_max: u8,
    pub b_max: u8,
    pub min_component_area: usize,
    pub nesting_containment: f64,
}

/// How the final box of a grounding call was produced.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcProvenance {
    RefinedLarge = 0,
    RefinedSmall = 1,
    RefinedFallbackAlternate = 2,
    DiffusionFallback = 3,
    None = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcGroundResult {
    /// False when no box was found; `bbox` is then all zeros.
    pub has_box: bool,
    pub bbox: GcBox,
    pub provenance: GcProvenance,
    /// Number of red cue boxes found in the edited image.
    pub n_cues: usize,
}

/// Opaque RGB8 raster.
pub struct GcImage {
    inner: ImageBuffer,
}

/// Opaque configured pipeline; safe to share across threads.
pub struct GcPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(GcStatus, String);

type FfiResult<T = ()> = Result<T, Failure>;

fn fail<T>(status: GcStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

impl From<ImagingError> for Failure {
    fn from(e: ImagingError) -> Self {
        let status = match e {
            ImagingError::Read { .. } | ImagingError::Io(_) => GcStatus::Io,
            ImagingError::Geometry(_) | ImagingError::BufferLength { .. } => GcStatus::InvalidArgument,
            _ => GcStatus::Imaging,
        };
        Failure(status, e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::Backend { .. } => GcStatus::Backend,
            PipelineError::Imaging { .. } => GcStatus::Imaging,
            PipelineError::Task { .. } => GcStatus::Task,
            PipelineError::MissingEndpoint(_) | PipelineError::Config(_) => GcStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> FfiResult) -> GcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            set_error(format!("internal panic: {msg}"));
            GcStatus::Panic
        }
    }
}

unsafe fn arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    match p.as_ref() {
        Some(v) => Ok(v),
        None => fail(GcStatus::NullArgument, format!("`{name}` is null")),
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    match p.as_mut() {
        Some(v) => Ok(v),
        None => fail(GcStatus::NullArgument, format!("`{name}` is null")),
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(GcStatus::NullArgument, format!("`{name}` is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(GcStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(GcStatus::NullArgument, format!("`{name}` is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn to_bbox(b: &GcBox) -> FfiResult<BBox> {
    BBox::new(b.x_min, b.y_min, b.x_max, b.y_max).or_else(|e| fail(GcStatus::InvalidArgument, e.to_string()))
}

fn from_bbox(b: &BBox) -> GcBox {
    let [x_min, y_min, x_max, y_max] = b.to_array();
    GcBox {
        x_min,
        y_min,
        x_max,
        y_max,
    }
}

fn from_provenance(p: Provenance) -> GcProvenance {
    match p {
        Provenance::RefinedLarge => GcProvenance::RefinedLarge,
        Provenance::RefinedSmall => GcProvenance::RefinedSmall,
        Provenance::RefinedFallbackAlternate => GcProvenance::RefinedFallbackAlternate,
        Provenance::DiffusionFallback => GcProvenance::DiffusionFallback,
        Provenance::None => GcProvenance::None,
    }
}

impl From<&GcEnhanceParams> for EnhanceParams {
    fn from(p: &GcEnhanceParams) -> Self {
        EnhanceParams {
            clahe_clip_limit: p.clahe_clip_limit,
            clahe_tile_grid: (p.tile_cols, p.tile_rows),
            unsharp_sigma: p.unsharp_sigma,
            unsharp_amount: p.unsharp_amount,
        }
    }
}

impl From<&GcCueParams> for RedCueParams {
    fn from(p: &GcCueParams) -> Self {
        RedCueParams {
            r_min: p.r_min,
            g_max: p.g_max,
            b_max: p.b_max,
            min_component_area: p.min_component_area,
            nesting_containment: p.nesting_containment,
        }
    }
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next `gc_` call on the same thread.
#[no_mangle]
pub extern "C" fn gc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn gc_enhance_params_default() -> GcEnhanceParams {
    let d = EnhanceParams::default();
    GcEnhanceParams {
        clahe_clip_limit: d.clahe_clip_limit,
        tile_cols: d.clahe_tile_grid.0,
        tile_rows: d.clahe_tile_grid.1,
        unsharp_sigma: d.unsharp_sigma,
        unsharp_amount: d.unsharp_amount,
    }
}

#[no_mangle]
pub extern "C" fn gc_cue_params_default() -> GcCueParams {
    let d = RedCueParams::default();
    GcCueParams {
        r_min: d.r_min,
        g_max: d.g_max,
        b_max: d.b_max,
        min_component_area: d.min_component_area,
        nesting_containment: d.nesting_containment,
    }
}

/// Intersection over union of two non-empty boxes.
///
/// # Safety
/// Pointers must be valid for reads (`a`, `b`) or writes (`out`).
#[no_mangle]
pub unsafe extern "C" fn gc_iou(a: *const GcBox, b: *const GcBox, out_iou: *mut f64) -> GcStatus {
    guard(|| {
        let a = to_bbox(arg(a, "a")?)?;
        let b = to_bbox(arg(b, "b")?)?;
        *out(out_iou, "out_iou")? = iou(&a, &b);
        Ok(())
    })
}

/// Copies `len` bytes of row-major RGB8 data into a new image.
///
/// # Safety
/// `rgb` must point to `len` readable bytes; `out_image` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gc_image_new(
    width: u32,
    height: u32,
    rgb: *const u8,
    len: usize,
    out_image: *mut *mut GcImage,
) -> GcStatus {
    guard(|| {
        let dst = out(out_image, "out_image")?;
        let px = slice(rgb, len, "rgb")?;
        let inner = ImageBuffer::new(width, height, px.to_vec())?;
        *dst = boxed(GcImage { inner });
        Ok(())
    })
}

/// Decodes a PNG or JPEG file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_image` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gc_image_load(path: *const c_char, out_image: *mut *mut GcImage) -> GcStatus {
    guard(|| {
        let dst = out(out_image, "out_image")?;
        let inner = ImageBuffer::load(Path::new(text(path, "path")?))?;
        *dst = boxed(GcImage { inner });
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gc_image_save_png(image: *const GcImage, path: *const c_char) -> GcStatus {
    guard(|| {
        let image = arg(image, "image")?;
        image.inner.save_png(Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// Width in pixels, 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gc_image_width(image: *const GcImage) -> u32 {
    image.as_ref().map_or(0, |i| i.inner.width())
}

/// Height in pixels, 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gc_image_height(image: *const GcImage) -> u32 {
    image.as_ref().map_or(0, |i| i.inner.height())
}

/// Borrowed view of the RGB8 bytes, valid while the handle lives. Writes the
/// byte count to `out_len` when it is not null.
///
/// # Safety
/// `image` must be null or a live handle; `out_len` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gc_image_data(image: *const GcImage, out_len: *mut usize) -> *const u8 {
    let (ptr, len) = image
        .as_ref()
        .map_or((std::ptr::null(), 0), |i| (i.inner.pixels().as_ptr(), i.inner.pixels().len()));
    if let Some(l) = out_len.as_mut() {
        *l = len;
    }
    ptr
}

/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_image_free(image: *mut GcImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Haze reduction and sharpening; `params` may be NULL for defaults.
///
/// # Safety
/// `image` must be a live handle, `params` null or readable, `out_image` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_preprocess(
    image: *const GcImage,
    params: *const GcEnhanceParams,
    out_image: *mut *mut GcImage,
) -> GcStatus {
    guard(|| {
        let image = arg(image, "image")?;
        let dst = out(out_image, "out_image")?;
        let params = params.as_ref().map_or_else(EnhanceParams::default, EnhanceParams::from);
        let inner = preprocess(&image.inner, &params)?;
        *dst = boxed(GcImage { inner });
        Ok(())
    })
}

/// Finds red outline boxes; `params` may be NULL for defaults. The total
/// count is always written to `out_count`. When it exceeds `capacity` the
/// call returns `GC_STATUS_BUFFER_TOO_SMALL` after filling what fits.
///
/// # Safety
/// `boxes` must have room for `capacity` entries (may be null if 0).
#[no_mangle]
pub unsafe extern "C" fn gc_extract_cues(
    image: *const GcImage,
    params: *const GcCueParams,
    boxes: *mut GcBox,
    capacity: usize,
    out_count: *mut usize,
) -> GcStatus {
    guard(|| {
        let image = arg(image, "image")?;
        let count = out(out_count, "out_count")?;
        let params = params.as_ref().map_or_else(RedCueParams::default, RedCueParams::from);
        let cues = extract_cues(&image.inner, &params);
        *count = cues.boxes.len();
        if capacity > 0 {
            if boxes.is_null() {
                return fail(GcStatus::NullArgument, "`boxes` is null");
            }
            let dst = std::slice::from_raw_parts_mut(boxes, capacity);
            for (d, b) in dst.iter_mut().zip(&cues.boxes) {
                *d = from_bbox(b);
            }
        }
        if cues.boxes.len() > capacity {
            return fail(
                GcStatus::BufferTooSmall,
                format!("{} boxes found, room for {capacity}", cues.boxes.len()),
            );
        }
        Ok(())
    })
}

/// Builds a pipeline from TOML configuration text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out_pipeline` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_pipeline_new(toml: *const c_char, out_pipeline: *mut *mut GcPipeline) -> GcStatus {
    guard(|| {
        let dst = out(out_pipeline, "out_pipeline")?;
        let cfg = PipelineConfig::from_toml_str(text(toml, "toml")?)?;
        *dst = boxed(GcPipeline {
            inner: Pipeline::new(cfg)?,
        });
        Ok(())
    })
}

/// Grounds `query` in `image`. Network calls go to the configured endpoints.
///
/// # Safety
/// Handles must be live; strings NUL-terminated; `out_result` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_pipeline_ground(
    pipeline: *const GcPipeline,
    task_id: *const c_char,
    image: *const GcImage,
    query: *const c_char,
    out_result: *mut GcGroundResult,
) -> GcStatus {
    guard(|| {
        let pipeline = arg(pipeline, "pipeline")?;
        let image = arg(image, "image")?;
        let dst = out(out_result, "out_result")?;
        let task = GroundingTask {
            task_id: text(task_id, "task_id")?.to_string(),
            image: Arc::new(image.inner.clone()),
            query: text(query, "query")?.to_string(),
            ground_truth: None,
        };
        let r = pipeline.inner.ground(&task)?;
        *dst = GcGroundResult {
            has_box: r.final_box.is_some(),
            bbox: r.final_box.as_ref().map(from_bbox).unwrap_or_default(),
            provenance: from_provenance(r.provenance),
            n_cues: r.cue_boxes.len(),
        };
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_pipeline_free(pipeline: *mut GcPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// mIoU and Acc@t over `n` pairs. `has_prediction` may be NULL when every
/// prediction is present; a missing prediction scores IoU 0. `out_acc`
/// receives one fraction per threshold.
///
/// # Safety
/// Arrays must hold `n` (or `n_thresholds`) elements; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn gc_metrics(
    predictions: *const GcBox,
    has_prediction: *const bool,
    truths: *const GcBox,
    n: usize,
    thresholds: *const f64,
    n_thresholds: usize,
    out_miou: *mut f64,
    out_acc: *mut f64,
) -> GcStatus {
    guard(|| {
        let preds = slice(predictions, n, "predictions")?;
        let truths = slice(truths, n, "truths")?;
        let present = if has_prediction.is_null() {
            None
        } else {
            Some(slice(has_prediction, n, "has_prediction")?)
        };
        let thresholds = slice(thresholds, n_thresholds, "thresholds")?;
        let miou = out(out_miou, "out_miou")?;
        if n_thresholds > 0 && out_acc.is_null() {
            return fail(GcStatus::NullArgument, "`out_acc` is null");
        }
        let mut pairs = Vec::with_capacity(n);
        for i in 0..n {
            let pred = match present.map_or(true, |p| p[i]) {
                true => Some(to_bbox(&preds[i])?),
                false => None,
            };
            pairs.push((pred, to_bbox(&truths[i])?));
        }
        let report = compute_metrics(&pairs, thresholds).or_else(|e| fail(GcStatus::Eval, e.to_string()))?;
        *miou = report.miou;
        for (i, a) in report.acc_at.iter().enumerate() {
            *out_acc.add(i) = a.fraction;
        }
        Ok(())
    })
}
