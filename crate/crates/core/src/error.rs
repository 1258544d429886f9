use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("empty box {0:?}: need x_min < x_max and y_min < y_max")]
    EmptyBox([i64; 4]),
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyDims { width: u32, height: u32 },
    #[error("mask has {actual} pixels, expected {expected}")]
    MaskLength { expected: usize, actual: usize },
    #[error("mask score {0} outside [0, 1]")]
    Score(f64),
}

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("tile grid {cols}x{rows} exceeds image {width}x{height}")]
    TileGrid {
        cols: u32,
        rows: u32,
        width: u32,
        height: u32,
    },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error calling {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered {status} [{code}]: {message}")]
    Status {
        url: String,
        status: u16,
        code: String,
        message: String,
    },
    #[error("protocol violation from {url}: {message}")]
    Protocol { url: String, message: String },
    #[error("endpoint role {actual} cannot serve {wanted}")]
    WrongRole { wanted: String, actual: String },
}

impl BackendError {
    /// Errors worth retrying: connection trouble and server-side failures.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("task {task_id}: stage {stage} failed: {source}")]
    Backend {
        task_id: String,
        stage: &'static str,
        #[source]
        source: BackendError,
    },
    #[error("task {task_id}: stage {stage} failed: {source}")]
    Imaging {
        task_id: String,
        stage: &'static str,
        #[source]
        source: ImagingError,
    },
    #[error("task {task_id}: {message}")]
    Task { task_id: String, message: String },
    #[error("missing endpoint for role {0}")]
    MissingEndpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl PipelineError {
    pub fn task_id(&self) -> Option<&str> {
        match self {
            PipelineError::Backend { task_id, .. }
            | PipelineError::Imaging { task_id, .. }
            | PipelineError::Task { task_id, .. } => Some(task_id),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: missing field `{field}`")]
    MissingField { path: PathBuf, field: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("cannot compute metrics over an empty set of pairs")]
    NoPairs,
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error("unknown task_id `{0}`")]
    UnknownTask(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
