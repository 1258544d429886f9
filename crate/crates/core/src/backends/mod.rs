//! Model-service boundary: wire protocol, blocking client, and a deterministic
//! mock server for the editor, both segmenters, and the query rewriter.

mod client;
pub mod conformance;
pub mod mock;
pub mod protocol;

pub use client::{BackendClient, BackendEndpoint, RequestMeta, Role};
pub use mock::{spawn_mock_backend, MockBehavior, MockConfig, MockServer};
pub use protocol::{Prompt, SegmentRequest, SegmentResponse};
