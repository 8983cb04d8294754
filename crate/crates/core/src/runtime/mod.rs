//! Model persistence, streaming inference and alert delivery.

pub mod model_file;
pub mod notify;
pub mod stream;

pub use model_file::{load_model, save_model, Fingerprint, ModelFile, FORMAT_VERSION, MODEL_EXTENSION};
pub use notify::{
    alert_payload, DeliveryResult, HttpTransport, Notifier, RetryPolicy, TestReceiver, Transport,
};
pub use stream::{
    run_stream, AlertDebouncer, Evaluation, FallAlert, FrameQueue, Overflow, StreamConfig, StreamDetector,
    StreamSummary, SyntheticFeed,
};
