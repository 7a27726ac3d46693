//! Streaming runtime: segment capture overlapped with the device/edge
//! processing chain, latency accounting and a reconstruction-quality proxy.

mod config;
mod distributed;
mod latency;
mod quality;
mod runtime;
mod stages;

use thiserror::Error;

use crate::audio::AudioError;
use crate::channelsim::ChannelError;
use crate::neuralcodec::NetError;
use crate::segmenter::SegmentError;
use crate::semcodec::CodecError;
use crate::transport::{SessionError, WireError};

pub use config::{ClockMode, ComputeModel, LinearCost, RunConfig};
pub use distributed::{
    hello, open_downstream, open_upstream, serve_device_rx, serve_device_tx, serve_edge_a,
    serve_edge_b, RelayReport,
};
pub use latency::{
    average_latency, schedule, write_latency_csv, LatencyEntry, LatencyLog, LatencyStats,
    LATENCY_CSV_HEADER,
};
pub use quality::{quality_proxy, Quality, SNR_CAP_DB};
pub use runtime::{run_streaming, Assembler, RunOutput, RunSummary, SUMMARY_SCHEMA};
pub use stages::{ChannelCodec, DeviceRx, DeviceTx, EdgeA, EdgeB, Relay};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("need at least 2 transmitted segments for an average latency, have {0}")]
    TooFewSegments(usize),
    #[error("translated stream has {translated} samples against {expected}; more than {tolerance} apart")]
    Length {
        expected: usize,
        translated: usize,
        tolerance: usize,
    },
    #[error("ordering violation: {0}")]
    Ordering(String),
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Session(#[from] SessionError),
}
