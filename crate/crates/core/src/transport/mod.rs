//! Wire protocol between the four roles of a distributed run:
//! `device_tx -> edge_a -> edge_b -> device_rx`.
//!
//! Each hop is a framed session over a reliable stream (TCP, or an
//! in-memory pipe for loopback runs). Per segment the upstream role sends a
//! SEGMENT_META, followed by the data message unless the segment is silent.
//! The stream ends with EOS.

mod session;
mod wire;

pub use session::{
    connect_with_retry, error_code, handshake_accept, handshake_connect, loopback_pair, Link,
    OrderGuard, SessionError,
};
pub use wire::{
    decode_body, decode_frame, decode_message, encode_message, msg_type, parse_header,
    FeatureFrame, FrameHeader, Hello, LinkFrame, Message, MetaFrame, Role, SessionConfig, Tensor,
    WireError, HEADER_LEN, MAGIC, MAX_PAYLOAD, PROTOCOL_VERSION,
};
