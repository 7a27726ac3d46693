//! Role runners for a distributed run. Each hop is a [`Link`]; the
//! upstream end of a hop listens and the downstream end connects, so the
//! connecting side opens the handshake.

use super::config::RunConfig;
use super::runtime::{Assembler, RunOutput};
use super::stages::{DeviceTx, EdgeA, EdgeB, Relay};
use super::PipelineError;
use crate::audio::AudioBuffer;
use crate::neuralcodec::DenseNetwork;
use crate::segmenter::segment_stream;
use crate::semcodec::ReferenceCodec;
use crate::transport::{
    error_code, handshake_accept, handshake_connect, Hello, Link, Message, OrderGuard, Role,
    SessionError, PROTOCOL_VERSION,
};

pub fn hello(role: Role, cfg: &RunConfig) -> Hello {
    Hello {
        version: PROTOCOL_VERSION,
        role,
        codec_digest: cfg.codec.digest(),
    }
}

/// Handshake on the hop towards the upstream role (this side connects).
pub fn open_upstream(link: &mut Link, role: Role, cfg: &RunConfig) -> Result<(), PipelineError> {
    let peer = role.upstream().ok_or_else(|| PipelineError::Config(format!("{role} has no upstream")))?;
    handshake_connect(link, hello(role, cfg), peer, &cfg.session_config())?;
    Ok(())
}

/// Handshake on the hop towards the downstream role (this side listens).
pub fn open_downstream(link: &mut Link, role: Role, cfg: &RunConfig) -> Result<(), PipelineError> {
    let peer = role.downstream().ok_or_else(|| PipelineError::Config(format!("{role} has no downstream")))?;
    handshake_accept(link, hello(role, cfg), peer, &cfg.session_config())?;
    Ok(())
}

/// Byte and message counts of a finished role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RelayReport {
    pub messages: usize,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

fn fail_both(up: Option<&mut Link>, down: Option<&mut Link>, err: &PipelineError) {
    let code = match err {
        PipelineError::Session(s) => s.wire_code(),
        PipelineError::Ordering(_) => error_code::ORDERING,
        _ => error_code::PROCESSING,
    };
    let text = err.to_string();
    for link in [up, down].into_iter().flatten() {
        link.send_error(code, &text);
    }
}

fn remote(link: &Link, code: u16, text: &str) -> PipelineError {
    SessionError::Remote {
        peer: link.peer().to_string(),
        code,
        text: text.to_string(),
    }
    .into()
}

/// Segments `source` and streams it downstream. The link must already be
/// connected to edge_a; the handshake happens here.
pub fn serve_device_tx(mut down: Link, source: &AudioBuffer, cfg: &RunConfig) -> Result<RelayReport, PipelineError> {
    cfg.validate()?;
    if source.sample_rate() != cfg.sample_rate {
        return Err(PipelineError::Config(format!(
            "source is sampled at {} Hz, run expects {} Hz",
            source.sample_rate(),
            cfg.sample_rate
        )));
    }
    let stage = DeviceTx::new(ReferenceCodec::new(cfg.codec)?);
    open_downstream(&mut down, Role::DeviceTx, cfg)?;
    let mut messages = 0;
    let result = (|| {
        for seg in segment_stream(source, &cfg.segmenter)? {
            for m in stage.messages(&seg)? {
                down.send(&m)?;
                messages += 1;
            }
        }
        down.send(&Message::Eos)?;
        messages += 1;
        Ok(())
    })();
    if let Err(e) = &result {
        fail_both(None, Some(&mut down), e);
    }
    result.map(|()| RelayReport {
        messages,
        bytes_sent: down.bytes_sent(),
        bytes_received: down.bytes_received(),
    })
}

fn relay_loop(stage: &mut dyn Relay, up: &mut Link, down: &mut Link) -> Result<usize, PipelineError> {
    let mut guard = OrderGuard::new();
    let mut messages = 0;
    let result = (|| loop {
        let m = up.recv()?;
        if let Message::Error { code, text } = &m {
            down.send(&m)?;
            return Err(remote(up, *code, text));
        }
        guard.check(&m).map_err(PipelineError::Ordering)?;
        let out = stage.relay(&m)?;
        down.send(&out)?;
        messages += 1;
        if out == Message::Eos {
            return Ok(messages);
        }
    })();
    if let Err(e) = &result {
        if !matches!(e, PipelineError::Session(SessionError::Remote { .. })) {
            fail_both(Some(up), Some(down), e);
        }
    }
    result
}

/// Runs edge_a between connected links; performs both handshakes.
pub fn serve_edge_a(
    mut up: Link,
    mut down: Link,
    cfg: &RunConfig,
    encoder: DenseNetwork,
) -> Result<RelayReport, PipelineError> {
    cfg.validate()?;
    let codec = ReferenceCodec::new(cfg.codec)?;
    open_upstream(&mut up, Role::EdgeA, cfg)?;
    open_downstream(&mut down, Role::EdgeA, cfg)?;
    let mut stage = EdgeA::new(codec, encoder, cfg.effective_channel());
    let messages = relay_loop(&mut stage, &mut up, &mut down)?;
    Ok(RelayReport {
        messages,
        bytes_sent: down.bytes_sent(),
        bytes_received: up.bytes_received(),
    })
}

/// Runs edge_b between connected links; performs both handshakes.
pub fn serve_edge_b(
    mut up: Link,
    mut down: Link,
    cfg: &RunConfig,
    decoder: DenseNetwork,
) -> Result<RelayReport, PipelineError> {
    cfg.validate()?;
    let codec = ReferenceCodec::new(cfg.codec)?;
    open_upstream(&mut up, Role::EdgeB, cfg)?;
    open_downstream(&mut down, Role::EdgeB, cfg)?;
    let mut stage = EdgeB::new(codec, decoder);
    let messages = relay_loop(&mut stage, &mut up, &mut down)?;
    Ok(RelayReport {
        messages,
        bytes_sent: down.bytes_sent(),
        bytes_received: up.bytes_received(),
    })
}

/// Receives the translated stream from edge_b and assembles the output.
/// Timestamps come from the simulated clock, replayed from the segment
/// metadata, so the report matches an in-process run.
pub fn serve_device_rx(mut up: Link, cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let mut assembler = Assembler::new(ReferenceCodec::new(cfg.codec)?);
    open_upstream(&mut up, Role::DeviceRx, cfg)?;
    let result = (|| {
        while !assembler.is_finished() {
            let (m, frame) = up.recv_frame()?;
            if let Message::Error { code, text } = &m {
                return Err(remote(&up, *code, text));
            }
            assembler.accept(&m, &frame)?;
        }
        Ok(())
    })();
    if let Err(e) = &result {
        if !matches!(e, PipelineError::Session(SessionError::Remote { .. })) {
            fail_both(Some(&mut up), None, e);
        }
    }
    result?;
    Ok(assembler.finish_simulated(cfg))
}
