//! `lssc serve`: one role of the four-process pipeline.
//!
//! Each hop has its upstream role listening and its downstream role
//! connecting. A relay binds first, then connects upstream (retrying
//! until the timeout), then accepts its downstream peer.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Context;
use lssc_core::pipeline::{serve_device_rx, serve_device_tx, serve_edge_a, serve_edge_b, RelayReport};
use lssc_core::transport::{connect_with_retry, Link, Role};

use crate::commands::{load_config, load_nets, write_run_outputs};
use crate::config::{RunManifest, Versions, MANIFEST_SCHEMA};
use crate::{ServeArgs, Usage};

const RETRY_INTERVAL: Duration = Duration::from_millis(100);

fn required<'a>(value: &'a Option<String>, flag: &str, role: Role) -> anyhow::Result<&'a str> {
    value
        .as_deref()
        .ok_or_else(|| Usage(format!("--role {role} requires {flag}")).into())
}

fn bind(addr: &str) -> anyhow::Result<TcpListener> {
    TcpListener::bind(addr).with_context(|| format!("binding {addr}"))
}

fn accept(listener: &TcpListener, peer: Role, timeout: Duration) -> anyhow::Result<Link> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    let stream: TcpStream = loop {
        match listener.accept() {
            Ok((s, _)) => break s,
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    anyhow::bail!(
                        "{peer} did not connect to {} within {:.1} s",
                        listener.local_addr()?,
                        timeout.as_secs_f64()
                    );
                }
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(e.into()),
        }
    };
    stream.set_nonblocking(false)?;
    Ok(Link::tcp(stream, peer.name())?)
}

fn connect(addr: &str, peer: Role, timeout: Duration) -> anyhow::Result<Link> {
    let stream = connect_with_retry(addr, timeout, RETRY_INTERVAL)?;
    Ok(Link::tcp(stream, peer.name())?)
}

fn relay_done(role: Role, r: RelayReport) {
    eprintln!(
        "{role}: relayed {} messages, {} bytes in, {} bytes out",
        r.messages, r.bytes_received, r.bytes_sent
    );
}

pub fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let (cfg, seed) = load_config(&args.common)?;
    cfg.validate_run()?;
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err(Usage("--timeout must be positive".into()).into());
    }
    let timeout = Duration::from_secs_f64(args.timeout);
    let role = args.role;
    let run = &cfg.run;
    match role {
        Role::DeviceTx => {
            let listener = bind(required(&args.listen, "--listen", role)?)?;
            let source = cfg.source_audio(args.input.as_deref())?;
            let down = accept(&listener, Role::EdgeA, timeout)?;
            relay_done(role, serve_device_tx(down, &source, run)?);
        }
        Role::EdgeA | Role::EdgeB => {
            let listen = required(&args.listen, "--listen", role)?;
            let upstream = required(&args.upstream, "--upstream", role)?;
            let nets = load_nets(&args.net, run.codec.semantic_dim)?;
            let listener = bind(listen)?;
            let up = connect(upstream, role.upstream().expect("relay has upstream"), timeout)?;
            let down = accept(&listener, role.downstream().expect("relay has downstream"), timeout)?;
            let report = if role == Role::EdgeA {
                serve_edge_a(up, down, run, nets.encoder)?
            } else {
                serve_edge_b(up, down, run, nets.decoder)?
            };
            relay_done(role, report);
        }
        Role::DeviceRx => {
            let upstream = required(&args.upstream, "--upstream", role)?;
            let out_dir = args
                .out
                .as_deref()
                .ok_or_else(|| Usage("--role device_rx requires --out".into()))?;
            let reference = match &args.reference {
                Some(p) => Some(cfg.source_audio(Some(p))?),
                None => None,
            };
            let up = connect(upstream, Role::EdgeB, timeout)?;
            let out = serve_device_rx(up, run)?;
            let summary = write_run_outputs(out_dir, run, &out, reference.as_ref(), args.dump_downloads.as_deref())?;
            let mut inputs = BTreeMap::new();
            if let Some(p) = &args.reference {
                inputs.insert("reference", p.clone());
            }
            RunManifest {
                schema: MANIFEST_SCHEMA,
                command: "serve",
                config_path: args.common.config.as_deref(),
                seed,
                out_dir: Path::new(out_dir),
                inputs,
                config: &cfg,
                versions: Versions::default(),
            }
            .write()?;
            eprintln!(
                "device_rx: {} segments, {} transmitted",
                summary.segments_total, summary.segments_transmitted
            );
        }
    }
    Ok(())
}
