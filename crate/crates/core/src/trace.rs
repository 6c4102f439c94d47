//! JSON-lines packet traces.
//!
//! The first line is a header `{"meta": {"k_sub": .., "seed": .., "labels": ..}}`,
//! followed by one `{"t": .., "rssi": .., "csi": [[re, im], ..]}` object per
//! packet. Numbers use the shortest representation that round-trips exactly.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Packet;
use crate::simulator::SyntheticTrace;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub k_sub: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Inclusive bundle-window intervals of ground-truth anomalies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<(u64, u64)>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub meta: TraceMeta,
    pub packets: Vec<Packet>,
}

impl From<SyntheticTrace> for Trace {
    fn from(t: SyntheticTrace) -> Self {
        Trace {
            meta: TraceMeta {
                k_sub: t.k_sub,
                seed: Some(t.seed),
                labels: Some(t.labels),
            },
            packets: t.packets,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    meta: TraceMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PacketLine {
    t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rssi: Option<f64>,
    csi: Vec<[f64; 2]>,
}

pub fn write_header<W: Write>(mut out: W, meta: &TraceMeta) -> Result<()> {
    serde_json::to_writer(&mut out, &HeaderLine { meta: meta.clone() })?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_packet<W: Write>(mut out: W, p: &Packet) -> Result<()> {
    let line = PacketLine {
        t: p.time,
        rssi: p.rssi,
        csi: p.csi.iter().map(|c| [c.re, c.im]).collect(),
    };
    serde_json::to_writer(&mut out, &line)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_trace<W: Write>(mut out: W, trace: &Trace) -> Result<()> {
    write_header(&mut out, &trace.meta)?;
    for p in &trace.packets {
        write_packet(&mut out, p)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a trace, checking time order and CSI length. A file without any
/// lines is an empty trace.
pub fn read_trace<R: BufRead>(input: R) -> Result<Trace> {
    let mut trace = Trace::default();
    let mut have_meta = false;
    let mut last_t = f64::NEG_INFINITY;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Trace { line: lineno, reason };
        if !have_meta {
            let h: HeaderLine = serde_json::from_str(&line).map_err(|e| bad(format!("expected meta header: {e}")))?;
            trace.meta = h.meta;
            if let Some(labels) = &trace.meta.labels {
                crate::detector::validate_labels(labels).map_err(|e| bad(e.to_string()))?;
            }
            have_meta = true;
            continue;
        }
        let p: PacketLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if !p.t.is_finite() || p.t < 0.0 {
            return Err(bad(format!("time {} must be finite and ≥ 0", p.t)));
        }
        if p.t < last_t {
            return Err(bad(format!("time {} goes backwards from {last_t}", p.t)));
        }
        last_t = p.t;
        if p.csi.len() != trace.meta.k_sub {
            return Err(bad(format!("csi has {} entries, header says k_sub={}", p.csi.len(), trace.meta.k_sub)));
        }
        if p.csi.iter().flatten().any(|v| !v.is_finite()) || p.rssi.is_some_and(|r| !r.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        trace.packets.push(Packet {
            time: p.t,
            rssi: p.rssi,
            csi: p.csi.into_iter().map(|[re, im]| Complex64::new(re, im)).collect(),
        });
    }
    Ok(trace)
}
