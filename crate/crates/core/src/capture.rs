//! Binary capture format for Skype-message streams.
//!
//! Layout, all integers big-endian:
//!   magic "YSKC" | version u16 | records...
//! record:
//!   timestamp_us u64 | flow_id u32 | direction u8 | length u16 |
//!   bytes (SoM: id u16, fun u8; then payload)
//!
//! Records carry the Skype message above UDP; the UDP/IP framing is
//! synthesized on demand, never stored.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::packet::{Direction, SkypePacket, SOM_LEN};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"YSKC";
pub const VERSION: u16 = 1;

/// Write a packet sequence to a capture file. Records must already be
/// timestamp-ordered within each flow; unordered input is rejected
/// before anything is written.
pub fn write_capture(path: &Path, packets: &[SkypePacket]) -> Result<()> {
    let mut last_ts: HashMap<u32, u64> = HashMap::new();
    for pkt in packets {
        if let Some(&prev) = last_ts.get(&pkt.flow_id) {
            if pkt.timestamp_us < prev {
                return Err(Error::Capture(format!(
                    "flow {} timestamps not non-decreasing",
                    pkt.flow_id
                )));
            }
        }
        last_ts.insert(pkt.flow_id, pkt.timestamp_us);
        if pkt.total_size() > u16::MAX as usize {
            return Err(Error::Capture(format!(
                "message of {} bytes exceeds the record size field",
                pkt.total_size()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_be_bytes())?;
    for pkt in packets {
        w.write_all(&pkt.timestamp_us.to_be_bytes())?;
        w.write_all(&pkt.flow_id.to_be_bytes())?;
        w.write_all(&[pkt.direction.to_byte()])?;
        w.write_all(&(pkt.total_size() as u16).to_be_bytes())?;
        w.write_all(&pkt.message_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a capture file back into a packet sequence.
pub fn read_capture(path: &Path) -> Result<Vec<SkypePacket>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Capture("file too short for header".into()))?;
    if magic != MAGIC {
        return Err(Error::Capture("bad magic, not a capture file".into()));
    }
    let mut ver = [0u8; 2];
    r.read_exact(&mut ver)
        .map_err(|_| Error::Capture("file too short for version".into()))?;
    let version = u16::from_be_bytes(ver);
    if version != VERSION {
        return Err(Error::Capture(format!("unsupported version {version}")));
    }

    let mut packets = Vec::new();
    let mut last_ts: HashMap<u32, u64> = HashMap::new();
    loop {
        let mut head = [0u8; 15];
        // distinguish clean EOF from a torn record
        let first = r.read(&mut head[..1])?;
        if first == 0 {
            break;
        }
        r.read_exact(&mut head[1..])
            .map_err(|_| Error::Capture("truncated record header".into()))?;
        let timestamp_us = u64::from_be_bytes(head[0..8].try_into().unwrap());
        let flow_id = u32::from_be_bytes(head[8..12].try_into().unwrap());
        let direction = Direction::from_byte(head[12])?;
        let length = u16::from_be_bytes(head[13..15].try_into().unwrap()) as usize;
        if length < SOM_LEN {
            return Err(Error::Capture(format!(
                "record length {length} shorter than the SoM header"
            )));
        }
        let mut bytes = vec![0u8; length];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Capture("truncated record".into()))?;
        if let Some(&prev) = last_ts.get(&flow_id) {
            if timestamp_us < prev {
                return Err(Error::Capture(format!(
                    "flow {flow_id} timestamps not non-decreasing"
                )));
            }
        }
        last_ts.insert(flow_id, timestamp_us);
        packets.push(SkypePacket {
            timestamp_us,
            id: u16::from_be_bytes([bytes[0], bytes[1]]),
            fun: bytes[2],
            payload: bytes[3..].to_vec(),
            flow_id,
            direction,
        });
    }
    Ok(packets)
}
