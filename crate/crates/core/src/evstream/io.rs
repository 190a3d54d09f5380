use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_stream, Event, Polarity, StreamHeader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EVB1";
const RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Csv,
    Bin,
}

impl EventFormat {
    /// Guesses the format from a file extension (`.csv` or anything else as binary).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Bin,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            EventFormat::Csv => "csv",
            EventFormat::Bin => "evb",
        }
    }
}

pub fn read_events(path: &Path, format: EventFormat) -> Result<(StreamHeader, Vec<Event>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        EventFormat::Csv => parse_csv(&bytes),
        EventFormat::Bin => parse_bin(&bytes),
    }
}

pub fn write_events(
    header: &StreamHeader,
    events: &[Event],
    path: &Path,
    format: EventFormat,
) -> Result<()> {
    header.validate()?;
    validate_stream(header, events)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let res = match format {
        EventFormat::Csv => write_csv(header, events, &mut out),
        EventFormat::Bin => write_bin(header, events, &mut out),
    };
    res.and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn write_csv(header: &StreamHeader, events: &[Event], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{},{},{}", header.width, header.height, header.camera_id)?;
    for ev in events {
        writeln!(out, "{},{},{},{}", ev.t, ev.x, ev.y, ev.p.as_i8())?;
    }
    Ok(())
}

fn write_bin(header: &StreamHeader, events: &[Event], out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&header.width.to_le_bytes())?;
    out.write_all(&header.height.to_le_bytes())?;
    let id = header.camera_id.as_bytes();
    let id_len = u16::try_from(id.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "camera id too long"))?;
    out.write_all(&id_len.to_le_bytes())?;
    out.write_all(id)?;
    let mut rec = [0u8; RECORD_LEN];
    for ev in events {
        rec[0..8].copy_from_slice(&ev.t.to_le_bytes());
        rec[8..10].copy_from_slice(&ev.x.to_le_bytes());
        rec[10..12].copy_from_slice(&ev.y.to_le_bytes());
        rec[12..14].copy_from_slice(&(ev.p.as_i8() as i16).to_le_bytes());
        rec[14..16].copy_from_slice(&0u16.to_le_bytes());
        out.write_all(&rec)?;
    }
    Ok(())
}

fn malformed(location: String, reason: impl Into<String>) -> Error {
    Error::Malformed {
        location,
        reason: reason.into(),
    }
}

fn parse_csv(bytes: &[u8]) -> Result<(StreamHeader, Vec<Event>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = rdr.records();

    let first = match records.next() {
        Some(r) => r?,
        None => return Err(malformed("line 1".into(), "missing header line")),
    };
    if first.len() != 3 {
        return Err(malformed(
            "line 1".into(),
            format!("expected 'width,height,camera_id', got {} fields", first.len()),
        ));
    }
    let width: u32 = first[0]
        .trim()
        .parse()
        .map_err(|_| malformed("line 1".into(), "width is not an integer"))?;
    let height: u32 = first[1]
        .trim()
        .parse()
        .map_err(|_| malformed("line 1".into(), "height is not an integer"))?;
    let header = StreamHeader::new(width, height, first[2].to_string())?;

    let mut events = Vec::new();
    let mut prev = 0u64;
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let loc = || format!("line {line}");
        if rec.len() != 4 {
            return Err(malformed(loc(), format!("expected 4 fields, got {}", rec.len())));
        }
        let t: u64 = rec[0].parse().map_err(|_| malformed(loc(), "bad timestamp"))?;
        let x: u32 = rec[1].parse().map_err(|_| malformed(loc(), "bad x"))?;
        let y: u32 = rec[2].parse().map_err(|_| malformed(loc(), "bad y"))?;
        let p: i64 = rec[3].parse().map_err(|_| malformed(loc(), "bad polarity"))?;
        let p = Polarity::from_i64(p).ok_or_else(|| malformed(loc(), "polarity must be -1 or 1"))?;
        events.push(checked_event(&header, x, y, t, p, &mut prev)?);
    }
    Ok((header, events))
}

fn checked_event(
    header: &StreamHeader,
    x: u32,
    y: u32,
    t: u64,
    p: Polarity,
    prev: &mut u64,
) -> Result<Event> {
    if !header.contains(x, y) {
        return Err(Error::OutOfBounds {
            x,
            y,
            width: header.width,
            height: header.height,
        });
    }
    if t < *prev {
        return Err(Error::TimestampRegression { prev: *prev, t });
    }
    *prev = t;
    Ok(Event::new(x as u16, y as u16, t, p))
}

fn parse_bin(bytes: &[u8]) -> Result<(StreamHeader, Vec<Event>)> {
    let at = |off: usize| format!("byte offset {off}");
    if bytes.len() < 14 || &bytes[0..4] != MAGIC {
        return Err(malformed(at(0), "missing EVB1 magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let width = u32_at(4);
    let height = u32_at(8);
    let id_len = u16::from_le_bytes([bytes[12], bytes[13]]) as usize;
    let body = 14 + id_len;
    if bytes.len() < body {
        return Err(malformed(at(14), "truncated camera id"));
    }
    let camera_id = std::str::from_utf8(&bytes[14..body])
        .map_err(|_| malformed(at(14), "camera id is not UTF-8"))?;
    let header = StreamHeader::new(width, height, camera_id)?;

    let payload = &bytes[body..];
    if payload.len() % RECORD_LEN != 0 {
        let off = body + payload.len() / RECORD_LEN * RECORD_LEN;
        return Err(malformed(at(off), "truncated record"));
    }
    let mut events = Vec::with_capacity(payload.len() / RECORD_LEN);
    let mut prev = 0u64;
    for (i, rec) in payload.chunks_exact(RECORD_LEN).enumerate() {
        let off = body + i * RECORD_LEN;
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]) as u32;
        let y = u16::from_le_bytes([rec[10], rec[11]]) as u32;
        let p = i16::from_le_bytes([rec[12], rec[13]]);
        let reserved = u16::from_le_bytes([rec[14], rec[15]]);
        if reserved != 0 {
            return Err(malformed(at(off), "reserved field must be zero"));
        }
        let p = Polarity::from_i64(p as i64)
            .ok_or_else(|| malformed(at(off), "polarity must be -1 or 1"))?;
        events.push(checked_event(&header, x, y, t, p, &mut prev)?);
    }
    Ok((header, events))
}
