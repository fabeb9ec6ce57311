//! Event stream serialization.
//!
//! CSV:
//! ```text
//! # width=640,height=480
//! ts_us,x,y,polarity,label,last
//! 1000,12,7,1,0,0
//! ```
//! The `label` and `last` columns are optional. A trailing `correct`
//! column (written by annotated filtering) is accepted and ignored.
//!
//! Binary, little-endian: a 24-byte header (`"EVS1"`, version u16,
//! width u16, height u16, flags u16, 4 reserved bytes, event count u64)
//! followed by one 16-byte record per event (ts u64, x u16, y u16,
//! polarity u8, flags u8, 2 pad bytes). Header flag bit 0 marks labels;
//! record flag bit 0 is the label and bit 1 is `packet_last`.

use std::io::{BufRead, Write};

use crate::error::FormatError;
use crate::event::{validate_stream, Event, Geometry, Polarity};
use crate::filter::FilterDecision;

pub const MAGIC: [u8; 4] = *b"EVS1";
pub const VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 24;
pub const RECORD_BYTES: usize = 16;

const HEADER_FLAG_LABELS: u16 = 1;
const RECORD_FLAG_LABEL: u8 = 1;
const RECORD_FLAG_LAST: u8 = 2;

/// Whether the stream carries labels. Errors when only some events do.
pub fn labels_present(events: &[Event]) -> Result<bool, FormatError> {
    let Some(first) = events.first() else {
        return Ok(false);
    };
    let labelled = first.label.is_some();
    match events.iter().position(|e| e.label.is_some() != labelled) {
        Some(i) => Err(FormatError::MixedLabels(i)),
        None => Ok(labelled),
    }
}

fn csv_header(labels: bool, last: bool) -> String {
    let mut h = String::from("ts_us,x,y,polarity");
    if labels {
        h.push_str(",label");
    }
    if last {
        h.push_str(",last");
    }
    h
}

fn write_csv_row<W: Write>(
    out: &mut W,
    e: &Event,
    labels: bool,
    last: bool,
) -> std::io::Result<()> {
    write!(out, "{},{},{},{}", e.ts, e.x, e.y, e.polarity.bit())?;
    if labels {
        write!(out, ",{}", u8::from(e.label == Some(true)))?;
    }
    if last {
        write!(out, ",{}", u8::from(e.packet_last))?;
    }
    Ok(())
}

/// Writes a CSV stream. The `last` column is emitted only when some event
/// ends a packet.
pub fn write_csv_to<W: Write>(
    mut out: W,
    events: &[Event],
    geometry: Geometry,
) -> Result<(), FormatError> {
    let labels = labels_present(events)?;
    let last = events.iter().any(|e| e.packet_last);
    writeln!(out, "# width={},height={}", geometry.width, geometry.height)?;
    writeln!(out, "{}", csv_header(labels, last))?;
    for e in events {
        write_csv_row(&mut out, e, labels, last)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_csv(events: &[Event], geometry: Geometry) -> Result<String, FormatError> {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, events, geometry)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

/// CSV of every decision with an extra `correct` column (1 = passed).
pub fn write_annotated_csv_to<W: Write>(
    mut out: W,
    decisions: &[FilterDecision],
    geometry: Geometry,
) -> Result<(), FormatError> {
    let events: Vec<Event> = decisions.iter().map(|d| d.event).collect();
    let labels = labels_present(&events)?;
    let last = events.iter().any(|e| e.packet_last);
    writeln!(out, "# width={},height={}", geometry.width, geometry.height)?;
    writeln!(out, "{},correct", csv_header(labels, last))?;
    for d in decisions {
        write_csv_row(&mut out, &d.event, labels, last)?;
        writeln!(out, ",{}", u8::from(d.pass))?;
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Column {
    Label,
    Last,
    Correct,
}

fn csv_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Csv {
        line,
        msg: msg.into(),
    }
}

fn parse_geometry(line: usize, comment: &str) -> Result<Option<Geometry>, FormatError> {
    let body = comment.trim_start_matches('#').trim();
    if !body.starts_with("width=") {
        return Ok(None);
    }
    let (mut w, mut h) = (None, None);
    for kv in body.split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| csv_err(line, format!("malformed geometry entry {kv:?}")))?;
        let v: u16 = v.trim().parse().map_err(|_| {
            csv_err(
                line,
                format!("geometry value {v:?} is not a 16-bit integer"),
            )
        })?;
        match k.trim() {
            "width" => w = Some(v),
            "height" => h = Some(v),
            other => return Err(csv_err(line, format!("unknown geometry key {other:?}"))),
        }
    }
    match (w, h) {
        (Some(w), Some(h)) => Ok(Some(Geometry::new(w, h))),
        _ => Err(csv_err(line, "geometry needs both width and height")),
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T, FormatError> {
    s.trim()
        .parse()
        .map_err(|_| csv_err(line, format!("bad {name} value {s:?}")))
}

fn parse_bit(line: usize, name: &str, s: &str) -> Result<bool, FormatError> {
    match s.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(csv_err(line, format!("{name} must be 0 or 1, got {s:?}"))),
    }
}

/// Reads a CSV stream and validates it against its declared geometry.
pub fn read_csv_from<R: BufRead>(input: R) -> Result<(Geometry, Vec<Event>), FormatError> {
    let mut geometry = None;
    let mut columns: Option<Vec<Column>> = None;
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(g) = parse_geometry(line_no, line)? {
                geometry = Some(g);
            }
            continue;
        }
        let Some(cols) = &columns else {
            let names: Vec<&str> = line.split(',').map(str::trim).collect();
            if names.len() < 4 || names[..4] != ["ts_us", "x", "y", "polarity"] {
                return Err(csv_err(
                    line_no,
                    "header must start with ts_us,x,y,polarity",
                ));
            }
            let extra = names[4..]
                .iter()
                .map(|n| match *n {
                    "label" => Ok(Column::Label),
                    "last" => Ok(Column::Last),
                    "correct" => Ok(Column::Correct),
                    other => Err(csv_err(line_no, format!("unknown column {other:?}"))),
                })
                .collect::<Result<_, _>>()?;
            columns = Some(extra);
            continue;
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + cols.len() {
            return Err(csv_err(
                line_no,
                format!("expected {} fields, found {}", 4 + cols.len(), fields.len()),
            ));
        }
        let mut e = Event::new(
            parse_field(line_no, "ts_us", fields[0])?,
            parse_field(line_no, "x", fields[1])?,
            parse_field(line_no, "y", fields[2])?,
            Polarity::from_bit(parse_bit(line_no, "polarity", fields[3])?),
        );
        for (col, f) in cols.iter().zip(&fields[4..]) {
            match col {
                Column::Label => e.label = Some(parse_bit(line_no, "label", f)?),
                Column::Last => e.packet_last = parse_bit(line_no, "last", f)?,
                Column::Correct => {
                    parse_bit(line_no, "correct", f)?;
                }
            }
        }
        events.push(e);
    }
    let geometry = geometry.ok_or_else(|| csv_err(1, "missing '# width=W,height=H' line"))?;
    if columns.is_none() {
        return Err(csv_err(1, "missing header line"));
    }
    validate_stream(&events, geometry)?;
    Ok((geometry, events))
}

pub fn read_csv(text: &str) -> Result<(Geometry, Vec<Event>), FormatError> {
    read_csv_from(text.as_bytes())
}

pub fn write_bin_to<W: Write>(
    mut out: W,
    events: &[Event],
    geometry: Geometry,
) -> Result<(), FormatError> {
    let labels = labels_present(events)?;
    let flags = if labels { HEADER_FLAG_LABELS } else { 0 };
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&geometry.width.to_le_bytes())?;
    out.write_all(&geometry.height.to_le_bytes())?;
    out.write_all(&flags.to_le_bytes())?;
    out.write_all(&[0; 4])?;
    out.write_all(&(events.len() as u64).to_le_bytes())?;
    for e in events {
        out.write_all(&encode_record(e))?;
    }
    Ok(())
}

pub fn write_bin(events: &[Event], geometry: Geometry) -> Result<Vec<u8>, FormatError> {
    let mut buf = Vec::with_capacity(HEADER_BYTES + RECORD_BYTES * events.len());
    write_bin_to(&mut buf, events, geometry)?;
    Ok(buf)
}

pub fn encode_record(e: &Event) -> [u8; RECORD_BYTES] {
    let mut r = [0u8; RECORD_BYTES];
    r[0..8].copy_from_slice(&e.ts.to_le_bytes());
    r[8..10].copy_from_slice(&e.x.to_le_bytes());
    r[10..12].copy_from_slice(&e.y.to_le_bytes());
    r[12] = e.polarity.bit();
    let mut flags = 0;
    if e.label == Some(true) {
        flags |= RECORD_FLAG_LABEL;
    }
    if e.packet_last {
        flags |= RECORD_FLAG_LAST;
    }
    r[13] = flags;
    r
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

/// Parses a binary stream and validates it against its header geometry.
pub fn read_bin(bytes: &[u8]) -> Result<(Geometry, Vec<Event>), FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated {
            needed: HEADER_BYTES,
            have: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("length checked");
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if bytes.len() < HEADER_BYTES {
        return Err(FormatError::Truncated {
            needed: HEADER_BYTES,
            have: bytes.len(),
        });
    }
    let version = le_u16(bytes, 4);
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let geometry = Geometry::new(le_u16(bytes, 6), le_u16(bytes, 8));
    let labels = le_u16(bytes, 10) & HEADER_FLAG_LABELS != 0;
    let count = u64::from_le_bytes(bytes[16..24].try_into().expect("length checked"));
    let payload = &bytes[HEADER_BYTES..];
    let records = (payload.len() / RECORD_BYTES) as u64;
    if records < count || !payload.len().is_multiple_of(RECORD_BYTES) {
        let needed = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(RECORD_BYTES))
            .and_then(|n| n.checked_add(HEADER_BYTES))
            .unwrap_or(usize::MAX);
        return Err(FormatError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    if records > count {
        return Err(FormatError::CountMismatch {
            declared: count,
            actual: records,
        });
    }
    let events: Vec<Event> = payload
        .chunks_exact(RECORD_BYTES)
        .map(|r| {
            let flags = r[13];
            Event {
                ts: u64::from_le_bytes(r[0..8].try_into().expect("record size")),
                x: le_u16(r, 8),
                y: le_u16(r, 10),
                polarity: Polarity::from_bit(r[12] & 1 != 0),
                label: labels.then_some(flags & RECORD_FLAG_LABEL != 0),
                packet_last: flags & RECORD_FLAG_LAST != 0,
            }
        })
        .collect();
    validate_stream(&events, geometry)?;
    Ok((geometry, events))
}

/// Marks every `n`-th event and the final event as the end of a packet and
/// clears the flag everywhere else.
pub fn packetize(events: &[Event], n: usize) -> Vec<Event> {
    let n = n.max(1);
    let len = events.len();
    events
        .iter()
        .enumerate()
        .map(|(i, e)| e.with_packet_last((i + 1) % n == 0 || i + 1 == len))
        .collect()
}
