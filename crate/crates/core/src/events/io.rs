//! Little-endian binary event files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EVT1"
//! 4       2     width  (u16)
//! 6       2     height (u16)
//! 8       8     t_start (u64, microseconds)
//! 16      8     t_end   (u64, microseconds)
//! 24      4     label (i32, -1 = unlabeled)
//! 28      8     event count N (u64)
//! 36      13*N  records {x: u16, y: u16, t: u64, p: i8 (+1 / -1)}
//! ```
//!
//! Polarity +1 is stored in frame channel 0, -1 in channel 1.

use std::path::Path;

use crate::error::ParseErrorKind;
use crate::{Error, Result};

use super::{Event, EventStream, Polarity};

pub const MAGIC: &[u8; 4] = b"EVT1";
const HEADER_LEN: usize = 36;
const RECORD_LEN: usize = 13;

pub fn encode_events(stream: &EventStream) -> Result<Vec<u8>> {
    stream.ensure_valid()?;
    let label: i32 = match stream.label {
        None => -1,
        Some(l) => i32::try_from(l)
            .map_err(|_| Error::InvalidArgument(format!("label {l} does not fit in i32")))?,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.events.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&stream.width.to_le_bytes());
    out.extend_from_slice(&stream.height.to_le_bytes());
    out.extend_from_slice(&stream.t_start.to_le_bytes());
    out.extend_from_slice(&stream.t_end.to_le_bytes());
    out.extend_from_slice(&label.to_le_bytes());
    out.extend_from_slice(&(stream.events.len() as u64).to_le_bytes());
    for e in &stream.events {
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.extend_from_slice(&e.t.to_le_bytes());
        out.push(e.p.sign() as u8);
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.buf.len() {
            return Err(parse_err(self.pos, ParseErrorKind::Truncated));
        }
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(a)
    }
    fn u16(&mut self) -> Result<u16> {
        self.take().map(u16::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }
    fn i32(&mut self) -> Result<i32> {
        self.take().map(i32::from_le_bytes)
    }
    fn i8(&mut self) -> Result<i8> {
        self.take::<1>().map(|b| b[0] as i8)
    }
}

fn parse_err(offset: usize, kind: ParseErrorKind) -> Error {
    Error::Parse {
        offset: offset as u64,
        kind,
    }
}

pub fn decode_events(buf: &[u8]) -> Result<EventStream> {
    let mut r = Reader { buf, pos: 0 };
    let magic: [u8; 4] = r.take()?;
    if &magic != MAGIC {
        return Err(parse_err(0, ParseErrorKind::BadMagic));
    }
    let width = r.u16()?;
    let height = r.u16()?;
    if width == 0 || height == 0 {
        return Err(parse_err(
            4,
            ParseErrorKind::Geometry(format!("sensor size {width}x{height}")),
        ));
    }
    let t_start = r.u64()?;
    let t_end = r.u64()?;
    if t_end <= t_start {
        return Err(parse_err(
            16,
            ParseErrorKind::Timestamp(format!("empty interval [{t_start}, {t_end})")),
        ));
    }
    let label_at = r.pos;
    let label = match r.i32()? {
        -1 => None,
        l if l >= 0 => Some(l as u32),
        l => return Err(parse_err(label_at, ParseErrorKind::InvalidLabel(l))),
    };
    let n_at = r.pos;
    let n = r.u64()?;
    let remaining = (buf.len() - r.pos) as u64;
    if n.checked_mul(RECORD_LEN as u64)
        .is_none_or(|need| need > remaining)
    {
        // point at the first record that cannot be complete
        let complete = remaining / RECORD_LEN as u64;
        let offset = if n > complete {
            r.pos + complete as usize * RECORD_LEN
        } else {
            n_at
        };
        return Err(parse_err(offset, ParseErrorKind::Truncated));
    }
    let mut events = Vec::with_capacity(n as usize);
    let mut prev_t = t_start;
    for _ in 0..n {
        let x_at = r.pos;
        let x = r.u16()?;
        let y = r.u16()?;
        let t_at = r.pos;
        let t = r.u64()?;
        let p_at = r.pos;
        let p = r.i8()?;
        if x >= width {
            return Err(parse_err(
                x_at,
                ParseErrorKind::Geometry(format!("x = {x} >= width {width}")),
            ));
        }
        if y >= height {
            return Err(parse_err(
                x_at + 2,
                ParseErrorKind::Geometry(format!("y = {y} >= height {height}")),
            ));
        }
        if t < t_start || t >= t_end {
            return Err(parse_err(
                t_at,
                ParseErrorKind::Timestamp(format!("t = {t} outside [{t_start}, {t_end})")),
            ));
        }
        if t < prev_t {
            return Err(parse_err(
                t_at,
                ParseErrorKind::Timestamp(format!("t = {t} precedes previous event")),
            ));
        }
        prev_t = t;
        let p = Polarity::from_sign(p)
            .ok_or_else(|| parse_err(p_at, ParseErrorKind::InvalidPolarity(p)))?;
        events.push(Event { x, y, t, p });
    }
    if r.pos != buf.len() {
        return Err(parse_err(r.pos, ParseErrorKind::TrailingBytes));
    }
    Ok(EventStream {
        events,
        width,
        height,
        t_start,
        t_end,
        label,
    })
}

pub fn save_events(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_events(stream)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_events(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_events(&bytes).map_err(|e| e.context(path.display().to_string()))
}
