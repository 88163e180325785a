//! Length-prefixed frames: a 4-byte big-endian length, then that many bytes of
//! UTF-8 JSON.

use std::io::{ErrorKind, Read, Write};

use crate::error::{Result, TransportError};

/// Frames larger than this are refused before any allocation.
pub const MAX_FRAME: usize = 256 << 20;

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l as usize <= MAX_FRAME)
        .ok_or_else(|| TransportError::Frame(format!("payload of {} bytes is too large", payload.len())))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream before the header.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(TransportError::Frame(format!("stream ended inside the header after {got} bytes"))),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME {
        return Err(TransportError::Frame(format!("declared length {len} exceeds the limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => TransportError::Frame(format!("stream ended inside a {len}-byte payload")),
        _ => e.into(),
    })?;
    Ok(Some(buf))
}
