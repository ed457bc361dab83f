//! Channel multiplexing for a session connection.
//!
//! After the JSON handshake line, every unit on the connection is
//! `[tag u8][len u32 BE][payload]`. Tags match the browser WebSocket
//! multiplex: 0x01 frames, 0x02 input, 0x03 control.

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use super::WireError;

/// Upper bound on one multiplexed unit; a raw 4K landscape frame fits.
pub const MAX_UNIT_LEN: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelTag {
    Frames,
    Input,
    Control,
}

impl ChannelTag {
    pub fn to_byte(self) -> u8 {
        match self {
            ChannelTag::Frames => 0x01,
            ChannelTag::Input => 0x02,
            ChannelTag::Control => 0x03,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        match b {
            0x01 => Ok(ChannelTag::Frames),
            0x02 => Ok(ChannelTag::Input),
            0x03 => Ok(ChannelTag::Control),
            other => Err(WireError::UnknownKind(other)),
        }
    }
}

pub fn encode_unit(tag: ChannelTag, payload: &[u8]) -> Result<Vec<u8>, WireError> {
    if payload.len() > MAX_UNIT_LEN {
        return Err(WireError::Overflow);
    }
    let mut out = Vec::with_capacity(5 + payload.len());
    out.push(tag.to_byte());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

pub async fn write_unit<W: AsyncWrite + Unpin>(
    w: &mut W,
    tag: ChannelTag,
    payload: &[u8],
) -> std::io::Result<()> {
    if payload.len() > MAX_UNIT_LEN {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            WireError::Overflow,
        ));
    }
    let mut header = [0u8; 5];
    header[0] = tag.to_byte();
    header[1..].copy_from_slice(&(payload.len() as u32).to_be_bytes());
    w.write_all(&header).await?;
    w.write_all(payload).await?;
    w.flush().await
}

/// Reads one unit; `Ok(None)` on clean EOF at a unit boundary.
pub async fn read_unit<R: AsyncRead + Unpin>(
    r: &mut R,
) -> std::io::Result<Option<(ChannelTag, Vec<u8>)>> {
    let mut header = [0u8; 5];
    match r.read_exact(&mut header[..1]).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    r.read_exact(&mut header[1..]).await?;
    let tag = ChannelTag::from_byte(header[0])
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let len = u32::from_be_bytes(header[1..].try_into().unwrap()) as usize;
    if len > MAX_UNIT_LEN {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            WireError::Overflow,
        ));
    }
    let mut payload = vec![0; len];
    r.read_exact(&mut payload).await?;
    Ok(Some((tag, payload)))
}
