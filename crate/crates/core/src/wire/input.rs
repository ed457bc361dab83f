//! `ZCIN` input event packets.
//!
//! ```text
//! magic "ZCIN" | version u8 | seq u32 | kind u8 | client_time_ms u64 | payload
//! KEY   (0): keycode u16, pressed u8
//! TEXT  (1): len u16, UTF-8 bytes
//! TAP   (2): x u16, y u16
//! SWIPE (3): x1 u16, y1 u16, x2 u16, y2 u16, duration_ms u16
//! ```

use serde::{Deserialize, Serialize};

use super::WireError;

pub const INPUT_MAGIC: [u8; 4] = *b"ZCIN";
pub const INPUT_VERSION: u8 = 1;
const INPUT_HEADER_LEN: usize = 18;

pub const KEY_BACKSPACE: u16 = 8;
pub const KEY_ENTER: u16 = 13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    Key { keycode: u16, pressed: bool },
    Text { text: String },
    Tap { x: u16, y: u16 },
    Swipe { x1: u16, y1: u16, x2: u16, y2: u16, duration_ms: u16 },
}

impl InputKind {
    fn tag(&self) -> u8 {
        match self {
            InputKind::Key { .. } => 0,
            InputKind::Text { .. } => 1,
            InputKind::Tap { .. } => 2,
            InputKind::Swipe { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEvent {
    pub seq: u32,
    pub client_time_ms: u64,
    #[serde(flatten)]
    pub kind: InputKind,
}

pub fn encode_input(event: &InputEvent) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(INPUT_HEADER_LEN + 10);
    out.extend_from_slice(&INPUT_MAGIC);
    out.push(INPUT_VERSION);
    out.extend_from_slice(&event.seq.to_be_bytes());
    out.push(event.kind.tag());
    out.extend_from_slice(&event.client_time_ms.to_be_bytes());
    match &event.kind {
        InputKind::Key { keycode, pressed } => {
            out.extend_from_slice(&keycode.to_be_bytes());
            out.push(u8::from(*pressed));
        }
        InputKind::Text { text } => {
            let len = u16::try_from(text.len()).map_err(|_| WireError::Overflow)?;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(text.as_bytes());
        }
        InputKind::Tap { x, y } => {
            out.extend_from_slice(&x.to_be_bytes());
            out.extend_from_slice(&y.to_be_bytes());
        }
        InputKind::Swipe {
            x1,
            y1,
            x2,
            y2,
            duration_ms,
        } => {
            for v in [x1, y1, x2, y2, duration_ms] {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_input(bytes: &[u8]) -> Result<InputEvent, WireError> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != INPUT_MAGIC {
        return Err(WireError::BadMagic);
    }
    let version = r.u8()?;
    if version != INPUT_VERSION {
        return Err(WireError::BadVersion(version));
    }
    let seq = r.u32()?;
    let kind = r.u8()?;
    let client_time_ms = r.u64()?;
    let kind = match kind {
        0 => {
            let keycode = r.u16()?;
            let pressed = match r.u8()? {
                0 => false,
                1 => true,
                _ => return Err(WireError::CorruptPayload("key state")),
            };
            InputKind::Key { keycode, pressed }
        }
        1 => {
            let len = r.u16()? as usize;
            let text = std::str::from_utf8(r.take(len)?)
                .map_err(|_| WireError::CorruptPayload("text is not UTF-8"))?;
            InputKind::Text {
                text: text.to_owned(),
            }
        }
        2 => InputKind::Tap {
            x: r.u16()?,
            y: r.u16()?,
        },
        3 => InputKind::Swipe {
            x1: r.u16()?,
            y1: r.u16()?,
            x2: r.u16()?,
            y2: r.u16()?,
            duration_ms: r.u16()?,
        },
        other => return Err(WireError::UnknownKind(other)),
    };
    if !r.buf.is_empty() {
        return Err(WireError::TrailingBytes);
    }
    Ok(InputEvent {
        seq,
        client_time_ms,
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tap_is_22_bytes() {
        let ev = InputEvent {
            seq: 1,
            client_time_ms: 0,
            kind: InputKind::Tap { x: 100, y: 200 },
        };
        let bytes = encode_input(&ev).unwrap();
        assert_eq!(bytes.len(), 4 + 1 + 4 + 1 + 8 + 4);
        assert_eq!(&bytes[18..], &[0, 100, 0, 200]);
        assert_eq!(decode_input(&bytes).unwrap(), ev);
    }

    #[test]
    fn text_payload_layout() {
        let ev = InputEvent {
            seq: 9,
            client_time_ms: 5,
            kind: InputKind::Text { text: "hi".into() },
        };
        let bytes = encode_input(&ev).unwrap();
        assert_eq!(bytes[9], 1);
        assert_eq!(&bytes[18..], &[0x00, 0x02, 0x68, 0x69]);
    }

    #[test]
    fn rejects_bad_magic_kind_and_truncation() {
        let ev = InputEvent {
            seq: 1,
            client_time_ms: 0,
            kind: InputKind::Key {
                keycode: KEY_ENTER,
                pressed: true,
            },
        };
        let bytes = encode_input(&ev).unwrap();
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_input(&bad), Err(WireError::BadMagic)));
        let mut bad = bytes.clone();
        bad[9] = 7;
        assert!(matches!(decode_input(&bad), Err(WireError::UnknownKind(7))));
        for cut in 0..bytes.len() {
            assert!(decode_input(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_input(&long), Err(WireError::TrailingBytes)));
    }

    #[test]
    fn text_must_be_utf8() {
        let mut bytes = encode_input(&InputEvent {
            seq: 1,
            client_time_ms: 0,
            kind: InputKind::Text { text: "ab".into() },
        })
        .unwrap();
        bytes[20] = 0xff;
        assert!(decode_input(&bytes).is_err());
    }
}
