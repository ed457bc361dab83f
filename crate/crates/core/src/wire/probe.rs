//! `ZCPB` lag probes: `magic | direction u8 | probe_id u32 | client_time_ms u64`.

use super::WireError;

pub const PROBE_MAGIC: [u8; 4] = *b"ZCPB";
pub const PROBE_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeDirection {
    Probe,
    Ack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbePacket {
    pub direction: ProbeDirection,
    pub probe_id: u32,
    pub client_time_ms: u64,
}

impl ProbePacket {
    pub fn probe(probe_id: u32, client_time_ms: u64) -> Self {
        ProbePacket {
            direction: ProbeDirection::Probe,
            probe_id,
            client_time_ms,
        }
    }

    /// The acknowledgement echoes id and timestamp verbatim.
    pub fn ack(&self) -> Self {
        ProbePacket {
            direction: ProbeDirection::Ack,
            ..*self
        }
    }

    pub fn to_bytes(&self) -> [u8; PROBE_LEN] {
        let mut out = [0u8; PROBE_LEN];
        out[..4].copy_from_slice(&PROBE_MAGIC);
        out[4] = match self.direction {
            ProbeDirection::Probe => 0,
            ProbeDirection::Ack => 1,
        };
        out[5..9].copy_from_slice(&self.probe_id.to_be_bytes());
        out[9..17].copy_from_slice(&self.client_time_ms.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < 4 {
            return Err(WireError::Truncated);
        }
        if bytes[..4] != PROBE_MAGIC {
            return Err(WireError::BadMagic);
        }
        if bytes.len() < PROBE_LEN {
            return Err(WireError::Truncated);
        }
        if bytes.len() > PROBE_LEN {
            return Err(WireError::TrailingBytes);
        }
        let direction = match bytes[4] {
            0 => ProbeDirection::Probe,
            1 => ProbeDirection::Ack,
            other => return Err(WireError::UnknownKind(other)),
        };
        Ok(ProbePacket {
            direction,
            probe_id: u32::from_be_bytes(bytes[5..9].try_into().unwrap()),
            client_time_ms: u64::from_be_bytes(bytes[9..17].try_into().unwrap()),
        })
    }

    pub fn looks_like_probe(bytes: &[u8]) -> bool {
        bytes.starts_with(&PROBE_MAGIC)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ack_echoes_probe() {
        let p = ProbePacket::probe(42, 123_456_789);
        let a = ProbePacket::from_bytes(&p.ack().to_bytes()).unwrap();
        assert_eq!(a.direction, ProbeDirection::Ack);
        assert_eq!((a.probe_id, a.client_time_ms), (42, 123_456_789));
    }

    #[test]
    fn layout() {
        let b = ProbePacket::probe(1, 2).to_bytes();
        assert_eq!(b, [b'Z', b'C', b'P', b'B', 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 2]);
        assert!(ProbePacket::from_bytes(&b[..16]).is_err());
        let mut bad = b;
        bad[4] = 9;
        assert!(ProbePacket::from_bytes(&bad).is_err());
    }
}
