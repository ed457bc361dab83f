//! Framebuffers and the `ZCFS` frame packet.
//!
//! ```text
//! offset size field
//! 0      4    magic "ZCFS"
//! 4      1    version (1)
//! 5      4    frame_id      u32 BE
//! 9      2    width         u16 BE
//! 11     2    height        u16 BE
//! 13     1    orientation   0 portrait, 1 landscape
//! 14     1    encoding      0 RAW_RGBA8, 1 PNG, 2 DELTA_XOR_RLE
//! 15     4    payload_len   u32 BE
//! 19     ..   payload
//! ```

use super::delta::{delta_decode, delta_encode};
use super::WireError;

pub const FRAME_MAGIC: [u8; 4] = *b"ZCFS";
pub const FRAME_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 19;
/// A keyframe is forced whenever `frame_id % KEYFRAME_INTERVAL == 0`.
pub const KEYFRAME_INTERVAL: u32 = 30;

pub const DEFAULT_WIDTH: u16 = 360;
pub const DEFAULT_HEIGHT: u16 = 640;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Portrait,
    Landscape,
}

impl Orientation {
    pub fn to_byte(self) -> u8 {
        match self {
            Orientation::Portrait => 0,
            Orientation::Landscape => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        match b {
            0 => Ok(Orientation::Portrait),
            1 => Ok(Orientation::Landscape),
            _ => Err(WireError::CorruptPayload("unknown orientation")),
        }
    }
}

/// An RGBA8 row-major screen image.
#[derive(Clone, PartialEq, Eq)]
pub struct Framebuffer {
    width: u16,
    height: u16,
    orientation: Orientation,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Framebuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Framebuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("orientation", &self.orientation)
            .field("pixels", &format_args!("[{} bytes]", self.pixels.len()))
            .finish()
    }
}

impl Framebuffer {
    pub fn new(
        width: u16,
        height: u16,
        orientation: Orientation,
        pixels: Vec<u8>,
    ) -> Result<Self, WireError> {
        let expected = Self::byte_len(width, height);
        if pixels.len() != expected {
            return Err(WireError::PixelLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Framebuffer {
            width,
            height,
            orientation,
            pixels,
        })
    }

    /// An all-zero (transparent black) framebuffer.
    pub fn blank(width: u16, height: u16, orientation: Orientation) -> Self {
        Framebuffer {
            width,
            height,
            orientation,
            pixels: vec![0; Self::byte_len(width, height)],
        }
    }

    pub fn byte_len(width: u16, height: u16) -> usize {
        width as usize * height as usize * 4
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn same_shape(&self, other: &Framebuffer) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.orientation == other.orientation
    }

    /// Lossless PNG (8-bit RGBA).
    pub fn to_png(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| WireError::Png(e.to_string()))?;
            writer
                .write_image_data(&self.pixels)
                .map_err(|e| WireError::Png(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn from_png(bytes: &[u8], orientation: Orientation) -> Result<Self, WireError> {
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder
            .read_info()
            .map_err(|_| WireError::CorruptPayload("png header"))?;
        let size = reader
            .output_buffer_size()
            .ok_or(WireError::CorruptPayload("png dimensions"))?;
        let mut buf = vec![0; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|_| WireError::CorruptPayload("png data"))?;
        if info.color_type != png::ColorType::Rgba || info.bit_depth != png::BitDepth::Eight {
            return Err(WireError::CorruptPayload("png is not 8-bit RGBA"));
        }
        let width = u16::try_from(info.width).map_err(|_| WireError::CorruptPayload("png width"))?;
        let height =
            u16::try_from(info.height).map_err(|_| WireError::CorruptPayload("png height"))?;
        buf.truncate(info.buffer_size());
        Framebuffer::new(width, height, orientation, buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoding {
    RawRgba8,
    Png,
    DeltaXorRle,
}

impl Encoding {
    pub fn to_byte(self) -> u8 {
        match self {
            Encoding::RawRgba8 => 0,
            Encoding::Png => 1,
            Encoding::DeltaXorRle => 2,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        match b {
            0 => Ok(Encoding::RawRgba8),
            1 => Ok(Encoding::Png),
            2 => Ok(Encoding::DeltaXorRle),
            _ => Err(WireError::CorruptPayload("unknown frame encoding")),
        }
    }

    pub fn is_keyframe(self) -> bool {
        !matches!(self, Encoding::DeltaXorRle)
    }
}

/// Which self-contained encoding to use for keyframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeMode {
    #[default]
    Raw,
    /// Snapshot mode: keyframes travel as lossless PNG.
    Png,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePacket {
    pub frame_id: u32,
    pub width: u16,
    pub height: u16,
    pub orientation: Orientation,
    pub encoding: Encoding,
    pub payload: Vec<u8>,
}

impl FramePacket {
    pub fn is_keyframe(&self) -> bool {
        self.encoding.is_keyframe()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, WireError> {
        let len = u32::try_from(self.payload.len()).map_err(|_| WireError::Overflow)?;
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.push(FRAME_VERSION);
        out.extend_from_slice(&self.frame_id.to_be_bytes());
        out.extend_from_slice(&self.width.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.push(self.orientation.to_byte());
        out.push(self.encoding.to_byte());
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < 4 {
            return Err(WireError::Truncated);
        }
        if bytes[..4] != FRAME_MAGIC {
            return Err(WireError::BadMagic);
        }
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(WireError::Truncated);
        }
        if bytes[4] != FRAME_VERSION {
            return Err(WireError::BadVersion(bytes[4]));
        }
        let frame_id = u32::from_be_bytes(bytes[5..9].try_into().unwrap());
        let width = u16::from_be_bytes([bytes[9], bytes[10]]);
        let height = u16::from_be_bytes([bytes[11], bytes[12]]);
        let orientation = Orientation::from_byte(bytes[13])?;
        let encoding = Encoding::from_byte(bytes[14])?;
        let len = u32::from_be_bytes(bytes[15..19].try_into().unwrap()) as usize;
        let payload = &bytes[FRAME_HEADER_LEN..];
        if payload.len() < len {
            return Err(WireError::Truncated);
        }
        if payload.len() > len {
            return Err(WireError::TrailingBytes);
        }
        Ok(FramePacket {
            frame_id,
            width,
            height,
            orientation,
            encoding,
            payload: payload.to_vec(),
        })
    }
}

pub fn is_keyframe_slot(frame_id: u32) -> bool {
    frame_id.is_multiple_of(KEYFRAME_INTERVAL)
}

/// Encodes `frame` as a packet, using a delta against `prev` when that is
/// allowed (not a keyframe slot) and smaller than the raw payload.
pub fn encode_frame(
    frame: &Framebuffer,
    prev: Option<&Framebuffer>,
    frame_id: u32,
    mode: KeyframeMode,
) -> Result<FramePacket, WireError> {
    if let Some(p) = prev {
        if !p.same_shape(frame) {
            return Err(WireError::DimensionMismatch);
        }
    }
    let raw_len = frame.pixels.len();
    if raw_len > u32::MAX as usize {
        return Err(WireError::Overflow);
    }
    let delta = match prev {
        Some(p) if !is_keyframe_slot(frame_id) => {
            let d = delta_encode(&p.pixels, &frame.pixels)?;
            (d.len() < raw_len).then_some(d)
        }
        _ => None,
    };
    let (encoding, payload) = match (delta, mode) {
        (Some(d), _) => (Encoding::DeltaXorRle, d),
        (None, KeyframeMode::Raw) => (Encoding::RawRgba8, frame.pixels.clone()),
        (None, KeyframeMode::Png) => (Encoding::Png, frame.to_png()?),
    };
    if payload.len() > u32::MAX as usize {
        return Err(WireError::Overflow);
    }
    Ok(FramePacket {
        frame_id,
        width: frame.width,
        height: frame.height,
        orientation: frame.orientation,
        encoding,
        payload,
    })
}

/// Decodes a packet. `prev` must be the frame with id `frame_id - 1` when the
/// packet is a delta; adjacency is the caller's responsibility here (see
/// [`FrameDecoder`] for the checked variant).
pub fn decode_frame(
    packet: &FramePacket,
    prev: Option<&Framebuffer>,
) -> Result<Framebuffer, WireError> {
    let expected = Framebuffer::byte_len(packet.width, packet.height);
    match packet.encoding {
        Encoding::RawRgba8 => {
            if packet.payload.len() != expected {
                return Err(WireError::CorruptPayload("raw payload length"));
            }
            Framebuffer::new(
                packet.width,
                packet.height,
                packet.orientation,
                packet.payload.clone(),
            )
        }
        Encoding::Png => {
            let fb = Framebuffer::from_png(&packet.payload, packet.orientation)?;
            if fb.width != packet.width || fb.height != packet.height {
                return Err(WireError::CorruptPayload("png dimensions differ from header"));
            }
            Ok(fb)
        }
        Encoding::DeltaXorRle => {
            let base = prev.ok_or(WireError::MissingBaseFrame)?;
            if base.width != packet.width
                || base.height != packet.height
                || base.orientation != packet.orientation
            {
                return Err(WireError::DimensionMismatch);
            }
            let pixels = delta_decode(&base.pixels, &packet.payload)?;
            Framebuffer::new(packet.width, packet.height, packet.orientation, pixels)
        }
    }
}

/// Per-stream encoder state: frame ids, the last sent frame and forced
/// keyframes after (re)connect or reset.
#[derive(Debug, Default)]
pub struct FrameEncoder {
    next_id: u32,
    prev: Option<Framebuffer>,
    mode: KeyframeMode,
}

impl FrameEncoder {
    pub fn new(mode: KeyframeMode) -> Self {
        FrameEncoder {
            next_id: 0,
            prev: None,
            mode,
        }
    }

    /// Continue an existing id sequence (reconnect) with a fresh keyframe.
    pub fn resume_at(next_id: u32, mode: KeyframeMode) -> Self {
        FrameEncoder {
            next_id,
            prev: None,
            mode,
        }
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    /// The next encoded frame will be a keyframe.
    pub fn force_keyframe(&mut self) {
        self.prev = None;
    }

    pub fn encode(&mut self, frame: &Framebuffer) -> Result<FramePacket, WireError> {
        let prev = self.prev.as_ref().filter(|p| p.same_shape(frame));
        let packet = encode_frame(frame, prev, self.next_id, self.mode)?;
        self.next_id = self.next_id.wrapping_add(1);
        self.prev = Some(frame.clone());
        Ok(packet)
    }
}

/// Per-stream decoder state. Applies a delta only when it holds the frame
/// immediately preceding it.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    last: Option<(u32, Framebuffer)>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self) -> Option<&Framebuffer> {
        self.last.as_ref().map(|(_, fb)| fb)
    }

    pub fn last_id(&self) -> Option<u32> {
        self.last.as_ref().map(|(id, _)| *id)
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    /// Keyframes always resynchronise the stream; deltas need the frame with
    /// the immediately preceding id.
    pub fn decode(&mut self, packet: &FramePacket) -> Result<&Framebuffer, WireError> {
        let fb = if packet.is_keyframe() {
            decode_frame(packet, None)?
        } else {
            match &self.last {
                Some((id, base)) if id.wrapping_add(1) == packet.frame_id => {
                    decode_frame(packet, Some(base))?
                }
                Some((id, _)) if packet.frame_id <= *id => {
                    return Err(WireError::OutOfOrder {
                        last: *id,
                        got: packet.frame_id,
                    })
                }
                _ => return Err(WireError::MissingBaseFrame),
            }
        };
        self.last = Some((packet.frame_id, fb));
        Ok(&self.last.as_ref().unwrap().1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_frame(rng: &mut impl Rng, w: u16, h: u16) -> Framebuffer {
        let pixels = (0..Framebuffer::byte_len(w, h)).map(|_| rng.random()).collect();
        Framebuffer::new(w, h, Orientation::Portrait, pixels).unwrap()
    }

    #[test]
    fn pixel_length_is_checked() {
        assert!(Framebuffer::new(2, 2, Orientation::Portrait, vec![0; 15]).is_err());
        assert!(Framebuffer::new(2, 2, Orientation::Portrait, vec![0; 16]).is_ok());
    }

    #[test]
    fn keyframe_forced_without_prev() {
        let fb = Framebuffer::blank(360, 640, Orientation::Portrait);
        let p = encode_frame(&fb, None, 7, KeyframeMode::Raw).unwrap();
        assert_eq!(p.encoding, Encoding::RawRgba8);
        let bytes = p.to_bytes().unwrap();
        assert_eq!(bytes[14], 0);
        assert_eq!(&bytes[15..19], &(360u32 * 640 * 4).to_be_bytes());
    }

    #[test]
    fn identical_frame_is_single_record_delta() {
        let fb = Framebuffer::blank(360, 640, Orientation::Portrait);
        let p = encode_frame(&fb, Some(&fb), 1, KeyframeMode::Raw).unwrap();
        assert_eq!(p.encoding, Encoding::DeltaXorRle);
        let n = (360u32 * 640 * 4).to_be_bytes();
        assert_eq!(p.payload, [n[0], n[1], n[2], n[3], 0, 0, 0, 0]);
    }

    #[test]
    fn keyframe_slot_ignores_prev() {
        let fb = Framebuffer::blank(4, 4, Orientation::Portrait);
        let p = encode_frame(&fb, Some(&fb), 30, KeyframeMode::Raw).unwrap();
        assert!(p.is_keyframe());
        let p = encode_frame(&fb, Some(&fb), 60, KeyframeMode::Png).unwrap();
        assert_eq!(p.encoding, Encoding::Png);
    }

    #[test]
    fn incompressible_delta_falls_back_to_raw() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let a = random_frame(&mut rng, 16, 16);
        let b = random_frame(&mut rng, 16, 16);
        let p = encode_frame(&b, Some(&a), 1, KeyframeMode::Raw).unwrap();
        assert_eq!(p.encoding, Encoding::RawRgba8);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Framebuffer::blank(4, 4, Orientation::Portrait);
        let b = Framebuffer::blank(4, 5, Orientation::Portrait);
        assert!(matches!(
            encode_frame(&b, Some(&a), 1, KeyframeMode::Raw),
            Err(WireError::DimensionMismatch)
        ));
    }

    #[test]
    fn zero_raw_packet_decodes_black() {
        let p = FramePacket {
            frame_id: 0,
            width: 3,
            height: 2,
            orientation: Orientation::Portrait,
            encoding: Encoding::RawRgba8,
            payload: vec![0; 24],
        };
        let fb = decode_frame(&p, None).unwrap();
        assert!(fb.pixels().iter().all(|b| *b == 0));
    }

    #[test]
    fn delta_without_base_is_rejected() {
        let fb = Framebuffer::blank(4, 4, Orientation::Portrait);
        let p = encode_frame(&fb, Some(&fb), 1, KeyframeMode::Raw).unwrap();
        assert!(matches!(decode_frame(&p, None), Err(WireError::MissingBaseFrame)));
        let mut dec = FrameDecoder::new();
        assert!(matches!(dec.decode(&p), Err(WireError::MissingBaseFrame)));
    }

    #[test]
    fn header_errors() {
        let fb = Framebuffer::blank(2, 2, Orientation::Landscape);
        let bytes = encode_frame(&fb, None, 0, KeyframeMode::Raw)
            .unwrap()
            .to_bytes()
            .unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(FramePacket::from_bytes(&bad), Err(WireError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(FramePacket::from_bytes(&bad), Err(WireError::BadVersion(2))));
        assert!(matches!(
            FramePacket::from_bytes(&bytes[..bytes.len() - 1]),
            Err(WireError::Truncated)
        ));
        let p = FramePacket::from_bytes(&bytes).unwrap();
        assert_eq!(p.orientation, Orientation::Landscape);
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let fb = random_frame(&mut rng, 37, 11);
        let p = encode_frame(&fb, None, 0, KeyframeMode::Png).unwrap();
        assert_eq!(p.encoding, Encoding::Png);
        assert_eq!(decode_frame(&p, None).unwrap(), fb);
    }

    #[test]
    fn decoder_rejects_non_adjacent_delta() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let a = random_frame(&mut rng, 8, 8);
        let mut b = a.clone();
        b.pixels_mut()[0] ^= 1;
        let mut enc = FrameEncoder::new(KeyframeMode::Raw);
        let k = enc.encode(&a).unwrap();
        let d1 = enc.encode(&b).unwrap();
        let d2 = enc.encode(&a).unwrap();
        assert!(d1.encoding == Encoding::DeltaXorRle && d2.encoding == Encoding::DeltaXorRle);
        let mut dec = FrameDecoder::new();
        dec.decode(&k).unwrap();
        // skipping d1 means d2 has no base
        assert!(matches!(dec.decode(&d2), Err(WireError::MissingBaseFrame)));
        dec.decode(&k).unwrap();
        assert_eq!(dec.decode(&d1).unwrap(), &b);
        // replaying d1 is out of order
        assert!(dec.decode(&d1).is_err());
        assert_eq!(dec.decode(&d2).unwrap(), &a);
    }

    #[test]
    fn thousand_random_frame_pairs_round_trip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(0x5eed);
        let mut prev = Framebuffer::blank(360, 640, Orientation::Portrait);
        for i in 0..1000u32 {
            // mostly-similar successive frames, like a chat screen being redrawn
            let mut next = prev.clone();
            let edits = rng.random_range(0..64);
            for _ in 0..edits {
                let start = rng.random_range(0..next.pixels().len() - 64);
                let len = rng.random_range(1..64);
                let v = if rng.random_bool(0.5) { 0xff } else { 0x00 };
                next.pixels_mut()[start..start + len].fill(v);
            }
            let p = encode_frame(&next, Some(&prev), i + 1, KeyframeMode::Raw).unwrap();
            let wire = p.to_bytes().unwrap();
            let back = FramePacket::from_bytes(&wire).unwrap();
            let decoded = decode_frame(&back, Some(&prev)).unwrap();
            // byte-for-byte comparison against the original
            assert!(decoded.pixels() == next.pixels(), "frame {i} differs");
            prev = next;
        }
    }
}
