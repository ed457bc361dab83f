//! Binary codecs for everything exchanged between instance, relay and client.
//!
//! All integers are big-endian. See `docs/protocol.md` for byte-level
//! examples.

mod delta;
mod frame;
mod input;
mod mux;
mod probe;

pub use delta::{delta_decode, delta_encode};
pub use frame::{
    decode_frame, encode_frame, is_keyframe_slot, Encoding, FrameDecoder, FrameEncoder,
    FramePacket, Framebuffer, KeyframeMode, Orientation, DEFAULT_HEIGHT, DEFAULT_WIDTH,
    FRAME_HEADER_LEN, FRAME_MAGIC, KEYFRAME_INTERVAL,
};
pub use input::{
    decode_input, encode_input, InputEvent, InputKind, INPUT_MAGIC, KEY_BACKSPACE, KEY_ENTER,
};
pub use mux::{encode_unit, read_unit, write_unit, ChannelTag, MAX_UNIT_LEN};
pub use probe::{ProbeDirection, ProbePacket, PROBE_LEN, PROBE_MAGIC};

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown kind {0}")]
    UnknownKind(u8),
    #[error("truncated packet")]
    Truncated,
    #[error("trailing bytes after packet")]
    TrailingBytes,
    #[error("delta frame without its base frame")]
    MissingBaseFrame,
    #[error("frame {got} arrived after frame {last}")]
    OutOfOrder { last: u32, got: u32 },
    #[error("corrupt payload: {0}")]
    CorruptPayload(&'static str),
    #[error("frame dimensions differ from the base frame")]
    DimensionMismatch,
    #[error("delta inputs differ in length ({base} vs {next})")]
    LengthMismatch { base: usize, next: usize },
    #[error("pixel buffer is {actual} bytes, expected {expected}")]
    PixelLength { expected: usize, actual: usize },
    #[error("length does not fit the wire field")]
    Overflow,
    #[error("png: {0}")]
    Png(String),
}
