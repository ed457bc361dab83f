//! Encode a short screen sequence and print packet sizes, then hex-dump an
//! input event and a probe/ack pair.
//!
//! ```bash
//! cargo run -p zc-core --example wire_codec
//! ```

use zc_core::app::{render, ChatMessage, ChatState};
use zc_core::wire::{
    encode_input, encode_unit, ChannelTag, FrameDecoder, FrameEncoder, FramePacket, InputEvent, InputKind,
    KeyframeMode, ProbePacket,
};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut state = ChatState::new("signal");
    let mut enc = FrameEncoder::new(KeyframeMode::Raw);
    let mut dec = FrameDecoder::new();

    println!("{:>4}  {:<14} {:>9}", "id", "encoding", "bytes");
    for i in 0..35u64 {
        if i % 5 == 1 {
            state.ingest_message(ChatMessage::inbound("+15550001", format!("message number {i}"), i));
        }
        let frame = render(&state);
        let packet = enc.encode(&frame)?;
        let bytes = packet.to_bytes()?;
        let decoded = dec.decode(&FramePacket::from_bytes(&bytes)?)?;
        assert_eq!(*decoded, frame);
        println!("{:>4}  {:<14} {:>9}", packet.frame_id, format!("{:?}", packet.encoding), bytes.len());
    }

    let tap = InputEvent {
        seq: 1,
        client_time_ms: 0,
        kind: InputKind::Tap { x: 100, y: 200 },
    };
    let bytes = encode_input(&tap)?;
    println!("\nTAP(100,200) seq=1, {} bytes:\n  {}", bytes.len(), hex(&bytes));
    println!("as an input unit:\n  {}", hex(&encode_unit(ChannelTag::Input, &bytes)?));

    let probe = ProbePacket::probe(7, 1234);
    println!("\nprobe: {}", hex(&probe.to_bytes()));
    println!("ack:   {}", hex(&probe.ack().to_bytes()));
    Ok(())
}
