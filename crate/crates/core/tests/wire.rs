use proptest::prelude::*;

use zc_core::wire::{
    decode_input, encode_input, FrameDecoder, FrameEncoder, FramePacket, Framebuffer, InputEvent, InputKind,
    KeyframeMode, Orientation, ProbePacket, WireError, KEYFRAME_INTERVAL,
};

fn arb_kind() -> impl Strategy<Value = InputKind> {
    prop_oneof![
        (any::<u16>(), any::<bool>()).prop_map(|(keycode, pressed)| InputKind::Key { keycode, pressed }),
        ".{0,80}".prop_map(|text| InputKind::Text { text }),
        (any::<u16>(), any::<u16>()).prop_map(|(x, y)| InputKind::Tap { x, y }),
        any::<[u16; 5]>().prop_map(|[x1, y1, x2, y2, duration_ms]| InputKind::Swipe {
            x1,
            y1,
            x2,
            y2,
            duration_ms
        }),
    ]
}

fn arb_event() -> impl Strategy<Value = InputEvent> {
    (any::<u32>(), any::<u64>(), arb_kind()).prop_map(|(seq, client_time_ms, kind)| InputEvent {
        seq,
        client_time_ms,
        kind,
    })
}

/// width, height, start pixels, per-step edits (index, value), first id.
type Chain = (u16, u16, Vec<u8>, Vec<Vec<(usize, u8)>>, u32);

/// A start frame plus per-step pixel edits (index, value).
fn arb_chain() -> impl Strategy<Value = Chain> {
    (1u16..24, 1u16..24).prop_flat_map(|(w, h)| {
        let n = Framebuffer::byte_len(w, h);
        (
            Just(w),
            Just(h),
            prop::collection::vec(any::<u8>(), n),
            prop::collection::vec(prop::collection::vec((0..n, any::<u8>()), 0..6), 1..40),
            0u32..200,
        )
    })
}

proptest! {
    #[test]
    fn input_round_trips(ev in arb_event()) {
        let bytes = encode_input(&ev).unwrap();
        let back = decode_input(&bytes).unwrap();
        prop_assert_eq!(&back, &ev);
        prop_assert_eq!(encode_input(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_input_is_rejected(ev in arb_event(), cut in 1usize..40) {
        let bytes = encode_input(&ev).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_input(&bytes[..keep]).is_err());
    }

    #[test]
    fn probe_ack_echoes(id in any::<u32>(), t in any::<u64>()) {
        let p = ProbePacket::probe(id, t);
        let ack = ProbePacket::from_bytes(&p.ack().to_bytes()).unwrap();
        prop_assert_eq!(ack.probe_id, id);
        prop_assert_eq!(ack.client_time_ms, t);
        prop_assert_eq!(ProbePacket::from_bytes(&p.to_bytes()).unwrap(), p);
    }

    #[test]
    fn frame_chains_decode_exactly((w, h, start, edits, offset) in arb_chain()) {
        let mut enc = FrameEncoder::resume_at(offset, KeyframeMode::Raw);
        let mut dec = FrameDecoder::new();
        let mut frame = Framebuffer::new(w, h, Orientation::Portrait, start).unwrap();
        let mut last_key = None;
        for step in edits {
            let pkt = enc.encode(&frame).unwrap();
            let bytes = pkt.to_bytes().unwrap();
            let wire = FramePacket::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&wire, &pkt);
            if pkt.is_keyframe() {
                last_key = Some(pkt.frame_id);
            }
            // a keyframe at least every interval
            prop_assert!(pkt.frame_id - last_key.unwrap() < KEYFRAME_INTERVAL);
            prop_assert_eq!(dec.decode(&wire).unwrap(), &frame);
            let mut px = frame.clone().into_pixels();
            for (i, v) in step {
                px[i] = v;
            }
            frame = Framebuffer::new(w, h, Orientation::Portrait, px).unwrap();
        }
    }

    #[test]
    fn deltas_never_apply_out_of_order(px in prop::collection::vec(any::<u8>(), 64), flip in 0usize..64) {
        let a = Framebuffer::new(4, 4, Orientation::Portrait, px).unwrap();
        let mut bpx = a.clone().into_pixels();
        bpx[flip] ^= 0xFF;
        let b = Framebuffer::new(4, 4, Orientation::Portrait, bpx).unwrap();
        let mut enc = FrameEncoder::resume_at(1, KeyframeMode::Raw);
        let k = enc.encode(&a).unwrap();
        let d1 = enc.encode(&b).unwrap();
        let d2 = enc.encode(&a).unwrap();
        prop_assert!(!d1.is_keyframe() && !d2.is_keyframe());

        let mut dec = FrameDecoder::new();
        // no base at all
        prop_assert!(matches!(dec.decode(&d2), Err(WireError::MissingBaseFrame)));
        dec.decode(&k).unwrap();
        // skipping d1
        prop_assert!(matches!(dec.decode(&d2), Err(WireError::MissingBaseFrame)));
        dec.decode(&d1).unwrap();
        // replaying d1
        let replay = matches!(dec.decode(&d1), Err(WireError::OutOfOrder { .. }));
        prop_assert!(replay);
        prop_assert_eq!(dec.decode(&d2).unwrap(), &a);
    }
}

#[test]
fn spec_examples() {
    let tap = InputEvent {
        seq: 1,
        client_time_ms: 0,
        kind: InputKind::Tap { x: 100, y: 200 },
    };
    assert_eq!(encode_input(&tap).unwrap().len(), 22);
    let hi = InputEvent {
        seq: 1,
        client_time_ms: 0,
        kind: InputKind::Text { text: "hi".into() },
    };
    assert_eq!(encode_input(&hi).unwrap()[18..], [0x00, 0x02, 0x68, 0x69]);
    let mut bad = encode_input(&tap).unwrap();
    bad[..4].copy_from_slice(b"XXXX");
    assert!(matches!(decode_input(&bad), Err(WireError::BadMagic)));
}
