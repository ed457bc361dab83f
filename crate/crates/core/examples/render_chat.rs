//! Drive the mock chat app through a short conversation and save what a
//! remote viewer would see as PNG files.
//!
//! ```bash
//! cargo run -p zc-core --example render_chat -- /tmp/screens
//! ```

use std::path::PathBuf;

use zc_core::app::{layout, render, ChatMessage, ChatState};
use zc_core::wire::{InputEvent, InputKind, KEY_ENTER};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| ".".into()).into();
    std::fs::create_dir_all(&out)?;

    let mut state = ChatState::new("whatsapp");
    std::fs::write(out.join("00-empty.png"), render(&state).to_png()?)?;

    state.ingest_message(ChatMessage::inbound("+15550001", "Hi! Are we still on for lunch?", 1));
    state.ingest_message(ChatMessage::inbound("+15550002", "Package delivered", 2));
    state.ingest_message(ChatMessage {
        no_preview: true,
        ..ChatMessage::inbound("+15550001", "Menu: https://food.example/menu", 3)
    });
    std::fs::write(out.join("01-inbox.png"), render(&state).to_png()?)?;

    let mut seq = 0;
    let mut send = |state: &mut ChatState, kind: InputKind| {
        seq += 1;
        state.apply_input(&InputEvent { seq, client_time_ms: seq as u64 * 100, kind })
    };
    send(&mut state, InputKind::Text { text: "Yes, 12:30 works".into() });
    let outcome = send(&mut state, InputKind::Key { keycode: KEY_ENTER, pressed: true });
    println!("outbound: {:?}", outcome.outbound.map(|m| (m.sender, m.body)));
    std::fs::write(out.join("02-replied.png"), render(&state).to_png()?)?;

    // tap the second conversation row
    send(&mut state, InputKind::Tap { x: 40, y: layout::LIST_TOP + layout::ROW_H + 4 });
    std::fs::write(out.join("03-second-thread.png"), render(&state).to_png()?)?;

    println!("wrote 4 screens to {}", out.display());
    Ok(())
}
