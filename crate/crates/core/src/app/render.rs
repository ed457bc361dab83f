//! Deterministic software renderer for [`ChatState`].
//!
//! Every colour channel is one of 0x00, 0x80 or 0xFF. Neither those values
//! nor their pairwise XORs (0x7F, 0x80, 0xFF) fall in printable ASCII, so no
//! rendered pixel buffer, and no XOR delta between two of them, can contain
//! a run of message text bytes.

use super::font;
use super::layout::*;
use super::state::{ChatState, Direction};
use crate::wire::{Framebuffer, Orientation};

type Rgba = [u8; 4];

const BG: Rgba = [0x00, 0x00, 0x00, 0xff];
const HEADER_BG: Rgba = [0x00, 0x80, 0x80, 0xff];
const TEXT: Rgba = [0xff, 0xff, 0xff, 0xff];
const DIM: Rgba = [0x80, 0x80, 0x80, 0xff];
const SELECTED: Rgba = [0x00, 0x00, 0x80, 0xff];
const OUTBOUND: Rgba = [0x80, 0xff, 0x80, 0xff];

struct Canvas {
    fb: Framebuffer,
}

impl Canvas {
    fn new() -> Self {
        let mut fb = Framebuffer::blank(SCREEN_W, SCREEN_H, Orientation::Portrait);
        for px in fb.pixels_mut().chunks_exact_mut(4) {
            px.copy_from_slice(&BG);
        }
        Canvas { fb }
    }

    fn fill(&mut self, x: u16, y: u16, w: u16, h: u16, c: Rgba) {
        let (sw, sh) = (SCREEN_W as usize, SCREEN_H as usize);
        let x1 = (x as usize + w as usize).min(sw);
        let y1 = (y as usize + h as usize).min(sh);
        let pixels = self.fb.pixels_mut();
        for row in y as usize..y1 {
            for col in x as usize..x1 {
                let i = (row * sw + col) * 4;
                pixels[i..i + 4].copy_from_slice(&c);
            }
        }
    }

    fn glyph(&mut self, x: u16, y: u16, ch: char, c: Rgba) {
        for row in 0..font::GLYPH_H {
            for col in 0..font::GLYPH_W {
                if font::ink(ch, col, row) {
                    self.fill(
                        x + col as u16 * SCALE,
                        y + row as u16 * SCALE,
                        SCALE,
                        SCALE,
                        c,
                    );
                }
            }
        }
    }

    /// Draws up to `max_cols` characters starting at `(x, y)`.
    fn text(&mut self, x: u16, y: u16, s: &str, max_cols: usize, c: Rgba) {
        for (i, ch) in s.chars().take(max_cols).enumerate() {
            self.glyph(x + i as u16 * CELL_W, y, ch, c);
        }
    }
}

struct Line {
    text: String,
    color: Rgba,
    right: bool,
}

/// Hard-wraps a body into lines of at most `cols` characters; newlines
/// break lines, other control characters are kept (they draw as boxes).
fn wrap(body: &str, cols: usize) -> Vec<String> {
    let mut lines = Vec::new();
    for para in body.split('\n') {
        let chars: Vec<char> = para.chars().collect();
        if chars.is_empty() {
            lines.push(String::new());
            continue;
        }
        for chunk in chars.chunks(cols) {
            lines.push(chunk.iter().collect());
        }
    }
    lines
}

fn thread_lines(state: &ChatState) -> Vec<Line> {
    let Some(conv) = state.active() else {
        return Vec::new();
    };
    let cols = TEXT_COLS - 2;
    let mut lines = Vec::new();
    for msg in &conv.messages {
        let (color, right) = match msg.direction {
            Direction::Inbound => (TEXT, false),
            Direction::Outbound => (OUTBOUND, true),
        };
        for text in wrap(&msg.body, cols) {
            lines.push(Line { text, color, right });
        }
        if msg.no_preview {
            lines.push(Line {
                text: "[preview off]".into(),
                color: DIM,
                right,
            });
        }
    }
    lines
}

pub fn render(state: &ChatState) -> Framebuffer {
    let mut cv = Canvas::new();

    cv.fill(0, 0, SCREEN_W, HEADER_H, HEADER_BG);
    let title = match state.active() {
        Some(conv) => format!("{} | {}", state.app, conv.peer),
        None => state.app.clone(),
    };
    cv.text(MARGIN, (HEADER_H - CELL_H) / 2, &title, TEXT_COLS, TEXT);

    if state.conversations.is_empty() {
        let msg = "No conversations";
        let x = (SCREEN_W - msg.len() as u16 * CELL_W) / 2;
        cv.text(x, SCREEN_H / 2 - CELL_H, msg, TEXT_COLS, DIM);
    } else {
        let start = list_window_start(state.active_index);
        for (row, conv) in state.conversations.iter().enumerate().skip(start).take(LIST_ROWS) {
            let y = LIST_TOP + (row - start) as u16 * ROW_H;
            if row == state.active_index {
                cv.fill(0, y, SCREEN_W, ROW_H, SELECTED);
            }
            let label = format!("{} ({})", conv.peer, conv.messages.len());
            cv.text(MARGIN, y + (ROW_H - CELL_H) / 2, &label, TEXT_COLS, TEXT);
        }
        cv.fill(0, LIST_BOTTOM + 1, SCREEN_W, 2, DIM);

        let lines = thread_lines(state);
        let skip = lines.len().saturating_sub(THREAD_LINES);
        for (i, line) in lines[skip..].iter().enumerate() {
            let y = THREAD_TOP + i as u16 * LINE_H;
            let width = line.text.chars().count() as u16 * CELL_W;
            let x = if line.right {
                SCREEN_W - MARGIN - width
            } else {
                MARGIN
            };
            cv.text(x, y, &line.text, TEXT_COLS, line.color);
        }
    }

    cv.fill(0, COMPOSE_TOP - 2, SCREEN_W, 2, DIM);
    let visible = TEXT_COLS - 3;
    let buf: Vec<char> = state.compose_buffer.chars().collect();
    let tail: String = buf[buf.len().saturating_sub(visible)..].iter().collect();
    cv.text(
        MARGIN,
        COMPOSE_TOP + (SCREEN_H - COMPOSE_TOP - CELL_H) / 2,
        &format!("> {tail}_"),
        TEXT_COLS,
        TEXT,
    );

    cv.fb
}
