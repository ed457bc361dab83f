//! Fixed 360x640 portrait layout shared by the renderer and tap handling.

pub const SCREEN_W: u16 = 360;
pub const SCREEN_H: u16 = 640;

/// Glyphs are drawn at 2x, so a text cell is 12x16 pixels.
pub const SCALE: u16 = 2;
pub const CELL_W: u16 = 6 * SCALE;
pub const CELL_H: u16 = 8 * SCALE;
pub const MARGIN: u16 = 8;
pub const TEXT_COLS: usize = ((SCREEN_W - 2 * MARGIN) / CELL_W) as usize;

pub const HEADER_H: u16 = 32;
pub const LIST_TOP: u16 = HEADER_H;
pub const ROW_H: u16 = 24;
pub const LIST_ROWS: usize = 5;
pub const LIST_BOTTOM: u16 = LIST_TOP + ROW_H * LIST_ROWS as u16;
pub const THREAD_TOP: u16 = LIST_BOTTOM + 4;
pub const LINE_H: u16 = CELL_H + 2;
pub const COMPOSE_TOP: u16 = SCREEN_H - 36;
pub const THREAD_LINES: usize = ((COMPOSE_TOP - 4 - THREAD_TOP) / LINE_H) as usize;

/// Visible list row under a tap, if any.
pub fn list_row_at(x: u16, y: u16) -> Option<usize> {
    if x >= SCREEN_W || !(LIST_TOP..LIST_BOTTOM).contains(&y) {
        return None;
    }
    Some(((y - LIST_TOP) / ROW_H) as usize)
}

/// Index of the first conversation shown, keeping the active one visible.
pub fn list_window_start(active_index: usize) -> usize {
    (active_index + 1).saturating_sub(LIST_ROWS)
}
