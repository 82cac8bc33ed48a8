//! Orientation classes per piece and the resulting action space.
//!
//!     cargo run --example orientations

use soma_core::env::NUM_ACTIONS;
use soma_core::geometry::{OrientationTable, PieceId, RAW_ORIENTATIONS, GRID_CELLS};

fn main() {
    let table = OrientationTable::get();
    for piece in PieceId::ALL {
        let range = table.range(piece);
        let first = &table.entry(range.start).cells;
        let cells: Vec<String> = first.iter().map(|c| format!("({},{},{})", c.x, c.y, c.z)).collect();
        println!(
            "{:<9} {} cells  {:>2} orientations  ids {:>3}..{:<3}  canonical {}",
            piece.name(),
            piece.cell_count(),
            range.len(),
            range.start,
            range.end,
            cells.join(" ")
        );
    }
    println!("orientations {} (of {RAW_ORIENTATIONS} raw)", table.len());
    println!("actions {} = {} x {GRID_CELLS}", NUM_ACTIONS, table.len());

    // placements that fit inside the grid, per piece
    for piece in PieceId::ALL {
        let fits = table
            .range(piece)
            .flat_map(|o| (0..GRID_CELLS).map(move |p| (o, p)))
            .filter(|&(o, p)| table.placement(o, p).is_some())
            .count();
        println!("{:<9} {fits} in-grid placements", piece.name());
    }
}
