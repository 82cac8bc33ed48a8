//! Enumerates every assembly of the full cube with both search orders and
//! prints counts.
//!
//!     cargo run --release --example solve_soma

use std::time::Instant;

use soma_core::geometry::{GridMask, PieceId};
use soma_core::solver::{order_robot_friendly, solve_region, summarize, SearchOrder};

fn main() {
    let t = Instant::now();
    let piece_major = solve_region(&PieceId::ALL, GridMask::FULL, SearchOrder::PieceMajor);
    println!("piece-major: {} solutions in {:.2?}", piece_major.len(), t.elapsed());

    let t = Instant::now();
    let cell_major = solve_region(&PieceId::ALL, GridMask::FULL, SearchOrder::CellMajor);
    println!("cell-major:  {} solutions in {:.2?}", cell_major.len(), t.elapsed());
    assert_eq!(piece_major, cell_major, "search orders disagree");

    let summary = summarize(&piece_major, GridMask::FULL);
    println!("{summary:#?}");

    let ordered = order_robot_friendly(&piece_major[0]).expect("first solution is orderable");
    println!("first solution, robot order:");
    for (step, i) in ordered.order.iter().enumerate() {
        let p = &ordered.solution.placements[*i];
        println!("  {step}: {:<8} orientation {:>3} at {}", p.piece.name(), p.orientation, p.anchor);
    }
}
