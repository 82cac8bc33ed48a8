//! Steps one level-3 episode with random legal actions and prints the mask
//! size and reward breakdown at every placement.
//!
//!     cargo run --example masked_episode -- [seed]

use rand::Rng;

use soma_core::env::{Env, Level, OrderPolicy, TraceRecord};
use soma_core::rng::{stream, Stream};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let env = Env::default();
    let mut rng = stream(seed, Stream::Epsilon);
    let mut s = env.reset(Level::Three, seed, OrderPolicy::Shuffled);
    let order: Vec<&str> = s.order().iter().map(|p| p.name()).collect();
    println!("order: {}", order.join(" "));

    let mut mask = env.legal_mask(&s);
    let mut total = 0;
    while let Some(piece) = s.current_piece() {
        if mask.is_empty() {
            println!("dead end: no legal placement for {piece}");
            break;
        }
        let a = mask.iter().nth(rng.random_range(0..mask.count())).unwrap();
        let r = env.step(&s, a).expect("masked action is legal");
        total += r.reward.total();
        let rec = TraceRecord {
            step: s.history().len(),
            state_hash: format!("{:016x}", s.hash64()),
            action: a.id(),
            piece,
            reward: r.reward,
            total: r.reward.total(),
            done: r.done,
        };
        println!("legal {:>3}  {}", mask.count(), serde_json::to_string(&rec).unwrap());
        s = r.state;
        mask = r.next_mask;
    }
    println!("filled {} of 27 cells, return {total}", s.occupancy().count());
}
