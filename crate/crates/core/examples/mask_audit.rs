//! Legal-action counts by assembly depth over random reachable states.
//!
//!     cargo run --release --example mask_audit -- [samples]

use soma_core::env::Env;
use soma_core::solver::mask_ratio_report;

fn main() {
    let samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2_000);
    let r = mask_ratio_report(&Env::default(), samples, 0);
    println!(
        "{} states: legal mean {:.1}, min {}, max {} of {} actions ({} without orientation dedup)",
        r.samples, r.mean_legal, r.min_legal, r.max_legal, r.action_space, r.raw_action_space
    );
    println!("reduction {:.1}x (paper reference {}x)", r.ratio, r.paper_ref_ratio);
    for placed in 0..7 {
        let at: Vec<usize> = r.per_sample.iter().filter(|s| s.placed == placed).map(|s| s.legal).collect();
        if at.is_empty() {
            continue;
        }
        let mean = at.iter().sum::<usize>() as f64 / at.len() as f64;
        let dead = at.iter().filter(|&&l| l == 0).count();
        println!("  {placed} placed: {:>4} states, mean legal {mean:>6.1}, dead ends {dead}", at.len());
    }
}
