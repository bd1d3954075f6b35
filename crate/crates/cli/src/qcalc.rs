use secagg_robust::robust::{compute_q, detection_probability, RobustnessError};

use crate::exit;

pub fn cmd_qcalc(l: usize, s_m: f64, delta: f64, max_q: Option<usize>) -> u8 {
    let budget = match compute_q(l, s_m, delta) {
        Ok(b) => b,
        Err(RobustnessError::Undetectable) => {
            eprintln!("error: --sm 0 means nothing is tampered, so no number of checks can detect it");
            return exit::USAGE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return exit::USAGE;
        }
    };
    let last = max_q.unwrap_or(2 * budget.q).clamp(1, l);
    println!("l,s_m,delta,q,probability");
    println!("{l},{s_m},{delta},{},{:.9}", budget.q, budget.probability);
    println!();
    println!("q,probability");
    for q in 1..=last {
        println!("{q},{:.9}", detection_probability(l, s_m, q));
    }
    exit::OK
}
