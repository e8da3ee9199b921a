//! Bounded Pareto fronts: domination filtering, crowding-based eviction
//! and the hypervolume indicator.

use moqd::domain::test_support::solution_with_objectives;
use moqd::pareto::{hypervolume2d, InsertOutcome, ObjectiveVector, ParetoFront};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut front = ParetoFront::new(5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // points on and off the trade-off curve y = 10 - x
    for _ in 0..40 {
        let x: f64 = rng.gen::<f64>() * 10.0;
        let slack: f64 = rng.gen::<f64>() * 3.0;
        let y = (10.0 - x - slack).max(0.0);
        match front.insert(solution_with_objectives(x, y)) {
            InsertOutcome::Added => println!("added        ({x:.2}, {y:.2})"),
            InsertOutcome::AddedWithEviction(evicted) => println!(
                "added        ({x:.2}, {y:.2}), evicted ({:.2}, {:.2})",
                evicted.objectives[0], evicted.objectives[1]
            ),
            InsertOutcome::Discarded => println!("discarded    ({x:.2}, {y:.2})"),
        }
    }

    let members: Vec<ObjectiveVector> = front.solutions().map(|s| s.objectives.clone()).collect();
    let reference = ObjectiveVector::pair(0.0, 0.0).unwrap();
    println!("\nfinal front ({} members, capacity 5):", front.len());
    for m in &members {
        println!("  ({:.3}, {:.3})", m[0], m[1]);
    }
    println!(
        "hypervolume vs (0,0): {:.3}",
        hypervolume2d(&members, &reference).unwrap()
    );
}
