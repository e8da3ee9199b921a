//! Centroidal Voronoi tessellation of the feature space and the
//! per-cell Pareto-front archive built on top of it.

use moqd::archive::{build_cvt, FeatureBounds, MomeArchive};
use moqd::domain::test_support::solution_with;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let bounds = FeatureBounds::new([0.0, 0.0], [1.0, 1.0]);
    let tessellation = build_cvt(50, &bounds, 20_000, 42).unwrap();
    println!("built {} centroids from 20k samples", tessellation.cell_count());

    let mut archive = MomeArchive::new(tessellation, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let features = [rng.gen::<f64>(), rng.gen::<f64>()];
        let objectives = (rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0);
        archive.insert(solution_with(objectives.0, objectives.1, features));
    }

    println!(
        "archive: {}/{} cells occupied, {} solutions total",
        archive.occupied_cell_count(),
        archive.tessellation().cell_count(),
        archive.solution_count()
    );
    for (index, front) in archive.occupied_cells().take(5) {
        let c = archive.tessellation().centroids()[index];
        println!(
            "  cell {index:2} at ({:.2}, {:.2}): front of {}",
            c[0],
            c[1],
            front.len()
        );
    }
}
