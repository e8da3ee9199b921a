//! The toy crystal domain: template lattices, periodic Lennard-Jones
//! energy and forces, gradient relaxation and the conflicting
//! magnetism objective.

use moqd::domain::{
    evaluate, lj_energy, lj_forces, max_force_norm, relax, template_genotype, DomainParams,
    OperatorTag, Provenance,
};

fn main() {
    let p = DomainParams::default();
    println!("template   v/atom   energy   residual force   magnetism");
    for name in ["sc", "bcc", "fcc", "diamond"] {
        // scan volume per atom for each template's lattice-energy minimum
        let mut best = (f64::INFINITY, 0.0);
        let mut v = 0.6;
        while v < 4.0 {
            let g = template_genotype(name, &p, v * 8.0).unwrap();
            let e = lj_energy(&g, &p).unwrap();
            if e < best.0 {
                best = (e, v);
            }
            v += 0.005;
        }
        let g = template_genotype(name, &p, best.1 * 8.0).unwrap();
        let relaxed = relax(&g, 100, &p).unwrap();
        let force = max_force_norm(&lj_forces(&relaxed.genotype, &p).unwrap());
        let s = evaluate(
            relaxed.genotype,
            &p,
            0,
            Provenance {
                iteration: 0,
                parent: None,
                operator: OperatorTag::Init,
            },
        )
        .unwrap();
        println!(
            "{name:<10} {:.3}   {:8.3}   {force:.2e}         {:.4}",
            best.1, -s.objectives[0], s.objectives[1]
        );
    }
    println!("\nlower energy (denser packing) trades off against magnetism");
}
