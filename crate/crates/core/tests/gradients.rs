mod common;

use common::{gradient_suite, Toy};

#[test]
fn every_objective_passes_finite_differences() {
    let toy = Toy::load();
    for (name, r) in gradient_suite(&toy, 64) {
        println!("{name}: {} coordinates, max relative error {:.2e}", r.coordinates, r.max_rel_error);
        assert!(r.coordinates > 0, "{name}");
        assert!(r.max_rel_error < 1e-3, "{name}: {r:?}");
    }
}
