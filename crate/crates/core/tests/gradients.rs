mod common;

use common::{dyn_fd_error, mlm_fd_error, sgns_fd_error};

#[test]
fn mlm_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let e = mlm_fd_error(seed);
        assert!(e < 1e-4, "seed {}: {:e}", seed, e);
    }
}

#[test]
fn sgns_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let e = sgns_fd_error(seed);
        assert!(e < 1e-4, "seed {}: {:e}", seed, e);
    }
}

#[test]
fn dynamic_gradient_matches_finite_differences() {
    for seed in 0..20 {
        for attention in [true, false] {
            let e = dyn_fd_error(seed, attention);
            assert!(e < 1e-4, "seed {} attention {}: {:e}", seed, attention, e);
        }
    }
}
