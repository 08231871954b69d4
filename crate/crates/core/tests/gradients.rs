mod common;

use common::{dim_grad_check, vq_grad_check};

#[test]
fn vq_loss_gradients_match_central_differences() {
    let c = vq_grad_check(4);
    assert!(c.rel.len() > 40);
    assert!(c.fraction_below(1e-4) >= 0.95, "{:.3} below 1e-4", c.fraction_below(1e-4));
    assert!(c.worst() < 1e-2, "worst {:.2e}", c.worst());
}

#[test]
fn dim_loss_gradients_match_central_differences() {
    let c = dim_grad_check(3);
    assert!(c.rel.len() > 100);
    assert!(c.fraction_below(1e-4) >= 0.95, "{:.3} below 1e-4", c.fraction_below(1e-4));
    assert!(c.worst() < 1e-2, "worst {:.2e}", c.worst());
}
