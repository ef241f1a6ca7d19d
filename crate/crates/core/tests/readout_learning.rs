mod common;

#[test]
fn analog_delta_is_the_cross_entropy_gradient() {
    let worst = common::gradient_check(50, 21);
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn fine_grained_anabp_loss_falls_epoch_over_epoch() {
    let losses = common::anabp_epoch_losses(12, 5);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-3, "loss rose: {losses:?}");
    }
    assert!(losses.last().unwrap() < &(0.5 * losses[0]), "{losses:?}");
}
