mod common;

use common::{fd_check, FD_TOLERANCE};
use sigswap::objectives::Objective;

fn assert_fd(objective: Objective) {
    let r = fd_check(objective);
    assert!(r.tensors > 0);
    assert!(
        r.worst.1 < FD_TOLERANCE,
        "{objective:?}: worst relative error {:.3e} on `{}`",
        r.worst.1,
        r.worst.0
    );
    assert!(r.leaked.is_empty(), "{objective:?} leaks gradient into {:?}", r.leaked);
}

#[test]
fn reconstruction_gradients() {
    assert_fd(Objective::Recon);
}

#[test]
fn exchange_gradients() {
    assert_fd(Objective::Exc);
}

#[test]
fn exchange_to_reference_gradients() {
    assert_fd(Objective::ExcGen);
}

#[test]
fn cycle_gradients() {
    assert_fd(Objective::Cycle);
}

#[test]
fn adversarial_gradients_skip_the_discriminator() {
    assert_fd(Objective::Adversarial);
}

#[test]
fn total_objective_gradients() {
    assert_fd(Objective::Total);
}

#[test]
fn discriminator_gradients_skip_the_generator() {
    assert_fd(Objective::Discriminator);
}
