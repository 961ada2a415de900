//! Minimal dense-network engine: specs with frozen/absent slots, forward
//! passes with gradient tapes, reverse-mode gradients, and Adam.

mod activation;
mod adam;
mod check;
mod model;
mod spec;

pub use activation::ActivationKind;
pub use adam::{adam_step, AdamParams, AdamState};
pub use check::{gradient_suite, GradCheckReport};
pub use model::{GradTape, NetModel};
pub use spec::{ArchTag, NetSpec, NetSpecBuilder, Slot};
