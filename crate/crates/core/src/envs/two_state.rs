use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub const STAY: usize = 0;
pub const LEAVE: usize = 1;

/// A single decision state with a scalar feature: `STAY` loops with
/// `phi = 0`, `LEAVE` terminates with `phi = 1`, so task `w` pays `w` on exit.
pub fn make_two_state_mdp(gamma: f64) -> Result<TabularMdp> {
    if gamma >= 1.0 {
        return Err(Error::DiscountTooLarge(gamma));
    }
    TabularMdp::builder(2, 1, gamma)
        .terminal(1)
        .transition(0, STAY, 0, 1.0, vec![0.0])?
        .transition(0, LEAVE, 1, 1.0, vec![1.0])?
        .build()
}
