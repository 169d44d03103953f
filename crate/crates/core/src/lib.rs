//! Cooperation compliance control for mixed CAV/HDV traffic and its
//! application to a cooperative lane-change maneuver.

// validation uses `!(a < b)` on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod behavior;
pub mod compliance;
pub mod io;
pub mod ocp;
pub mod planner;
pub mod qp;
pub mod scenario;
pub mod sim;
