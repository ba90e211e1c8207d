//! Cases shared by the core test targets and the acceptance run.
#![allow(dead_code)]

pub mod identity_cases;
pub mod jacobian_cases;
pub mod oracle_cases;
