//! Helpers shared by the integration tests and the acceptance suite. Not
//! every test target uses every helper.
#![allow(dead_code)]

pub mod cli;
pub mod gradcheck;
pub mod oracle;
pub mod pipeline;
