//! Authenticated drone-to-drone channel: Diffie-Hellman key agreement,
//! HMAC-SHA-256 message authentication, an in-process topic bus, a
//! man-in-the-middle harness and a key-size timing benchmark.

pub mod adversary;
pub mod authchannel;
pub mod bench;
pub mod bus;
pub mod cli;
pub mod error;
pub mod keyexchange;
pub mod node;

pub use error::{Error, Result};
