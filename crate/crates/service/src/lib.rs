//! Edit service for interactive deformation of orthogonal geodesic nets.
//!
//! Clients speak length-prefixed JSON over TCP (see `PROTOCOL.md`). A
//! [`session::Session`] folds the commands into state, and the server keeps
//! one live solve per connection, restarting it whenever a newer command
//! lands.

pub mod client;
pub mod protocol;
pub mod server;
pub mod session;
