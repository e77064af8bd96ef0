//! Live teleoperation over WebSocket.
//!
//! `/ws` streams `state` every tick and `field_slice` at 5 Hz, and accepts
//! goals, obstacle spawns, pause/resume and controller parameters. `/health`
//! answers `ok`; `/scenario` returns the running configuration.

pub mod server;
pub mod wire;

pub use server::{serve, Cadence, ServeError, Served, Server, SEND_QUEUE_DEPTH};
pub use wire::{ClientCommand, ServerMessage, WIRE_VERSION};
