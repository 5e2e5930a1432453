//! The telequest relay daemon and its scripted input player.

pub mod http;
pub mod player;
pub mod server;

pub use player::{play, PlayError, PlayOptions, PlayReport};
pub use server::{spawn, ClockMode, Daemon, ServeError, ServeOptions};
