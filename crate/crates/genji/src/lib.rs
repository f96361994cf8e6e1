//! Files, server and command line for the Genji-kō co-smelling game.

pub mod artifact;
pub mod cli;
pub mod eventlog;
pub mod knowledge;
pub mod llm;
pub mod memory;
pub mod recording;
pub mod sensing;
pub mod server;
pub mod stream;
