//! Client-server signature protocol.
//!
//! Request frame (client to server), `8 + 4 * dim` bytes:
//!
//! ```text
//! "UFSG" | version u8 | mask u8 | dim u16 LE | dim x f32 LE
//! ```
//!
//! Response frame, `4 + 4 * count` bytes:
//!
//! ```text
//! version u8 | status u8 | count u16 LE | count x f32 LE
//! ```
//!
//! `status` is 0 (ok), 1 (bad frame), 2 (dimension mismatch) or 3 (server
//! error); `count` is zero unless the status is ok.

mod client;
mod server;
mod wire;

pub use client::{client_query, Client};
pub use server::{score_request, serve, Server, ServerConfig, ServerHandle};
pub use wire::{
    decode_request, decode_response, encode_request, encode_response, read_request, read_response,
    to_wire_score, Frame, ScoreResponse, SignatureRequest, Status, WireError, PROTOCOL_VERSION, REQUEST_HEADER_LEN,
    REQUEST_MAGIC, RESPONSE_HEADER_LEN,
};

/// Environment variable naming the model file for `serve`.
pub const ENV_MODEL: &str = "SIGFUSE_MODEL";
/// Environment variable naming the listen port for `serve`.
pub const ENV_PORT: &str = "SIGFUSE_PORT";
