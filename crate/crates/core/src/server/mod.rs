//! Live bridge: ingestion, the tick loop and the WebSocket fan-out.

mod message;
mod runtime;
mod state;

pub use message::{
    handle_inject, hello_message, parse_client_message, state_message, ClientMessage, ClientMessageError,
    PROTOCOL_VERSION,
};
pub use runtime::{start, BridgeHandle, BridgeSnapshot, FrameSource, StartError};
pub use state::{
    BridgeState, Diagnostics, DiagnosticsSnapshot, TickOutcome, TransitionEvent, FALLBACK_HUMIDITY_PCT,
    FALLBACK_TEMPERATURE_C,
};
