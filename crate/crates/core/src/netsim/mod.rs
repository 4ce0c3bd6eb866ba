//! Wire protocol, channel models and the discrete-event queue.

pub mod channel;
pub mod queue;
pub mod wire;

pub use channel::{
    select_channel, transmit, Channel, ChannelKind, ChannelProfile, SelectionConfig, SelectionPolicy, TransmitOutcome,
};
pub use queue::{Event, EventQueue, QueueError};
pub use wire::{
    decode_advisory, decode_bsm, decode_frame, encode_advisory, encode_bsm, Advisory, Bsm, Frame, WireError,
};
