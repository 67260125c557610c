//! Transmit and receive signal processing.

pub mod detect;
pub mod frame;
pub mod ofdm;
pub mod qpsk;
pub mod spreading;

pub use detect::{detect, estimate_channel_ls, DetectMode, Detected, MrcCombiner};
pub use frame::{build_frame, pilot_pairs, propagate, receive_symbol, PairReceiver, FrameWaveform, TxFrame};
pub use ofdm::{OfdmModem, OfdmParams};
pub use qpsk::{qpsk_hard, qpsk_llr, qpsk_map};
pub use spreading::{despread_symbol, hadamard, spread_symbol, SpreadingLayout, SpreadingSpec};
