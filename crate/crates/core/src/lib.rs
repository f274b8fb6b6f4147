//! Layered (hierarchical) QAM over MIMO fading channels with WiMAX QC-LDPC
//! coding, and the successive MMSE/ML receivers that decode it layer by
//! layer.

pub mod channel;
pub mod cli;
pub mod detect;
pub mod hqam;
pub mod layout;
pub mod sim;
pub mod wimax_ldpc;
