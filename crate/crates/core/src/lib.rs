//! Joint transmit beamforming and discrete RIS phase design for an
//! integrated sensing and communication downlink serving mobile riders on a
//! train.

pub mod beamformer;
pub mod channel;
pub mod driver;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod oracle;
pub mod phase_opt;
pub mod scenario;

pub use error::{Error, Result};
