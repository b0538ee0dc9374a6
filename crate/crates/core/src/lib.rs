//! Two-party secret-shared fixed-point arithmetic and privacy-preserving
//! truth finding.
//!
//! Two non-colluding servers hold additive shares of the sources' answers and
//! run the Cosine or 3-Estimates algorithm on them. A trusted dealer supplies
//! correlated randomness offline; only the final truth labels are revealed.

pub mod compare;
pub mod dataset;
pub mod dealer;
pub mod error;
pub mod protocols;
pub mod report;
pub mod ring;
pub mod session;
pub mod sharing;
pub mod synth;
pub mod transport;
pub mod truth;

#[doc(hidden)]
pub mod testing;

pub use error::{Error, Result};
pub use protocols::{MpcContext, NewtonConfig, ProtocolConfig, TruncationMode};
pub use ring::{RingElement, RingParams};
pub use sharing::{PartyId, Share, SharedVector};
