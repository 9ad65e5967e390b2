//! Achievable-rate analysis and small-instance decoding for successive
//! generalized nearest neighbor decoding (S-GNNDR) over MIMO fading channels.
//!
//! The receiver under study decodes spatial substreams one at a time. For
//! each substream it forms a processing value and a scaling value from the
//! channel output, the receiver CSI (either the true fading matrix or a
//! received pilot signal), and the already-decoded substreams, then picks the
//! codeword closest to the processed output in a weighted Euclidean sense.
//! The library evaluates the generalized mutual information (GMI) this
//! receiver achieves, in three flavors:
//!
//! * perfect-CSI closed forms (which collapse to the familiar
//!   `log det(I + SNR/n_t H H*)` coherent rate),
//! * the optimal nonlinear scheme under pilot CSI, evaluated by Monte Carlo
//!   over posterior statistics of each substream,
//! * the restricted linear scheme under pilot CSI, evaluated through its
//!   closed-form pilot moments (equivalently, the conventional
//!   estimate-then-decode pilot-assisted rate).
//!
//! It also runs the actual decoder at small block lengths to demonstrate
//! that rates below the GMI are operationally achievable.
//!
//! Modules mirror the processing chain: [`numerics`] (complex linear
//! algebra), [`channel`] (models and sampling), [`estimation`] (conditional
//! statistics), [`gmi`] (rate evaluators), [`decoder`] (codebooks and
//! exhaustive GNNDR decoding), and [`harness`] (sweeps, config files, CSV).
//!
//! Start with the runnable examples (`cargo run --release --example ...`);
//! each one exercises a major capability end to end.

pub mod channel;
pub mod decoder;
pub mod error;
pub mod estimation;
pub mod gmi;
pub mod harness;
pub mod numerics;

pub use error::{Error, Result};
