//! Compressive-sensing reconstruction of multi-channel time series.
//!
//! Randomly masked samples are explained by a complex Fourier synthesis
//! `U ≈ Ψ·X`. The coefficients `X` are trained with Adam under a
//! loss-weighted MSE plus an l1 penalty, then synthesized back into a
//! complete signal.
//!
//! ```no_run
//! use csrecon::{basis::BasisSpec, reconstructor, sampling, signals};
//!
//! let sig = signals::generate_sinusoids(&signals::reference_tones(), 400.0, 5.12, true)?;
//! let mask = sampling::generate_mask(sig.samples(), sig.channels(), 0.2, 7)?;
//! let basis = BasisSpec::fourier(sig.samples())?;
//! let problem = reconstructor::ReconstructionProblem::from_signal(&sig.data, mask, basis, reconstructor::DEFAULT_MU)?;
//! let out = reconstructor::train(&problem, &Default::default(), 7)?;
//! let (u_rec, _) = reconstructor::reconstruct(&out.state, &basis)?;
//! let xi = signals::reconstruction_error(&sig.data, &u_rec)?;
//! # Ok::<(), csrecon::Error>(())
//! ```

pub mod basis;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod reconstructor;
pub mod sampling;
pub mod signals;
pub mod svg;
pub mod verify;

pub use error::{Error, Result};
pub use numerics::RealMatrix;
