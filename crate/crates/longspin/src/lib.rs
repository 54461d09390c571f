//! Simulation engine for longitudinally detected NMR.
//!
//! The crate models small J-coupled nuclear spin systems evolving under
//! rotating-frame Hamiltonians and drives them through three acquisition
//! protocols: conventional inductive detection, AERIS (one nutation pulse per
//! acquisition block), and DRACAERIS (a forward nutation pulse followed by an
//! opposite-phase rewind pulse, read out differentially). Supporting modules
//! turn the sampled magnetization into spectra, provide a first-order
//! average-Hamiltonian oracle for the field-rescaling law, and simulate an NV
//! two-level ensemble running dynamical-decoupling magnetometry with pulse
//! errors.

pub mod aht;
pub mod config;
pub mod export;
pub mod hamiltonians;
pub mod nvsensor;
pub mod protocols;
pub mod runner;
pub mod spectra;
pub mod spincore;

mod error;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

// The guide's code blocks compile and run as doc-tests so the book cannot
// drift from the library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            #[allow(dead_code)]
            struct $name;
        };
    }
    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(SpinSystems, "../../../book/src/spin-systems.md");
    chapter!(Molecules, "../../../book/src/molecules.md");
    chapter!(Protocols, "../../../book/src/protocols.md");
    chapter!(Spectra, "../../../book/src/spectra.md");
    chapter!(RescalingAht, "../../../book/src/rescaling-aht.md");
    chapter!(NvSensor, "../../../book/src/nv-sensor.md");
    chapter!(Cli, "../../../book/src/cli.md");
}
