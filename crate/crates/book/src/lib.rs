//! Runs every code listing of the guide in `book/src` as a doc-test, one
//! module per chapter so a failure names its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}
#[doc = include_str!("../../../book/src/constitutive.md")]
pub mod constitutive {}
#[doc = include_str!("../../../book/src/transport.md")]
pub mod transport {}
#[doc = include_str!("../../../book/src/galerkin.md")]
pub mod galerkin {}
#[doc = include_str!("../../../book/src/time-stepping.md")]
pub mod time_stepping {}
#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}
#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}
#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}
