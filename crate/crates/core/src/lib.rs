pub mod cli;
pub mod error;
pub mod grid;
pub mod group;
pub mod numeric;
pub mod report;
pub mod semiclassical;
pub mod spectra;
pub mod variance;
pub mod weyl;
