pub mod charting;
pub mod mesh;
pub mod sparse;
pub mod spectral;
pub mod net;
pub mod learn;
pub mod eval;
