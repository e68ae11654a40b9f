pub mod error;
pub mod fixtures;
pub mod graph;
pub mod linalg;
pub mod linkage;
pub mod model;
pub mod qz;
pub mod efflap;
pub mod spectral;
pub mod dynamics;
pub mod generate;
pub mod report;
