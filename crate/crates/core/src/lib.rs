pub mod kernels;
pub mod detector;
pub mod faultsim;
pub mod fleetsim;
pub mod oracle;
pub mod report;
