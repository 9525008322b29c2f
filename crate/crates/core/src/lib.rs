pub mod bench;
pub mod data;
pub mod fairness;
pub mod kernels;
pub mod losses;
pub mod noise;
pub mod qp;
pub mod rng;
pub mod svm;
