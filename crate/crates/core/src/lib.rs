pub mod adversarial;
pub mod bench;
pub mod bounds;
pub mod driver;
pub mod hessian;
pub mod problems;
pub mod rng;
pub mod subproblem;
