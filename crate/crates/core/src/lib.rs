//! Streamliner synthesis workbench: enumerate solutions of a constraint
//! model, learn what distinguishes them, turn that into candidate
//! constraints, validate them against cached baselines and deploy the
//! survivors as a racing portfolio.

pub mod cnn;
pub mod corpus;
pub mod correlate;
pub mod encode;
pub mod grid;
pub mod minicp;
pub mod pipeline;
pub mod pool;
pub mod portfolio;
pub mod props;
pub mod scalar;
pub mod synth;
pub mod valid;

pub use scalar::Scalar;

pub type Tensor32 = encode::SolutionTensor<f32>;
pub type Tensor64 = encode::SolutionTensor<f64>;
pub type Network32 = cnn::Network<f32>;
pub type Network64 = cnn::Network<f64>;
