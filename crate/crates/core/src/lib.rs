//! Superpixel scene parsing with context-adaptive voting and a GA-trained
//! fusion layer.
//!
//! The engine labels every pixel of an image with one of `M` object classes
//! in three stages:
//!
//! 1. [`superpixel`] segments the image into superpixels and [`visual`]
//!    scores each one with a bank of one-vs-all classifiers, yielding a
//!    class-probability vector per superpixel.
//! 2. [`context`] estimates object co-occurrence priors from training label
//!    maps (local: over adjacent superpixels; global: over spatial-block
//!    pairs) and turns them into per-superpixel voting features.
//! 3. [`fusion`] feeds the visual and contextual probability vectors into a
//!    small one-hidden-layer network whose weights are trained by the
//!    genetic algorithm in [`ganet`].
//!
//! [`data`] and [`synth`] provide dataset ingestion and a procedural
//! benchmark generator, [`bundle`] persists trained models, [`metrics`]
//! scores predictions, and [`pipeline`] wires everything together for the
//! CLI.
//!
//! Numeric layers are generic over the scalar type via [`scalar::Real`];
//! the concrete aliases below pin the `f64` instantiation used by the
//! pipeline and the on-disk model format.

pub mod bundle;
pub mod context;
pub mod data;
pub mod error;
pub mod fusion;
pub mod ganet;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod prob;
pub mod scalar;
pub mod superpixel;
pub mod synth;
pub mod visual;

pub use error::{Error, Result};
pub use scalar::Real;

/// Probability vector over classes, `f64` pipeline instantiation.
pub type ProbVec = prob::ClassProbVector<f64>;
/// One-vs-all classifier bank, `f64` pipeline instantiation.
pub type Bank = visual::ClassifierBank<f64>;
/// Co-occurrence prior tables, `f64` pipeline instantiation.
pub type Ocp = context::OcpModel<f64>;
/// Integration network, `f64` pipeline instantiation.
pub type Net = fusion::IntegrationNet<f64>;
/// GA chromosome over an `f64` genome.
pub type Genome = ganet::Chromosome<f64>;
