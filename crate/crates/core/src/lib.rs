//! Illumination estimation with bag-of-color-features pooling.
//!
//! The crate is organized around one pipeline: load linear RGB images
//! ([`imageio`]), estimate the scene illuminant either with classical
//! statistical methods ([`statistical`]) or with a small trainable network
//! that pools convolutional features into a color histogram ([`bocf`]),
//! train that network ([`train`]), and score estimates by recovery angular
//! error ([`evaluate`]). [`tensor`] supplies the dense-tensor and
//! reverse-mode differentiation machinery the network is built on.

pub mod bocf;
pub mod evaluate;
pub mod imageio;
pub mod statistical;
pub mod tensor;
pub mod train;
