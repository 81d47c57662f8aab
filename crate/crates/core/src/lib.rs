//! Reference-free evaluation of image inpainting methods.
//!
//! A method under test fills a free-form hole in an image. The filled image
//! is then masked again with K grid patch masks restricted to the pixels the
//! method did not synthesize, re-inpainted by a second method, and compared
//! with the re-inpainted versions. The mean sub-metric distance over the K
//! passes is the consistency score; lower (for distances) is better.

pub mod desk;
pub mod error;
pub mod image;
pub mod inpaint;
pub mod maskgen;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod seed;

pub use error::{Error, Result};
pub use image::{apply_mask, BinaryMask, ImageBuffer};
