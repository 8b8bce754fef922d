//! Label engineering for part-affinity-field pose estimation.
//!
//! The pipeline turns keypoint annotations into confidence maps, part
//! affinity fields (PAFs) and an ignore mask ([`labelgen`]), repairs
//! incomplete labels with a teacher's predictions ([`correction`]), scores
//! predictions against labels ([`losses`]), decodes maps back into person
//! skeletons ([`parser`]) and evaluates them with OKS-based average
//! precision ([`metrics`]). [`synthetic`] builds multi-person scenes with
//! known annotation failures for end-to-end checks.

pub mod annotation;
pub mod augment;
pub mod correction;
pub mod error;
pub mod field;
pub mod io;
pub mod labelgen;
pub mod losses;
pub mod metrics;
pub mod parser;
pub mod region;
pub mod skeleton;
pub mod synthetic;

pub use annotation::{Keypoint, PersonAnnotation, Visibility};
pub use error::{Error, Result};
pub use field::{sample_bilinear, BinaryMask, GridSpec, LabelSet, ScalarField, VectorField};
pub use region::IgnoreRegion;
pub use skeleton::SkeletonSpec;
