//! Query-based black-box attacks on no-reference image quality assessment
//! (NR-IQA) models.
//!
//! The attack pushes a model's predicted score across a ladder of adaptive
//! score boundaries while keeping every perturbed pixel inside a
//! just-noticeable-difference (JND) box around the original image. Attack
//! directions are built from high-frequency texture residuals restricted to
//! edge and salient regions, and each step searches a polar arc that is
//! guaranteed to stay inside the box.
//!
//! Module map:
//! - [`imageops`]: image containers, blur, Sobel, Canny, MBS saliency, DCT, PNG IO
//! - [`jnd`]: per-pixel visibility thresholds and the feasible box
//! - [`directions`]: texture donors, attack masks, and the `u`/`v` direction samplers
//! - [`geometry`]: box projections, arc candidates, and the single-step search
//! - [`boundary`]: score boundaries, the gamma ladder, and the iterative driver
//! - [`oracle`]: the black-box scoring contract with query accounting
//! - [`metrics`]: SROCC/PLCC/KROCC/MAE and SSIM/PSNR
//! - [`harness`]: datasets, campaigns, and reports

pub mod boundary;
pub mod directions;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod imageops;
pub mod jnd;
pub mod metrics;
pub mod oracle;

pub use boundary::{run_attack, AttackConfig, AttackOutcome, Gamma, GammaLadder, Side, StoppedReason};
pub use directions::{Direction, TextureBank};
pub use error::{Error, Result};
pub use geometry::{ProjectedFrame, StepResult, StepStatus, ThetaSchedule};
pub use imageops::{BinaryMask, GrayImage, Image, Plane, Shape};
pub use jnd::{JndBox, JndMap};
pub use oracle::{OracleHandle, QualityModel};
