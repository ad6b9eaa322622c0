//! Score-distribution statistics, image quality and diversity analysis.

pub mod diversity;
pub mod export;
pub mod quality;
pub mod stats;

pub use diversity::diversity_report;
pub use quality::{ms_ssim, psnr, ssim, MsSsim};
pub use stats::{
    band, decidability, dir, eer, rejection_rate, DirBand, DirReport, EerPoint, Population,
    PopulationMoments, ScoreSet,
};
