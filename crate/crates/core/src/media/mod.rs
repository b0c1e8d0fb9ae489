//! Frames, resampled patches, descriptors and correlation.

mod features;
mod frame;
mod grid;
mod ncc;

pub use features::{extract_features, FeatureConfig, FeatureVector};
pub use frame::{Frame, MIN_FRAME_SIDE};
pub use grid::{crop_resize, crop_resize_patch, resample, Grid, Patch, PixelSource, SEARCH_SIDE, TEMPLATE_SIDE};
pub use ncc::{ncc_map, Correlator, PreparedTemplate};
