pub mod ctc;
pub mod diffcore;
pub mod geometry;
pub mod imaging;
pub mod model;
pub mod seed;
pub mod synthesis;
pub mod templates;

pub use ctc::{Codec, LabelSeq, LogitsMatrix};
pub use diffcore::{Params, Tape, Tensor};
pub use geometry::{Homography, Point, Quad};
pub use imaging::{GrayImage, Mask};
pub use model::{Checkpoint, Model, ModelConfig, TrainConfig, Variant};
pub use synthesis::{ParamRanges, SynthesisParams, WordSample};
pub use templates::SkeletonTemplate;
