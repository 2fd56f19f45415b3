//! Event-camera data engineering toolkit.
//!
//! The pipeline runs from raw recordings to evaluation:
//!
//! * [`event`]: validated event streams and fixed-window partitioning.
//! * [`codec`]: DAT and EVS recordings, annotation text records.
//! * [`representation`]: stacked histograms, 2D histograms, time surfaces.
//! * [`frame`]: dense `(C, H, W)` tensors and the EVF tensor file format.
//! * [`geometry`]: downscaling, zero padding, box coordinate mapping.
//! * [`augment`]: the geometric + erasure augmentation chain, per frame or per clip.
//! * [`sampler`]: random/sequential clip schedules for recurrent training.
//! * [`temporal`]: forward pass of the residual ConvLSTM feature update.
//! * [`detmetrics`]: COCO-style mean average precision.

pub mod augment;
pub mod codec;
pub mod detmetrics;
pub mod event;
pub mod frame;
pub mod geometry;
pub mod representation;
pub mod sampler;
pub mod temporal;

pub use codec::AnnotatedBox;
pub use event::{Event, EventStream, Micros, SensorGeometry, TimeWindow};
pub use frame::{AnyFrame, CountFrame, FrameTensor, RealFrame};
