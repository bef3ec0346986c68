pub mod calibrate;
pub mod enumerate;
pub mod error;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod validate;
