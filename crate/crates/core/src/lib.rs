pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod mupal;
pub mod numerics;
pub mod observer;
pub mod pipeline;
pub mod regulator;
pub mod seds;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
