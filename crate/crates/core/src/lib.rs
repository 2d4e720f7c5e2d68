pub mod codec;
pub mod compositor;
pub mod error;
pub mod gateway;
pub mod latent;
pub mod noise;
pub mod pipeline;
pub mod planner;
pub mod raster;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/schedule.md")]
    mod schedule {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/compositing.md")]
    mod compositing {}
    #[doc = include_str!("../../../book/src/services.md")]
    mod services {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
