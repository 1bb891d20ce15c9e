pub mod channel;
pub mod conic;
pub mod crb;
pub mod error;
pub mod harness;
pub mod link;
pub mod linalg;
pub mod planner;
pub mod tracking;

use openblas_src as _;
