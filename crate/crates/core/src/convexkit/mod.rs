//! Convex optimization toolkit used by the allocation stages.

pub mod barrier;
pub mod functional;
pub mod gp;
pub mod psd;
pub mod randomize;
pub mod waterfill;

pub use barrier::{solve, BarrierSettings, Lmi, LmiTerm, Problem, SolveReport, Termination};
pub use functional::{Affine, LogSumExp, NegLog, NegPerspectiveLog, Quadratic, Reciprocal, Smooth, Sum};
pub use gp::{solve_gp, GpProblem, Monomial, Posynomial};
pub use psd::PsdLayout;
pub use randomize::{gaussian_randomize, RandomizeOutcome, DEFAULT_SAMPLES};
pub use waterfill::water_filling;
