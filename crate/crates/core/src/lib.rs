//! Perturbing almost-actions of virtually free groups on the Cantor set into honest
//! actions, and lifting approximate matrix relations to exact ones.
//!
//! The dynamical side ([`group`], [`actions`], [`almost`], [`solver`], [`limits`]) is
//! exact: distances are dyadic or rational. The matrix side ([`lifting`]) is generic
//! over `f32`/`f64`.

pub mod actions;
pub mod almost;
pub mod cantor;
pub mod cayley;
pub mod covariance;
pub mod generate;
pub mod group;
pub mod intertwine;
pub mod lifting;
pub mod limits;
pub mod perm;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod solver;

pub use actions::{CircleAction, CylinderAction, PermTable};
pub use almost::{AlmostAction, Level, ScheduleEntry};
pub use cantor::{CantorPoint, CirclePoint, ClopenPartition, Cylinder, FiniteSample};
pub use group::{Group, GroupSpec, Symbol, Word};
pub use perm::Perm;
pub use scalar::{Dyadic, Real};
pub use solver::{SolveError, SolvedAction, SolvedLevel};

pub type Matrix64 = lifting::CMatrix<f64>;
pub type Matrix32 = lifting::CMatrix<f32>;
