//! Model definitions and time integrators for the full stochastic system,
//! the pathwise random system and the reduced slow system.

mod hypothesis;
mod integrate;
mod model;
pub mod reference;

pub use hypothesis::{
    contraction_factor, gap_bound, hypothesis_check, mu, theorem1_bound, tracking_prefactor,
    HypothesisReport,
};
pub use integrate::{simulate_full, simulate_random, simulate_reduced, ManifoldEvaluator, Trajectory};
pub use model::{finite_difference_param_gradient, Coupling, FnCoupling, ModelSpec, SqrtSineCoupling};
