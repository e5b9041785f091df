//! Carnot-Caratheodory geometry toolkit: polynomial vector fields, spanning
//! bases of iterated commutators, flows and approximate exponentials,
//! grid-based control distances, ball volumes, and convexity diagnostics
//! along horizontal directions.

pub mod basis;
pub mod chain;
pub mod convexity;
pub mod equivalence;
pub mod estimates;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod grid;
pub mod poly;
pub mod sandwich;
pub mod vecfield;
pub mod volume;

pub use basis::{hormander_step, spanning_basis, CommutatorBasis, MultiIndex};
pub use chain::{
    approx_exp_program, exp_chain, unfold, unfolded_flow, ApproxExpSpec, UnfoldedCoordinates,
};
pub use convexity::{
    horizontal_second_difference, pointed_fields, sublaplacian_check, xconvexity_test,
    ConvexityReport, ConvexityWitness, ScalarFunction,
};
pub use equivalence::{
    distance_equivalence_check, family_ratio_pairs, modified_family, EquivalenceReport, PairRatio,
};
pub use estimates::{
    doubling_lower_bound_closed, doubling_lower_bound_iterated, gradient_ratio, lambda_ratio,
    lipschitz_ratio, lower_bound_check, moser_ratio, sup_mean_ratio, sup_mean_scan,
    three_case_bound, EstimateId, EstimateReport, EstimateRow,
};
pub use error::{Error, Result};
pub use expr::Expression;
pub use field::{DistanceField, FieldParams, MoveSet};
pub use flow::{flow, flow_jacobian, run_program, FlowProgram, FlowStep};
pub use grid::GridSpec;
pub use poly::{Polynomial, RawTerm, Term};
pub use sandwich::{sandwich_check, SandwichReport};
pub use vecfield::{commutator, VectorField, VectorFieldSystem};
pub use volume::{ball_sample, ball_volume, ball_volumes, doubling_ratio, lambda_volume_ratio, BallEstimate};
