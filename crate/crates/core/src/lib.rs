//! Discrete solvers and numerical certificates for semilinear elliptic
//! boundary value problems `-Δu = f(x, u, ∇u)` on grid samples of arbitrary
//! open sets.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

pub mod analysis;
pub mod conditions;
pub mod counterexample;
pub mod discrete;
pub mod domain;
pub mod expr;
pub mod harness;
pub mod sandwich;
pub mod scalar;
pub mod semilinear;

pub use scalar::Real;

pub type Field64 = discrete::Field<f64>;
pub type Field32 = discrete::Field<f32>;
pub type GridDomain64 = domain::GridDomain<f64>;
pub type GridDomain32 = domain::GridDomain<f32>;
pub type Elliptic64 = discrete::Elliptic<f64>;
pub type Elliptic32 = discrete::Elliptic<f32>;
pub type SemilinearitySpec64 = conditions::SemilinearitySpec<f64>;
pub type SemilinearitySpec32 = conditions::SemilinearitySpec<f32>;
pub type SolveReport64 = semilinear::SolveReport<f64>;
pub type SymbolProblem64 = counterexample::SymbolProblem<f64>;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error(transparent)]
    Domain(#[from] domain::DomainError),
    #[error(transparent)]
    Discrete(#[from] discrete::DiscreteError),
    #[error(transparent)]
    Solve(#[from] discrete::SolveError),
    #[error(transparent)]
    FieldIo(#[from] discrete::FieldIoError),
    #[error(transparent)]
    Condition(#[from] conditions::ConditionError),
    #[error(transparent)]
    Sandwich(#[from] sandwich::SandwichError),
    #[error(transparent)]
    Semilinear(#[from] semilinear::SemilinearError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Counterexample(#[from] counterexample::CounterexampleError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}
