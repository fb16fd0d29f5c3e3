//! Newton projection, contact-curve continuation, equilibria and ODE
//! integration.

mod continuation;
mod flows;
mod newton;
mod ode;

pub use continuation::{
    continue_contact_curve, continue_contact_curve_both, Branch, BranchEvent, BranchEventKind,
    BranchPoint, ContinuationConfig, Termination,
};
pub use flows::{fiber_family, integrate_full};
pub use newton::{
    contact_jacobian, contact_residual, desingularized_equilibria, find_contact_point,
    full_equilibrium_near, gauss_newton, project_to_s, Equilibrium, FullEquilibrium, NewtonConfig,
    NewtonFailure, NewtonOutcome,
};
pub use ode::{
    integrate, Event, EventFn, IntegratorConfig, StepStats, Trajectory, TrajectoryStatus,
};
