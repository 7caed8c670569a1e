//! Two-mode (coach vs. airline) Bertrand fare competition: the structural
//! pricing model, its Nash equilibrium and comparative statics, a synthetic
//! city-by-month panel generator, leave-one-out instruments and the panel
//! IV/GMM estimator for the first-differenced pricing equation.

pub mod econometrics;
pub mod equilibrium;
pub mod instruments;
pub mod model;
pub mod montecarlo;
pub mod panel;
