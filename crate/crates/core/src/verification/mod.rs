//! Offline correctness harness: manufactured solutions, brute-force oracles
//! and weak-form residuals.

pub mod matrix_oracle;
pub mod mms;
pub mod ode_oracle;
pub mod weak;

pub use matrix_oracle::{compare_with_oracle, matrix_oracle, OperatorMatrix};
pub use mms::{mms_run, ConvergenceRow, ConvergenceTable, ManufacturedCase, ManufacturedField};
pub use ode_oracle::ode_oracle;
pub use weak::{test_bank, weak_residual, weak_residual_with_final_trace, TestFunction, TimeFactor, WeakResiduals};
