//! Risk-sensitive escape control for cascaded small-noise diffusions.
//!
//! The toolkit simulates controlled diffusion cascades where noise enters
//! only the first subsystem, estimates risk-sensitive exit-time criteria by
//! Monte Carlo, verifies the variational representation and
//! relative-entropy bound behind them, evaluates the associated
//! deterministic two-player escape game on candidate grids, and computes
//! modeling-error robustness budgets.
//!
//! Modules:
//!
//! * [`expr`] — closed-form expression DSL for drifts and the noise map
//! * [`model`] — scenarios, validation, hypoellipticity rank diagnostic
//! * [`law`] — control and disturbance laws, strategy noise shifts
//! * [`dynamics`] — Euler–Maruyama integration and exit detection
//! * [`risk`] — the risk-sensitive estimator, its 1-D oracle, the supremum
//!   over control classes
//! * [`variational`] — Girsanov densities, entropy bound, restricted-class
//!   variational gap
//! * [`game`] — lower/upper game values on grids and the vanishing-noise
//!   study
//! * [`robust`] — exit-time bounds, modeling-error budgets, stage chains

pub mod dynamics;
pub mod error;
pub mod expr;
pub mod game;
pub mod law;
pub mod model;
pub mod optimize;
pub mod risk;
pub mod rng;
pub mod robust;
pub mod variational;

pub use error::{Error, Result};

/// Run `f` inside a dedicated rayon pool with `workers` threads
/// (`0` keeps the global default). Results do not depend on the worker
/// count: all reductions are in fixed path order.
pub fn run_with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(f)
    }
}
