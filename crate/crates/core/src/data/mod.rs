//! Tabular data ingestion and synthetic trajectories of chaotic systems.

mod dataset;
mod derivative;
mod noise;
mod ode;

pub use dataset::{ingest_csv, read_csv, Dataset};
pub use derivative::{central_difference, smoothed_derivative};
pub use noise::{add_noise, std_dev};
pub use ode::{dopri5, simulate, simulate_with, OdeSystem, SimOptions, Trajectory};

use crate::error::Result;

/// Simulated, noised and differentiated data for one system: inputs are the
/// (noisy) states, the target is the smoothed derivative of `target_state`.
pub fn dynamics_dataset(
    system: &OdeSystem,
    target_state: usize,
    n_points: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    let tr = simulate(system, &system.initial, n_points, 100)?;
    let noisy = add_noise(&tr.states, noise, seed);
    let deriv = smoothed_derivative(&noisy, tr.dt())?;
    let target = format!("d{}", system.states[target_state]);
    Ok(Dataset::new(system.states.clone(), noisy, deriv[target_state].clone())?
        .with_target(target)
        .with_note(format!("{} simulated, noise {noise}, seed {seed}", system.name)))
}
