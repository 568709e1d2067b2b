//! Per-bit read-swing allocation for memory words under an MSE budget.
//!
//! A `B`-bit word is read with swing `delta_b` on bit `b`. Bit `b` flips with
//! probability `tail(delta_b)` and costs `4^b` in squared error when it does.
//! The crate finds swings that minimize read energy, access delay or their
//! product, in continuous and discrete form, and ships the baselines and the
//! Monte-Carlo channel used to check them.

pub mod baselines;
pub mod discrete;
pub mod error;
pub mod metrics;
pub mod noise;
pub mod scalar;
pub mod sim;
pub mod solvers;

pub use baselines::{
    lsb_dropping_energy, lsb_dropping_mse, lsb_dropping_psnr_ceiling, selective_ecc_energy, selective_ecc_mse,
    HammingCode, SelectiveEccLayout, WordLayout,
};
pub use discrete::{
    brute_force_discrete, discrete_water_fill, levin_campello, sand_pour_water_fill, BruteForceResult, Granularity,
    GridOptimum, SandPourResult,
};
pub use error::{Error, Result};
pub use metrics::{
    mse_from_psnr, mse_nonuniform, mse_uniform, psnr_from_mse, source_deviation_bound, FidelitySpec, SourceStats,
    SwingVector, WordFormat,
};
pub use noise::{q_function, NoiseKind, NoiseModel};
pub use sim::{
    apply_error_pattern, decimal_error, extract_source_stats, monte_carlo_mse, monte_carlo_post_decoding, read_corpus,
    simulate_read, words_from_bytes, MseEstimate, ReadChannel, SimConfig, SimSource,
};
pub use solvers::{
    kkt_residuals, sand_capacity, single_cap_sand_capacity, solve, solve_max_speed, solve_min_edp, solve_min_energy,
    Criterion, SolverSolution, DEFAULT_TOL,
};
