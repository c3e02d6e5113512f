//! Pulsating traveling waves: construction from the sub/super pair and the
//! checks run on the result.

pub mod analysis;
pub mod experiments;
pub mod extract;
pub mod residual;

pub use analysis::{
    squeeze_constants, tail_decay_fit, time_derivative_checks, verify_squeeze, DerivativeReport,
    SqueezeCheck, SqueezeChoices, SqueezeConstants, TailFit,
};
pub use experiments::{
    compare_waves, stability_experiment, uniqueness_experiment, Perturbation, StabilityConfig,
    StabilitySeries, UniquenessReport,
};
pub use extract::{
    build_sub_super_pair, extract_pulsating_wave, ExtractionReport, PulsatingWave, SubSuperPair,
    WaveRunConfig, WaveTable,
};
pub use residual::{residual_sign_check, Candidate, Explicit, Kind, Profile, ResidualReport};
