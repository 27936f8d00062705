//! Beamforming schemes: the Kronecker-factor hybrid designs, the baselines,
//! and the shared MMSE digital stage.

pub mod analog;
pub mod digital;
mod schemes;

pub use analog::{
    allocate_factors, design_column, enhance_full, measure_matrix_full, measure_matrix_los, nulling_factor,
    nulling_factor_with, rearrange, AnalogColumn, EnhanceMode, FactorAssignment, MeasureMatrix, NullingRule,
    ScenarioFactors,
};
pub use digital::{mmse_digital, pure_mmse_combiner};
pub use schemes::{
    analog_desired_power, baseline_egc, baseline_exhaustive, baseline_exhaustive_with, baseline_pure_mmse,
    baseline_successive_khb, baseline_successive_khb_with, build_alg3, build_alg3_with, build_alg4, build_alg4_with,
    Combiner, DesignOptions, DigitalCombiner, HybridBeamformer, Scheme, SchemeOutput, DEFAULT_SEARCH_LIMIT,
};
