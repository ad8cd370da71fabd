//! Executable checks of the operator theory, one experiment per claim.
//!
//! Every experiment takes a serde config (unknown keys rejected, missing
//! keys defaulted) and returns a [`VerifyReport`].

mod capacity;
mod common;
mod complexity;
mod contraction;
mod discretization;
mod flow;
mod generalization;
mod nonconvexity;
mod report;
mod stability;
mod universality;

pub use capacity::{capacity_sweep, projection_floor, CapacityConfig, CapacityPoint};
pub use common::{default_operator, randomize_biases, OperatorSetup};
pub use complexity::{bench_complexity, time_forward, BenchKernel, ComplexityConfig, ComplexityPoint, ComplexityRun};
pub use contraction::{verify_contraction, ContractionConfig};
pub use discretization::{trace_discretization, verify_discretization, DiscretizationConfig, DiscretizationTrace};
pub use flow::{
    flow_operator, run_gradient_flow, verify_clustering, verify_flow_equivalence, ClusterRun, ClusteringConfig,
    FlowConfig, FlowResult, Potential, PotentialSpec,
};
pub use generalization::{verify_generalization, GeneralizationConfig, GeneralizationPoint};
pub use nonconvexity::{fd_hessian, nonconvexity_witness, scan_segment, NonconvexityConfig, SegmentScan};
pub use report::{Assertion, ReportBuilder, Status, VerifyReport};
pub use stability::{adversarial_ratio, verify_sensitivity, verify_stability, SensitivityConfig, StabilityConfig};
pub use universality::{universality_experiment, UniversalityConfig, UniversalityRun};

use thiserror::Error;

use crate::grid::GridError;
use crate::operator::{NeuralOperator, OperatorError};
use crate::sobolev::SobolevError;
use crate::training::{DatasetError, GradError, TrainError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sobolev(#[from] SobolevError),
}

/// Experiment names accepted by [`run_named`], in suite order.
pub const EXPERIMENTS: [&str; 11] = [
    "stability",
    "sensitivity",
    "contraction",
    "flow",
    "clustering",
    "universality",
    "generalization",
    "capacity",
    "nonconvexity",
    "complexity",
    "discretization",
];

/// Experiments that accept a trained model in place of their own operator.
pub fn accepts_model(name: &str) -> bool {
    matches!(
        name,
        "stability" | "sensitivity" | "contraction" | "generalization" | "discretization"
    )
}

fn parse<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> Result<T, VerifyError> {
    match text {
        None => Ok(T::default()),
        Some(t) => serde_json::from_str(t).map_err(|e| VerifyError::Config(e.to_string())),
    }
}

/// Runs experiment `name` with the JSON config `config` (defaults when
/// `None`). `quick` shrinks the most expensive budgets.
pub fn run_named(
    name: &str,
    config: Option<&str>,
    model: Option<&NeuralOperator>,
    quick: bool,
) -> Result<VerifyReport, VerifyError> {
    macro_rules! cfg {
        ($t:ty) => {{
            let c: $t = parse(config)?;
            if quick {
                c.quick()
            } else {
                c
            }
        }};
    }
    if model.is_some() && !accepts_model(name) {
        return Err(VerifyError::Config(format!("experiment {name} does not take a model")));
    }
    match name {
        "stability" => verify_stability(&cfg!(StabilityConfig), model),
        "sensitivity" => verify_sensitivity(&cfg!(SensitivityConfig), model),
        "contraction" => verify_contraction(&cfg!(ContractionConfig), model),
        "flow" => verify_flow_equivalence(&cfg!(FlowConfig)),
        "clustering" => verify_clustering(&cfg!(ClusteringConfig)),
        "universality" => universality_experiment(&cfg!(UniversalityConfig)),
        "generalization" => verify_generalization(&cfg!(GeneralizationConfig), model),
        "capacity" => capacity_sweep(&cfg!(CapacityConfig)),
        "nonconvexity" => nonconvexity_witness(&cfg!(NonconvexityConfig)),
        "complexity" => bench_complexity(&cfg!(ComplexityConfig)),
        "discretization" => verify_discretization(&cfg!(DiscretizationConfig), model),
        other => Err(VerifyError::Config(format!(
            "unknown experiment {other:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}
