//! Pieces shared by several experiments.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize};

use super::VerifyError;
use crate::grid::make_grid;
use crate::operator::{build_operator, Activation, KernelKind, NeuralOperator, OperatorConfig};
use crate::rng::rng_from_seed;

/// Operator architecture plus the seeds used to initialise it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSetup {
    pub config: OperatorConfig,
    #[serde(default)]
    pub seed: u64,
    /// Biases are redrawn uniformly in `[-bias_scale, bias_scale]`.
    #[serde(default)]
    pub bias_scale: f64,
}

impl OperatorSetup {
    pub fn build(&self) -> Result<NeuralOperator, VerifyError> {
        let op = build_operator(&self.config, self.seed)?;
        Ok(if self.bias_scale > 0.0 {
            randomize_biases(&op, self.bias_scale, self.seed ^ 0xB1A5)
        } else {
            op
        })
    }
}

/// 1-D, `n = 64`, `d_v = 8`, three tanh layers, `k_max = 12`.
pub fn default_operator() -> OperatorSetup {
    OperatorSetup {
        config: OperatorConfig {
            grid: make_grid(1, 64, 1.0).unwrap(),
            in_channels: 1,
            out_channels: 1,
            width: 8,
            layers: 3,
            kernel: KernelKind::Spectral { k_max: 12 },
            activation: Activation::Tanh,
            init_scale: 1.0,
        },
        seed: 11,
        bias_scale: 0.5,
    }
}

pub fn randomize_biases(op: &NeuralOperator, scale: f64, seed: u64) -> NeuralOperator {
    let mut rng = rng_from_seed(seed);
    let mut flat = op.params_flat();
    let mut pos = 0;
    for (name, len) in op.param_layout() {
        if name.ends_with("bias") {
            for v in &mut flat[pos..pos + len] {
                *v = rng.random_range(-scale..=scale);
            }
        }
        pos += len;
    }
    op.with_params(&flat).expect("same layout")
}

/// Accepts a JSON number, `null`, or the strings `"inf"`/`"infinity"`;
/// the latter two (and `null`) mean `+∞`.
pub fn f64_or_inf<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
        Null(()),
    }
    match Option::<Raw>::deserialize(d)? {
        None | Some(Raw::Null(())) => Ok(f64::INFINITY),
        Some(Raw::Num(x)) => Ok(x),
        Some(Raw::Text(s)) if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "+inf") => {
            Ok(f64::INFINITY)
        }
        Some(Raw::Text(s)) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
    }
}

/// Serializes `+∞` as the string `"inf"` so configs round-trip.
pub fn ser_f64_or_inf<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_infinite() && *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Deserialize, Serialize)]
    struct T {
        #[serde(deserialize_with = "f64_or_inf", serialize_with = "ser_f64_or_inf")]
        x: f64,
    }

    #[test]
    fn infinity_spellings() {
        assert_eq!(serde_json::from_str::<T>(r#"{"x":"inf"}"#).unwrap().x, f64::INFINITY);
        assert_eq!(serde_json::from_str::<T>(r#"{"x":null}"#).unwrap().x, f64::INFINITY);
        assert_eq!(serde_json::from_str::<T>(r#"{"x":2.5}"#).unwrap().x, 2.5);
        assert!(serde_json::from_str::<T>(r#"{"x":"big"}"#).is_err());
        assert_eq!(serde_json::to_string(&T { x: f64::INFINITY }).unwrap(), r#"{"x":"inf"}"#);
    }

    #[test]
    fn biases_are_redrawn() {
        let op = default_operator().build().unwrap();
        let cert = crate::operator::lipschitz_cert(&op);
        assert!(cert.c0 > 0.0);
        assert_eq!(op.layers()[0].bias, default_operator().build().unwrap().layers()[0].bias);
    }
}
