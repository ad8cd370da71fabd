//! Certified `L²` Lipschitz bounds and contraction rescaling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{forward, NeuralOperator, OperatorError};
use crate::grid::Field;

/// Largest singular value of a row-major `rows × cols` matrix.
pub fn matrix_norm(rows: usize, cols: usize, data: &[f64]) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    DMatrix::from_row_slice(rows, cols, data).singular_values().max()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCert {
    pub lift_l: f64,
    pub project_l: f64,
    /// `‖W_i‖₂ + L_σ ‖𝒦_i‖_op` per layer.
    pub layer_l: Vec<f64>,
    pub product: f64,
    /// `‖𝒢(0)‖` in `L²`.
    pub c0: f64,
}

pub fn lipschitz_cert(op: &NeuralOperator) -> LipschitzCert {
    let layer_l: Vec<f64> = op
        .layers()
        .iter()
        .map(|l| {
            let w = l.width();
            matrix_norm(w, w, &l.weight) + l.activation.lipschitz() * l.kernel.op_norm()
        })
        .collect();
    let lift_l = op.lift().op_norm();
    let project_l = op.project().op_norm();
    let product = lift_l * layer_l.iter().product::<f64>() * project_l;
    let zero = Field::zeros(*op.grid(), op.in_channels());
    let c0 = forward(op, &zero).map(|f| f.l2_norm()).unwrap_or(f64::INFINITY);
    LipschitzCert {
        lift_l,
        project_l,
        layer_l,
        product,
        c0,
    }
}

/// Scales the projection weights so the certified product becomes `q`.
pub fn rescale_to_contraction(op: &NeuralOperator, q: f64) -> Result<NeuralOperator, OperatorError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(OperatorError::Config(format!("contraction factor must lie in (0, 1), got {q}")));
    }
    if op.in_channels() != op.out_channels() {
        return Err(OperatorError::Shape(format!(
            "not a self-map: {} input vs {} output channels",
            op.in_channels(),
            op.out_channels()
        )));
    }
    let l = lipschitz_cert(op).product;
    if !(l > 0.0 && l.is_finite()) {
        return Err(OperatorError::Config(format!("certificate product {l} cannot be rescaled")));
    }
    let mut out = op.clone();
    let mut factor = q / l;
    for _ in 0..4 {
        out.project_mut().weight.iter_mut().for_each(|w| *w *= factor);
        let now = lipschitz_cert(&out).product;
        if now <= q {
            break;
        }
        // SVD rounding can leave the product a few ulps above q.
        factor = (q / now) * (1.0 - 4.0 * f64::EPSILON);
    }
    Ok(out)
}

/// Shrinks lift, projection and each layer so that every certificate factor
/// is at most one. Factors already below one are left alone.
pub fn normalize_to_unit_lipschitz(op: &NeuralOperator) -> NeuralOperator {
    let cert = lipschitz_cert(op);
    let mut out = op.clone();
    if cert.lift_l > 1.0 {
        out.lift_mut().weight.iter_mut().for_each(|w| *w /= cert.lift_l);
    }
    if cert.project_l > 1.0 {
        out.project_mut().weight.iter_mut().for_each(|w| *w /= cert.project_l);
    }
    for (layer, &l) in out.layers_mut().iter_mut().zip(&cert.layer_l) {
        if l > 1.0 {
            layer.weight.iter_mut().for_each(|w| *w /= l);
            layer.kernel.scale(1.0 / l);
        }
    }
    out
}

/// Composition `𝒢_m ∘ … ∘ 𝒢_1`, applied in list order.
#[derive(Debug, Clone)]
pub struct OperatorChain {
    ops: Vec<NeuralOperator>,
}

impl OperatorChain {
    pub fn new(ops: Vec<NeuralOperator>) -> Result<Self, OperatorError> {
        if ops.is_empty() {
            return Err(OperatorError::Config("empty operator chain".into()));
        }
        for pair in ops.windows(2) {
            if pair[0].out_channels() != pair[1].in_channels() {
                return Err(OperatorError::Shape(format!(
                    "chain link emits {} channels, next expects {}",
                    pair[0].out_channels(),
                    pair[1].in_channels()
                )));
            }
        }
        Ok(OperatorChain { ops })
    }

    pub fn ops(&self) -> &[NeuralOperator] {
        &self.ops
    }

    pub fn forward(&self, field: &Field) -> Result<Field, OperatorError> {
        let mut v = self.ops[0].forward(field)?;
        for op in &self.ops[1..] {
            v = op.forward(&v)?;
        }
        Ok(v)
    }

    /// Product of the component certificates.
    pub fn lipschitz(&self) -> f64 {
        self.ops.iter().map(|op| lipschitz_cert(op).product).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GrfSampler};
    use crate::operator::{build_operator, Activation, KernelKind, OperatorConfig};
    use crate::rng::derive_seed;

    fn grid() -> crate::grid::GridSpec {
        make_grid(1, 32, 1.0).unwrap()
    }

    #[test]
    fn linear_scaling_products() {
        let k = KernelKind::Spectral { k_max: 4 };
        let one = NeuralOperator::linear_scaling(grid(), 1, 1, &[2.0], k).unwrap();
        assert!((lipschitz_cert(&one).product - 2.0).abs() < 1e-12);
        let two = NeuralOperator::linear_scaling(grid(), 1, 1, &[2.0, 3.0], k).unwrap();
        assert!((lipschitz_cert(&two).product - 6.0).abs() < 1e-12);
        assert_eq!(lipschitz_cert(&two).c0, 0.0);
        let dense = NeuralOperator::linear_scaling(grid(), 1, 2, &[2.0, 3.0], KernelKind::Dense).unwrap();
        assert!((lipschitz_cert(&dense).product - 6.0).abs() < 1e-12);
    }

    fn random_op(kernel: KernelKind, act: Activation, seed: u64) -> NeuralOperator {
        build_operator(
            &OperatorConfig {
                grid: grid(),
                in_channels: 1,
                out_channels: 1,
                width: 3,
                layers: 2,
                kernel,
                activation: act,
                init_scale: 1.0,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn certificate_dominates_empirical_ratios() {
        for (kernel, act) in [
            (KernelKind::Spectral { k_max: 6 }, Activation::Tanh),
            (KernelKind::Spectral { k_max: 6 }, Activation::Relu),
            (KernelKind::Dense, Activation::Tanh),
        ] {
            let op = random_op(kernel, act, 11);
            let l = lipschitz_cert(&op).product;
            for t in 0..100 {
                let s = GrfSampler::new(1.5, 1.0, derive_seed(1, 0, t)).unwrap();
                let u = s.sample(&grid(), 1);
                let v = s.with_seed(derive_seed(1, 1, t)).sample(&grid(), 1);
                let num = op.forward(&u).unwrap().sub(&op.forward(&v).unwrap()).unwrap().l2_norm();
                let den = u.sub(&v).unwrap().l2_norm();
                assert!(num <= l * den + 1e-9, "{num} > {l}·{den}");
            }
        }
    }

    #[test]
    fn rescale_hits_target() {
        let op = random_op(KernelKind::Spectral { k_max: 6 }, Activation::Tanh, 2);
        for q in [0.5, 0.99, 0.1] {
            let r = rescale_to_contraction(&op, q).unwrap();
            let p = lipschitz_cert(&r).product;
            assert!(p <= q && p > q * (1.0 - 1e-12));
        }
        assert!(rescale_to_contraction(&op, 1.0).is_err());
        assert!(rescale_to_contraction(&op, 0.0).is_err());
        let small = NeuralOperator::linear_scaling(grid(), 1, 1, &[0.3], KernelKind::Spectral { k_max: 2 }).unwrap();
        let up = rescale_to_contraction(&small, 0.99).unwrap();
        assert!(lipschitz_cert(&up).product <= 0.99);
    }

    #[test]
    fn rescale_needs_self_map() {
        let mut cfg = OperatorConfig {
            grid: grid(),
            in_channels: 1,
            out_channels: 2,
            width: 2,
            layers: 1,
            kernel: KernelKind::Spectral { k_max: 3 },
            activation: Activation::Tanh,
            init_scale: 1.0,
        };
        assert!(rescale_to_contraction(&build_operator(&cfg, 0).unwrap(), 0.5).is_err());
        cfg.out_channels = 1;
        assert!(rescale_to_contraction(&build_operator(&cfg, 0).unwrap(), 0.5).is_ok());
    }

    #[test]
    fn normalized_factors_bounded() {
        let op = random_op(KernelKind::Spectral { k_max: 6 }, Activation::Tanh, 5);
        let c = lipschitz_cert(&normalize_to_unit_lipschitz(&op));
        assert!(c.lift_l <= 1.0 + 1e-12 && c.project_l <= 1.0 + 1e-12);
        assert!(c.layer_l.iter().all(|&l| l <= 1.0 + 1e-12));
    }

    #[test]
    fn chain_product_matches_stacked_operator() {
        let a = random_op(KernelKind::Spectral { k_max: 5 }, Activation::Tanh, 3);
        let b = random_op(KernelKind::Spectral { k_max: 5 }, Activation::Relu, 4);
        let chain = OperatorChain::new(vec![a.clone(), b.clone()]).unwrap();
        let expect = lipschitz_cert(&a).product * lipschitz_cert(&b).product;
        assert!((chain.lipschitz() - expect).abs() <= 1e-12 * expect);
        let u = GrfSampler::default().sample(&grid(), 1);
        let direct = b.forward(&a.forward(&u).unwrap()).unwrap();
        assert_eq!(chain.forward(&u).unwrap(), direct);
    }
}
