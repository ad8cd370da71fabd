//! Gradient flows of quadratic and double-well energies, and their
//! realisation as operator iteration.

use serde::{Deserialize, Serialize};

use super::report::{ReportBuilder, VerifyReport};
use super::VerifyError;
use crate::grid::{dft_channel, idft_channel, make_grid, Field, GridSpec, GrfSampler};
use crate::operator::{Activation, Affine, DenseKernel, KernelSpec, LayerParams, NeuralOperator};
use crate::par;
use crate::rng::derive_seed;

/// Euler iterates above this norm count as blow-up.
pub const BLOWUP_NORM: f64 = 1e12;
const START_STREAM: u64 = 0xF10;

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `Φ(u) = ½ Σ a_k |û_k|² − ⟨f, u⟩` with `a_k = 1 + |2πk/L|²`, written
    /// with the `L²` normalisation `‖u‖² = L^d Σ |û_k|²`.
    Quadratic { forcing: Field },
    /// `Φ(u) = ∫ ¼u⁴ − ½u² + ½ε|∇u|²`.
    DoubleWell { grid: GridSpec, eps: f64 },
}

fn spectral_apply(field: &Field, m: impl Fn(usize) -> f64) -> Field {
    let grid = *field.grid();
    let mut c = dft_channel(&grid, field.channel(0));
    for (j, z) in c.iter_mut().enumerate() {
        *z *= m(j);
    }
    Field::new(grid, 1, idft_channel(&grid, &c)).expect("same grid")
}

impl Potential {
    pub fn grid(&self) -> &GridSpec {
        match self {
            Potential::Quadratic { forcing } => forcing.grid(),
            Potential::DoubleWell { grid, .. } => grid,
        }
    }

    pub fn energy(&self, u: &Field) -> f64 {
        let grid = *u.grid();
        let vol = grid.volume();
        let c = dft_channel(&grid, u.channel(0));
        match self {
            Potential::Quadratic { forcing } => {
                let quad: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(j, z)| (1.0 + grid.wavenumber_sq(j)) * z.norm_sqr())
                    .sum();
                let lin: f64 = forcing.values().iter().zip(u.values()).map(|(f, v)| f * v).sum();
                0.5 * vol * quad - grid.cell_volume() * lin
            }
            Potential::DoubleWell { eps, .. } => {
                let local: f64 = u.values().iter().map(|v| 0.25 * v.powi(4) - 0.5 * v * v).sum();
                let grad: f64 = c.iter().enumerate().map(|(j, z)| grid.wavenumber_sq(j) * z.norm_sqr()).sum();
                grid.cell_volume() * local + 0.5 * eps * vol * grad
            }
        }
    }

    /// `L²` gradient: `(1 − Δ)u − f` or `u³ − u − εΔu`, spectral Laplacian.
    pub fn gradient(&self, u: &Field) -> Field {
        let grid = *u.grid();
        match self {
            Potential::Quadratic { forcing } => spectral_apply(u, |j| 1.0 + grid.wavenumber_sq(j))
                .sub(forcing)
                .expect("same grid"),
            Potential::DoubleWell { eps, .. } => {
                let lap = spectral_apply(u, |j| eps * grid.wavenumber_sq(j));
                let local: Vec<f64> = u.values().iter().map(|v| v * v * v - v).collect();
                Field::new(grid, 1, local).expect("same grid").add(&lap).expect("same grid")
            }
        }
    }

    /// Unique minimiser `ū̂_k = f̂_k / a_k` of the quadratic energy.
    pub fn minimizer(&self) -> Option<Field> {
        match self {
            Potential::Quadratic { forcing } => {
                let g = *forcing.grid();
                Some(spectral_apply(forcing, |j| 1.0 / (1.0 + g.wavenumber_sq(j))))
            }
            Potential::DoubleWell { .. } => None,
        }
    }

    /// `max_k a_k` for the quadratic energy.
    pub fn max_multiplier(&self) -> f64 {
        let g = self.grid();
        (0..g.len()).map(|j| 1.0 + g.wavenumber_sq(j)).fold(0.0, f64::max)
    }

    /// Known constant critical points of the double well.
    pub fn constant_critical_points(&self) -> Vec<f64> {
        match self {
            Potential::Quadratic { .. } => Vec::new(),
            Potential::DoubleWell { .. } => vec![-1.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Quadratic {
        grid: GridSpec,
        forcing: GrfSampler,
    },
    DoubleWell {
        grid: GridSpec,
        eps: f64,
    },
}

impl PotentialSpec {
    pub fn default_quadratic() -> Self {
        PotentialSpec::Quadratic {
            grid: make_grid(1, 16, 1.0).unwrap(),
            forcing: GrfSampler::new(2.0, 1.0, 5).unwrap(),
        }
    }

    pub fn default_double_well() -> Self {
        PotentialSpec::DoubleWell {
            grid: make_grid(1, 16, 1.0).unwrap(),
            eps: 0.01,
        }
    }

    pub fn build(&self) -> Result<Potential, VerifyError> {
        match self {
            PotentialSpec::Quadratic { grid, forcing } => {
                forcing.validate()?;
                Ok(Potential::Quadratic {
                    forcing: forcing.sample(grid, 1),
                })
            }
            PotentialSpec::DoubleWell { grid, eps } => {
                if !(*eps > 0.0) {
                    return Err(VerifyError::Config("double-well eps must be positive".into()));
                }
                Ok(Potential::DoubleWell { grid: *grid, eps: *eps })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    /// `Φ(u_0), …, Φ(u_steps)`.
    pub energies: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub final_state: Field,
    pub eta: f64,
    pub steps: usize,
    pub blew_up: bool,
}

/// Explicit Euler `u_{n+1} = u_n − η ∇Φ(u_n)`.
pub fn run_gradient_flow(potential: &Potential, u0: &Field, eta: f64, steps: usize) -> Result<FlowResult, VerifyError> {
    if !(eta > 0.0) {
        return Err(VerifyError::Config("flow step must be positive".into()));
    }
    if let Potential::Quadratic { .. } = potential {
        let limit = 2.0 / potential.max_multiplier();
        if eta >= limit {
            return Err(VerifyError::Config(format!(
                "step {eta} violates linear stability η < 2/max a_k = {limit}"
            )));
        }
    }
    Ok(euler(potential, u0, eta, steps))
}

fn euler(potential: &Potential, u0: &Field, eta: f64, steps: usize) -> FlowResult {
    let mut u = u0.clone();
    let mut energies = vec![potential.energy(&u)];
    let mut grad_norms = Vec::with_capacity(steps + 1);
    let mut blew_up = false;
    let mut taken = 0;
    for _ in 0..steps {
        let g = potential.gradient(&u);
        grad_norms.push(g.l2_norm());
        u = u.lin_comb(1.0, &g, -eta).expect("same grid");
        taken += 1;
        let norm = u.l2_norm();
        if !norm.is_finite() || norm > BLOWUP_NORM {
            blew_up = true;
            energies.push(f64::INFINITY);
            break;
        }
        energies.push(potential.energy(&u));
    }
    grad_norms.push(potential.gradient(&u).l2_norm());
    FlowResult {
        energies,
        grad_norms,
        final_state: u,
        eta,
        steps: taken,
        blew_up,
    }
}

/// One-layer operator whose forward map is exactly one Euler step of the
/// quadratic flow. Two hidden channels: the state and a constant `1`.
/// The dense kernel carries `ηΔ` on the state block and `η f(x_i) / |Ω|` on
/// the constant block, so `W v + 𝒦 v` produces `(1 − η)u + ηΔu + ηf`.
pub fn flow_operator(potential: &Potential, eta: f64) -> Result<NeuralOperator, VerifyError> {
    let Potential::Quadratic { forcing } = potential else {
        return Err(VerifyError::Config("flow equivalence needs a quadratic potential".into()));
    };
    let grid = *forcing.grid();
    let n = grid.len();
    let side = 2 * n;
    let h = grid.cell_volume();
    let mut m = vec![0.0; side * side];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let mut c = dft_channel(&grid, &e);
        for (k, z) in c.iter_mut().enumerate() {
            *z *= -grid.wavenumber_sq(k);
        }
        for (i, v) in idft_channel(&grid, &c).into_iter().enumerate() {
            m[i * side + j] = eta * v / h;
        }
    }
    for i in 0..n {
        let v = eta * forcing.values()[i] / grid.volume();
        for j in 0..n {
            m[i * side + n + j] = v;
        }
    }
    let layer = LayerParams {
        weight: vec![1.0 - eta, 0.0, 0.0, 1.0],
        kernel: KernelSpec::Dense(DenseKernel::new(grid, 2, m)?),
        activation: Activation::Identity,
        bias: vec![0.0, 0.0],
    };
    Ok(NeuralOperator::from_parts(
        grid,
        Affine::new(2, 1, vec![1.0, 0.0], vec![0.0, 1.0])?,
        vec![layer],
        Affine::new(1, 2, vec![1.0, 0.0], vec![0.0])?,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub potential: PotentialSpec,
    pub eta: f64,
    pub steps: usize,
    pub start: GrfSampler,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            potential: PotentialSpec::default_quadratic(),
            eta: 5e-4,
            steps: 100,
            start: GrfSampler::new(1.5, 1.0, 9).unwrap(),
        }
    }
}

impl FlowConfig {
    pub fn quick(self) -> Self {
        self
    }
}

/// Operator iterates against Euler iterates for the quadratic energy.
pub fn verify_flow_equivalence(config: &FlowConfig) -> Result<VerifyReport, VerifyError> {
    if !(config.eta >= 0.0) {
        return Err(VerifyError::Config("eta must be >= 0".into()));
    }
    let potential = config.potential.build()?;
    let op = flow_operator(&potential, config.eta)?;
    let mut rep = ReportBuilder::new("flow", config);
    rep.seed("start", config.start.seed);
    let u0 = config.start.sample(potential.grid(), 1);
    let euler_run = euler(&potential, &u0, config.eta, config.steps);
    let mut u = u0.clone();
    let mut deviation = Vec::with_capacity(config.steps);
    let mut energies = vec![potential.energy(&u)];
    let mut euler_u = u0.clone();
    for _ in 0..config.steps {
        u = op.forward(&u)?;
        let g = potential.gradient(&euler_u);
        euler_u = euler_u.lin_comb(1.0, &g, -config.eta)?;
        deviation.push(u.max_abs_diff(&euler_u)?);
        energies.push(potential.energy(&u));
    }
    let max_dev = deviation.iter().cloned().fold(0.0, f64::max);
    let energy_dev = energies
        .iter()
        .zip(&euler_run.energies)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let increases = energies.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
    rep.check_le("operator vs Euler max-abs deviation", max_dev, 1e-10);
    rep.check_le("operator vs Euler energy deviation", energy_dev, 1e-10);
    rep.check_le("energy increases along operator iterates", increases as f64, 0.0);
    rep.measure("max_deviation", max_dev);
    rep.measure("stability_limit", 2.0 / potential.max_multiplier());
    rep.series("deviation", deviation);
    rep.series("energy", energies);
    Ok(rep.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRun {
    pub potential: PotentialSpec,
    pub n_starts: usize,
    /// Defaults to `1.5 / max a_k` for quadratic energies.
    #[serde(default)]
    pub eta: Option<f64>,
    pub steps: usize,
    /// Start `i` is `offsets[i mod len] + noise_i`.
    pub offsets: Vec<f64>,
    pub noise: GrfSampler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub runs: Vec<ClusterRun>,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            runs: vec![
                ClusterRun {
                    potential: PotentialSpec::default_quadratic(),
                    n_starts: 20,
                    eta: None,
                    steps: 40_000,
                    offsets: vec![0.0],
                    noise: GrfSampler::new(1.5, 1.0, 0).unwrap(),
                },
                ClusterRun {
                    potential: PotentialSpec::default_double_well(),
                    n_starts: 20,
                    eta: Some(0.02),
                    steps: 3000,
                    offsets: vec![0.9, -0.9],
                    noise: GrfSampler::new(1.5, 0.05, 0).unwrap(),
                },
            ],
            seed: 4,
        }
    }
}

impl ClusteringConfig {
    pub fn quick(mut self) -> Self {
        for r in &mut self.runs {
            r.n_starts = r.n_starts.clamp(10, (r.n_starts / 2).max(10));
        }
        self
    }
}

/// Records per-run descent, stationarity and cluster assertions into `rep`.
fn cluster_run(rep: &mut ReportBuilder, tag: &str, run: &ClusterRun, seed: u64) -> Result<(), VerifyError> {
    if run.n_starts < 10 {
        return Err(VerifyError::Config("clustering needs at least 10 starts".into()));
    }
    if run.offsets.is_empty() {
        return Err(VerifyError::Config("offsets must be non-empty".into()));
    }
    let potential = run.potential.build()?;
    let eta = match (run.eta, &potential) {
        (Some(e), _) => e,
        (None, Potential::Quadratic { .. }) => 1.5 / potential.max_multiplier(),
        (None, Potential::DoubleWell { .. }) => {
            return Err(VerifyError::Config("double-well runs need an explicit eta".into()))
        }
    };
    let grid = *potential.grid();
    let results = par::try_map(run.n_starts, |i| {
        let noise = run.noise.with_seed(derive_seed(seed, START_STREAM, i as u64)).sample(&grid, 1);
        let offset = Field::constant(grid, 1, run.offsets[i % run.offsets.len()]);
        run_gradient_flow(&potential, &noise.add(&offset)?, eta, run.steps)
    })?;
    let increases: usize = results
        .iter()
        .map(|r| r.energies.windows(2).filter(|w| w[1] > w[0] + 1e-12).count())
        .sum();
    let worst_grad = results.iter().map(|r| *r.grad_norms.last().unwrap()).fold(0.0, f64::max);
    rep.check_le(format!("{tag}: energy increases (1e-12 slack)"), increases as f64, 0.0);
    rep.check_le(format!("{tag}: final ‖∇Φ‖"), worst_grad, 1e-6);
    rep.measure(format!("{tag}.eta"), eta);
    match &potential {
        Potential::Quadratic { .. } => {
            let ubar = potential.minimizer().unwrap();
            let worst = results
                .iter()
                .map(|r| r.final_state.sub(&ubar).map(|d| d.l2_norm()))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .fold(0.0, f64::max);
            rep.check_le(format!("{tag}: all finals within 1e-6 of the spectral minimiser"), worst, 1e-6);
            rep.measure(format!("{tag}.clusters"), 1.0);
        }
        Potential::DoubleWell { .. } => {
            let crit = potential.constant_critical_points();
            let mut worst = 0.0f64;
            let mut hit = vec![0usize; crit.len()];
            for r in &results {
                let (idx, d) = crit
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let d = r.final_state.sub(&Field::constant(grid, 1, *c)).unwrap().l2_norm();
                        (i, d)
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                worst = worst.max(d);
                hit[idx] += 1;
            }
            let clusters = hit.iter().filter(|h| **h > 0).count();
            rep.check_le(format!("{tag}: every final within 1e-4 of a critical point"), worst, 1e-4);
            let straddle = run.offsets.iter().any(|o| *o > 0.0) && run.offsets.iter().any(|o| *o < 0.0);
            if straddle {
                rep.check_ge(format!("{tag}: distinct clusters reached"), clusters as f64, 2.0);
            }
            rep.measure(format!("{tag}.clusters"), clusters as f64);
            rep.series(format!("{tag}.cluster_sizes"), hit.iter().map(|h| *h as f64).collect());
        }
    }
    rep.series(
        format!("{tag}.energy_start0"),
        results[0].energies.iter().step_by((run.steps / 200).max(1)).cloned().collect(),
    );
    Ok(())
}

/// Descent and clustering of Euler trajectories from many starts.
pub fn verify_clustering(config: &ClusteringConfig) -> Result<VerifyReport, VerifyError> {
    let mut rep = ReportBuilder::new("clustering", config);
    rep.seed("master", config.seed);
    for (i, run) in config.runs.iter().enumerate() {
        let tag = match run.potential {
            PotentialSpec::Quadratic { .. } => format!("run{i}.quadratic"),
            PotentialSpec::DoubleWell { .. } => format!("run{i}.double_well"),
        };
        cluster_run(&mut rep, &tag, run, derive_seed(config.seed, i as u64, 0))?;
    }
    Ok(rep.finish())
}
