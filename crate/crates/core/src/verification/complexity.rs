//! Forward wall time against grid size.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{ReportBuilder, VerifyReport};
use super::VerifyError;
use crate::grid::{make_grid, GrfSampler};
use crate::operator::{build_operator, Activation, KernelKind, OperatorConfig};
use crate::stats::{fit_loglog, median};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchKernel {
    Spectral,
    Dense,
}

impl BenchKernel {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "spectral" => Some(BenchKernel::Spectral),
            "dense" => Some(BenchKernel::Dense),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityRun {
    pub kernel: BenchKernel,
    pub n_list: Vec<usize>,
    pub width: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Each repetition times a batch of forwards lasting at least this long.
    #[serde(default = "default_batch_ms")]
    pub min_batch_ms: f64,
}

fn default_k_max() -> usize {
    16
}
fn default_reps() -> usize {
    20
}
fn default_batch_ms() -> f64 {
    2.0
}

impl ComplexityRun {
    pub fn spectral() -> Self {
        ComplexityRun {
            kernel: BenchKernel::Spectral,
            n_list: vec![256, 512, 1024, 2048, 4096, 8192, 16384],
            width: 8,
            k_max: 16,
            reps: 20,
            min_batch_ms: 2.0,
        }
    }

    pub fn dense() -> Self {
        ComplexityRun {
            kernel: BenchKernel::Dense,
            n_list: vec![64, 128, 256, 512, 1024],
            width: 1,
            k_max: 16,
            reps: 20,
            min_batch_ms: 2.0,
        }
    }

    pub fn for_kernel(kernel: BenchKernel) -> Self {
        match kernel {
            BenchKernel::Spectral => Self::spectral(),
            BenchKernel::Dense => Self::dense(),
        }
    }

    /// Lower bound on the accepted slope.
    pub fn min_slope(&self) -> f64 {
        match self.kernel {
            BenchKernel::Spectral => 0.9,
            BenchKernel::Dense => 1.8,
        }
    }

    pub fn max_slope(&self) -> f64 {
        match self.kernel {
            BenchKernel::Spectral => 1.4,
            BenchKernel::Dense => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexityConfig {
    pub runs: Vec<ComplexityRun>,
    pub seed: u64,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            runs: vec![ComplexityRun::spectral(), ComplexityRun::dense()],
            seed: 8,
        }
    }
}

impl ComplexityConfig {
    pub fn quick(self) -> Self {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityPoint {
    pub n: usize,
    pub median_seconds: f64,
}

/// Median single-forward time at each size. Runs on the calling thread only.
pub fn time_forward(run: &ComplexityRun, seed: u64) -> Result<Vec<ComplexityPoint>, VerifyError> {
    let mut out = Vec::with_capacity(run.n_list.len());
    for &n in &run.n_list {
        let grid = make_grid(1, n, 1.0)?;
        let kernel = match run.kernel {
            BenchKernel::Spectral => KernelKind::Spectral {
                k_max: run.k_max.min(n / 2 - 1),
            },
            BenchKernel::Dense => KernelKind::Dense,
        };
        let cfg = OperatorConfig {
            grid,
            in_channels: 1,
            out_channels: 1,
            width: run.width,
            layers: 1,
            kernel,
            activation: Activation::Tanh,
            init_scale: 1.0,
        };
        let op = build_operator(&cfg, seed)?;
        let u = GrfSampler::new(1.5, 1.0, seed)?.sample(&grid, 1);
        // Calibrate the batch length, then warm up once.
        let mut batch = 1usize;
        loop {
            let t = Instant::now();
            for _ in 0..batch {
                black_box(op.forward(black_box(&u))?);
            }
            if t.elapsed().as_secs_f64() * 1e3 >= run.min_batch_ms {
                break;
            }
            batch *= 2;
        }
        let mut times = Vec::with_capacity(run.reps);
        for _ in 0..run.reps {
            let t = Instant::now();
            for _ in 0..batch {
                black_box(op.forward(black_box(&u))?);
            }
            times.push(t.elapsed().as_secs_f64() / batch as f64);
        }
        out.push(ComplexityPoint {
            n,
            median_seconds: median(&times),
        });
    }
    Ok(out)
}

pub fn bench_complexity(config: &ComplexityConfig) -> Result<VerifyReport, VerifyError> {
    for run in &config.runs {
        if run.n_list.len() < 3 {
            return Err(VerifyError::Config("fit needs ≥ 3 sizes".into()));
        }
        if run.reps == 0 {
            return Err(VerifyError::Config("need at least one repetition".into()));
        }
        if run.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(VerifyError::Config("sizes must be strictly increasing".into()));
        }
    }
    let mut rep = ReportBuilder::new("complexity", config);
    rep.seed("operator", config.seed);
    for run in &config.runs {
        if run.reps < 20 {
            rep.inconclusive(format!("{} repetitions is below the 20 needed for a stable median", run.reps));
        }
        let tag = match run.kernel {
            BenchKernel::Spectral => "spectral",
            BenchKernel::Dense => "dense",
        };
        let points = time_forward(run, config.seed)?;
        let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
        let ts: Vec<f64> = points.iter().map(|p| p.median_seconds).collect();
        let fit = fit_loglog(&ns, &ts);
        let residuals: Vec<f64> = ns
            .iter()
            .zip(&ts)
            .map(|(n, t)| t.ln() - fit.intercept - fit.slope * n.ln())
            .collect();
        rep.check(
            format!("{tag}: log-log slope in [{}, {}]", run.min_slope(), run.max_slope()),
            run.min_slope(),
            fit.slope,
            fit.slope >= run.min_slope() && fit.slope <= run.max_slope(),
        );
        rep.measure(format!("{tag}.slope"), fit.slope);
        rep.measure(format!("{tag}.r2"), fit.r_squared);
        if fit.r_squared < 0.95 {
            rep.inconclusive(format!("{tag}: timing fit R² = {:.3} below 0.95", fit.r_squared));
        }
        rep.series(format!("{tag}.n"), ns);
        rep.series(format!("{tag}.median_seconds"), ts);
        rep.series(format!("{tag}.residual"), residuals);
    }
    Ok(rep.finish())
}
