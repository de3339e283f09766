//! Objectives to maximize: rescaled synthetic benchmarks and a subprocess adapter.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, ExternalError, Result};
use crate::optimizer::BoxDomain;
use crate::rng::SeededStream;

pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> &BoxDomain;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    /// Noiseless objective value.
    fn evaluate_true(&self, x: &[f64]) -> Result<f64>;

    /// Known maximum, when there is one.
    fn optimum_value(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Dropwave,
    Griewank,
    Hart6,
    Rastrigin,
}

pub const BENCHMARK_NAMES: [&str; 4] = ["dropwave", "griewank", "hart6", "rastrigin"];

const HART6_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HART6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HART6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
/// Global minimizer of Hartmann-6, refined to full double precision.
const HART6_ARGMIN: [f64; 6] = [
    0.201_689_512_840_881_66,
    0.150_010_691_215_734_68,
    0.476_873_975_520_047_34,
    0.275_332_430_951_074_6,
    0.311_651_617_462_712_86,
    0.657_300_532_965_973_2,
];

impl Benchmark {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "dropwave" => Ok(Benchmark::Dropwave),
            "griewank" => Ok(Benchmark::Griewank),
            "hart6" => Ok(Benchmark::Hart6),
            "rastrigin" => Ok(Benchmark::Rastrigin),
            _ => Err(Error::UnknownObjective {
                name: name.to_string(),
                valid: BENCHMARK_NAMES.join(", "),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Dropwave => "dropwave",
            Benchmark::Griewank => "griewank",
            Benchmark::Hart6 => "hart6",
            Benchmark::Rastrigin => "rastrigin",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Benchmark::Hart6 => 6,
            _ => 2,
        }
    }

    /// Per-coordinate canonical interval.
    pub fn canonical_interval(self) -> (f64, f64) {
        match self {
            Benchmark::Dropwave | Benchmark::Rastrigin => (-5.12, 5.12),
            Benchmark::Griewank => (-600.0, 600.0),
            Benchmark::Hart6 => (0.0, 1.0),
        }
    }

    pub fn canonical_argmin(self) -> Vec<f64> {
        match self {
            Benchmark::Hart6 => HART6_ARGMIN.to_vec(),
            b => vec![0.0; b.dim()],
        }
    }

    /// Canonical minimization form.
    pub fn canonical(self, u: &[f64]) -> f64 {
        match self {
            Benchmark::Dropwave => {
                let r2 = u[0] * u[0] + u[1] * u[1];
                -(1.0 + (12.0 * r2.sqrt()).cos()) / (0.5 * r2 + 2.0)
            }
            Benchmark::Griewank => {
                let sum: f64 = u.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let prod: f64 = u
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                    .product();
                sum - prod + 1.0
            }
            Benchmark::Hart6 => -HART6_ALPHA
                .iter()
                .zip(HART6_A.iter().zip(HART6_P.iter()))
                .map(|(alpha, (a, p))| {
                    let inner: f64 = (0..6).map(|j| a[j] * (u[j] - p[j]).powi(2)).sum();
                    alpha * (-inner).exp()
                })
                .sum::<f64>(),
            Benchmark::Rastrigin => {
                10.0 * u.len() as f64
                    + u.iter()
                        .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                        .sum::<f64>()
            }
        }
    }
}

/// A benchmark rescaled to `[−1, 1]^d` and negated for maximization.
#[derive(Debug, Clone)]
pub struct Synthetic {
    benchmark: Benchmark,
    domain: BoxDomain,
    optimum: f64,
}

impl Synthetic {
    pub fn benchmark(&self) -> Benchmark {
        self.benchmark
    }

    pub fn to_canonical(&self, x: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.benchmark.canonical_interval();
        x.iter().map(|v| lo + (v + 1.0) * 0.5 * (hi - lo)).collect()
    }

    pub fn from_canonical(&self, u: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.benchmark.canonical_interval();
        u.iter().map(|v| 2.0 * (v - lo) / (hi - lo) - 1.0).collect()
    }

    /// Maximizer in the rescaled domain.
    pub fn argmax(&self) -> Vec<f64> {
        self.from_canonical(&self.benchmark.canonical_argmin())
    }
}

impl Objective for Synthetic {
    fn name(&self) -> &str {
        self.benchmark.name()
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn evaluate_true(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(-self.benchmark.canonical(&self.to_canonical(x)))
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(self.optimum)
    }
}

/// Builds a named benchmark (`dropwave`, `griewank`, `hart6`, `rastrigin`).
pub fn make_synthetic(name: &str) -> Result<Synthetic> {
    let benchmark = Benchmark::from_name(name)?;
    let domain = BoxDomain::cube(benchmark.dim(), -1.0, 1.0)?;
    let optimum = -benchmark.canonical(&benchmark.canonical_argmin());
    let objective = Synthetic {
        benchmark,
        domain,
        optimum,
    };
    probe_optimum(&objective)?;
    Ok(objective)
}

/// Random probing that no domain point beats the declared optimum.
fn probe_optimum(objective: &Synthetic) -> Result<()> {
    let mut rng = crate::rng::substream(0x5eed, crate::rng::Substream::Theory);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..objective.dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let v = objective.evaluate_true(&x)?;
        if v > objective.optimum + 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "{} exceeds its declared optimum at {x:?}",
                objective.name()
            )));
        }
    }
    Ok(())
}

/// Additive Gaussian observation noise with its own stream.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub variance: f64,
    stream: SeededStream,
}

impl NoiseModel {
    pub fn new(variance: f64, stream: SeededStream) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise variance must be >= 0, got {variance}")));
        }
        Ok(NoiseModel { variance, stream })
    }

    /// One standard-normal draw scaled by σ; always consumes exactly one draw.
    pub fn sample(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.stream);
        self.variance.sqrt() * z
    }
}

/// `f(x) + ε`, ε drawn from `noise`.
pub fn observe(objective: &dyn Objective, noise: &mut NoiseModel, x: &[f64]) -> Result<f64> {
    if !objective.domain().contains(x) {
        return Err(Error::OutOfDomain { point: x.to_vec() });
    }
    let f = objective.evaluate_true(x)?;
    Ok(f + noise.sample())
}

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(300);

/// Objective evaluated by a child process: the point is written to its
/// standard input as one line of whitespace-separated reals and a single
/// real is read back from its standard output.
#[derive(Debug)]
pub struct ExternalObjective {
    name: String,
    command: String,
    domain: BoxDomain,
    timeout: Duration,
    lock: Mutex<()>,
}

pub fn external_objective(command: &str, domain: BoxDomain) -> ExternalObjective {
    ExternalObjective {
        name: "external".to_string(),
        command: command.to_string(),
        domain,
        timeout: DEFAULT_EXTERNAL_TIMEOUT,
        lock: Mutex::new(()),
    }
}

impl ExternalObjective {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn run(&self, x: &[f64]) -> Result<f64, ExternalError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ExternalError::Spawn {
                command: self.command.clone(),
                source,
            })?;

        let line = x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        if let Some(mut stdin) = child.stdin.take() {
            // a child that ignores its input may close the pipe early
            let _ = writeln!(stdin, "{line}");
        }
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let reader = std::thread::spawn(move || {
            let mut out = String::new();
            stdout.read_to_string(&mut out).map(|_| out)
        });

        let started = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if started.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ExternalError::Timeout {
                    command: self.command.clone(),
                    secs: self.timeout.as_secs_f64(),
                });
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let output = reader.join().expect("reader thread panicked")?;
        if !status.success() {
            return Err(ExternalError::Exit {
                command: self.command.clone(),
                code: status.code(),
            });
        }
        let trimmed = output.trim();
        trimmed
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| ExternalError::Parse { output: trimmed.to_string() })
    }
}

impl Objective for ExternalObjective {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn evaluate_true(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.run(x)?)
    }
}
