//! Momentum-space densities `|ψ(p)|²` and the averages
//! `⟨P_k(t)⟩ = ∫ d³p f_k(t, p) |ψ(p)|²` of the evolving momentum observables.
//!
//! Only the density enters; phases of `ψ` play no role in momentum statistics.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig, Trajectory};
use crate::lorenz::{LorenzParams, PhasePoint};
use crate::summation::pairwise_sum;

#[derive(Debug, Clone, PartialEq)]
pub enum WavepacketSpec {
    /// Independent normal components with standard deviations `widths`.
    Gaussian { center: PhasePoint, widths: [f64; 3] },
    /// The zero-width limit: a momentum eigenstate.
    Dirac { center: PhasePoint },
    /// Equally weighted support points of an empirical density.
    Samples(Vec<PhasePoint>),
}

impl WavepacketSpec {
    pub fn gaussian(center: PhasePoint, widths: [f64; 3]) -> Result<Self> {
        center.ensure_finite("packet center")?;
        if widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("widths", format!("must all be positive, got {widths:?}")));
        }
        Ok(Self::Gaussian { center, widths })
    }

    pub fn isotropic(center: PhasePoint, width: f64) -> Result<Self> {
        Self::gaussian(center, [width; 3])
    }

    pub fn dirac(center: PhasePoint) -> Result<Self> {
        Ok(Self::Dirac {
            center: center.ensure_finite("packet center")?,
        })
    }

    pub fn samples(points: Vec<PhasePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("samples", "list must be non-empty"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite { context: "sample list" });
        }
        Ok(Self::Samples(points))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { center, widths } => Self::gaussian(*center, *widths).map(drop),
            Self::Dirac { center } => Self::dirac(*center).map(drop),
            Self::Samples(points) => {
                if points.is_empty() {
                    Err(Error::invalid("samples", "list must be non-empty"))
                } else if points.iter().any(|p| !p.is_finite()) {
                    Err(Error::NonFinite { context: "sample list" })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Point whose classical trajectory is compared against the average: the
    /// center for Gaussian and Dirac packets, the first point for samples.
    pub fn center(&self) -> PhasePoint {
        match self {
            Self::Gaussian { center, .. } | Self::Dirac { center } => *center,
            Self::Samples(points) => points[0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureScheme {
    /// Tensor-product Gauss–Hermite rule with `order` nodes per axis.
    GaussHermite { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self::GaussHermite { order: 9 }
    }
}

impl QuadratureScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::GaussHermite { order } if order == 0 || order % 2 == 0 => Err(Error::invalid(
                "order",
                format!("Gauss-Hermite order must be odd and at least 1, got {order}"),
            )),
            Self::GaussHermite { order } if order > 101 => {
                Err(Error::invalid("order", format!("Gauss-Hermite order {order} exceeds 101")))
            }
            Self::MonteCarlo { samples: 0, .. } => Err(Error::invalid("samples", "must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Moments of the three momentum observables at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentStats {
    pub time: f64,
    pub mean: PhasePoint,
    pub variance: [f64; 3],
    /// Standard error of the mean; zero for deterministic rules.
    pub standard_error: [f64; 3],
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the weight
/// `exp(-u²)/√π`, ascending, weights summing to one.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        // initial guesses for the largest roots, then extrapolation inwards
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // orthonormal Hermite recurrence
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    let total = pairwise_sum(&w);
    let mut rule: Vec<(f64, f64)> = x.into_iter().zip(w.into_iter().map(|wi| wi / total)).collect();
    rule.reverse();
    rule
}

/// Discretizes the density into weighted nodes. Sample lists are used as is,
/// whatever the scheme; a Dirac packet is always the single node `(center, 1)`.
pub fn quadrature_nodes(spec: &WavepacketSpec, scheme: &QuadratureScheme) -> Result<Vec<(PhasePoint, f64)>> {
    spec.validate()?;
    scheme.validate()?;
    match spec {
        WavepacketSpec::Dirac { center } => Ok(vec![(*center, 1.0)]),
        WavepacketSpec::Samples(points) => {
            let w = 1.0 / points.len() as f64;
            Ok(points.iter().map(|p| (*p, w)).collect())
        }
        WavepacketSpec::Gaussian { center, widths } => match *scheme {
            QuadratureScheme::GaussHermite { order } => {
                let rule = gauss_hermite(order);
                let scale: [f64; 3] = std::array::from_fn(|k| std::f64::consts::SQRT_2 * widths[k]);
                let mut nodes = Vec::with_capacity(order * order * order);
                for &(u1, w1) in &rule {
                    for &(u2, w2) in &rule {
                        for &(u3, w3) in &rule {
                            let p = PhasePoint::new(
                                center[0] + scale[0] * u1,
                                center[1] + scale[1] * u2,
                                center[2] + scale[2] * u3,
                            );
                            nodes.push((p, w1 * w2 * w3));
                        }
                    }
                }
                Ok(nodes)
            }
            QuadratureScheme::MonteCarlo { samples, seed } => {
                let w = 1.0 / samples as f64;
                Ok(sample_density(spec, samples, seed)?.into_iter().map(|p| (p, w)).collect())
            }
        },
    }
}

/// Draws `n` points from the density with a seeded ChaCha8 stream.
pub fn sample_density(spec: &WavepacketSpec, n: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = match spec {
        WavepacketSpec::Dirac { center } => vec![*center; n],
        WavepacketSpec::Gaussian { center, widths } => (0..n)
            .map(|_| {
                let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                PhasePoint::new(
                    center[0] + widths[0] * z[0],
                    center[1] + widths[1] * z[1],
                    center[2] + widths[2] * z[2],
                )
            })
            .collect(),
        WavepacketSpec::Samples(points) => (0..n).map(|_| points[rng.gen_range(0..points.len())]).collect(),
    };
    Ok(points)
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    match grid.first() {
        None => return Err(Error::invalid("time grid", "must not be empty")),
        Some(&t0) if t0 != 0.0 => return Err(Error::invalid("time grid", "must start at 0")),
        _ => {}
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time grid", "must be finite and strictly increasing"));
    }
    Ok(())
}

/// `0, dt, 2 dt, …` up to and including `t_end`.
pub fn uniform_grid(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::invalid("t_end", format!("must be nonnegative, got {t_end}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let steps = (t_end / dt * (1.0 + 1e-12)).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    match grid.last_mut() {
        Some(last) if (t_end - *last).abs() <= 1e-9 * dt => *last = t_end,
        _ => grid.push(t_end),
    }
    Ok(grid)
}

/// Per-time weighted sums `Σ w (f − c)` and `Σ w (f − c)²` over a node range.
type Accum = Vec<[f64; 6]>;

const LEAF_NODES: usize = 8;

fn accumulate(
    nodes: &[(PhasePoint, f64)],
    offset: usize,
    reference: &[PhasePoint],
    grid: &[f64],
    params: &LorenzParams,
    cfg: &IntegratorConfig,
) -> Result<Accum> {
    if nodes.len() > LEAF_NODES {
        let mid = nodes.len() / 2;
        let (left, right) = rayon::join(
            || accumulate(&nodes[..mid], offset, reference, grid, params, cfg),
            || accumulate(&nodes[mid..], offset + mid, reference, grid, params, cfg),
        );
        let (left, right) = (left?, right?);
        return Ok(left
            .iter()
            .zip(&right)
            .map(|(a, b)| std::array::from_fn(|i| a[i] + b[i]))
            .collect());
    }
    let t_last = *grid.last().unwrap();
    let mut acc = vec![[0.0; 6]; grid.len()];
    for (k, (p, w)) in nodes.iter().enumerate() {
        let traj = integrate(*p, params, t_last, cfg).map_err(|source| Error::Node {
            node: offset + k,
            source: Box::new(source),
        })?;
        for ((slot, &t), c) in acc.iter_mut().zip(grid).zip(reference) {
            let f = traj.eval(t)?;
            for i in 0..3 {
                let d = f[i] - c[i];
                slot[i] += w * d;
                slot[3 + i] += w * d * d;
            }
        }
    }
    Ok(acc)
}

/// Evaluates the reference (center) trajectory on the grid.
pub(crate) fn reference_curve(traj: &Trajectory, grid: &[f64]) -> Result<Vec<PhasePoint>> {
    grid.iter().map(|&t| traj.eval(t)).collect()
}

/// Means, variances and standard errors of `P_k(t)` on `grid`.
///
/// Each node is integrated once over the whole grid. Sums are taken relative
/// to the trajectory of the packet center, which keeps the variance free of
/// cancellation for narrow packets, and are combined over a fixed binary tree
/// so the result does not depend on thread scheduling.
pub fn expectation(
    spec: &WavepacketSpec,
    scheme: &QuadratureScheme,
    params: &LorenzParams,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<MomentStats>> {
    validate_grid(grid)?;
    cfg.validate()?;
    let nodes = quadrature_nodes(spec, scheme)?;
    let t_last = *grid.last().unwrap();
    let center_traj = integrate(spec.center(), params, t_last, cfg)?;
    let reference = reference_curve(&center_traj, grid)?;
    let acc = accumulate(&nodes, 0, &reference, grid, params, cfg)?;

    let monte_carlo = match (spec, scheme) {
        (WavepacketSpec::Gaussian { .. }, QuadratureScheme::MonteCarlo { samples, .. }) => Some(*samples),
        _ => None,
    };
    Ok(grid
        .iter()
        .zip(&reference)
        .zip(&acc)
        .map(|((&time, c), s)| {
            let mean = PhasePoint::new(c[0] + s[0], c[1] + s[1], c[2] + s[2]);
            let variance: [f64; 3] = std::array::from_fn(|i| (s[3 + i] - s[i] * s[i]).max(0.0));
            let standard_error = match monte_carlo {
                Some(n) if n > 1 => std::array::from_fn(|i| (variance[i] / (n - 1) as f64).sqrt()),
                _ => [0.0; 3],
            };
            MomentStats {
                time,
                mean,
                variance,
                standard_error,
            }
        })
        .collect())
}

/// Reads `p1,p2,p3` rows (header required) into a sample packet.
pub fn read_samples_csv(reader: impl Read) -> Result<WavepacketSpec> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["p1", "p2", "p3"] {
        return Err(Error::Parse(format!(
            "expected header `p1,p2,p3`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let mut coords = [0.0; 3];
        for (slot, field) in coords.iter_mut().zip(record.iter()) {
            *slot = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: `{field}` is not a number", line + 1)))?;
        }
        points.push(PhasePoint(coords));
    }
    WavepacketSpec::samples(points)
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<WavepacketSpec> {
    read_samples_csv(std::fs::File::open(path)?)
}
