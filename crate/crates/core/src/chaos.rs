//! Classical chaos estimates for the momentum flow and the Ehrenfest time of
//! the packet-averaged observables.
//!
//! The Ehrenfest time of a packet is the first time the average
//! `⟨P(t)⟩` departs from the trajectory of the packet center by more than a
//! threshold. For a packet of width `Δp` it grows like `ln(1/Δp) / λ_max`,
//! without any lower bound on `Δp`.

use rayon::prelude::*;

use crate::ensemble::{quadrature_nodes, QuadratureScheme, WavepacketSpec};
use crate::error::{Error, Result};
use crate::integrate::{FlowCursor, IntegratorConfig, TangentFlow};
use crate::lorenz::{LorenzParams, Matrix3, PhasePoint, IDENTITY};
use crate::summation::pairwise_sum_arrays;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSettings {
    /// Time integrated before growth factors are recorded.
    pub transient: f64,
    /// End time of the run, transient included.
    pub total_time: f64,
    /// Interval between QR re-orthonormalizations.
    pub renorm_interval: f64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self {
            transient: 100.0,
            total_time: 2000.0,
            renorm_interval: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovResult {
    /// Descending.
    pub exponents: [f64; 3],
    /// Sum of the positive exponents.
    pub ks_entropy_estimate: f64,
    pub transient_discarded: f64,
    pub total_time: f64,
    pub renorm_interval: f64,
}

impl LyapunovResult {
    pub fn max_exponent(&self) -> f64 {
        self.exponents[0]
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// Modified Gram–Schmidt on the columns of `m`; returns `(Q, diag R)`.
fn qr_columns(m: &Matrix3) -> (Matrix3, [f64; 3]) {
    let mut cols: [[f64; 3]; 3] = std::array::from_fn(|c| [m[0][c], m[1][c], m[2][c]]);
    let mut diag = [0.0; 3];
    for c in 0..3 {
        for prev in 0..c {
            let proj: f64 = (0..3).map(|r| cols[prev][r] * cols[c][r]).sum();
            let basis = cols[prev];
            for (x, b) in cols[c].iter_mut().zip(basis) {
                *x -= proj * b;
            }
        }
        let norm = cols[c].iter().map(|v| v * v).sum::<f64>().sqrt();
        diag[c] = norm;
        for v in cols[c].iter_mut() {
            *v /= norm;
        }
    }
    let q = std::array::from_fn(|r| [cols[0][r], cols[1][r], cols[2][r]]);
    (q, diag)
}

/// Lyapunov spectrum by joint state/tangent integration with periodic QR
/// re-orthonormalization of an initially orthonormal basis.
pub fn lyapunov_spectrum(
    p0: PhasePoint,
    params: &LorenzParams,
    settings: &LyapunovSettings,
    cfg: &IntegratorConfig,
) -> Result<LyapunovResult> {
    let LyapunovSettings {
        transient,
        total_time,
        renorm_interval,
    } = *settings;
    cfg.validate()?;
    p0.ensure_finite("initial condition")?;
    if !(transient.is_finite() && transient > 0.0) {
        return Err(Error::invalid("transient", "must be positive"));
    }
    if !(total_time.is_finite() && total_time > transient) {
        return Err(Error::invalid("total_time", "must exceed the transient"));
    }
    if !(renorm_interval.is_finite() && renorm_interval > 0.0) {
        return Err(Error::invalid("renorm_interval", "must be positive"));
    }

    let mut flow = TangentFlow::new(p0, IDENTITY, params, total_time, cfg);
    let mut run = |start: f64, end: f64, log_sums: Option<&mut [f64; 3]>| -> Result<()> {
        let mut sums = [0.0; 3];
        let mut k = 1u64;
        loop {
            let target = (start + k as f64 * renorm_interval).min(end);
            flow.advance_to(target, |_| {})?;
            let (q, diag) = qr_columns(&flow.tangent());
            if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(Error::NonFinite { context: "tangent basis" });
            }
            for (s, d) in sums.iter_mut().zip(diag) {
                *s += d.ln();
            }
            flow.set_tangent(q);
            if target >= end {
                break;
            }
            k += 1;
        }
        if let Some(out) = log_sums {
            *out = sums;
        }
        Ok(())
    };

    run(0.0, transient, None)?;
    let mut sums = [0.0; 3];
    run(transient, total_time, Some(&mut sums))?;

    let span = total_time - transient;
    let mut exponents = sums.map(|s| s / span);
    exponents.sort_by(|a, b| b.total_cmp(a));
    let ks_entropy_estimate = exponents.iter().filter(|l| **l > 0.0).sum();
    Ok(LyapunovResult {
        exponents,
        ks_entropy_estimate,
        transient_discarded: transient,
        total_time,
        renorm_interval,
    })
}

/// Crossing criterion and search resolution for Ehrenfest-time measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhrenfestProbe {
    /// Separation `δ` in the Euclidean norm.
    pub threshold: f64,
    /// Latest time searched before declaring the crossing unbounded.
    pub horizon: f64,
    /// Spacing of the coarse search grid.
    pub probe_step: f64,
    /// Bisection stops once the bracket is narrower than this.
    pub resolution: f64,
}

impl Default for EhrenfestProbe {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            horizon: 100.0,
            probe_step: 0.01,
            resolution: 1e-6,
        }
    }
}

impl EhrenfestProbe {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("threshold", self.threshold),
            ("horizon", self.horizon),
            ("probe_step", self.probe_step),
            ("resolution", self.resolution),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhrenfestResult {
    /// Isotropic packet width; zero for a Dirac packet.
    pub width: f64,
    /// `None` when no crossing occurs before the horizon.
    pub crossing_time: Option<f64>,
    pub threshold: f64,
    pub center: PhasePoint,
}

impl EhrenfestResult {
    pub fn is_bounded(&self) -> bool {
        self.crossing_time.is_some()
    }
}

/// Lockstep propagation of all quadrature nodes plus the packet center.
struct Ensemble {
    center: FlowCursor,
    nodes: Vec<(FlowCursor, f64)>,
}

impl Ensemble {
    fn advance(&mut self, t: f64, keep_from: f64) -> Result<()> {
        self.center.advance(t, keep_from)?;
        self.nodes
            .par_iter_mut()
            .with_min_len(16)
            .enumerate()
            .try_for_each(|(i, (cursor, _))| {
                cursor.advance(t, keep_from).map_err(|source| Error::Node {
                    node: i,
                    source: Box::new(source),
                })
            })
    }

    /// `‖⟨P(t)⟩ − f(t, center)‖₂`, summed in node order.
    fn separation(&self, t: f64) -> f64 {
        let c = self.center.eval(t);
        let terms: Vec<[f64; 3]> = self
            .nodes
            .par_iter()
            .with_min_len(64)
            .map(|(cursor, w)| {
                let f = cursor.eval(t);
                [w * (f[0] - c[0]), w * (f[1] - c[1]), w * (f[2] - c[2])]
            })
            .collect();
        let d = pairwise_sum_arrays(&terms);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// First time the packet average leaves the `threshold` ball around the
/// center trajectory, for any packet shape.
pub fn ehrenfest_time_for_packet(
    spec: &WavepacketSpec,
    probe: &EhrenfestProbe,
    params: &LorenzParams,
    scheme: &QuadratureScheme,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>> {
    probe.validate()?;
    cfg.validate()?;
    let horizon = probe.horizon;
    let center = spec.center();
    let mut ensemble = Ensemble {
        center: FlowCursor::new(center, params, horizon, cfg),
        nodes: quadrature_nodes(spec, scheme)?
            .into_iter()
            .map(|(p, w)| (FlowCursor::new(p, params, horizon, cfg), w))
            .collect(),
    };

    let initial = ensemble.separation(0.0);
    if initial > probe.threshold {
        return Err(Error::invalid(
            "threshold",
            format!("packet average starts {initial} from its center, beyond the threshold"),
        ));
    }

    let mut lo = 0.0;
    let mut k = 1u64;
    loop {
        let hi = (k as f64 * probe.probe_step).min(horizon);
        ensemble.advance(hi, lo)?;
        if ensemble.separation(hi) > probe.threshold {
            let (mut a, mut b) = (lo, hi);
            while b - a > probe.resolution {
                let mid = 0.5 * (a + b);
                if ensemble.separation(mid) > probe.threshold {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(Some(b));
        }
        if hi >= horizon {
            return Ok(None);
        }
        lo = hi;
        k += 1;
    }
}

/// Ehrenfest time of an isotropic Gaussian packet of standard deviation
/// `width` around `center`.
pub fn ehrenfest_time(
    center: PhasePoint,
    width: f64,
    probe: &EhrenfestProbe,
    params: &LorenzParams,
    scheme: &QuadratureScheme,
    cfg: &IntegratorConfig,
) -> Result<EhrenfestResult> {
    let spec = WavepacketSpec::isotropic(center, width)?;
    let crossing_time = ehrenfest_time_for_packet(&spec, probe, params, scheme, cfg)?;
    Ok(EhrenfestResult {
        width,
        crossing_time,
        threshold: probe.threshold,
        center,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EhrenfestScan {
    /// One row per width, in decreasing width order.
    pub rows: Vec<EhrenfestResult>,
    /// Least-squares slope of crossing time against `ln(1/width)`.
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
    pub lambda_reference: f64,
}

impl EhrenfestScan {
    /// Equals one when the Ehrenfest time grows exactly like `ln(1/Δp)/λ_max`.
    pub fn slope_times_lambda(&self) -> f64 {
        self.fitted_slope * self.lambda_reference
    }

    /// `(ln(1/width), crossing_time)` for the bounded rows.
    pub fn finite_points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.crossing_time.map(|t| ((1.0 / r.width).ln(), t)))
            .collect()
    }
}

pub const MIN_FIT_ROWS: usize = 3;

/// Ordinary least squares `y ≈ slope x + intercept`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Ehrenfest times over a decreasing list of widths and the fitted growth
/// rate. Unbounded rows are reported but left out of the fit. The reference
/// exponent is measured from `center` with `lyapunov` settings.
pub fn ehrenfest_scan(
    center: PhasePoint,
    widths: &[f64],
    probe: &EhrenfestProbe,
    params: &LorenzParams,
    scheme: &QuadratureScheme,
    cfg: &IntegratorConfig,
    lyapunov: &LyapunovSettings,
) -> Result<EhrenfestScan> {
    if widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid("widths", "must be positive"));
    }
    if widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("widths", "must be strictly decreasing"));
    }
    let rows = widths
        .iter()
        .map(|&w| ehrenfest_time(center, w, probe, params, scheme, cfg))
        .collect::<Result<Vec<_>>>()?;
    let finite = rows.iter().filter(|r| r.is_bounded()).count();
    if finite < MIN_FIT_ROWS {
        return Err(Error::InsufficientData {
            found: finite,
            required: MIN_FIT_ROWS,
        });
    }
    let lambda_reference = lyapunov_spectrum(center, params, lyapunov, cfg)?.max_exponent();
    let mut scan = EhrenfestScan {
        rows,
        fitted_slope: 0.0,
        fitted_intercept: 0.0,
        lambda_reference,
    };
    let (slope, intercept) = fit_line(&scan.finite_points());
    scan.fitted_slope = slope;
    scan.fitted_intercept = intercept;
    Ok(scan)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ties share the average rank
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}
