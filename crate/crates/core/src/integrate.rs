//! Propagation of the classical flow `f(t, p)` and of its tangent map.
//!
//! The integrator never shortens its last step to land on `t_end`; it steps
//! past it and the value at `t_end` comes from dense output. As a consequence
//! the step sequence from a given start point is independent of the requested
//! end time and [`flow_map`] at time `t` is bit-identical to dense evaluation
//! of any longer trajectory from the same point.

use crate::error::{Error, Result};
use crate::lorenz::{jacobian_rows, mat_vec, vector_field, LorenzParams, Matrix3, PhasePoint};
use crate::ode::{interpolate, Segment, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with constant step.
    FixedRk4,
    /// Dormand–Prince 5(4) embedded pair with PI step control.
    AdaptiveDopri5,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step length for [`Method::FixedRk4`].
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Smallest admissible adaptive step; `None` means `1e-12 * t_end`.
    pub min_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveDopri5,
            step: 1e-3,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_steps: 50_000_000,
            min_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            method: Method::AdaptiveDopri5,
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::FixedRk4,
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::invalid("step", format!("must be positive, got {}", self.step)));
        }
        if !(self.rel_tol >= 1e-14 && self.rel_tol.is_finite()) {
            return Err(Error::invalid("rel_tol", format!("must be at least 1e-14, got {}", self.rel_tol)));
        }
        if !(self.abs_tol >= 1e-300 && self.abs_tol.is_finite()) {
            return Err(Error::invalid("abs_tol", format!("must be at least 1e-300, got {}", self.abs_tol)));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps", "must be at least 1"));
        }
        if let Some(min_step) = self.min_step {
            if !(min_step.is_finite() && min_step > 0.0) {
                return Err(Error::invalid("min_step", format!("must be positive, got {min_step}")));
            }
        }
        Ok(())
    }

    pub(crate) fn min_step_for(&self, t_end: f64) -> f64 {
        self.min_step.unwrap_or(1e-12 * t_end)
    }
}

pub(crate) type LorenzStepper = Stepper<3, Box<dyn Fn(&[f64; 3]) -> [f64; 3] + Send + Sync>>;

pub(crate) fn lorenz_stepper(
    p0: PhasePoint,
    params: &LorenzParams,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> LorenzStepper {
    let params = *params;
    Stepper::new(
        Box::new(move |y: &[f64; 3]| vector_field(y, &params)),
        p0.0,
        cfg,
        cfg.min_step_for(horizon),
    )
}

fn check_inputs(p0: PhasePoint, t_end: f64, cfg: &IntegratorConfig) -> Result<()> {
    cfg.validate()?;
    p0.ensure_finite("initial condition")?;
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::invalid("t_end", format!("must be finite and nonnegative, got {t_end}")));
    }
    Ok(())
}

/// A solution `f(t, p0)` on `[0, t_end]` with dense output.
///
/// Nodes are the accepted integrator steps; the last node may lie beyond
/// `t_end`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: LorenzParams,
    t_end: f64,
    times: Vec<f64>,
    states: Vec<PhasePoint>,
    coeffs: Vec<[[f64; 3]; 4]>,
}

impl Trajectory {
    fn start(params: LorenzParams, p0: PhasePoint) -> Self {
        Self {
            params,
            t_end: 0.0,
            times: vec![0.0],
            states: vec![p0],
            coeffs: Vec::new(),
        }
    }

    fn push(&mut self, seg: &Segment<3>) {
        self.times.push(seg.t1);
        self.states.push(PhasePoint(seg.y1));
        self.coeffs.push(seg.coeffs);
    }

    pub fn params(&self) -> &LorenzParams {
        &self.params
    }

    pub fn initial(&self) -> PhasePoint {
        self.states[0]
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[PhasePoint] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State at `t` in `[0, t_end]`. Stored nodes are returned exactly.
    pub fn eval(&self, t: f64) -> Result<PhasePoint> {
        if !(t >= 0.0 && t <= self.t_end) {
            return Err(Error::OutOfSpan {
                t,
                start: 0.0,
                end: self.t_end,
            });
        }
        // first node strictly greater than t
        let idx = self.times.partition_point(|&node| node <= t);
        let i = idx - 1;
        if self.times[i] == t || i + 1 == self.times.len() {
            return Ok(self.states[i]);
        }
        let theta = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Ok(PhasePoint(interpolate(&self.states[i].0, &self.coeffs[i], theta)))
    }
}

/// Integrates the flow from `p0` over `[0, t_end]`.
pub fn integrate(
    p0: PhasePoint,
    params: &LorenzParams,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_inputs(p0, t_end, cfg)?;
    let mut traj = Trajectory::start(*params, p0);
    traj.t_end = t_end;
    if t_end == 0.0 {
        return Ok(traj);
    }
    let mut stepper = lorenz_stepper(p0, params, t_end, cfg);
    while stepper.time() < t_end {
        let seg = stepper.step(None)?;
        traj.push(&seg);
    }
    Ok(traj)
}

/// `f(t, p0)`; returns `p0` itself at `t = 0`.
pub fn flow_map(
    p0: PhasePoint,
    params: &LorenzParams,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<PhasePoint> {
    integrate(p0, params, t, cfg)?.eval(t)
}

pub fn dense_eval(traj: &Trajectory, t: f64) -> Result<PhasePoint> {
    traj.eval(t)
}

/// Incrementally advanced flow that keeps only the steps the caller has not
/// consumed yet. Used where many trajectories are evaluated in lockstep.
pub(crate) struct FlowCursor {
    stepper: LorenzStepper,
    window: Vec<Segment<3>>,
    initial: PhasePoint,
}

impl FlowCursor {
    pub fn new(p0: PhasePoint, params: &LorenzParams, horizon: f64, cfg: &IntegratorConfig) -> Self {
        Self {
            stepper: lorenz_stepper(p0, params, horizon, cfg),
            window: Vec::new(),
            initial: p0,
        }
    }

    /// Steps until the integrator has covered `t`, dropping segments that end
    /// before `keep_from`.
    pub fn advance(&mut self, t: f64, keep_from: f64) -> Result<()> {
        self.window.retain(|seg| seg.t1 >= keep_from);
        while self.stepper.time() < t {
            let seg = self.stepper.step(None)?;
            if seg.t1 >= keep_from {
                self.window.push(seg);
            }
        }
        Ok(())
    }

    /// Dense value at `t`, which must lie inside the retained window.
    pub fn eval(&self, t: f64) -> PhasePoint {
        if t == 0.0 {
            return self.initial;
        }
        let idx = self.window.partition_point(|seg| seg.t1 < t);
        let seg = &self.window[idx.min(self.window.len() - 1)];
        PhasePoint(seg.eval(t))
    }
}

/// Evolved tangent basis at a checkpoint time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentCheckpoint {
    pub time: f64,
    pub basis: Matrix3,
}

fn pack(p: &[f64; 3], m: &Matrix3) -> [f64; 12] {
    let mut y = [0.0; 12];
    y[..3].copy_from_slice(p);
    for (r, row) in m.iter().enumerate() {
        y[3 + 3 * r..6 + 3 * r].copy_from_slice(row);
    }
    y
}

fn unpack(y: &[f64; 12]) -> ([f64; 3], Matrix3) {
    let p = [y[0], y[1], y[2]];
    let m = std::array::from_fn(|r| [y[3 + 3 * r], y[4 + 3 * r], y[5 + 3 * r]]);
    (p, m)
}

fn variational_rhs(params: LorenzParams) -> impl Fn(&[f64; 12]) -> [f64; 12] {
    move |y: &[f64; 12]| {
        let (p, m) = unpack(y);
        let j = jacobian_rows(&p, &params);
        let dp = vector_field(&p, &params);
        // dV/dt = J V, column by column
        let mut dm = [[0.0; 3]; 3];
        for c in 0..3 {
            let col = mat_vec(&j, &[m[0][c], m[1][c], m[2][c]]);
            for r in 0..3 {
                dm[r][c] = col[r];
            }
        }
        pack(&dp, &dm)
    }
}

/// Joint integration of the state and a tangent matrix `V` obeying
/// `dV/dt = J(f(t, p)) V`. Both share one stepper, and error control covers
/// all twelve components.
type TangentRhs = Box<dyn Fn(&[f64; 12]) -> [f64; 12] + Send + Sync>;

pub(crate) struct TangentFlow {
    stepper: Stepper<12, TangentRhs>,
}

impl TangentFlow {
    pub fn new(
        p0: PhasePoint,
        basis: Matrix3,
        params: &LorenzParams,
        horizon: f64,
        cfg: &IntegratorConfig,
    ) -> Self {
        let rhs = variational_rhs(*params);
        Self {
            stepper: Stepper::new(Box::new(rhs), pack(&p0.0, &basis), cfg, cfg.min_step_for(horizon)),
        }
    }

    pub fn state(&self) -> PhasePoint {
        PhasePoint(unpack(self.stepper.state()).0)
    }

    pub fn tangent(&self) -> Matrix3 {
        unpack(self.stepper.state()).1
    }

    pub fn set_tangent(&mut self, basis: Matrix3) {
        let p = self.state();
        self.stepper.reset_state(pack(&p.0, &basis));
    }

    /// Advances exactly to `t`, feeding each step's state segment to `sink`.
    pub fn advance_to(&mut self, t: f64, mut sink: impl FnMut(&Segment<12>)) -> Result<()> {
        while self.stepper.time() < t {
            let seg = self.stepper.step(Some(t))?;
            sink(&seg);
        }
        Ok(())
    }
}

/// Integrates state and tangent basis together up to `t_end`, recording the
/// unnormalized tangent matrix every `checkpoint_interval` and at `t_end`.
pub fn integrate_with_tangent(
    p0: PhasePoint,
    basis: Matrix3,
    params: &LorenzParams,
    t_end: f64,
    checkpoint_interval: f64,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, Vec<TangentCheckpoint>)> {
    check_inputs(p0, t_end, cfg)?;
    if !(checkpoint_interval.is_finite() && checkpoint_interval > 0.0) {
        return Err(Error::invalid("checkpoint_interval", "must be positive"));
    }
    if crate::lorenz::mat_det(&basis) == 0.0 || !basis.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::invalid("basis", "must be finite and nonsingular"));
    }
    let mut traj = Trajectory::start(*params, p0);
    traj.t_end = t_end;
    let mut checkpoints = vec![TangentCheckpoint { time: 0.0, basis }];
    if t_end == 0.0 {
        return Ok((traj, checkpoints));
    }

    let mut flow = TangentFlow::new(p0, basis, params, t_end, cfg);
    let mut k = 1u64;
    loop {
        let target = (k as f64 * checkpoint_interval).min(t_end);
        flow.advance_to(target, |seg| {
            let c = &seg.coeffs;
            traj.push(&Segment {
                t0: seg.t0,
                t1: seg.t1,
                y0: [seg.y0[0], seg.y0[1], seg.y0[2]],
                y1: [seg.y1[0], seg.y1[1], seg.y1[2]],
                coeffs: std::array::from_fn(|j| [c[j][0], c[j][1], c[j][2]]),
            })
        })?;
        checkpoints.push(TangentCheckpoint {
            time: target,
            basis: flow.tangent(),
        });
        if target >= t_end {
            break;
        }
        k += 1;
    }
    Ok((traj, checkpoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorenz::{fixed_points, kus_invariant, mat_det, IDENTITY};

    fn canonical() -> LorenzParams {
        LorenzParams::canonical()
    }

    fn max_abs_diff(a: PhasePoint, b: PhasePoint) -> f64 {
        (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn origin_is_stationary() {
        for cfg in [IntegratorConfig::default(), IntegratorConfig::rk4(1e-2)] {
            let traj = integrate(PhasePoint::ORIGIN, &canonical(), 20.0, &cfg).unwrap();
            assert!(traj.states().iter().all(|s| *s == PhasePoint::ORIGIN));
            for t in [0.0, 0.37, 5.0, 20.0] {
                assert_eq!(traj.eval(t).unwrap(), PhasePoint::ORIGIN);
            }
        }
    }

    #[test]
    fn nontrivial_equilibrium_holds_for_ten_time_units() {
        let params = canonical();
        let c_plus = fixed_points(&params)[1];
        let traj = integrate(c_plus, &params, 10.0, &IntegratorConfig::default()).unwrap();
        for (t, s) in traj.times().iter().zip(traj.states()) {
            if *t <= 10.0 {
                assert!(s.distance(&c_plus) < 1e-6, "drift at t={t}");
            }
        }
        assert!(traj.eval(10.0).unwrap().distance(&c_plus) < 1e-6);
    }

    #[test]
    fn adaptive_and_rk4_agree_at_tight_tolerance() {
        let params = canonical();
        let p0 = PhasePoint::new(1.0, 1.0, 1.0);
        let a = flow_map(p0, &params, 1.0, &IntegratorConfig::adaptive(1e-12, 1e-12)).unwrap();
        let b = flow_map(p0, &params, 1.0, &IntegratorConfig::rk4(1e-5)).unwrap();
        assert!(max_abs_diff(a, b) < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn flow_at_zero_time_is_identity() {
        let p0 = PhasePoint::new(0.1, -3.2, 17.5);
        for cfg in [IntegratorConfig::default(), IntegratorConfig::rk4(1e-3)] {
            assert_eq!(flow_map(p0, &canonical(), 0.0, &cfg).unwrap(), p0);
        }
    }

    #[test]
    fn flow_commutes_with_reflection() {
        let params = canonical();
        let cfg = IntegratorConfig::default();
        let p0 = PhasePoint::new(1.0, 1.0, 1.0);
        let a = flow_map(p0, &params, 5.0, &cfg).unwrap();
        let b = flow_map(p0.reflect(), &params, 5.0, &cfg).unwrap();
        assert_eq!(b, a.reflect());
    }

    #[test]
    fn invariant_decays_exponentially_when_beta_is_twice_sigma() {
        let params = LorenzParams::new(10.0, 28.0, 20.0).unwrap();
        let p0 = PhasePoint::new(1.0, 1.0, 1.0);
        let t = 0.25;
        let p = flow_map(p0, &params, t, &IntegratorConfig::default()).unwrap();
        let expected = (1.0 - 20.0) * (-20.0 * t).exp();
        let got = kus_invariant(p, &params);
        assert!(((got - expected) / expected).abs() < 1e-6, "{got} vs {expected}");
    }

    /// `exp(J t)` for the constant Jacobian at the origin with `tau = 0.5`,
    /// assembled from the explicit eigendecomposition of its 2×2 block.
    fn origin_propagator(t: f64) -> Matrix3 {
        let (sigma, tau, beta) = (10.0_f64, 0.5_f64, 8.0_f64 / 3.0);
        // block [[-σ, σ], [τ, -1]]
        let tr = -sigma - 1.0;
        let det = sigma - sigma * tau;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let l1 = (tr + disc) / 2.0;
        let l2 = (tr - disc) / 2.0;
        // eigenvectors (σ, λ + σ)
        let v = [[sigma, sigma], [l1 + sigma, l2 + sigma]];
        let vdet = v[0][0] * v[1][1] - v[0][1] * v[1][0];
        let vinv = [[v[1][1] / vdet, -v[0][1] / vdet], [-v[1][0] / vdet, v[0][0] / vdet]];
        let e = [(l1 * t).exp(), (l2 * t).exp()];
        let mut out = [[0.0; 3]; 3];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = (0..2).map(|k| v[i][k] * e[k] * vinv[k][j]).sum();
            }
        }
        out[2][2] = (-beta * t).exp();
        out
    }

    #[test]
    fn tangent_at_stable_origin_matches_matrix_exponential() {
        let params = LorenzParams::new(10.0, 0.5, 8.0 / 3.0).unwrap();
        let cfg = IntegratorConfig::adaptive(1e-12, 1e-14);
        let (_, checkpoints) =
            integrate_with_tangent(PhasePoint::ORIGIN, IDENTITY, &params, 1.0, 0.25, &cfg).unwrap();
        assert_eq!(checkpoints.len(), 5);
        let last = checkpoints.last().unwrap();
        assert_eq!(last.time, 1.0);
        let expected = origin_propagator(1.0);
        for (got, want) in last.basis.iter().flatten().zip(expected.iter().flatten()) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn tangent_with_zero_horizon_returns_basis() {
        let (traj, cps) =
            integrate_with_tangent(PhasePoint::new(1.0, 2.0, 3.0), IDENTITY, &canonical(), 0.0, 0.1, &IntegratorConfig::default())
                .unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(cps, vec![TangentCheckpoint { time: 0.0, basis: IDENTITY }]);
    }

    #[test]
    fn tangent_determinant_follows_liouville() {
        let params = canonical();
        let basis = [[2.0, 0.5, 0.0], [0.0, 1.0, -0.3], [0.1, 0.0, 1.5]];
        let cfg = IntegratorConfig::adaptive(1e-12, 1e-14);
        let (_, cps) =
            integrate_with_tangent(PhasePoint::new(1.0, 1.0, 1.0), basis, &params, 1.0, 0.1, &cfg).unwrap();
        let det0 = mat_det(&basis);
        for cp in &cps {
            let expected = (params.divergence() * cp.time).exp() * det0;
            let got = mat_det(&cp.basis);
            assert!(((got - expected) / expected).abs() < 1e-6, "t={} {got} vs {expected}", cp.time);
        }
    }

    #[test]
    fn tangent_trajectory_matches_plain_flow() {
        let params = canonical();
        let cfg = IntegratorConfig::adaptive(1e-11, 1e-13);
        let p0 = PhasePoint::new(-2.0, 3.0, 20.0);
        let (traj, _) = integrate_with_tangent(p0, IDENTITY, &params, 2.0, 0.5, &cfg).unwrap();
        let direct = flow_map(p0, &params, 2.0, &cfg).unwrap();
        assert!(traj.eval(2.0).unwrap().distance(&direct) < 1e-7);
        assert!(traj.eval(1.3).unwrap().distance(&flow_map(p0, &params, 1.3, &cfg).unwrap()) < 1e-7);
    }

    #[test]
    fn singular_basis_is_rejected() {
        let singular = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]];
        let err = integrate_with_tangent(PhasePoint::ORIGIN, singular, &canonical(), 1.0, 0.1, &IntegratorConfig::default());
        assert!(matches!(err, Err(Error::InvalidParameter { name: "basis", .. })));
    }

    #[test]
    fn dense_eval_reproduces_nodes_and_rejects_out_of_span() {
        let traj = integrate(PhasePoint::new(1.0, 1.0, 1.0), &canonical(), 3.0, &IntegratorConfig::default()).unwrap();
        for (t, s) in traj.times().iter().zip(traj.states()) {
            if *t <= traj.t_end() {
                assert_eq!(dense_eval(&traj, *t).unwrap(), *s);
            }
        }
        assert!(matches!(dense_eval(&traj, 3.5), Err(Error::OutOfSpan { .. })));
        assert!(matches!(dense_eval(&traj, -1e-9), Err(Error::OutOfSpan { .. })));
    }

    #[test]
    fn dense_midpoints_match_reintegration() {
        let params = canonical();
        let p0 = PhasePoint::new(1.0, 1.0, 1.0);
        let step = 1e-3;
        let traj = integrate(p0, &params, 2.0, &IntegratorConfig::rk4(step)).unwrap();
        // local error of RK4 at this step is ~ C h^5; compare against a much
        // finer integration straight to each midpoint
        let reference = IntegratorConfig::adaptive(1e-13, 1e-14);
        for i in [10usize, 500, 1200, 1990] {
            let t = 0.5 * (traj.times()[i] + traj.times()[i + 1]);
            let dense = traj.eval(t).unwrap();
            let direct = flow_map(p0, &params, t, &reference).unwrap();
            let global = flow_map(p0, &params, traj.times()[i], &reference).unwrap().distance(&traj.states()[i]);
            assert!(dense.distance(&direct) < 10.0 * global.max(1e-10), "t={t}");
        }
    }

    #[test]
    fn step_sequence_is_independent_of_end_time() {
        let params = canonical();
        let cfg = IntegratorConfig::default();
        let p0 = PhasePoint::new(3.0, -1.0, 12.0);
        let long = integrate(p0, &params, 8.0, &cfg).unwrap();
        for t in [0.3, 1.7, 5.25, 8.0] {
            assert_eq!(flow_map(p0, &params, t, &cfg).unwrap(), long.eval(t).unwrap());
        }
    }

    #[test]
    fn resource_and_underflow_errors() {
        let params = canonical();
        let p0 = PhasePoint::new(1.0, 1.0, 1.0);
        let cfg = IntegratorConfig {
            max_steps: 10,
            ..IntegratorConfig::default()
        };
        assert!(matches!(integrate(p0, &params, 5.0, &cfg), Err(Error::MaxStepsExceeded { max_steps: 10, .. })));

        let cfg = IntegratorConfig {
            min_step: Some(0.5),
            ..IntegratorConfig::default()
        };
        match integrate(p0, &params, 5.0, &cfg) {
            Err(Error::StepUnderflow { time, .. }) => assert!(time < 5.0),
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::adaptive(1e-15, 1e-12).validate().is_err());
        assert!(IntegratorConfig::adaptive(1e-9, 0.0).validate().is_err());
        assert!(IntegratorConfig::rk4(0.0).validate().is_err());
        let cfg = IntegratorConfig { max_steps: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(integrate(PhasePoint::ORIGIN, &canonical(), -1.0, &IntegratorConfig::default()).is_err());
        assert!(integrate(PhasePoint::new(f64::NAN, 0.0, 0.0), &canonical(), 1.0, &IntegratorConfig::default()).is_err());
    }
}
