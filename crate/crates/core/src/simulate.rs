//! Fixed-step RK4 simulation of impulsive switched systems, plus sampled
//! reachability and Lipschitz estimates.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::signal::{Mode, SwitchingSignal};

/// States above this norm are treated as escaped.
pub const ESCAPE_NORM: f64 = 1e12;

pub type VectorField = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Flow `f_p(t, x, u)` and jump map `g_p(t, x, u)` of one mode.
#[derive(Clone)]
pub struct ModeDynamics {
    pub flow: VectorField,
    pub jump: VectorField,
}

impl fmt::Debug for ModeDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ModeDynamics { .. }")
    }
}

#[derive(Clone, Debug)]
pub struct SystemModel {
    pub state_dim: usize,
    pub input_dim: usize,
    pub modes: BTreeMap<Mode, ModeDynamics>,
}

/// `ẋ = A x + B u`, `x⁺ = J x + H u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMode {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LinearSystemModel {
    pub modes: BTreeMap<Mode, LinearMode>,
}

#[derive(Debug, Error, Clone)]
pub enum SimError {
    #[error("state left the admissible region (norm {norm:e}) at t = {t}")]
    NonFinite { t: f64, norm: f64, partial: Box<Trajectory> },
    #[error("step {step} exceeds the shortest inter-switch gap {gap}")]
    StepTooLarge { step: f64, gap: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("mode {0} has no dynamics")]
    UnknownMode(Mode),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

impl LinearMode {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, j: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self, SimError> {
        let n = a.nrows();
        let m = b.ncols();
        let ok = a.is_square() && b.nrows() == n && j.shape() == (n, n) && h.shape() == (n, m);
        if !ok {
            return Err(SimError::Dimension(format!(
                "A {:?}, B {:?}, J {:?}, H {:?}",
                a.shape(),
                b.shape(),
                j.shape(),
                h.shape()
            )));
        }
        Ok(LinearMode { a, b, j, h })
    }

    pub fn scalar(a: f64, b: f64, j: f64, h: f64) -> Self {
        let s = |v| DMatrix::from_element(1, 1, v);
        LinearMode { a: s(a), b: s(b), j: s(j), h: s(h) }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

fn affine(m: &DMatrix<f64>, n: &DMatrix<f64>, x: &[f64], u: &[f64]) -> Vec<f64> {
    let y = m * DVector::from_column_slice(x) + n * DVector::from_column_slice(u);
    y.as_slice().to_vec()
}

impl LinearSystemModel {
    pub fn new(modes: BTreeMap<Mode, LinearMode>) -> Result<Self, SimError> {
        let mut dims = modes.values().map(|m| (m.state_dim(), m.input_dim()));
        if let Some(first) = dims.next() {
            if dims.any(|d| d != first) {
                return Err(SimError::Dimension("modes disagree on state/input dimension".into()));
            }
        }
        Ok(LinearSystemModel { modes })
    }

    pub fn to_model(&self) -> SystemModel {
        let first = self.modes.values().next();
        let state_dim = first.map_or(0, |m| m.state_dim());
        let input_dim = first.map_or(0, |m| m.input_dim());
        let modes = self
            .modes
            .iter()
            .map(|(k, lm)| {
                let (a, b, j, h) = (lm.a.clone(), lm.b.clone(), lm.j.clone(), lm.h.clone());
                let flow: VectorField = Arc::new(move |_t, x, u| affine(&a, &b, x, u));
                let jump: VectorField = Arc::new(move |_t, x, u| affine(&j, &h, x, u));
                (k.clone(), ModeDynamics { flow, jump })
            })
            .collect();
        SystemModel { state_dim, input_dim, modes }
    }
}

/// Input `u(t)` with a bound on `‖u‖∞` over the horizon of use.
#[derive(Clone)]
pub struct InputSignal {
    f: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    sup_norm: f64,
    dim: usize,
}

impl fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InputSignal {{ dim: {}, sup_norm: {} }}", self.dim, self.sup_norm)
    }
}

impl InputSignal {
    /// Wraps an arbitrary input; `sup_norm` must bound `‖u(t)‖` on the horizon.
    pub fn from_fn(dim: usize, sup_norm: f64, f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        InputSignal { f: Arc::new(f), sup_norm, dim }
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_fn(dim, 0.0, move |_| vec![0.0; dim])
    }

    pub fn constant(value: Vec<f64>) -> Self {
        let n = norm(&value);
        Self::from_fn(value.len(), n, move |_| value.clone())
    }

    /// `amplitude · sin(2π·frequency·t + phase)`.
    pub fn sinusoid(amplitude: Vec<f64>, frequency: f64, phase: f64) -> Self {
        let n = norm(&amplitude);
        Self::from_fn(amplitude.len(), n, move |t| {
            let s = (2.0 * PI * frequency * t + phase).sin();
            amplitude.iter().map(|a| a * s).collect()
        })
    }

    /// `before` on `t < at`, `after` from `at` on.
    pub fn step(before: Vec<f64>, after: Vec<f64>, at: f64) -> Self {
        let n = norm(&before).max(norm(&after));
        Self::from_fn(before.len(), n, move |t| if t < at { before.clone() } else { after.clone() })
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        (self.f)(t)
    }
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draws from constants, sinusoids and one-switch steps with `‖u‖∞ ≤ bound`.
    pub fn random<R: Rng>(rng: &mut R, dim: usize, bound: f64, t0: f64, t1: f64) -> Self {
        let dir = |rng: &mut R| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = norm(&v);
            let r = bound * rng.gen_range(0.0..=1.0);
            if n > 0.0 {
                v.iter().map(|x| x * r / n).collect()
            } else {
                vec![0.0; dim]
            }
        };
        match rng.gen_range(0..3) {
            0 => Self::constant(dir(rng)),
            1 => {
                let a = dir(rng);
                let freq = rng.gen_range(0.1..3.0);
                let phase = rng.gen_range(0.0..2.0 * PI);
                Self::sinusoid(a, freq, phase)
            }
            _ => {
                let a = dir(rng);
                let b = dir(rng);
                let at = rng.gen_range(t0..=t1.max(t0));
                Self::step(a, b, at)
            }
        }
    }
}

/// Flow samples on one interval `[t_i, t_{i+1}]`. The first sample is the
/// post-jump state (or `x0`), the last one the left limit at `t_{i+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub mode: Mode,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub from: Mode,
    pub to: Mode,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
    /// Input value fed to the jump map, `u(t_i⁻)`.
    pub input: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub jumps: Vec<JumpRecord>,
    pub step: f64,
}

impl Trajectory {
    pub fn initial_state(&self) -> &[f64] {
        &self.segments[0].states[0]
    }

    pub fn t0(&self) -> f64 {
        self.segments[0].times[0]
    }

    /// Every sample `(t, mode, x)` in time order; jump instants appear twice.
    pub fn samples(&self) -> impl Iterator<Item = (f64, &Mode, &[f64])> {
        self.segments
            .iter()
            .flat_map(|s| s.times.iter().zip(&s.states).map(move |(&t, x)| (t, &s.mode, x.as_slice())))
    }

    pub fn final_state(&self) -> &[f64] {
        let s = self.segments.last().unwrap();
        s.states.last().unwrap()
    }
}

fn axpy(x: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_step(f: &VectorField, input: &InputSignal, t: f64, x: &[f64], h: f64) -> Vec<f64> {
    let ua = input.eval(t);
    let um = input.eval(t + 0.5 * h);
    let ub = input.eval(t + h);
    let k1 = f(t, x, &ua);
    let k2 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k1), &um);
    let k3 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k2), &um);
    let k4 = f(t + h, &axpy(x, h, &k3), &ub);
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Sample times on `[a, b]`: multiples of `step`, a final shorter step
/// landing on `b`, and no final step shorter than `1e−6·step`.
fn grid(a: f64, b: f64, step: f64) -> Vec<f64> {
    let len = b - a;
    if len <= 0.0 {
        return vec![a];
    }
    let mut n = (len / step).ceil() as usize;
    if n > 1 && len - (n - 1) as f64 * step < 1e-6 * step {
        n -= 1;
    }
    let n = n.max(1);
    let mut ts: Vec<f64> = (0..n).map(|k| a + k as f64 * step).collect();
    ts.push(b);
    ts
}

fn escaped(x: &[f64]) -> bool {
    let n = norm(x);
    !n.is_finite() || n > ESCAPE_NORM
}

/// Integrates the model along `sig` from `x0`.
///
/// Jumps apply `x⁺ = g_{σ(t_i⁻)}(t_i, x⁻, u(t_i⁻))` with `u(t_i⁻)` read at
/// `t_i − step/2`.
pub fn simulate(
    model: &SystemModel,
    sig: &SwitchingSignal,
    input: &InputSignal,
    x0: &[f64],
    step: f64,
) -> Result<Trajectory, SimError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(SimError::InvalidStep(step));
    }
    if x0.len() != model.state_dim {
        return Err(SimError::Dimension(format!("x0 has length {}, state dimension is {}", x0.len(), model.state_dim)));
    }
    if input.dim() != model.input_dim {
        return Err(SimError::Dimension(format!("input dimension {} vs model {}", input.dim(), model.input_dim)));
    }
    for m in sig.modes() {
        if !model.modes.contains_key(m) {
            return Err(SimError::UnknownMode(m.clone()));
        }
    }
    if sig.switch_count() > 0 {
        let gap = sig.min_gap();
        if step > gap {
            return Err(SimError::StepTooLarge { step, gap });
        }
    }
    let mut traj = Trajectory { segments: Vec::new(), jumps: Vec::new(), step };
    let mut x = x0.to_vec();
    let n_int = sig.modes().len();
    for i in 0..n_int {
        let mode = sig.modes()[i].clone();
        let dyn_ = &model.modes[&mode];
        let ts = grid(sig.interval_start(i), sig.interval_end(i), step);
        let mut seg = Segment { mode, times: vec![ts[0]], states: vec![x.clone()], inputs: vec![input.eval(ts[0])] };
        for w in ts.windows(2) {
            x = rk4_step(&dyn_.flow, input, w[0], &x, w[1] - w[0]);
            seg.times.push(w[1]);
            seg.states.push(x.clone());
            seg.inputs.push(input.eval(w[1]));
            if escaped(&x) {
                let n = norm(&x);
                traj.segments.push(seg);
                return Err(SimError::NonFinite { t: w[1], norm: n, partial: Box::new(traj) });
            }
        }
        traj.segments.push(seg);
        if i + 1 < n_int {
            let ti = sig.instants()[i];
            let u = input.eval(ti - 0.5 * step);
            let post = (dyn_.jump)(ti, &x, &u);
            traj.jumps.push(JumpRecord {
                time: ti,
                from: sig.modes()[i].clone(),
                to: sig.modes()[i + 1].clone(),
                pre: x.clone(),
                post: post.clone(),
                input: u,
            });
            x = post;
            if escaped(&x) {
                let n = norm(&x);
                let next = sig.modes()[i + 1].clone();
                traj.segments.push(Segment { mode: next, times: vec![ti], states: vec![x.clone()], inputs: vec![input.eval(ti)] });
                return Err(SimError::NonFinite { t: ti, norm: n, partial: Box::new(traj) });
            }
        }
    }
    Ok(traj)
}

/// Settings shared by the sampled estimators.
#[derive(Clone, Copy, Debug)]
pub struct EstimateOptions {
    pub step: f64,
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { step: 1e-3, seed: 0 }
    }
}

fn ball_point<R: Rng>(rng: &mut R, n: usize, radius: f64, on_boundary: bool) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len = norm(&v);
        if len > 1e-3 && len <= 1.0 {
            let r = if on_boundary { radius } else { radius * rng.gen_range(0.0f64..=1.0).powf(1.0 / n as f64) };
            return v.iter().map(|x| x * r / len).collect();
        }
    }
}

/// Sampled `sup ‖x(t)‖` over `‖x0‖ ≤ c`, `‖u‖∞ ≤ d`, `t ∈ [t0, t0 + tau]`.
///
/// Half of the initial states lie on the sphere of radius `c`. The result
/// is a lower estimate of the true supremum.
pub fn reachability_bound(
    model: &SystemModel,
    sig: &SwitchingSignal,
    c: f64,
    d: f64,
    tau: f64,
    samples: usize,
    opts: EstimateOptions,
) -> Result<f64, SimError> {
    let window = sig.truncated(sig.t0() + tau).map_err(|e| SimError::Dimension(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = 0.0f64;
    for k in 0..samples {
        let x0 = ball_point(&mut rng, model.state_dim, c, k % 2 == 0);
        let u = InputSignal::random(&mut rng, model.input_dim, d, window.t0(), window.horizon());
        let traj = simulate(model, &window, &u, &x0, opts.step)?;
        best = traj.samples().map(|(_, _, x)| norm(x)).fold(best, f64::max);
    }
    Ok(best)
}

/// Sampled `sup ‖x(t) − y(t)‖ / ‖x0 − y0‖` over pairs in the ball of radius
/// `c` driven by a common input with `‖u‖∞ ≤ d`. Pairs closer than `1e−12`
/// are skipped.
pub fn lipschitz_estimate(
    model: &SystemModel,
    sig: &SwitchingSignal,
    c: f64,
    d: f64,
    tau: f64,
    samples: usize,
    opts: EstimateOptions,
) -> Result<f64, SimError> {
    let window = sig.truncated(sig.t0() + tau).map_err(|e| SimError::Dimension(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let x0 = ball_point(&mut rng, model.state_dim, c, false);
        let y0 = ball_point(&mut rng, model.state_dim, c, false);
        let gap: Vec<f64> = x0.iter().zip(&y0).map(|(a, b)| a - b).collect();
        let d0 = norm(&gap);
        if d0 < 1e-12 {
            continue;
        }
        let u = InputSignal::random(&mut rng, model.input_dim, d, window.t0(), window.horizon());
        let tx = simulate(model, &window, &u, &x0, opts.step)?;
        let ty = simulate(model, &window, &u, &y0, opts.step)?;
        for ((_, _, a), (_, _, b)) in tx.samples().zip(ty.samples()) {
            let diff: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
            best = best.max(norm(&diff) / d0);
        }
    }
    Ok(best)
}
