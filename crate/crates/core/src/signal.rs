//! Switching signals, activation counters and dwell/leave time slacks.
//!
//! A mode owns its flow interval together with the jump that ends it, so the
//! activation count `N_p(s1, s2)` is the number of switching instants
//! `t_i ∈ (s1, s2]` with `σ(t_i⁻) = p`. The time-in-mode `T_p(s1, s2)` is the
//! Lebesgue measure of `{t ∈ [s1, s2) : σ(t) = p}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mode identifier. Modes are compared by name.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mode(pub String);

impl Mode {
    pub fn new(name: impl Into<String>) -> Self {
        Mode(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Mode {
    fn from(s: &str) -> Self {
        Mode(s.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("invalid signal: {0}")]
    Invalid(String),
    #[error("window [{s1}, {s2}] is outside [{t0}, {horizon}] or reversed")]
    OutOfRange { s1: f64, s2: f64, t0: f64, horizon: f64 },
}

/// Piecewise-constant switching signal on `[t0, horizon]`.
///
/// `modes[0]` is active on `[t0, t_1)` and `modes[i]` on `[t_i, t_{i+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalRepr", into = "SignalRepr")]
pub struct SwitchingSignal {
    t0: f64,
    instants: Vec<f64>,
    modes: Vec<Mode>,
    horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct SignalRepr {
    t0: f64,
    instants: Vec<f64>,
    modes: Vec<Mode>,
    horizon: f64,
}

impl TryFrom<SignalRepr> for SwitchingSignal {
    type Error = SignalError;
    fn try_from(r: SignalRepr) -> Result<Self, SignalError> {
        SwitchingSignal::new(r.t0, r.instants, r.modes, r.horizon)
    }
}

impl From<SwitchingSignal> for SignalRepr {
    fn from(s: SwitchingSignal) -> Self {
        SignalRepr { t0: s.t0, instants: s.instants, modes: s.modes, horizon: s.horizon }
    }
}

/// Pair set `Q`: an element `(p, q)` allows `σ(t_i) = p` right after `σ(t_i⁻) = q`.
pub type ModeChangeSet = BTreeSet<(Mode, Mode)>;

/// A time point, possibly taken as a left limit `s⁻`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Point {
    t: f64,
    left: bool,
}

impl Point {
    fn at(t: f64) -> Self {
        Point { t, left: false }
    }
    fn before(t: f64) -> Self {
        Point { t, left: true }
    }
    fn le(self, o: Point) -> bool {
        self.t < o.t || (self.t == o.t && (self.left || !o.left))
    }
}

/// `max_{j ≤ k} (f_k − f_j)`, floored at zero.
fn max_rise(f: impl Iterator<Item = f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut best = 0.0f64;
    for v in f {
        lo = lo.min(v);
        best = best.max(v - lo);
    }
    best
}

impl SwitchingSignal {
    pub fn new(t0: f64, instants: Vec<f64>, modes: Vec<Mode>, horizon: f64) -> Result<Self, SignalError> {
        if !t0.is_finite() || !horizon.is_finite() {
            return Err(SignalError::Invalid("t0 and horizon must be finite".into()));
        }
        if horizon < t0 {
            return Err(SignalError::Invalid(format!("horizon {horizon} precedes t0 {t0}")));
        }
        if modes.len() != instants.len() + 1 {
            return Err(SignalError::Invalid(format!(
                "{} instants need {} modes, got {}",
                instants.len(),
                instants.len() + 1,
                modes.len()
            )));
        }
        let mut prev = t0;
        for &t in &instants {
            if !t.is_finite() || t <= prev {
                return Err(SignalError::Invalid(format!("instants must be strictly increasing after t0; got {t} after {prev}")));
            }
            prev = t;
        }
        if prev > horizon {
            return Err(SignalError::Invalid(format!("instant {prev} beyond horizon {horizon}")));
        }
        Ok(SwitchingSignal { t0, instants, modes, horizon })
    }

    /// Single-mode signal without switches.
    pub fn constant(mode: Mode, t0: f64, horizon: f64) -> Result<Self, SignalError> {
        Self::new(t0, Vec::new(), vec![mode], horizon)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn instants(&self) -> &[f64] {
        &self.instants
    }
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
    pub fn switch_count(&self) -> usize {
        self.instants.len()
    }

    /// Distinct modes appearing in the signal.
    pub fn mode_set(&self) -> BTreeSet<Mode> {
        self.modes.iter().cloned().collect()
    }

    /// Start of interval `i` (`t0` for `i = 0`).
    pub fn interval_start(&self, i: usize) -> f64 {
        if i == 0 {
            self.t0
        } else {
            self.instants[i - 1]
        }
    }

    /// End of interval `i` (`horizon` for the last one).
    pub fn interval_end(&self, i: usize) -> f64 {
        self.instants.get(i).copied().unwrap_or(self.horizon)
    }

    /// Index `i` of the interval `[t_i, t_{i+1})` containing `t`; the horizon
    /// belongs to the last interval.
    pub fn interval_index(&self, t: f64) -> usize {
        self.instants.partition_point(|&ti| ti <= t)
    }

    /// `σ(t)`. Times outside `[t0, horizon]` are clamped.
    pub fn mode_at(&self, t: f64) -> &Mode {
        &self.modes[self.interval_index(t)]
    }

    /// `σ(t⁻)`, with `σ(t0⁻) = σ(t0)`.
    pub fn mode_before(&self, t: f64) -> &Mode {
        let i = self.instants.partition_point(|&ti| ti < t);
        &self.modes[i]
    }

    fn check_window(&self, s1: f64, s2: f64) -> Result<(), SignalError> {
        if s1 < self.t0 || s2 > self.horizon || s1 > s2 || s1.is_nan() || s2.is_nan() {
            return Err(SignalError::OutOfRange { s1, s2, t0: self.t0, horizon: self.horizon });
        }
        Ok(())
    }

    /// `N_p(s1, s2)`: jumps executed by mode `p` at instants in `(s1, s2]`.
    pub fn activation_count(&self, p: &Mode, s1: f64, s2: f64) -> Result<usize, SignalError> {
        self.check_window(s1, s2)?;
        Ok(self.count_between(p, Point::at(s1), Point::at(s2)))
    }

    /// `N_p(s1⁻, s2)`: as [`activation_count`](Self::activation_count) but the
    /// window also contains `s1` itself.
    pub fn activation_count_from_left(&self, p: &Mode, s1: f64, s2: f64) -> Result<usize, SignalError> {
        self.check_window(s1, s2)?;
        Ok(self.count_between(p, Point::before(s1), Point::at(s2)))
    }

    fn count_between(&self, p: &Mode, a: Point, b: Point) -> usize {
        self.instants
            .iter()
            .enumerate()
            .filter(|&(i, &ti)| {
                let inside = a.le(Point::before(ti)) && Point::at(ti).le(b);
                inside && &self.modes[i] == p
            })
            .count()
    }

    /// `T_p(s1, s2)`: time spent in `p` during `[s1, s2)`.
    pub fn active_time(&self, p: &Mode, s1: f64, s2: f64) -> Result<f64, SignalError> {
        self.check_window(s1, s2)?;
        Ok(self.time_between(p, s1, s2))
    }

    fn time_between(&self, p: &Mode, s1: f64, s2: f64) -> f64 {
        let mut total = 0.0;
        for (i, m) in self.modes.iter().enumerate() {
            if m != p {
                continue;
            }
            let lo = self.interval_start(i).max(s1);
            let hi = self.interval_end(i).min(s2);
            if hi > lo {
                total += hi - lo;
            }
        }
        total
    }

    /// Candidate window endpoints: every instant approached from both sides,
    /// plus `t0` and the horizon.
    #[cfg(test)]
    fn candidates(&self) -> Vec<Point> {
        let mut pts = vec![Point::at(self.t0)];
        for &t in &self.instants {
            pts.push(Point::before(t));
            pts.push(Point::at(t));
        }
        pts.push(Point::at(self.horizon));
        pts
    }

    /// `F(c) = Σ_{p∈set} τ_p N_p(t0, c] − T_p(t0, c)` at each candidate, in order.
    /// Window values are differences `F(b) − F(a)`.
    fn cumulative(&self, set: &BTreeSet<Mode>, tau: &BTreeMap<Mode, f64>) -> Vec<f64> {
        let weight = |p: &Mode| if set.contains(p) { tau.get(p).copied().unwrap_or(0.0) } else { 0.0 };
        let mut out = Vec::with_capacity(2 * self.instants.len() + 2);
        let mut f = 0.0;
        let mut last = self.t0;
        out.push(f);
        for (i, &t) in self.instants.iter().enumerate() {
            if set.contains(&self.modes[i]) {
                f -= t - last;
            }
            out.push(f);
            f += weight(&self.modes[i]);
            out.push(f);
            last = t;
        }
        if set.contains(self.modes.last().unwrap()) {
            f -= self.horizon - last;
        }
        out.push(f);
        out
    }

    /// Smallest `T_S ≥ 0` for which the mode-dependent average dwell time
    /// condition `Σ_{p∈S} N_p τ_p − T_p ≤ T_S` holds on every window.
    ///
    /// The objective is piecewise affine with jumps only at switching
    /// instants, so the supremum is attained (or approached) at the
    /// combinations of `t0`, `t_i⁻`, `t_i` and the horizon.
    pub fn mdadt_slack(&self, stable: &BTreeSet<Mode>, tau: &BTreeMap<Mode, f64>) -> f64 {
        max_rise(self.cumulative(stable, tau).into_iter())
    }

    /// Smallest `T_U ≥ 0` for which `Σ_{p∈U} N_p τ_p − T_p ≥ −T_U` holds on every window.
    pub fn mdalt_slack(&self, unstable: &BTreeSet<Mode>, tau: &BTreeMap<Mode, f64>) -> f64 {
        max_rise(self.cumulative(unstable, tau).into_iter().map(|v| -v))
    }

    /// Whether every switch `(σ(t_i), σ(t_i⁻))` belongs to `pairs`.
    pub fn admits(&self, pairs: &ModeChangeSet) -> bool {
        self.modes.windows(2).all(|w| pairs.contains(&(w[1].clone(), w[0].clone())))
    }

    /// Copy of the signal restricted to `[t0, t_end]`.
    pub fn truncated(&self, t_end: f64) -> Result<Self, SignalError> {
        let t_end = t_end.clamp(self.t0, self.horizon);
        let k = self.instants.partition_point(|&t| t <= t_end);
        Self::new(self.t0, self.instants[..k].to_vec(), self.modes[..=k].to_vec(), t_end)
    }

    /// Shortest interval that ends at a switching instant; infinite without switches.
    pub fn min_gap(&self) -> f64 {
        (0..self.instants.len())
            .map(|i| self.interval_end(i) - self.interval_start(i))
            .fold(f64::INFINITY, f64::min)
    }
}
