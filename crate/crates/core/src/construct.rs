//! Construction of a time-varying certificate `W` that decreases along flows
//! and does not increase at jumps, from a certificate with possibly unstable
//! modes and a signal meeting the dwell/leave slacks.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::certify::{
    check_dwell_conditions, check_dwell_slacks, dini_tolerance, Certificate, CertifyError, CheckOptions, Partition,
    DwellSpec, ViolationKind, ViolationReport,
};
use crate::rates::{PhiTransform, RateError};
use crate::signal::{Mode, SwitchingSignal};
use crate::simulate::{InputSignal, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructError {
    #[error("the upper envelope transform does not map onto the real line")]
    ImageNotFull,
    #[error("rate envelopes are required but cannot be derived from the certificate")]
    MissingEnvelopes,
    #[error("dwell inequalities fail at {} switching instant(s)", .0.len())]
    DwellViolated(Vec<ViolationReport>),
    #[error("signal exceeds the declared dwell/leave slacks")]
    SlackExceeded(Vec<ViolationReport>),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

/// Counting of the jump at `t_j` inside the correction terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Endpoints {
    /// Stable activations counted on `[t_j, t]`, unstable ones on `(t_j, t]`.
    #[default]
    Asymmetric,
    /// Both counted on `[t_j, t]`.
    Closed,
}

/// The correction
/// `h(t) = min_{j ≤ i} {0, (Σ_S T_p(t_j,t) − τ_p N_p(t_j⁻,t))(1−δ) − (Σ_U T_p(t_j,t) − τ_p N_p(t_j,t))(1+δ)}`
/// for `t ∈ [t_i, t_{i+1})`.
///
/// Every term shares the slope `1−δ` on stable intervals and `−(1+δ)` on
/// unstable ones, so the running minimum at each `t_i` determines `h` on the
/// whole interval.
#[derive(Clone, Debug)]
pub struct Correction {
    sig: SwitchingSignal,
    base: Vec<f64>,
    slope: Vec<f64>,
    lower: f64,
}

impl Correction {
    pub fn new(sig: &SwitchingSignal, partition: &Partition, dwell: &DwellSpec, endpoints: Endpoints) -> Self {
        let d = dwell.delta;
        let slope_of = |p: &Mode| {
            if partition.stable.contains(p) {
                1.0 - d
            } else if partition.unstable.contains(p) {
                -(1.0 + d)
            } else {
                0.0
            }
        };
        let modes = sig.modes();
        let mut base = vec![0.0];
        let mut slope = vec![slope_of(&modes[0])];
        for i in 1..modes.len() {
            let q = &modes[i - 1];
            let tau = dwell.tau(q);
            let left = base[i - 1] + slope[i - 1] * (sig.interval_start(i) - sig.interval_start(i - 1));
            let (carried, fresh) = if partition.stable.contains(q) {
                (-tau * (1.0 - d), -tau * (1.0 - d))
            } else if partition.unstable.contains(q) {
                let fresh = if endpoints == Endpoints::Closed { tau * (1.0 + d) } else { 0.0 };
                (tau * (1.0 + d), fresh)
            } else {
                (0.0, 0.0)
            };
            base.push((left + carried).min(fresh));
            slope.push(slope_of(&modes[i]));
        }
        let lower = -dwell.t_s * (1.0 - d) - dwell.t_u * (1.0 + d);
        Correction { sig: sig.clone(), base, slope, lower }
    }

    fn on_interval(&self, i: usize, t: f64) -> f64 {
        (self.base[i] + self.slope[i] * (t - self.sig.interval_start(i))).min(0.0)
    }

    /// `h(t)`.
    pub fn value(&self, t: f64) -> f64 {
        self.on_interval(self.sig.interval_index(t), t)
    }

    /// `h(t⁻)`; equals `h(t0)` at `t0`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let i = self.sig.instants().partition_point(|&ti| ti < t);
        self.on_interval(i, t)
    }

    /// `−T_S(1−δ) − T_U(1+δ)`, the lower end of the guaranteed range of `h`.
    pub fn lower_bound(&self) -> f64 {
        self.lower
    }
}

/// `h(t)` with the default endpoint convention.
pub fn correction(sig: &SwitchingSignal, partition: &Partition, dwell: &DwellSpec, t: f64) -> f64 {
    Correction::new(sig, partition, dwell, Endpoints::Asymmetric).value(t)
}

/// `W(t, x) = Φ⁻¹_{σ(t⁻)}(Φ_{σ(t)}(V_{σ(t)}(t, x)) + h(t))`.
#[derive(Clone, Debug)]
pub struct DecreasingCertificate {
    pub cert: Certificate,
    pub sig: SwitchingSignal,
    pub correction: Correction,
    transforms: BTreeMap<Mode, PhiTransform>,
    lower: PhiTransform,
    upper: PhiTransform,
}

/// Builds `W` after checking the dwell inequalities on `a_grid`, the
/// declared slacks and that the upper envelope transform is onto.
pub fn build_decreasing(
    cert: &Certificate,
    sig: &SwitchingSignal,
    a_grid: &[f64],
    endpoints: Endpoints,
) -> Result<DecreasingCertificate, ConstructError> {
    let env = cert.derived_envelopes().ok_or(ConstructError::MissingEnvelopes)?;
    let upper = PhiTransform::new(env.upper.clone())?;
    let lower = PhiTransform::new(env.lower.clone())?;
    if !upper.image_is_full() {
        return Err(ConstructError::ImageNotFull);
    }
    let dwell = check_dwell_conditions(cert, sig, a_grid)?;
    if !dwell.violations.is_empty() {
        return Err(ConstructError::DwellViolated(dwell.violations));
    }
    let slack = check_dwell_slacks(cert, sig);
    if !slack.is_empty() {
        return Err(ConstructError::SlackExceeded(slack));
    }
    Ok(DecreasingCertificate {
        cert: cert.clone(),
        sig: sig.clone(),
        correction: Correction::new(sig, &cert.partition, &cert.dwell, endpoints),
        transforms: cert.transforms()?,
        lower,
        upper,
    })
}

impl DecreasingCertificate {
    fn compose(&self, now: &Mode, before: &Mode, v: f64, h: f64) -> Result<f64, RateError> {
        if v <= 0.0 {
            return Ok(0.0);
        }
        self.transforms[before].inverse(self.transforms[now].value(v)? + h)
    }

    /// `W(t, x)`.
    pub fn value(&self, t: f64, x: &[f64]) -> Result<f64, RateError> {
        let now = self.sig.mode_at(t);
        let v = self.cert.v[now].eval(t, x);
        self.compose(now, self.sig.mode_before(t), v, self.correction.value(t))
    }

    /// `W(t⁻, x)`: the left limit along the flow of `σ(t⁻)`.
    pub fn left_value(&self, t: f64, x: &[f64]) -> Result<f64, RateError> {
        let before = self.sig.mode_before(t);
        let v = self.cert.v[before].eval(t, x);
        self.compose(before, before, v, self.correction.left_limit(t))
    }

    fn min_transform(&self, v: f64) -> Result<f64, RateError> {
        Ok(if v >= 1.0 { self.upper.value(v)? } else { self.lower.value(v)? })
    }

    fn max_transform(&self, v: f64) -> Result<f64, RateError> {
        Ok(if v >= 1.0 { self.lower.value(v)? } else { self.upper.value(v)? })
    }

    fn min_inverse(&self, y: f64) -> Result<f64, RateError> {
        if y < 0.0 {
            self.upper.inverse(y)
        } else {
            self.lower.inverse(y)
        }
    }

    fn max_inverse(&self, y: f64) -> Result<f64, RateError> {
        if y < 0.0 {
            match self.lower.inverse(y) {
                Err(RateError::OutOfImage { .. }) if y < self.lower.inf_image() => Ok(0.0),
                r => r,
            }
        } else {
            self.upper.inverse(y)
        }
    }

    /// Lower sandwich function of `W`:
    /// `min{Φ̲⁻¹, Φ̄⁻¹}(min{Φ̄, Φ̲}(α₁(r)) − T_S(1−δ) − T_U(1+δ))`.
    pub fn alpha1_tilde(&self, r: f64) -> Result<f64, RateError> {
        let a = self.cert.alpha1.eval(r);
        if a <= 0.0 {
            return Ok(0.0);
        }
        self.min_inverse(self.min_transform(a)? + self.correction.lower_bound())
    }

    /// Upper sandwich function of `W`: `max{Φ̲⁻¹, Φ̄⁻¹}(max{Φ̄, Φ̲}(α₂(r)))`.
    pub fn alpha2_tilde(&self, r: f64) -> Result<f64, RateError> {
        let a = self.cert.alpha2.eval(r);
        if a <= 0.0 {
            return Ok(0.0);
        }
        self.max_inverse(self.max_transform(a)?)
    }

    /// Jump bound below threshold, `max{α₃, χ}`.
    pub fn alpha3_tilde(&self, u: f64) -> f64 {
        self.cert.alpha3.eval(u).max(self.cert.chi.eval(u))
    }

    /// `(t, V, W, h)` at every sample; jump instants appear with the
    /// pre-jump row first.
    pub fn table(&self, traj: &Trajectory) -> Result<Vec<(f64, f64, f64, f64)>, RateError> {
        let mut rows = Vec::new();
        for (si, seg) in traj.segments.iter().enumerate() {
            let n = seg.times.len();
            for k in 0..n {
                let (t, x) = (seg.times[k], seg.states[k].as_slice());
                let v = self.cert.v[&seg.mode].eval(t, x);
                let (w, h) = self.sample(si, k, n, &seg.mode, v, t)?;
                rows.push((t, v, w, h));
            }
        }
        Ok(rows)
    }

    /// `(W, h)` at sample `k` of segment `si`. A segment's first sample after
    /// a jump carries `σ(t⁻)` of the previous mode; its final sample is a
    /// left limit.
    fn sample(&self, si: usize, k: usize, n: usize, mode: &Mode, v: f64, t: f64) -> Result<(f64, f64), RateError> {
        if k == 0 && si > 0 {
            let h = self.correction.value(t);
            let before = self.sig.modes()[si - 1].clone();
            return Ok((self.compose(mode, &before, v, h)?, h));
        }
        let h = if k + 1 == n && si + 1 < self.sig.modes().len() {
            self.correction.left_limit(t)
        } else {
            self.correction.on_interval(si, t)
        };
        Ok((self.compose(mode, mode, v, h)?, h))
    }
}

/// Checks that `W` decreases at rate `min{δ, 1}·|φ_{σ(t)}|(W)` along flows and
/// does not increase at jumps while above `χ(‖u‖∞)`; below it the post-jump
/// value must stay under `max{α₃, χ}(‖u‖∞)`.
pub fn certify_decrease(
    dec: &DecreasingCertificate,
    traj: &Trajectory,
    input: &InputSignal,
    opts: &CheckOptions,
) -> Result<Vec<ViolationReport>, RateError> {
    let u = input.sup_norm();
    let threshold = dec.cert.chi.eval(u);
    let factor = dec.cert.dwell.delta.min(1.0);
    let mut out = Vec::new();
    let mut last_w: Option<f64> = None;
    for (si, seg) in traj.segments.iter().enumerate() {
        let n = seg.times.len();
        let mut ws = Vec::with_capacity(n);
        for k in 0..n {
            let (t, x) = (seg.times[k], seg.states[k].as_slice());
            let v = dec.cert.v[&seg.mode].eval(t, x);
            ws.push(dec.sample(si, k, n, &seg.mode, v, t)?.0);
        }
        if let (Some(pre), true) = (last_w, si > 0) {
            let j = &traj.jumps[si - 1];
            let post = ws[0];
            let (kind, rhs) = if pre >= threshold { (ViolationKind::Jump, pre) } else { (ViolationKind::JumpBelowThreshold, dec.alpha3_tilde(u)) };
            if post > rhs + opts.rel_tol * (1.0 + rhs.abs()) {
                out.push(ViolationReport::new(kind, j.time, format!("{}->{}", j.from, j.to), post, rhs));
            }
        }
        let phi = &dec.cert.phi[&seg.mode];
        for k in 0..n.saturating_sub(1) {
            if ws[k] < threshold {
                continue;
            }
            let h = seg.times[k + 1] - seg.times[k];
            let d = (ws[k + 1] - ws[k]) / h;
            let rhs = -factor * phi.eval(ws[k]).abs();
            if d > rhs + dini_tolerance(opts, h, ws[k]) {
                out.push(ViolationReport::new(ViolationKind::Decrease, seg.times[k], seg.mode.as_str(), d, rhs));
            }
        }
        last_w = ws.last().copied();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn m(s: &str) -> Mode {
        Mode::from(s)
    }

    fn part(stable: &[&str], unstable: &[&str]) -> Partition {
        Partition {
            stable: stable.iter().map(|&s| m(s)).collect::<BTreeSet<_>>(),
            unstable: unstable.iter().map(|&s| m(s)).collect::<BTreeSet<_>>(),
        }
    }

    fn dwell(taus: &[(&str, f64)], delta: f64, t_s: f64, t_u: f64) -> DwellSpec {
        DwellSpec { tau: taus.iter().map(|&(k, v)| (m(k), v)).collect(), delta, t_s, t_u }
    }

    /// The correction evaluated term by term from the signal counters.
    fn direct(sig: &SwitchingSignal, pt: &Partition, dw: &DwellSpec, t: f64) -> f64 {
        let i = sig.interval_index(t);
        let d = dw.delta;
        let mut best = 0.0f64;
        for j in 0..=i {
            let tj = sig.interval_start(j);
            let mut gs = 0.0;
            for p in &pt.stable {
                gs += sig.active_time(p, tj, t).unwrap() - dw.tau(p) * sig.activation_count_from_left(p, tj, t).unwrap() as f64;
            }
            let mut gu = 0.0;
            for p in &pt.unstable {
                gu += sig.active_time(p, tj, t).unwrap() - dw.tau(p) * sig.activation_count(p, tj, t).unwrap() as f64;
            }
            best = best.min(gs * (1.0 - d) - gu * (1.0 + d));
        }
        best
    }

    #[test]
    fn single_stable_mode_without_jumps() {
        let sig = SwitchingSignal::constant(m("s"), 0.0, 2.0).unwrap();
        let pt = part(&["s"], &[]);
        let dw = dwell(&[("s", 1.0)], 0.5, 1.0, 0.0);
        assert_eq!(correction(&sig, &pt, &dw, 0.4), 0.0);
    }

    #[test]
    fn drop_after_stable_departure() {
        // Leaving s at t = 0.2 charges τ(1 − δ) = 0.5, recovered at rate 0.5.
        let sig = SwitchingSignal::new(0.0, vec![0.2], vec![m("s"), m("s")], 2.0).unwrap();
        let pt = part(&["s"], &[]);
        let dw = dwell(&[("s", 1.0)], 0.5, 1.0, 0.0);
        let h = Correction::new(&sig, &pt, &dw, Endpoints::Asymmetric);
        assert!((h.value(0.2) + 0.5).abs() < 1e-15);
        assert!((h.value(0.6) + 0.3).abs() < 1e-15);
        assert_eq!(h.left_limit(0.2), 0.0);
        assert_eq!(h.value(1.5), 0.0);
    }

    #[test]
    fn recurrence_matches_direct_formula() {
        let sig = SwitchingSignal::new(
            0.0,
            vec![0.7, 1.0, 1.9, 2.2, 3.5, 3.6],
            vec![m("s"), m("u"), m("s"), m("u"), m("s"), m("u"), m("s")],
            5.0,
        )
        .unwrap();
        let pt = part(&["s"], &["u"]);
        let dw = dwell(&[("s", 0.6), ("u", 0.4)], 0.3, 1.0, 1.0);
        let h = Correction::new(&sig, &pt, &dw, Endpoints::Asymmetric);
        for k in 0..=500 {
            let t = k as f64 * 0.01;
            assert!((h.value(t) - direct(&sig, &pt, &dw, t)).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn closed_endpoints_differ_only_for_unstable_departures() {
        let sig = SwitchingSignal::new(0.0, vec![0.5], vec![m("u"), m("s")], 2.0).unwrap();
        let pt = part(&["s"], &["u"]);
        let dw = dwell(&[("s", 0.6), ("u", 0.4)], 0.3, 1.0, 1.0);
        let a = Correction::new(&sig, &pt, &dw, Endpoints::Asymmetric);
        let c = Correction::new(&sig, &pt, &dw, Endpoints::Closed);
        assert!(a.value(0.5) <= c.value(0.5));
        assert_eq!(a.value(0.3), c.value(0.3));
    }
}
