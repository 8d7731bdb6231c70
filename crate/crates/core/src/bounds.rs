//! Explicit ISS bound `‖x(t)‖ ≤ β(‖x0‖, t − t0) + γ(‖u‖∞)` assembled from a
//! certificate in implication form.

use thiserror::Error;

use crate::certify::{default_rate_grid, Certificate, Envelopes, ViolationKind, ViolationReport};
use crate::rates::{envelope_check, ComparisonFunction, PhiTransform, RateError, DOMAIN};
use crate::signal::SwitchingSignal;
use crate::simulate::{norm, reachability_bound, EstimateOptions, InputSignal, SimError, SystemModel, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("u + C − m = {0} is negative")]
    DegenerateGamma(f64),
    #[error("rate envelopes are required but cannot be derived from the certificate")]
    MissingEnvelopes,
    #[error("declared rates leave the envelopes at s = {s}")]
    EnvelopeViolated { s: f64 },
    #[error("the upper envelope transform is bounded below while the lower one is not")]
    ImageNotFull,
    #[error("delta must lie in (0, 1], got {0}")]
    InvalidDelta(f64),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Which branch of `β̃` applies, decided by `m = inf image(Φ̲)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundCase {
    FiniteInfimum { m: f64 },
    Unbounded,
}

/// Sampled `sup ‖x(t)‖` on `[t0, t0 + C/δ]` per initial radius, used to
/// raise `β` on the short horizon. It depends on the `t0` it was sampled at.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachEnvelope {
    pub t0: f64,
    pub points: Vec<(f64, f64)>,
}

impl ReachEnvelope {
    /// Value at the next sampled radius at or above `r`, scaled linearly past the last one.
    pub fn eval(&self, r: f64) -> f64 {
        let mut best = 0.0f64;
        for &(ri, k) in &self.points {
            best = best.max(k);
            if ri >= r {
                return best;
            }
        }
        match self.points.last() {
            Some(&(rl, _)) if rl > 0.0 => best * r / rl,
            _ => 0.0,
        }
    }
}

/// Samples a [`ReachEnvelope`] at `radii` with `‖u‖∞ ≤ d` over `[t0, t0 + tau]`.
pub fn reach_envelope(
    model: &SystemModel,
    sig: &SwitchingSignal,
    radii: &[f64],
    d: f64,
    tau: f64,
    samples: usize,
    opts: EstimateOptions,
) -> Result<ReachEnvelope, SimError> {
    let mut points = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        let o = EstimateOptions { seed: opts.seed.wrapping_add(i as u64), ..opts };
        points.push((r, reachability_bound(model, sig, r, d, tau, samples, o)?));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ReachEnvelope { t0: sig.t0(), points })
}

#[derive(Clone, Debug)]
pub struct IssBound {
    alpha1: ComparisonFunction,
    alpha2: ComparisonFunction,
    alpha3: ComparisonFunction,
    chi: ComparisonFunction,
    lower: PhiTransform,
    upper: PhiTransform,
    delta: f64,
    c: f64,
    case: BoundCase,
    short_horizon: Option<ReachEnvelope>,
}

/// Assembles `β` and `γ` from `cert`, with `C = (1−δ)T_S + (1+δ)T_U`.
pub fn build_bound(cert: &Certificate, envelopes: Option<Envelopes>) -> Result<IssBound, BoundError> {
    let delta = cert.dwell.delta;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(BoundError::InvalidDelta(delta));
    }
    let c = (1.0 - delta) * cert.dwell.t_s + (1.0 + delta) * cert.dwell.t_u;
    if c < 0.0 {
        return Err(BoundError::DegenerateGamma(c));
    }
    let env = envelopes.or_else(|| cert.derived_envelopes()).ok_or(BoundError::MissingEnvelopes)?;
    let rates: Vec<_> = cert.phi.values().collect();
    envelope_check(&rates, &env.lower, &env.upper, &default_rate_grid()).map_err(|v| BoundError::EnvelopeViolated { s: v.s })?;
    let lower = PhiTransform::new(env.lower)?;
    let upper = PhiTransform::new(env.upper)?;
    let m = lower.inf_image();
    let case = if m.is_finite() {
        BoundCase::FiniteInfimum { m }
    } else {
        if upper.inf_image().is_finite() {
            return Err(BoundError::ImageNotFull);
        }
        BoundCase::Unbounded
    };
    Ok(IssBound {
        alpha1: cert.alpha1.clone(),
        alpha2: cert.alpha2.clone(),
        alpha3: cert.alpha3.clone(),
        chi: cert.chi.clone(),
        lower,
        upper,
        delta,
        c,
        case,
        short_horizon: None,
    })
}

/// `Φ(v)` extended past the numerical domain: small arguments map to the
/// value at the domain edge, large ones to `+∞`.
fn phi_ext(t: &PhiTransform, v: f64) -> f64 {
    match t.value(v) {
        Ok(y) => y,
        Err(_) if v < 1.0 => t.value(DOMAIN.0).unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::INFINITY,
    }
}

/// `Φ⁻¹(y)` extended by `0` below the image and `+∞` above it. Inside the
/// image but below the numerical domain the domain edge is returned.
fn inv_ext(t: &PhiTransform, y: f64) -> f64 {
    if y == f64::INFINITY {
        return f64::INFINITY;
    }
    if y <= t.inf_image() {
        return 0.0;
    }
    if y >= t.sup_image() {
        return f64::INFINITY;
    }
    match t.inverse(y) {
        Ok(v) => v,
        Err(_) if y < 0.0 => DOMAIN.0,
        Err(_) => f64::INFINITY,
    }
}

impl IssBound {
    pub fn with_short_horizon(mut self, env: ReachEnvelope) -> Self {
        self.short_horizon = Some(env);
        self
    }

    pub fn case(&self) -> BoundCase {
        self.case
    }

    /// `C = (1−δ)T_S + (1+δ)T_U`.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Length `C/δ` of the horizon on which the reachability envelope applies.
    pub fn short_horizon_length(&self) -> f64 {
        self.c / self.delta
    }

    pub fn short_horizon(&self) -> Option<&ReachEnvelope> {
        self.short_horizon.as_ref()
    }

    /// `Γ(u, v) = u + C − (u + C − m)(1 − e^{−v/(u + C − m)})`.
    pub fn gamma_fn(&self, u: f64, v: f64) -> Result<f64, BoundError> {
        let m = match self.case {
            BoundCase::FiniteInfimum { m } => m,
            BoundCase::Unbounded => f64::NEG_INFINITY,
        };
        if m == f64::NEG_INFINITY {
            return Ok(u + self.c - v);
        }
        let g = u + self.c - m;
        if g < 0.0 {
            return Err(BoundError::DegenerateGamma(g));
        }
        if g == 0.0 {
            return Ok(u + self.c);
        }
        Ok(u + self.c - g * (-(-v / g).exp_m1()))
    }

    /// `β̃(r, s)` on Lyapunov levels.
    pub fn beta_tilde(&self, r: f64, s: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let ds = self.delta * s;
        let pu = phi_ext(&self.upper, r);
        let second = inv_ext(&self.upper, pu + self.c - ds);
        let pl = phi_ext(&self.lower, r);
        let first = match self.case {
            BoundCase::FiniteInfimum { .. } => match self.gamma_fn(pl, ds) {
                Ok(g) => inv_ext(&self.lower, g),
                Err(_) => f64::INFINITY,
            },
            BoundCase::Unbounded => inv_ext(&self.lower, pl + self.c - ds),
        };
        first.max(second)
    }

    /// `β(r, s) = α₁⁻¹(β̃(α₂(r), s))`, raised to the reachability envelope on `[0, C/δ]`.
    pub fn beta(&self, r: f64, s: f64) -> f64 {
        let base = self.alpha1.inverse(self.beta_tilde(self.alpha2.eval(r), s));
        match &self.short_horizon {
            Some(env) if s <= self.short_horizon_length() => base.max(env.eval(r)),
            _ => base,
        }
    }

    /// `(χ(u), γ₂(u), γ₃(u))` with `γ₂ = max{α₃, χ}` and
    /// `γ₃ = max{γ₂, α₂(β(α₁⁻¹(γ₂), 0))}`.
    pub fn gain_levels(&self, u: f64) -> (f64, f64, f64) {
        let chi = self.chi.eval(u);
        let g2 = self.alpha3.eval(u).max(chi);
        let g3 = g2.max(self.alpha2.eval(self.beta(self.alpha1.inverse(g2), 0.0)));
        (chi, g2, g3)
    }

    /// `γ(u) = α₁⁻¹(γ₃(u))`.
    pub fn gamma(&self, u: f64) -> f64 {
        self.alpha1.inverse(self.gain_levels(u).2)
    }
}

/// `‖x(t)‖ ≤ β(‖x0‖, t − t0) + γ(‖u‖∞)` at every sample, relative tolerance `1e−9`.
pub fn certify_iss(bound: &IssBound, traj: &Trajectory, input: &InputSignal) -> Vec<ViolationReport> {
    let r0 = norm(traj.initial_state());
    let t0 = traj.t0();
    let g = bound.gamma(input.sup_norm());
    traj.samples()
        .filter_map(|(t, p, x)| {
            let lhs = norm(x);
            let rhs = bound.beta(r0, t - t0) + g;
            (lhs > rhs * (1.0 + 1e-9)).then(|| ViolationReport::new(ViolationKind::Iss, t, p.as_str(), lhs, rhs))
        })
        .collect()
}

/// Largest `‖x(t)‖ − (β + γ)` over the samples; negative when the bound holds.
pub fn iss_margin(bound: &IssBound, traj: &Trajectory, input: &InputSignal) -> f64 {
    let r0 = norm(traj.initial_state());
    let t0 = traj.t0();
    let g = bound.gamma(input.sup_norm());
    traj.samples()
        .map(|(t, _, x)| norm(x) - (bound.beta(r0, t - t0) + g))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{CertificateForm, DwellSpec, LyapunovFn, Partition};
    use crate::rates::RateFunction;
    use crate::signal::Mode;

    fn cert(phi: RateFunction, t_s: f64, t_u: f64, delta: f64) -> Certificate {
        let p = Mode::from("p");
        let stable = phi.eval(1.0) < 0.0;
        let mut part = Partition::default();
        if stable {
            part.stable.insert(p.clone());
        } else {
            part.unstable.insert(p.clone());
        }
        Certificate {
            form: CertificateForm::Implication,
            v: [(p.clone(), LyapunovFn::Power { c: 1.0, k: 2.0 })].into_iter().collect(),
            alpha1: ComparisonFunction::quadratic(1.0),
            alpha2: ComparisonFunction::quadratic(1.0),
            alpha3: ComparisonFunction::quadratic(4.0),
            chi: ComparisonFunction::quadratic(2.0),
            phi: [(p.clone(), phi)].into_iter().collect(),
            psi: [(p.clone(), RateFunction::linear(1.0))].into_iter().collect(),
            partition: part,
            dwell: DwellSpec { tau: [(p, 1.0)].into_iter().collect(), delta, t_s, t_u },
            envelopes: None,
        }
    }

    #[test]
    fn linear_case_closed_form() {
        // Φ(v) = ln(v)/2, β̃(r, s) = r·e^{2(C − δs)}
        let b = build_bound(&cert(RateFunction::linear(-2.0), 0.5, 0.0, 0.5), None).unwrap();
        assert_eq!(b.case(), BoundCase::Unbounded);
        assert!((b.c() - 0.25).abs() < 1e-15);
        for &(r, s) in &[(3.0f64, 0.0f64), (0.2, 1.0), (10.0, 7.5)] {
            let expect = r * (2.0 * (0.25 - 0.5 * s)).exp();
            assert!((b.beta_tilde(r, s) - expect).abs() <= 1e-12 * expect);
        }
        assert!((b.gamma_fn(1.0, 0.0).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn sublinear_case_matches_hand_evaluation() {
        // |φ| = √s: Φ(v) = 2(√v − 1), m = −2, Φ⁻¹(y) = (1 + y/2)²
        let b = build_bound(&cert(RateFunction::power(-1.0, 0.5), 0.5, 0.0, 0.5), None).unwrap();
        let c: f64 = 0.25;
        assert_eq!(b.case(), BoundCase::FiniteInfimum { m: -2.0 });
        let phi = |v: f64| 2.0 * (v.sqrt() - 1.0);
        let inv = |y: f64| if y <= -2.0 { 0.0 } else { (1.0 + y / 2.0).powi(2) };
        for &(r, s) in &[(4.0f64, 0.0f64), (4.0, 3.0), (0.5, 10.0), (9.0, 40.0)] {
            let u: f64 = phi(r);
            let g = u + c;
            let gg = u + c + 2.0;
            let gamma = g - gg * (1.0 - (-0.5 * s / gg).exp());
            let expect = inv(gamma).max(inv(u + c - 0.5 * s));
            assert!((b.beta_tilde(r, s) - expect).abs() <= 1e-9 * expect.max(1.0), "r={r} s={s}");
        }
    }

    #[test]
    fn degenerate_gamma_reported() {
        let b = build_bound(&cert(RateFunction::power(-1.0, 0.5), 0.0, 0.0, 0.5), None).unwrap();
        assert!(matches!(b.gamma_fn(-3.0, 1.0), Err(BoundError::DegenerateGamma(_))));
        assert_eq!(b.gamma_fn(-2.0, 1.0).unwrap(), -2.0);
    }

    #[test]
    fn negative_slack_constant_rejected() {
        let r = build_bound(&cert(RateFunction::linear(-1.0), -1.0, 0.0, 0.5), None);
        assert!(matches!(r, Err(BoundError::DegenerateGamma(c)) if c < 0.0));
    }

    #[test]
    fn beta_monotone_and_vanishing() {
        let b = build_bound(&cert(RateFunction::linear(-1.0), 1.0, 0.0, 0.4), None).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let v = b.beta(2.0, k as f64 * 0.5);
            assert!(v <= prev);
            prev = v;
        }
        assert!(b.beta(2.0, 200.0) < 1e-10);
        assert!(b.beta(1.0, 0.0) < b.beta(2.0, 0.0));
        assert_eq!(b.beta(0.0, 0.0), 0.0);
    }

    #[test]
    fn gains_ordered() {
        let b = build_bound(&cert(RateFunction::linear(-1.0), 1.0, 0.0, 0.4), None).unwrap();
        let (chi, g2, g3) = b.gain_levels(0.7);
        assert!(chi <= g2 && g2 <= g3);
        assert!((g2 - 4.0 * 0.49).abs() < 1e-12);
    }

    #[test]
    fn envelope_patch_raises_short_horizon() {
        let b = build_bound(&cert(RateFunction::linear(-1.0), 1.0, 0.0, 0.5), None).unwrap();
        let plain = b.beta(1.0, 0.1);
        let env = ReachEnvelope { t0: 0.0, points: vec![(1.0, 100.0)] };
        let b = b.with_short_horizon(env);
        assert_eq!(b.beta(1.0, 0.1), 100.0);
        assert!(b.beta(1.0, 0.1) > plain);
        assert!(b.beta(1.0, 5.0) < 100.0);
    }

    #[test]
    fn unit_decay_value() {
        let b = build_bound(&cert(RateFunction::linear(-1.0), 0.0, 0.0, 0.5), None).unwrap();
        assert!((b.beta_tilde(1.0, 2.0) - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn gain_levels_examples() {
        let mut c = cert(RateFunction::linear(-1.0), 1.0, 0.0, 0.4);
        c.chi = ComparisonFunction::linear(1.0);
        c.alpha3 = ComparisonFunction::linear(2.0);
        let b = build_bound(&c, None).unwrap();
        assert_eq!(b.gain_levels(0.0), (0.0, 0.0, 0.0));
        assert_eq!(b.gain_levels(1.0).1, 2.0);
    }

    fn scalar_run(x0: f64, fake: Option<f64>) -> (IssBound, Trajectory, InputSignal) {
        use crate::simulate::{simulate, LinearMode, LinearSystemModel};
        // ẋ = −x + u, V = x², V̇ ≤ −V + u² so φ = −s, χ = s² in dissipation,
        // and with u ≡ 0 the implication form holds for any χ
        let mut c = cert(RateFunction::linear(-1.0), 0.0, 0.0, 0.5);
        c.chi = ComparisonFunction::quadratic(1.0);
        let b = build_bound(&c, None).unwrap();
        let model = LinearSystemModel::new([(Mode::from("p"), LinearMode::scalar(-1.0, 1.0, 1.0, 0.0))].into_iter().collect()).unwrap();
        let sig = SwitchingSignal::constant(Mode::from("p"), 0.0, 5.0).unwrap();
        let u = InputSignal::zero(1);
        let mut tr = simulate(&model.to_model(), &sig, &u, &[x0], 1e-2).unwrap();
        if let Some(v) = fake {
            let k = tr.segments[0].states.len() / 2;
            tr.segments[0].states[k][0] = v;
        }
        (b, tr, u)
    }

    #[test]
    fn certify_iss_examples() {
        let (b, tr, u) = scalar_run(3.0, None);
        assert!(certify_iss(&b, &tr, &u).is_empty());
        assert!(iss_margin(&b, &tr, &u) < 0.0);
        let (b, tr, u) = scalar_run(0.0, None);
        assert!(certify_iss(&b, &tr, &u).is_empty());
        let (b, tr, u) = scalar_run(3.0, Some(50.0));
        let v = certify_iss(&b, &tr, &u);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Iss);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gamma_dominates_linear_decay(u in -1.9f64..20.0, v in 0.0f64..50.0, ts in 0.0f64..3.0) {
                let b = build_bound(&cert(RateFunction::power(-1.0, 0.5), ts, 0.0, 0.5), None).unwrap();
                let g = b.gamma_fn(u, v).unwrap();
                prop_assert!(g >= u + b.c() - v - 1e-12);
                prop_assert!(g <= u + b.c() + 1e-12);
            }

            #[test]
            fn gain_levels_ordered(u in 0.0f64..100.0) {
                let b = build_bound(&cert(RateFunction::linear(-1.0), 1.0, 0.5, 0.4), None).unwrap();
                let (a1, a2, a3) = b.gain_levels(u);
                prop_assert!(a1 <= a2 && a2 <= a3);
            }

            #[test]
            fn beta_increasing_in_r(r in 0.01f64..100.0, dr in 0.01f64..10.0, s in 0.0f64..20.0) {
                let b = build_bound(&cert(RateFunction::power(-1.0, 0.5), 0.5, 0.0, 0.5), None).unwrap();
                let lo = b.beta(r, s);
                let hi = b.beta(r + dr, s);
                prop_assert!(lo < hi || (lo == 0.0 && hi == 0.0));
            }
        }
    }
}
