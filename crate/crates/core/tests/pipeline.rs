use std::collections::{BTreeMap, BTreeSet};

use isscert::bounds::{build_bound, certify_iss};
use isscert::certify::{check_trajectory, default_a_grid, Certificate, CertificateForm, CheckOptions, DwellSpec, LyapunovFn, Partition};
use isscert::construct::{build_decreasing, certify_decrease, Correction, Endpoints};
use isscert::simulate::simulate;
use isscert::{ComparisonFunction, InputSignal, LinearMode, LinearSystemModel, Mode, RateFunction, SwitchingSignal};
use proptest::prelude::*;

fn m(s: &str) -> Mode {
    Mode::from(s)
}

fn scalar_cert(tau: f64, t_s: f64) -> Certificate {
    let p = m("p");
    Certificate {
        form: CertificateForm::Implication,
        v: [(p.clone(), LyapunovFn::Power { c: 1.0, k: 2.0 })].into_iter().collect(),
        alpha1: ComparisonFunction::quadratic(1.0),
        alpha2: ComparisonFunction::quadratic(1.0),
        alpha3: ComparisonFunction::quadratic(16.0),
        chi: ComparisonFunction::quadratic(4.0),
        phi: [(p.clone(), RateFunction::linear(-1.0))].into_iter().collect(),
        psi: [(p.clone(), RateFunction::linear(1.5))].into_iter().collect(),
        partition: Partition { stable: [p.clone()].into_iter().collect(), ..Default::default() },
        dwell: DwellSpec { tau: [(p, tau)].into_iter().collect(), delta: 0.2, t_s, t_u: 0.0 },
        envelopes: None,
    }
}

// ẋ = −x + u, x⁺ = 1.2 x + 0.1 u: V decays at rate 2 minus the input term,
// declared −1 with χ = 4s²; jumps grow V by 1.44 + input.
fn scalar_run(instants: Vec<f64>, x0: f64) -> (Certificate, InputSignal, isscert::Trajectory, SwitchingSignal) {
    let model = LinearSystemModel::new([(m("p"), LinearMode::scalar(-1.0, 1.0, 1.2, 0.1))].into_iter().collect()).unwrap();
    let n = instants.len();
    let sig = SwitchingSignal::new(0.0, instants, vec![m("p"); n + 1], 8.0).unwrap();
    let tau = 1.6f64.ln() / 0.8 * 1.05;
    let probe = scalar_cert(tau, 0.0);
    let t_s = sig.mdadt_slack(&probe.partition.stable, &probe.dwell.tau);
    let cert = scalar_cert(tau, t_s);
    let input = InputSignal::sinusoid(vec![0.5], 1.3, 0.2);
    let traj = simulate(&model.to_model(), &sig, &input, &[x0], 1e-3).unwrap();
    (cert, input, traj, sig)
}

#[test]
fn scalar_pipeline_end_to_end() {
    let (cert, input, traj, sig) = scalar_run(vec![0.7, 1.4, 3.0, 3.5, 6.0], 3.0);
    let opts = CheckOptions::default();
    assert!(check_trajectory(&cert, &traj, &input, &opts).is_empty());
    let bound = build_bound(&cert, None).unwrap();
    assert!(certify_iss(&bound, &traj, &input).is_empty());
    let dec = build_decreasing(&cert, &sig, &default_a_grid(), Endpoints::Asymmetric).unwrap();
    assert!(certify_decrease(&dec, &traj, &input, &opts).unwrap().is_empty());
}

#[test]
fn dense_jumps_break_the_bound_budget() {
    // Ten jumps in one second exceed any slack the certificate was built for.
    let (cert, input, traj, _) = scalar_run((1..=10).map(|i| i as f64 * 0.1).collect(), 3.0);
    let tight = Certificate { dwell: DwellSpec { t_s: 0.0, ..cert.dwell.clone() }, ..cert };
    let bound = build_bound(&tight, None).unwrap();
    assert!(!certify_iss(&bound, &traj, &input).is_empty());
}

fn arb_signal() -> impl Strategy<Value = SwitchingSignal> {
    prop::collection::vec((0.01f64..1.0, 0usize..3), 0..15).prop_map(|steps| {
        let names = ["a", "b", "c"];
        let mut t = 0.0;
        let mut instants = Vec::new();
        let mut modes = vec![m("a")];
        for (d, k) in steps {
            t += d;
            instants.push(t);
            modes.push(m(names[k]));
        }
        SwitchingSignal::new(0.0, instants, modes, t + 0.5).unwrap()
    })
}

proptest! {
    #[test]
    fn slack_dominates_every_window(sig in arb_signal(), u in 0.0f64..1.0, v in 0.0f64..1.0, ta in 0.05f64..1.0, tb in 0.05f64..1.0) {
        let tau: BTreeMap<Mode, f64> = [(m("a"), ta), (m("b"), tb), (m("c"), 0.3)].into_iter().collect();
        let set: BTreeSet<Mode> = [m("a"), m("b")].into_iter().collect();
        let span = sig.horizon() - sig.t0();
        let (s1, s2) = (sig.t0() + span * u.min(v), sig.t0() + span * u.max(v));
        let obj: f64 = set
            .iter()
            .map(|p| tau[p] * sig.activation_count(p, s1, s2).unwrap() as f64 - sig.active_time(p, s1, s2).unwrap())
            .sum();
        prop_assert!(obj <= sig.mdadt_slack(&set, &tau) + 1e-9);
        prop_assert!(-obj <= sig.mdalt_slack(&set, &tau) + 1e-9);
    }

    #[test]
    fn correction_stays_in_its_band(sig in arb_signal(), w in 0.0f64..1.0) {
        let tau: BTreeMap<Mode, f64> = [(m("a"), 0.4), (m("b"), 0.2), (m("c"), 0.1)].into_iter().collect();
        let part = Partition { stable: [m("a"), m("b")].into_iter().collect(), unstable: [m("c")].into_iter().collect() };
        let t_s = sig.mdadt_slack(&part.stable, &tau);
        let t_u = sig.mdalt_slack(&part.unstable, &tau);
        let dwell = DwellSpec { tau, delta: 0.3, t_s, t_u };
        let c = Correction::new(&sig, &part, &dwell, Endpoints::Asymmetric);
        let t = sig.t0() + w * (sig.horizon() - sig.t0());
        let h = c.value(t);
        prop_assert!(h <= 1e-12);
        prop_assert!(h >= -t_s * 0.7 - t_u * 1.3 - 1e-9);
    }

    #[test]
    fn identity_jumps_leave_state_unchanged(sig in arb_signal(), x0 in -5.0f64..5.0) {
        let lm = LinearMode::scalar(0.0, 0.0, 1.0, 0.0);
        let model = LinearSystemModel::new(["a", "b", "c"].iter().map(|n| (m(n), lm.clone())).collect()).unwrap();
        let step = (sig.min_gap() / 2.0).min(0.01);
        let traj = simulate(&model.to_model(), &sig, &InputSignal::zero(1), &[x0], step).unwrap();
        prop_assert_eq!(traj.jumps.len(), sig.switch_count());
        prop_assert!((traj.final_state()[0] - x0).abs() <= 1e-12 * (1.0 + x0.abs()));
    }
}
