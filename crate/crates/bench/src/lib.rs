//! Fixtures shared by the kernel benchmarks.

use isscert::certify::{Certificate, CertificateForm, DwellSpec, LyapunovFn, Partition};
use isscert::{ComparisonFunction, LinearMode, LinearSystemModel, Mode, RateFunction, SwitchingSignal};

/// Scalar two-mode system with one contracting and one expanding mode.
pub fn two_mode_model() -> LinearSystemModel {
    LinearSystemModel::new(
        [
            (Mode::from("s"), LinearMode::scalar(-1.5, 1.0, 1.5, 0.2)),
            (Mode::from("u"), LinearMode::scalar(0.25, 1.0, 0.3, 0.2)),
        ]
        .into_iter()
        .collect(),
    )
    .unwrap()
}

/// Alternating signal with `n` switches, dwelling 0.9 in `s` and 0.4 in `u`.
pub fn alternating_signal(n: usize) -> SwitchingSignal {
    let mut t = 0.0;
    let mut instants = Vec::with_capacity(n);
    let mut modes = vec![Mode::from("s")];
    for i in 0..n {
        t += if i % 2 == 0 { 0.9 } else { 0.4 };
        instants.push(t);
        modes.push(Mode::from(if i % 2 == 0 { "u" } else { "s" }));
    }
    SwitchingSignal::new(0.0, instants, modes, t + 0.5).unwrap()
}

pub fn two_mode_cert(sig: &SwitchingSignal) -> Certificate {
    let v = LyapunovFn::Power { c: 1.0, k: 2.0 };
    let mut cert = Certificate {
        form: CertificateForm::Implication,
        v: [(Mode::from("s"), v.clone()), (Mode::from("u"), v)].into_iter().collect(),
        alpha1: ComparisonFunction::quadratic(1.0),
        alpha2: ComparisonFunction::quadratic(1.0),
        alpha3: ComparisonFunction::quadratic(38.44),
        chi: ComparisonFunction::quadratic(16.0),
        phi: [(Mode::from("s"), RateFunction::linear(-2.0)), (Mode::from("u"), RateFunction::linear(2.0))].into_iter().collect(),
        psi: [(Mode::from("s"), RateFunction::linear(2.4025)), (Mode::from("u"), RateFunction::linear(0.1225))].into_iter().collect(),
        partition: Partition {
            stable: [Mode::from("s")].into_iter().collect(),
            unstable: [Mode::from("u")].into_iter().collect(),
        },
        dwell: DwellSpec {
            tau: [(Mode::from("s"), 0.6), (Mode::from("u"), 0.8)].into_iter().collect(),
            delta: 0.2,
            t_s: 0.0,
            t_u: 0.0,
        },
        envelopes: None,
    };
    cert.dwell.t_s = sig.mdadt_slack(&cert.partition.stable, &cert.dwell.tau);
    cert.dwell.t_u = sig.mdalt_slack(&cert.partition.unstable, &cert.dwell.tau);
    cert
}
