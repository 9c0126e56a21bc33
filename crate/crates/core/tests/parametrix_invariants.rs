//! Structural checks of the parametrix density on a coarse discretization.

use std::sync::OnceLock;

use markov_functionals::condition_x::{KernelKind, ParametrixConfig, ParametrixState};
use markov_functionals::models::{DriftSpec, TailSpec};
use markov_functionals::stable::StableParams;

const X: f64 = 0.5;
const Y: f64 = 1.0;
const T: f64 = 0.5;

fn coarse(anchor_at: Option<f64>) -> ParametrixConfig {
    let mut c = ParametrixConfig::new(
        DriftSpec::Tanh { amp: 0.5, rate: 1.0 },
        StableParams::new(0.75, 1.0, 1.0).unwrap(),
        TailSpec::Tempered { lambda: 1.0 },
        X,
        T,
    );
    c.per_decade = 4;
    c.s_nodes = 6;
    c.k_max = 3;
    c.k_ceiling = 10;
    c.tau_series = 1e-3;
    match anchor_at {
        Some(y) => c.backward(y),
        None => c,
    }
}

fn forward() -> &'static ParametrixState {
    static S: OnceLock<ParametrixState> = OnceLock::new();
    S.get_or_init(|| ParametrixState::build(coarse(None)).unwrap())
}

#[test]
fn chapman_kolmogorov_holds() {
    let back = ParametrixState::build(coarse(Some(Y))).unwrap();
    let rel: Vec<(f64, f64)> = [0.15, 0.25, 0.35]
        .iter()
        .map(|&s| {
            let (lhs, rhs) = forward().chapman_kolmogorov(&back, s, T).unwrap();
            (s, (lhs - rhs).abs() / rhs)
        })
        .collect();
    assert!(rel.iter().all(|r| r.1 <= 5e-3), "{rel:?}");
}

#[test]
fn chapman_kolmogorov_needs_matching_anchors() {
    assert!(forward().chapman_kolmogorov(forward(), 0.2, T).is_err());
}

#[test]
fn series_envelope_is_factorial() {
    let d = &forward().diagnostics;
    assert!(d.concave, "{d:?}");
    assert!(d.c0_hat.is_finite() && d.c_hat.is_finite() && d.c_hat > 0.0, "{d:?}");
    assert_eq!(d.envelope_ratios.len(), forward().order());
}

#[test]
fn density_is_nonnegative_up_to_truncation() {
    let st = forward();
    let zs: Vec<f64> = (-40..=40).map(|i| X + 0.25 * i as f64).collect();
    let m = st.kernel_matrix(KernelKind::Density, &[0.05, 0.2, T], &zs).unwrap();
    for row in &m {
        let sup = row.iter().copied().fold(0.0, f64::max);
        assert!(row.iter().all(|v| *v >= -1e-3 * sup), "{row:?}");
    }
}
