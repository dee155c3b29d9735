use std::f64::consts::PI;

use irs_relay::beamforming::ReflectionModel;
use irs_relay::capacity::{
    achieved_capacity, capacity_near_r_closed_form, capacity_near_s_or_d_closed_form,
    capacity_no_irs, multi_amplitude_sum, multi_capacity_lower_bound, multi_capacity_upper_bound,
    synthesize_hops, ChannelSource, Edge, RicianSpec, Strategy as PhaseStrategy,
};
use irs_relay::experiment::ExperimentConfig;
use irs_relay::scalar::cis;
use irs_relay::{build_scene, Deployment, Scenario64};
use num_complex::Complex64;
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = Scenario64> {
    (
        100.0..800.0f64,
        3.0..20.0f64,
        0.1..0.9f64,
        0.0..1.5f64,
        0.02..0.2f64,
        2.0..3.5f64,
    )
        .prop_map(|(l, h1, frac, tilt, lambda, alpha)| {
            let mut s = Scenario64::default();
            s.half_distance = l;
            s.altitude_relay_panel = h1;
            s.altitude_edge_panel = h1 * frac;
            s.downtilt = tilt;
            s.wavelength = lambda;
            s.element_spacing = lambda / 4.0;
            s.pathloss_exponent = alpha;
            s
        })
}

fn deployment() -> impl Strategy<Value = Deployment> {
    prop::sample::select(Deployment::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn capacity_is_half_the_bottleneck_rate(
        s in scenario(),
        d in deployment(),
        m in 6usize..48,
        rho in 0.15..0.35f64,
        tau_db in -5.0..25.0f64,
        seed in any::<u64>(),
    ) {
        let s = s.with_elements(m).with_split(rho);
        for source in [
            ChannelSource::Los,
            ChannelSource::Rician(RicianSpec::new(10f64.powf(tau_db / 10.0), seed)),
        ] {
            let r = achieved_capacity(&s, d, PhaseStrategy::ClosedForm, &source).unwrap();
            prop_assert_eq!(r.capacity, 0.5 * r.rate_sr.min(r.rate_rd));
            if let (Some(lo), Some(up)) = (r.lower_bound, r.upper_bound) {
                prop_assert!(lo <= up);
            }
        }
    }

    #[test]
    fn any_profile_stays_below_the_amplitude_sum(
        s in scenario(),
        m in 6usize..60,
        rho in 0.15..0.35f64,
        phases in prop::collection::vec(-PI..PI, 60),
    ) {
        let s = s.with_elements(m).with_split(rho);
        let scene = build_scene(&s, Deployment::Multi).unwrap();
        let hops = synthesize_hops(&s, &scene).unwrap();
        let model = hops[0].cascade_model(false).unwrap();
        let sizes = model.panel_sizes();
        let phi1: Vec<Complex64> = phases[..sizes[0]].iter().map(|&p| cis(p)).collect();
        let phi2: Vec<Complex64> = phases[sizes[0]..sizes[0] + sizes[1]].iter().map(|&p| cis(p)).collect();
        let h = model.response(&[phi1, phi2]).norm();
        prop_assert!(h <= multi_amplitude_sum(&s, m, rho) + 1e-12);
    }

    #[test]
    fn closed_forms_are_monotone(
        s in scenario(),
        m in 0usize..5000,
        extra in 1usize..5000,
        gain_db in 0.0..20.0f64,
    ) {
        let louder = {
            let mut t = s.clone();
            t.power_source *= 10f64.powf(gain_db / 10.0);
            t.power_relay = t.power_source;
            t
        };
        let pairs: [(&dyn Fn(&Scenario64, usize) -> f64, &str); 5] = [
            (&|s, m| capacity_near_r_closed_form(s, m).capacity, "near-r"),
            (&|s, m| capacity_near_s_or_d_closed_form(s, m, Edge::Source).capacity, "near-s"),
            (&|s, m| capacity_near_s_or_d_closed_form(s, m, Edge::Destination).capacity, "near-d"),
            (&|s, m| multi_capacity_upper_bound(s, m, 0.25), "upper"),
            (&|s, m| multi_capacity_lower_bound(s, m, 0.25), "lower"),
        ];
        for (f, name) in pairs {
            prop_assert!(f(&s, m + extra) >= f(&s, m), "{} not monotone in M", name);
            prop_assert!(f(&louder, m) >= f(&s, m), "{} not monotone in P", name);
        }
        prop_assert!(capacity_no_irs(&louder).capacity >= capacity_no_irs(&s).capacity);
    }

    #[test]
    fn config_text_round_trips(
        s in scenario(),
        m_grid in prop::collection::btree_set(1usize..10_000, 1..8),
        rho_grid in prop::collection::btree_set(1u32..49, 1..5),
        tau in prop::collection::btree_set(-10i32..40, 1..4),
        trials in 1usize..5000,
        seed in any::<u64>(),
        ascent in any::<bool>(),
    ) {
        let cfg = ExperimentConfig {
            scenario: s,
            deployments: vec![Deployment::Multi, Deployment::NearR],
            m_grid: m_grid.into_iter().collect(),
            rho_grid: rho_grid.into_iter().map(|k| f64::from(k) / 100.0).collect(),
            tau_list_db: tau.into_iter().map(|t| f64::from(t) * 0.5).chain([f64::INFINITY]).collect(),
            trials,
            seed,
            strategy: if ascent { PhaseStrategy::CoordinateAscent } else { PhaseStrategy::ClosedForm },
            ..ExperimentConfig::default()
        };
        prop_assert_eq!(ExperimentConfig::parse(&cfg.emit()).unwrap(), cfg);
    }
}
