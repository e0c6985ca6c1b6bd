use ablatesim::verify::{
    convergence_study, convergence_study_on, heat_case, oseen_case, perturbed_levels, potential_case, temporal_study,
    HEAT_TEMPORAL_DTS, OSEEN_JITTER, OSEEN_LEVELS, POTENTIAL_LEVELS,
};

fn in_range(s: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&s)
}

#[test]
fn potential_l2_rate() {
    let r = convergence_study(&potential_case(), &POTENTIAL_LEVELS);
    println!("{}", r.summary());
    let s = r.slopes("l2").unwrap();
    assert!(in_range(s.headline, 1.8, 2.2), "{}", r.summary());
    let h1 = r.slopes("h1").unwrap();
    assert!(in_range(h1.headline, 0.9, 1.1), "{}", r.summary());
}

#[test]
fn oseen_rates_and_divergence() {
    let case = oseen_case();
    let r = convergence_study_on(&case, &perturbed_levels(&case, &OSEEN_LEVELS, OSEEN_JITTER, 1));
    println!("{}\n{}", r.summary(), r.to_csv());
    let v = r.slopes("velocity_h1").unwrap();
    let p = r.slopes("pressure_l2").unwrap();
    assert!(in_range(v.headline, 0.9, 1.3), "{}", r.summary());
    assert!(in_range(p.headline, 0.8, 1.3), "{}", r.summary());
    let div = &r.monitors.iter().find(|m| m.name == "divergence").unwrap().values;
    let norm = &r.monitors.iter().find(|m| m.name == "velocity_norm").unwrap().values;
    for (d, n) in div.iter().zip(norm) {
        assert!(*d <= 1e-8 * (1.0 + n), "divergence {d} at ‖v‖ {n}");
    }
}

#[test]
fn oseen_uniform_meshes_superconverge_in_pressure() {
    let r = convergence_study(&oseen_case(), &OSEEN_LEVELS);
    println!("{}", r.summary());
    assert!((0.9..=1.3).contains(&r.slopes("velocity_h1").unwrap().headline));
    assert!(r.slopes("pressure_l2").unwrap().headline > 1.3);
}

#[test]
fn heat_spatial_rate() {
    let r = convergence_study(&heat_case(), &POTENTIAL_LEVELS);
    println!("{}\n{}", r.summary(), r.to_csv());
    let s = r.slopes("l2").unwrap();
    assert!(in_range(s.headline, 1.7, 2.3), "{}", r.summary());
}

#[test]
fn heat_temporal_rate() {
    let r = temporal_study(&heat_case(), (128, 64), &HEAT_TEMPORAL_DTS, 1.0);
    println!("{}\n{}", r.summary(), r.to_csv());
    let s = r.slopes("l2").unwrap();
    assert!(in_range(s.headline, 0.8, 1.2), "{}", r.summary());
}
