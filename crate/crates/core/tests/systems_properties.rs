use fk_core::systems::{PhasePoint, System, SystemSpec};
use fk_core::SplitMix64;

fn sys(text: &str) -> System {
    System::new(&SystemSpec::parse(text).unwrap()).unwrap()
}

const FLOWS: &[&str] = &[
    "suspend(rotation:alpha=0.6180339887)",
    "suspend(torus:alpha1=0.6180339887,alpha2=0.4142135623)",
    "suspend(shift:arity=2)",
    "special(rotation:alpha=0.6180339887;roof=cos:c=2,a=0.5)",
    "special(sturmian:slope=0.6180339887;roof=const:1.5)",
    "timechange(suspend(rotation:alpha=0.6180339887);rate=cos:c=1,a=0.3)",
    "timechange(special(rotation:alpha=0.25;roof=cos:c=2,a=0.5);rate=cos:c=1,a=0.3)",
];

#[test]
fn flows_satisfy_the_group_law() {
    for text in FLOWS {
        let s = sys(text);
        let mut rng = SplitMix64::new(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let p = s.random_point(&mut rng);
            let t = rng.next_f64() * 60.0 - 30.0;
            let u = rng.next_f64() * 60.0 - 30.0;
            let a = s.evolve(&s.evolve(&p, t).unwrap(), u).unwrap();
            let b = s.evolve(&p, t + u).unwrap();
            worst = worst.max(s.dist(&a, &b).unwrap());
        }
        assert!(worst <= 1e-7, "{text}: {worst}");
    }
}

#[test]
fn translations_are_isometries() {
    for text in ["rotation:alpha=0.6180339887", "torus:alpha1=0.6180339887,alpha2=0.4142135623"] {
        let s = sys(text);
        let mut rng = SplitMix64::new(5);
        for _ in 0..200 {
            let p = s.random_point(&mut rng);
            let q = s.random_point(&mut rng);
            let n = rng.below(10_000) as f64;
            let before = s.dist(&p, &q).unwrap();
            let after = s.dist(&s.evolve(&p, n).unwrap(), &s.evolve(&q, n).unwrap()).unwrap();
            assert!((before - after).abs() <= 1e-12, "{text}: {before} vs {after}");
        }
    }
}

#[test]
fn evolved_heights_stay_below_the_roof() {
    for text in FLOWS {
        let s = sys(text);
        let mut rng = SplitMix64::new(17);
        for _ in 0..200 {
            let p = s.random_point(&mut rng);
            let q = s.evolve(&p, rng.next_f64() * 100.0 - 50.0).unwrap();
            let h = q.height().unwrap();
            assert!(h >= 0.0 && h < s.roof_at(q.base()), "{text}: {q:?}");
            s.check_point(&q).unwrap();
        }
    }
}

#[test]
fn constant_rate_rescales_time() {
    for (flow, c) in [("suspend(rotation:alpha=0.6180339887)", 2.0), ("special(rotation:alpha=0.3;roof=cos:c=2,a=0.5)", 0.7)] {
        let base = sys(flow);
        let changed = sys(&format!("timechange({flow};rate=const:{c})"));
        let mut rng = SplitMix64::new(23);
        for _ in 0..100 {
            let p = base.random_point(&mut rng);
            let t = rng.next_f64() * 40.0 - 20.0;
            let a = changed.evolve(&p, t).unwrap();
            let b = base.evolve(&p, t / c).unwrap();
            assert!(base.dist(&a, &b).unwrap() <= 1e-7, "{flow} c={c} t={t}");
        }
    }
}

#[test]
fn orbit_samples_follow_evolve() {
    let s = sys("special(rotation:alpha=0.6180339887;roof=cos:c=2,a=0.5)");
    let p = s.parse_point("0.2@0.4").unwrap();
    let o = s.sample_orbit(&p, 30.0, 0.05).unwrap();
    assert_eq!(o.len(), 600);
    for k in [0, 1, 137, 599] {
        let direct = s.evolve(&p, o.times[k]).unwrap();
        assert!(s.dist(&direct, &o.points[k]).unwrap() <= 1e-9);
    }
    assert!(matches!(o.points[0].base(), PhasePoint::Circle(_)));
}
