//! Acceptance suite. Each criterion is its own test and prints one
//! `criterion N: PASS|FAIL ...` line on stderr, outside the captured test
//! output. Criteria run one at a time so the timed ones are not slowed by
//! their neighbours.

use std::io::Write;
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use fk_cli::{run, Params, RunReport, Value};
use fk_core::matching::{fbar_gap, ftilde_limsup, max_matching, BitMatrix};
use fk_core::measures::{prokhorov, EmpiricalMeasure};
use fk_core::partitions::{
    align_labels, d_mu, d_mu_assignment, grid_partition, perturbed_grid, ratner_gap_tracks, ratner_matching,
    transfer_matching, CoordBox, LabelTrack, Partition,
};
use fk_core::systems::{PhasePoint, System, SystemSpec};
use fk_core::SplitMix64;

const ROTATION_SUSPENSION: &str = "suspend(rotation:alpha=0.6180339887)";

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n}: {detail}");
}

fn sys(text: &str) -> System {
    System::new(&SystemSpec::parse(text).unwrap()).unwrap()
}

fn experiment(name: &str, kv: &[(&str, &str)]) -> RunReport {
    let mut p = Params::new();
    p.set("system", ROTATION_SUSPENSION);
    for &(k, v) in kv {
        p.set(k, v);
    }
    run(name, &p).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column<'a>(r: &'a RunReport, name: &str) -> Vec<&'a Value> {
    let c = r.columns.iter().position(|n| n == name).unwrap_or_else(|| panic!("no column {name}"));
    r.rows.iter().map(|row| &row[c]).collect()
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Num(x) => *x,
        Value::Int(i) => *i as f64,
        other => panic!("not a number: {other:?}"),
    }
}

/// Largest order-preserving matching by enumerating row subsets; each
/// subset is matched to the earliest compatible columns.
fn matching_by_subsets(cells: &[Vec<bool>]) -> usize {
    let n = cells.len();
    let mut best = 0;
    for set in 0u32..1 << n {
        let k = set.count_ones() as usize;
        if k <= best {
            continue;
        }
        let mut col = 0;
        let fits = (0..n).filter(|&i| set >> i & 1 == 1).all(|i| match (col..n).find(|&j| cells[i][j]) {
            Some(j) => {
                col = j + 1;
                true
            }
            None => false,
        });
        if fits {
            best = k;
        }
    }
    best
}

#[test]
fn criterion_01_matching_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = SplitMix64::new(101);
    let mut bad = 0;
    for _ in 0..500 {
        let n = 1 + rng.below(12) as usize;
        let density = 0.1 + 0.8 * rng.next_f64();
        let cells: Vec<Vec<bool>> = (0..n).map(|_| (0..n).map(|_| rng.bool(density)).collect()).collect();
        let m = BitMatrix::from_rows(&cells);
        let got = max_matching(&m).unwrap();
        if got.validate(Some(&m)).is_err() || got.len() != matching_by_subsets(&cells) {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(1, bad == 0 && secs < 10.0, &format!("{bad} of 500 cardinalities differ, {secs:.2} s (limit 10 s)"));
}

#[test]
fn criterion_02_monotone_and_subadditive() {
    let _g = serial();
    let mut rng = SplitMix64::new(202);
    let systems = ["rotation:alpha=0.6180339887", "shift:arity=2", "torus:alpha1=0.31,alpha2=0.77", "sturmian:slope=0.38"];
    let (mut mono, mut sub) = (0, 0);
    for k in 0..200 {
        let s = sys(systems[k % systems.len()]);
        let x = s.random_point(&mut rng);
        let y = s.random_point(&mut rng);
        let n = 50 + rng.below(150) as usize;
        let extra = 1 + rng.below(40) as usize;
        let d = 0.02 + 0.3 * rng.next_f64();
        // Unmatched counts recovered from the gaps, compared as integers.
        let unmatched = |n: usize, d: f64| (fbar_gap(&s, &x, &y, n, d).unwrap() * n as f64).round() as u64;
        let u = unmatched(n, d);
        if unmatched(n, d * 1.5) > u {
            mono += 1;
        }
        let (n64, s64) = (n as u64, extra as u64);
        // u'/(n+s) <= u/n + s/n  <=>  n u' <= (n+s)(u+s)
        if n64 * unmatched(n + extra, d) > (n64 + s64) * (u + s64) {
            sub += 1;
        }
    }
    report(2, mono + sub == 0, &format!("200 instances: {mono} monotonicity and {sub} subadditivity violations"));
}

#[test]
fn criterion_03_prokhorov_bound() {
    let _g = serial();
    let start = Instant::now();
    let mut bad = 0;
    let mut total = 0;
    for (system, seed) in [
        (ROTATION_SUSPENSION, "7"),
        ("timechange(suspend(rotation:alpha=0.6180339887);rate=cos:c=1,a=0.3)", "8"),
    ] {
        let pairs = format!("random:100,seed={seed}");
        let r = experiment("prop-fk-measure", &[("system", system), ("pairs", &pairs), ("delta", "0.05"), ("t", "200")]);
        total += r.rows.len();
        bad += column(&r, "pass").iter().filter(|v| ***v != Value::Bool(true)).count();
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        total == 200 && bad == 0 && secs < 300.0,
        &format!("{bad} of {total} pairs violate, {secs:.1} s (limit 300 s)"),
    );
}

fn circle(points: &[f64]) -> EmpiricalMeasure {
    let s = System::new(&SystemSpec::Identity).unwrap();
    EmpiricalMeasure::from_points(&s, points.iter().map(|&x| PhasePoint::Circle(x)).collect(), 1.0).unwrap()
}

fn arc_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

/// Least candidate `c` with `mu(B) <= nu(closed c-hull of B) + c` for every
/// subset `B` of atoms.
fn prokhorov_by_subsets(a: &[f64], b: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let mut cands: Vec<f64> = (0..=m * n).map(|k| k as f64 / (m * n) as f64).collect();
    for &x in a {
        for &y in b {
            cands.push(arc_dist(x, y));
        }
    }
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let ok = |c: f64| {
        (1u32..1 << m).all(|set| {
            let mass = set.count_ones() as f64 / m as f64;
            let hull = b.iter().filter(|&&y| (0..m).any(|i| set >> i & 1 == 1 && arc_dist(a[i], y) <= c)).count();
            mass <= hull as f64 / n as f64 + c + 1e-12
        })
    };
    cands.into_iter().find(|&c| ok(c)).unwrap()
}

#[test]
fn criterion_04_prokhorov_oracle() {
    let _g = serial();
    let mut rng = SplitMix64::new(404);
    let mut bad = 0;
    for case in 0..500 {
        let m = 1 + rng.below(10) as usize;
        let n = if case % 2 == 0 { m } else { 1 + rng.below(10) as usize };
        let mut draw = |k: usize| -> Vec<f64> {
            (0..k)
                .map(|_| if case % 3 == 0 { rng.below(8) as f64 / 16.0 + 0.05 * rng.next_f64() } else { rng.next_f64() })
                .collect()
        };
        let (a, b) = (draw(m), draw(n));
        if prokhorov(&circle(&a), &circle(&b)).unwrap().value != prokhorov_by_subsets(&a, &b) {
            bad += 1;
        }
    }
    report(4, bad == 0, &format!("{bad} of 500 instances differ from subset enumeration"));
}

#[test]
fn criterion_05_lift() {
    let _g = serial();
    let (delta, n) = (0.04, 200usize);
    let r = experiment(
        "lift-check",
        &[("pairs", "random:100,seed=505"), ("delta", "0.04"), ("eps", "0.1"), ("n", "200"), ("probes", "4")],
    );
    let need = (1.0 - delta) * (n + 1) as f64;
    let pre = column(&r, "pi_len").iter().filter(|v| as_f64(v) >= need).count();
    let pass = column(&r, "pass").iter().filter(|v| ***v == Value::Bool(true)).count();
    let pi: Vec<f64> = column(&r, "pi_len").iter().map(|v| as_f64(v)).collect();
    let d0: Vec<f64> = column(&r, "d0_len").iter().map(|v| as_f64(v)).collect();
    let d0_ok = pi.iter().zip(&d0).filter(|(p, d)| **d + 2.0 >= **p).count();
    report(
        5,
        pre == 100 && pass == 100 && d0_ok == 100,
        &format!("{pre} of 100 meet the preconditions, {pass} certified by the checker, {d0_ok} with |D0| >= |pi| - 2"),
    );
}

#[test]
fn criterion_06_loosely_kronecker() {
    let _g = serial();
    let start = Instant::now();
    let s = sys(ROTATION_SUSPENSION);
    let mut rng = SplitMix64::new(606);
    let hs = [100.0, 200.0, 300.0, 400.0, 500.0];
    let mut tails = Vec::new();
    for _ in 0..20 {
        let x = s.random_point(&mut rng);
        let y = s.random_point(&mut rng);
        tails.push(ftilde_limsup(&s, &x, &y, 0.05, &hs, 0.05).unwrap().tail_sup);
    }
    let small = tails.iter().filter(|&&g| g < 0.05).count();
    let worst = tails.iter().copied().fold(0.0, f64::max);
    let r = experiment(
        "cover",
        &[("partition", "grid:k=8"), ("eps", "0.1"), ("horizons", "100,200,400"), ("sample", "50,seed=1")],
    );
    let counts: Vec<f64> = column(&r, "count").iter().map(|v| as_f64(v)).collect();
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        small >= 19 && counts.iter().all(|&k| k == 1.0) && secs < 900.0,
        &format!(
            "{small} of 20 pairs with tail_sup < 0.05 (largest {worst}); greedy K_t(0.1, grid:k=8) at t = 100, 200, 400: {counts:?}; {secs:.1} s (limit 900 s)"
        ),
    );
}

#[test]
fn criterion_07_shift_baseline() {
    let _g = serial();
    let shift = "suspend(shift:arity=2)";
    let s = sys(shift);
    let mut rng = SplitMix64::new(707);
    let hs = [50.0, 100.0, 150.0, 200.0];
    let mut tails = Vec::new();
    for _ in 0..20 {
        let x = s.random_point(&mut rng);
        let y = s.random_point(&mut rng);
        tails.push(ftilde_limsup(&s, &x, &y, 0.2, &hs, 0.05).unwrap().tail_sup);
    }
    let large = tails.iter().filter(|&&g| g > 0.1).count();
    let r = experiment(
        "cover",
        &[
            ("system", shift),
            ("partition", "grid:k=8"),
            ("eps", "0.1"),
            ("horizons", "50,100,200"),
            ("sample", "50,seed=1"),
        ],
    );
    let counts: Vec<f64> = column(&r, "count").iter().map(|v| as_f64(v)).collect();
    let monotone = counts.windows(2).all(|w| w[0] <= w[1]);
    report(
        7,
        large >= 19 && monotone,
        &format!("{large} of 20 pairs with tail_sup > 0.1; greedy K_t at t = 50, 100, 200: {counts:?} (sample of 50)"),
    );
}

fn circle_cuts(cuts: &[f64]) -> Partition {
    let cells = cuts.windows(2).map(|w| vec![CoordBox { lo: vec![w[0]], hi: vec![w[1]] }]).collect();
    Partition::from_boxes("cuts", 1, cells, false).unwrap()
}

fn random_cuts(rng: &mut SplitMix64) -> Vec<f64> {
    let k = 1 + rng.below(6) as usize;
    let mut inner: Vec<f64> = (1..k).map(|_| rng.next_f64()).collect();
    inner.sort_by(f64::total_cmp);
    let mut cuts = vec![0.0];
    cuts.extend(inner);
    cuts.push(1.0);
    cuts
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn criterion_08_dmu_oracle() {
    let _g = serial();
    let s = sys("rotation:alpha=0.6180339887");
    let mut rng = SplitMix64::new(808);
    let mut bad = 0;
    for _ in 0..300 {
        let (a, b) = (random_cuts(&mut rng), random_cuts(&mut rng));
        let xs: Vec<f64> = (0..500).map(|_| rng.next_f64()).collect();
        let sample = circle(&xs);
        let cell = |cuts: &[f64], x: f64| cuts[1..cuts.len() - 1].iter().filter(|&&c| c <= x).count();
        let size = (a.len() - 1).max(b.len() - 1);
        let agree = permutations(size)
            .iter()
            .map(|sigma| xs.iter().filter(|&&x| sigma[cell(&a, x)] == cell(&b, x)).count())
            .max()
            .unwrap();
        let want = 1.0 - agree as f64 / xs.len() as f64;
        if d_mu(&s, &circle_cuts(&a), &circle_cuts(&b), &sample).unwrap() != want {
            bad += 1;
        }
    }
    report(8, bad == 0, &format!("{bad} of 300 instances differ from the permutation optimum"));
}

#[test]
fn criterion_09_transfer_bound() {
    let _g = serial();
    let s = sys(ROTATION_SUSPENSION);
    let mut rng = SplitMix64::new(909);
    let sample = EmpiricalMeasure::from_points(&s, (0..4000).map(|_| s.random_point(&mut rng)).collect(), 1.0).unwrap();
    let q = grid_partition(&s, 4).unwrap();
    let (t, step, delta) = (100.0, 0.05, 0.05);
    let (mut in_h, mut bad, mut tried) = (0, 0, 0);
    while in_h < 100 && tried < 400 {
        tried += 1;
        let p = perturbed_grid(&s, 4, 0.02, &mut rng).unwrap();
        let (d_pq, sigma) = d_mu_assignment(&s, &p, &q, &sample).unwrap();
        let align = align_labels(&sigma);
        let x = s.random_point(&mut rng);
        // Alternate nearby and independent partners.
        let y = if tried % 2 == 0 { s.evolve(&x, 5.0 * rng.next_f64()).unwrap() } else { s.random_point(&mut rng) };
        let track = |part: &Partition, z: &PhasePoint| LabelTrack::new(&s, &s.sample_orbit(z, t, step).unwrap(), part).unwrap();
        let (px, py) = (track(&p, &x), track(&p, &y));
        let (qx, qy) = (track(&q, &x).relabel(&align), track(&q, &y).relabel(&align));
        let eps = ratner_gap_tracks(&qx, &qy).unwrap();
        let Some(h) = (eps < 1.0).then(|| ratner_matching(&qx, &qy, eps).unwrap()).flatten() else { continue };
        let r = transfer_matching(&h, &px, &qx, &py, &qy, d_pq, delta).unwrap();
        if r.in_h {
            in_h += 1;
            bad += usize::from(!r.pass);
        }
    }
    report(
        9,
        in_h == 100 && bad == 0,
        &format!("{bad} violations among {in_h} instances in H ({tried} drawn)"),
    );
}

#[test]
fn criterion_10_essentialize() {
    let _g = serial();
    let r = experiment(
        "dmu",
        &[
            ("system", "rotation:alpha=0.6180339887"),
            ("partition", "grid:k=4"),
            ("perturb", "0.05"),
            ("eps", "0.05"),
            ("sample", "20000,seed=1"),
            ("instances", "100,seed=10"),
        ],
    );
    let ok = column(&r, "pass").iter().filter(|v| ***v == Value::Bool(true)).count();
    let worst = column(&r, "d_mu").iter().map(|v| as_f64(v)).fold(0.0, f64::max);
    report(10, r.rows.len() == 100 && ok == 100, &format!("{ok} of {} partitions within 0.05 (largest d_mu {worst})", r.rows.len()));
}

/// Small configurations of every experiment.
const RUNS: &[&[&str]] = &[
    &["fbar", "--system", "rotation:alpha=0.6180339887", "--x", "0", "--y", "0.37", "--delta", "0.05", "--horizons", "500,1000,1500,2000"],
    &["rho-fk", "--system", "rotation:alpha=0.6180339887", "--x", "0", "--y", "0.37", "--horizons", "100,200,300,400"],
    &["ftilde", "--system", ROTATION_SUSPENSION, "--x", "0.1@0.3", "--y", "0.52@0.77", "--delta", "0.05", "--horizons", "10,20,30,40"],
    &["rho-fk-flow", "--system", ROTATION_SUSPENSION, "--x", "0.1@0.3", "--y", "0.52@0.77", "--horizons", "10,20,30,40"],
    &["fk-matrix", "--system", ROTATION_SUSPENSION, "--points", "random:3,seed=1", "--horizons", "10,20,25,30"],
    &["prokhorov", "--system", ROTATION_SUSPENSION, "--x", "0.1@0.3", "--y", "0.52@0.77", "--t", "20"],
    &["prop-fk-measure", "--system", ROTATION_SUSPENSION, "--pairs", "random:4,seed=7", "--delta", "0.05", "--t", "30"],
    &["lift-check", "--system", ROTATION_SUSPENSION, "--pairs", "random:4,seed=3", "--delta", "0.04", "--eps", "0.1", "--n", "100"],
    &["ratner-gap", "--system", ROTATION_SUSPENSION, "--x", "0.1@0.3", "--y", "0.52@0.77", "--partition", "grid:k=4", "--horizons", "10,20,25,30"],
    &["cover", "--system", ROTATION_SUSPENSION, "--partition", "grid:k=4", "--eps", "0.2", "--t", "20", "--sample", "50,seed=1"],
    &["beta", "--system", ROTATION_SUSPENSION, "--partition", "grid:k=2;grid:k=4", "--eps", "0.2,0.3", "--horizons", "10,15,20,25", "--sample", "50,seed=1"],
    &["transfer-lemma", "--system", ROTATION_SUSPENSION, "--partition", "grid:k=4", "--t", "30", "--delta", "0.05", "--sample", "2000,seed=2", "--pairs", "random:4,seed=9"],
    &["dmu", "--system", "rotation:alpha=0.6180339887", "--partition", "grid:k=4", "--eps", "0.05", "--sample", "20000,seed=1", "--instances", "5,seed=2"],
];

fn fk(args: &[&str], jobs: &str, out: &std::path::Path, format: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_fk"))
        .args(args)
        .args(["--jobs", jobs, "--format", format, "--output"])
        .arg(out)
        .output()
        .unwrap();
    assert!(status.status.code().is_some_and(|c| c <= 1), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out).unwrap()
}

#[test]
fn criterion_11_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    for args in RUNS {
        for format in ["csv", "json"] {
            let a = fk(args, "1", &dir.path().join("a"), format);
            let b = fk(args, "2", &dir.path().join("b"), format);
            if a != b || a.is_empty() {
                differing.push(format!("{} ({format})", args[0]));
            }
        }
    }
    report(
        11,
        differing.is_empty(),
        &format!("{} experiments rerun in csv and json with 1 and 2 workers; differing: {differing:?}", RUNS.len()),
    );
}
