use rayon::prelude::*;

use fk_core::matching::{
    compat_matrix, fbar_limsup, ftilde_limsup, lift_matching, max_matching, rho_fk, rho_fk_flow, DEFAULT_FLOW_STEP,
};
use fk_core::measures::{empirical, fk_measure_check, prokhorov, EmpiricalMeasure};
use fk_core::partitions::{
    align_labels, beta_from_counts, covering_number, d_mu, d_mu_assignment, e_surrogates, essentialize,
    perturbed_grid, ratner_gap, ratner_gap_tracks, ratner_matching, transfer_matching, LabelTrack, Partition,
    UFunction,
};
use fk_core::systems::{frac, PhasePoint, System, SystemSpec};
use fk_core::{FkError, SplitMix64};

use crate::config::{parse_draw, Draw, Params};
use crate::error::CliError;
use crate::report::{RunReport, Value};

pub const EXPERIMENTS: &[&str] = &[
    "fbar",
    "rho-fk",
    "ftilde",
    "rho-fk-flow",
    "fk-matrix",
    "prokhorov",
    "prop-fk-measure",
    "lift-check",
    "ratner-gap",
    "cover",
    "beta",
    "transfer-lemma",
    "dmu",
];

/// CSV header of each experiment.
pub fn columns(experiment: &str) -> &'static [&'static str] {
    match experiment {
        "fbar" => &["n", "gap", "tail_sup"],
        "rho-fk" => &["x", "y", "rho_fk", "tol", "horizon_max"],
        "ftilde" => &["t", "gap", "tail_sup"],
        "rho-fk-flow" => &["x", "y", "rho_fk_flow", "tol", "horizon_max"],
        "fk-matrix" => &["i", "j", "x_i", "y_j", "rho_fk_flow", "tol", "horizon_max"],
        "prokhorov" => {
            &["m", "n", "prokhorov", "coupling_mass", "coupling_eps", "witness_atoms", "witness_mu", "witness_nu_hull"]
        }
        "prop-fk-measure" => &["i", "x", "y", "epsilon_star", "prokhorov", "slack", "bound", "pass"],
        "lift-check" => &["i", "x", "y", "pi_len", "d0_len", "coverage", "eps_cert", "d0_bound", "checker", "pass", "note"],
        "ratner-gap" => &["t", "gap"],
        "cover" => &["t", "count", "covered_mass", "target", "reached", "sample_size", "mass_se"],
        "beta" => &["partition", "eps", "t", "count", "beta", "tail_inf"],
        "transfer-lemma" => {
            &["i", "x", "y", "d_pq", "eps_in", "eps_out", "bound", "slack", "freq_x", "freq_y", "in_h", "pass"]
        }
        "dmu" => &["i", "p", "q", "d_mu", "leftover", "essentially_open", "sample_size", "pass"],
        _ => &[],
    }
}

pub fn run(experiment: &str, p: &Params) -> Result<RunReport, CliError> {
    let mut report = match experiment {
        "fbar" => fbar(p),
        "rho-fk" => rho_fk_exp(p),
        "ftilde" => ftilde(p),
        "rho-fk-flow" => rho_fk_flow_exp(p),
        "fk-matrix" => fk_matrix(p),
        "prokhorov" => prokhorov_exp(p),
        "prop-fk-measure" => prop_fk_measure(p),
        "lift-check" => lift_check(p),
        "ratner-gap" => ratner_gap_exp(p),
        "cover" => cover(p),
        "beta" => beta(p),
        "transfer-lemma" => transfer_lemma(p),
        "dmu" => dmu(p),
        other => Err(CliError::Usage(format!("unknown experiment {other:?}; expected one of {}", EXPERIMENTS.join(", ")))),
    }?;
    report.metadata.config = p.echo();
    Ok(report)
}

fn system(p: &Params) -> Result<System, CliError> {
    let text = p.str("system")?;
    let spec = SystemSpec::parse(&text).map_err(|e| match e {
        FkError::Parse { column, message } => CliError::Parse(format!("--system: column {column}: {message}")),
        other => CliError::from(other),
    })?;
    Ok(System::new(&spec)?)
}

fn flow(p: &Params) -> Result<System, CliError> {
    let s = system(p)?;
    if !s.is_flow() {
        return Err(CliError::Usage(format!("{} is not a flow", s.spec())));
    }
    Ok(s)
}

fn step(p: &Params, s: &System) -> Result<f64, CliError> {
    p.f64_or("step", if s.is_flow() { DEFAULT_FLOW_STEP } else { 1.0 })
}

fn partition(p: &Params, s: &System, key: &str) -> Result<Partition, CliError> {
    let text = p.str(key)?;
    Partition::parse(s, &text).map_err(|e| match e {
        FkError::Parse { column, message } => CliError::Parse(format!("--{key}: column {column}: {message}")),
        other => CliError::from(other),
    })
}

/// Horizons from `--horizons` or a single `--t`.
fn horizons(p: &Params) -> Result<Vec<f64>, CliError> {
    if p.has("horizons") {
        p.f64_list("horizons")
    } else {
        Ok(vec![p.f64("t")?])
    }
}

fn draw(p: &Params, key: &str) -> Result<Draw, CliError> {
    let text = p.str(key)?;
    parse_draw(key, &text)?.ok_or_else(|| CliError::Parse(format!("--{key}: column 1: expected <count>,seed=<int>")))
}

fn uniform_sample(s: &System, d: Draw) -> Result<EmpiricalMeasure, CliError> {
    let mut rng = SplitMix64::new(d.seed);
    Ok(EmpiricalMeasure::from_points(s, (0..d.count).map(|_| s.random_point(&mut rng)).collect(), 1.0)?)
}

/// Seeded pairs of independent random points, or the explicit list.
fn random_pairs(p: &Params, s: &System) -> Result<Vec<(PhasePoint, PhasePoint)>, CliError> {
    Ok(match p.pairs(s)? {
        Ok(v) => v,
        Err(d) => {
            let mut rng = SplitMix64::new(d.seed);
            (0..d.count)
                .map(|_| {
                    let x = s.random_point(&mut rng);
                    (x, s.random_point(&mut rng))
                })
                .collect()
        }
    })
}

fn fbar(p: &Params) -> Result<RunReport, CliError> {
    let s = system(p)?;
    let (x, y) = (p.point(&s, "x")?, p.point(&s, "y")?);
    let delta = p.f64("delta")?;
    let hs = p.usize_list("horizons")?;
    let est = fbar_limsup(&s, &x, &y, delta, &hs)?;
    let mut r = RunReport::new("fbar", columns("fbar"));
    for (&n, &g) in hs.iter().zip(&est.gaps) {
        r.push(vec![n.into(), g.into(), est.tail_sup.into()]);
    }
    r.verdict("gaps_in_unit_interval", est.gaps.iter().all(|g| (0.0..=1.0).contains(g)), "");
    Ok(r)
}

fn rho_fk_exp(p: &Params) -> Result<RunReport, CliError> {
    let s = system(p)?;
    let (x, y) = (p.point(&s, "x")?, p.point(&s, "y")?);
    let hs = p.usize_list("horizons")?;
    let tol = p.f64_or("tol", 0.01)?;
    let v = rho_fk(&s, &x, &y, &hs, tol)?;
    let mut r = RunReport::new("rho-fk", columns("rho-fk"));
    r.push(vec![x.to_string().into(), y.to_string().into(), v.into(), tol.into(), (*hs.last().expect("checked")).into()]);
    r.verdict("within_diameter", v <= s.diameter() + tol, format!("diameter {}", s.diameter()));
    Ok(r)
}

fn ftilde(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let (x, y) = (p.point(&s, "x")?, p.point(&s, "y")?);
    let delta = p.f64("delta")?;
    let hs = p.f64_list("horizons")?;
    let step = step(p, &s)?;
    let est = ftilde_limsup(&s, &x, &y, delta, &hs, step)?;
    let mut r = RunReport::new("ftilde", columns("ftilde"));
    for (&t, &g) in hs.iter().zip(&est.gaps) {
        r.push(vec![t.into(), g.into(), est.tail_sup.into()]);
    }
    r.verdict("gaps_in_unit_interval", est.gaps.iter().all(|g| (0.0..=1.0).contains(g)), "");
    Ok(r)
}

fn rho_fk_flow_exp(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let (x, y) = (p.point(&s, "x")?, p.point(&s, "y")?);
    let hs = p.f64_list("horizons")?;
    let tol = p.f64_or("tol", 0.01)?;
    let step = step(p, &s)?;
    let v = rho_fk_flow(&s, &x, &y, &hs, tol, step)?;
    let mut r = RunReport::new("rho-fk-flow", columns("rho-fk-flow"));
    r.push(vec![x.to_string().into(), y.to_string().into(), v.into(), tol.into(), (*hs.last().expect("checked")).into()]);
    r.verdict("within_diameter", v <= s.diameter() + tol, format!("diameter {}", s.diameter()));
    Ok(r)
}

fn fk_matrix(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let (pts, _) = p.points(&s, "points", None)?;
    let hs = p.f64_list("horizons")?;
    let tol = p.f64_or("tol", 0.01)?;
    let step = step(p, &s)?;
    let n = pts.len();
    let idx: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = idx
        .par_iter()
        .map(|&(i, j)| rho_fk_flow(&s, &pts[i], &pts[j], &hs, tol, step))
        .collect::<Result<_, _>>()?;
    let mut r = RunReport::new("fk-matrix", columns("fk-matrix"));
    let h_max = *hs.last().expect("checked");
    let mut diag_ok = true;
    for (&(i, j), &v) in idx.iter().zip(&vals) {
        if i == j {
            diag_ok &= v <= tol;
        }
        r.push(vec![
            i.into(),
            j.into(),
            pts[i].to_string().into(),
            pts[j].to_string().into(),
            v.into(),
            tol.into(),
            h_max.into(),
        ]);
    }
    r.verdict("diagonal_within_tol", diag_ok, "");
    Ok(r)
}

fn prokhorov_exp(p: &Params) -> Result<RunReport, CliError> {
    let s = system(p)?;
    let (x, y) = (p.point(&s, "x")?, p.point(&s, "y")?);
    let t = p.f64("t")?;
    let step = step(p, &s)?;
    let mu = empirical(&s.sample_orbit(&x, t, step)?)?;
    let nu = empirical(&s.sample_orbit(&y, t, step)?)?;
    let res = prokhorov(&mu, &nu)?;
    let coupling_ok = res.coupling.validate(&mu, &nu).is_ok();
    let witness_ok = res.witness.as_ref().is_none_or(|w| w.validate(&mu, &nu).is_ok());
    let mut r = RunReport::new("prokhorov", columns("prokhorov"));
    let (wa, wm, wn) = res.witness.as_ref().map_or((0, 0.0, 0.0), |w| (w.atoms.len(), w.mu_mass, w.nu_hull_mass));
    r.push(vec![
        mu.len().into(),
        nu.len().into(),
        res.value.into(),
        res.coupling.mass.into(),
        res.coupling.eps.into(),
        wa.into(),
        wm.into(),
        wn.into(),
    ]);
    r.note("hull", res.hull.as_str());
    r.verdict("certificates_validate", coupling_ok && witness_ok, format!("coupling {coupling_ok}, witness {witness_ok}"));
    Ok(r)
}

fn prop_fk_measure(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let pairs = random_pairs(p, &s)?;
    let delta = p.f64("delta")?;
    let t = p.f64("t")?;
    let step = step(p, &s)?;
    let reports: Vec<_> =
        pairs.par_iter().map(|(x, y)| fk_measure_check(&s, x, y, t, delta, step)).collect::<Result<_, _>>()?;
    let mut r = RunReport::new("prop-fk-measure", columns("prop-fk-measure"));
    for (i, ((x, y), rep)) in pairs.iter().zip(&reports).enumerate() {
        r.push(vec![
            i.into(),
            x.to_string().into(),
            y.to_string().into(),
            rep.epsilon_star.into(),
            rep.prokhorov.into(),
            rep.slack.into(),
            rep.bound.into(),
            rep.pass.into(),
        ]);
    }
    let bad = reports.iter().filter(|r| !r.pass).count();
    r.verdict("d_p_within_bound", bad == 0, format!("{bad} of {} pairs violate", reports.len()));
    Ok(r)
}

/// Seeded lift instances: `y` is `x` flowed for 1 to 3 time units with the
/// base moved by less than `delta / 4` when the base is a circle.
fn lift_pairs(s: &System, d: Draw, delta: f64) -> Result<Vec<(PhasePoint, PhasePoint)>, CliError> {
    let mut rng = SplitMix64::new(d.seed);
    (0..d.count)
        .map(|_| {
            let x = s.random_point(&mut rng);
            let j = 1 + rng.below(3);
            let y = s.evolve(&x, j as f64)?;
            let shift = (2.0 * rng.next_f64() - 1.0) * delta / 4.0;
            let y = match (y.base(), y.height()) {
                (PhasePoint::Circle(b), Some(h)) => {
                    s.evolve(&PhasePoint::suspended(PhasePoint::Circle(frac(b + shift)), 0.0), h)?
                }
                _ => y,
            };
            Ok((x, y))
        })
        .collect()
}

fn lift_check(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let delta = p.f64("delta")?;
    let eps = p.f64("eps")?;
    let n = p.usize_or("n", 200)?;
    let probes = p.usize_or("probes", 4)?;
    let pairs = match p.pairs(&s)? {
        Ok(v) => v,
        Err(d) => lift_pairs(&s, d, delta)?,
    };
    let rows: Vec<Vec<Value>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (x, y))| -> Result<Vec<Value>, CliError> {
            let ox = s.sample_orbit(x, (n + 1) as f64, 1.0)?;
            let oy = s.sample_orbit(y, (n + 1) as f64, 1.0)?;
            let pi = max_matching(&compat_matrix(&ox, &oy, delta)?)?;
            let head = vec![Value::from(i), x.to_string().into(), y.to_string().into(), pi.len().into()];
            let lift = match lift_matching(&pi, n, delta, eps) {
                Ok(l) => l,
                Err(FkError::Construction(m)) => {
                    let mut row = head;
                    row.extend([0usize.into(), 0.0.into(), 1.0.into(), false.into(), false.into(), false.into(), m.into()]);
                    return Ok(row);
                }
                Err(e) => return Err(e.into()),
            };
            let checker = lift.matching.check_flow(&s, x, y, eps, eps, probes);
            let d0_bound = lift.d0.len() + 2 >= lift.pi_len;
            let note = checker.as_ref().err().map_or(String::new(), |e| e.to_string());
            let pass = checker.is_ok() && d0_bound && lift.matching.eps < eps;
            let mut row = head;
            row.extend([
                lift.d0.len().into(),
                lift.matching.coverage.into(),
                lift.matching.eps.into(),
                d0_bound.into(),
                checker.is_ok().into(),
                pass.into(),
                note.into(),
            ]);
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let mut r = RunReport::new("lift-check", columns("lift-check"));
    let bad = rows.iter().filter(|row| row[9] != Value::Bool(true)).count();
    let total = rows.len();
    for row in rows {
        r.push(row);
    }
    r.verdict("lifts_certified", bad == 0, format!("{bad} of {total} lifts fail"));
    Ok(r)
}

fn ratner_gap_exp(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let (x, y) = (p.point(&s, "x")?, p.point(&s, "y")?);
    let part = partition(p, &s, "partition")?;
    let hs = horizons(p)?;
    let step = step(p, &s)?;
    let gaps: Vec<f64> = hs.par_iter().map(|&t| ratner_gap(&s, &x, &y, t, &part, step)).collect::<Result<_, _>>()?;
    let mut r = RunReport::new("ratner-gap", columns("ratner-gap"));
    for (&t, &g) in hs.iter().zip(&gaps) {
        r.push(vec![t.into(), g.into()]);
    }
    r.verdict("gaps_in_unit_interval", gaps.iter().all(|g| (0.0..=1.0).contains(g)), "");
    Ok(r)
}

fn cover_sample(p: &Params, s: &System, step: f64) -> Result<(Vec<PhasePoint>, u64), CliError> {
    let d = draw(p, "sample")?;
    let mut rng = SplitMix64::new(d.seed);
    Ok(((0..d.count).map(|_| s.random_point_on_grid(&mut rng, step)).collect(), d.seed))
}

fn cover(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let part = partition(p, &s, "partition")?;
    let eps = p.f64("eps")?;
    let hs = horizons(p)?;
    let step = step(p, &s)?;
    let (points, _) = cover_sample(p, &s, step)?;
    let mut r = RunReport::new("cover", columns("cover"));
    let mut all = true;
    for &t in &hs {
        let c = covering_number(&s, &points, t, eps, &part, 1.0 - eps, step)?;
        let se = (c.covered_mass * (1.0 - c.covered_mass) / c.sample_size as f64).sqrt();
        all &= c.reached;
        r.push(vec![
            t.into(),
            c.count.into(),
            c.covered_mass.into(),
            c.target.into(),
            c.reached.into(),
            c.sample_size.into(),
            se.into(),
        ]);
    }
    r.note("mass_note", "masses are sample frequencies; mass_se is the binomial standard error");
    r.note("count_note", "greedy cover: an upper bound on K_t, exact when 1");
    r.verdict("target_reached", all, "");
    Ok(r)
}

fn beta(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let names = p.str("partition")?;
    let parts: Vec<Partition> = names
        .split(';')
        .map(|n| Partition::parse(&s, n).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    let epss = p.f64_list("eps")?;
    let u: UFunction = p.str_or("u", "identity").parse()?;
    let hs = p.f64_list("horizons")?;
    let step = step(p, &s)?;
    let (points, _) = cover_sample(p, &s, step)?;
    let mut r = RunReport::new("beta", columns("beta"));
    let mut family = Vec::new();
    let mut all = true;
    for part in &parts {
        let mut per_eps = Vec::new();
        for &eps in &epss {
            let covers: Vec<_> = hs
                .iter()
                .map(|&t| covering_number(&s, &points, t, eps, part, 1.0 - eps, step))
                .collect::<Result<_, _>>()?;
            all &= covers.iter().all(|c| c.reached);
            let counts: Vec<f64> = covers.iter().map(|c| c.count as f64).collect();
            let curve = beta_from_counts(&hs, &counts, u)?;
            for k in 0..hs.len() {
                r.push(vec![
                    part.name.clone().into(),
                    eps.into(),
                    hs[k].into(),
                    covers[k].count.into(),
                    curve.values[k].into(),
                    curve.tail_inf.into(),
                ]);
            }
            per_eps.push((eps, curve.tail_inf));
        }
        family.push((part.name.clone(), per_eps));
    }
    let e = e_surrogates(&family)?;
    for (name, v) in &e.per_partition {
        r.note(&format!("e_u_P[{name}]"), *v);
    }
    r.note("e_phi_u", e.e_phi);
    r.note("u", u.to_string());
    r.note("e_note", e.note);
    r.verdict("covers_reached", all, "");
    Ok(r)
}

/// `k` of a `grid:k=<k>` partition name.
fn grid_bins(part: &Partition) -> Option<usize> {
    part.name.strip_prefix("grid:k=")?.parse().ok()
}

fn transfer_lemma(p: &Params) -> Result<RunReport, CliError> {
    let s = flow(p)?;
    let q = partition(p, &s, "partition")?;
    let fixed_p = if p.has("partition-p") { Some(partition(p, &s, "partition-p")?) } else { None };
    let jitter = if fixed_p.is_none() { p.f64_or("perturb", 0.02)? } else { 0.0 };
    let t = p.f64("t")?;
    let delta = p.f64("delta")?;
    let step = step(p, &s)?;
    let sample = uniform_sample(&s, draw(p, "sample")?)?;
    let pairs = random_pairs(p, &s)?;
    let ps: Vec<Partition> = match &fixed_p {
        Some(fp) => vec![fp.clone(); pairs.len()],
        None => {
            let k = grid_bins(&q)
                .ok_or_else(|| CliError::Usage("perturbed partitions need --partition grid:k=<k>".into()))?;
            let seed = match p.pairs(&s)? {
                Err(d) => d.seed,
                Ok(_) => 0,
            };
            let mut rng = SplitMix64::new(seed ^ 0x9E37_79B9_7F4A_7C15);
            (0..pairs.len()).map(|_| perturbed_grid(&s, k, jitter, &mut rng)).collect::<Result<_, _>>()?
        }
    };
    let results: Vec<Option<fk_core::partitions::TransferResult>> = pairs
        .par_iter()
        .zip(&ps)
        .map(|((x, y), part)| -> Result<_, CliError> {
            let (d, sigma) = d_mu_assignment(&s, part, &q, &sample)?;
            let align = align_labels(&sigma);
            let track = |pt: &Partition, z: &PhasePoint| LabelTrack::new(&s, &s.sample_orbit(z, t, step)?, pt);
            let (px, py) = (track(part, x)?, track(part, y)?);
            let (qx, qy) = (track(&q, x)?.relabel(&align), track(&q, y)?.relabel(&align));
            let eps = ratner_gap_tracks(&qx, &qy)?;
            if eps >= 1.0 {
                return Ok(None);
            }
            let Some(h) = ratner_matching(&qx, &qy, eps)? else { return Ok(None) };
            Ok(Some(transfer_matching(&h, &px, &qx, &py, &qy, d, delta)?))
        })
        .collect::<Result<_, _>>()?;
    let mut r = RunReport::new("transfer-lemma", columns("transfer-lemma"));
    let (mut in_h, mut bad, mut unmatched) = (0, 0, 0);
    for (i, ((x, y), res)) in pairs.iter().zip(&results).enumerate() {
        let Some(res) = res else {
            unmatched += 1;
            continue;
        };
        if res.in_h {
            in_h += 1;
            bad += usize::from(!res.pass);
        }
        r.push(vec![
            i.into(),
            x.to_string().into(),
            y.to_string().into(),
            res.d_pq.into(),
            res.eps_in.into(),
            res.eps_out.into(),
            res.bound.into(),
            res.slack.into(),
            res.freq_x.into(),
            res.freq_y.into(),
            res.in_h.into(),
            res.pass.into(),
        ]);
    }
    r.note("instances_in_h", in_h);
    r.note("instances_without_q_matching", unmatched);
    r.note("sample_size", sample.len());
    r.verdict("transfer_bound", bad == 0, format!("{bad} of {in_h} instances in H violate"));
    Ok(r)
}

fn dmu(p: &Params) -> Result<RunReport, CliError> {
    let s = system(p)?;
    let sample = uniform_sample(&s, draw(p, "sample")?)?;
    let mut r = RunReport::new("dmu", columns("dmu"));
    let base = partition(p, &s, "partition")?;
    if p.has("partition-q") {
        let q = partition(p, &s, "partition-q")?;
        let (v, sigma) = d_mu_assignment(&s, &base, &q, &sample)?;
        r.push(vec![
            0usize.into(),
            base.name.clone().into(),
            q.name.clone().into(),
            v.into(),
            0.0.into(),
            q.is_essentially_open(&s, p.f64_or("eps", 0.1)?, &sample)?.into(),
            sample.len().into(),
            true.into(),
        ]);
        r.note("sigma", format!("{sigma:?}"));
        r.verdict("d_mu_in_unit_interval", (0.0..=1.0).contains(&v), "");
        return Ok(r);
    }
    // Essentialize perturbed grids and measure how far they moved.
    let eps = p.f64("eps")?;
    let jitter = p.f64_or("perturb", 0.05)?;
    let k = grid_bins(&base).ok_or_else(|| CliError::Usage("essentialize mode needs --partition grid:k=<k>".into()))?;
    let inst = draw(p, "instances")?;
    let mut rng = SplitMix64::new(inst.seed);
    let parts: Vec<Partition> =
        (0..inst.count).map(|_| perturbed_grid(&s, k, jitter, &mut rng)).collect::<Result<_, _>>()?;
    let rows: Vec<(Partition, f64, f64, bool)> = parts
        .par_iter()
        .map(|part| -> Result<_, CliError> {
            let e = essentialize(&s, part, eps, &sample)?;
            let v = d_mu(&s, part, &e, &sample)?;
            let open = e.is_essentially_open(&s, eps, &sample)?;
            let leftover = (0..e.len()).filter(|&l| !e.is_open(l)).map(|l| e.masses(&s, &sample).map(|m| m[l])).sum::<Result<f64, _>>()?;
            Ok((e, v, leftover, open))
        })
        .collect::<Result<_, _>>()?;
    let mut bad = 0;
    for (i, (part, (e, v, leftover, open))) in parts.iter().zip(&rows).enumerate() {
        let pass = *v < eps && *open;
        bad += usize::from(!pass);
        r.push(vec![
            i.into(),
            part.name.clone().into(),
            e.name.clone().into(),
            (*v).into(),
            (*leftover).into(),
            (*open).into(),
            sample.len().into(),
            pass.into(),
        ]);
    }
    r.verdict("essentialize_within_eps", bad == 0, format!("{bad} of {} instances fail", rows.len()));
    Ok(r)
}
