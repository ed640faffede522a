//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use contmeas::discrete::{
    reconstruct_state, run_chain, ChainConfig, CollapseBasis, WeakOperatorSet,
};
use contmeas::ensemble::persist::{write_run, STATS_FILE};
use contmeas::ensemble::{run_ensemble, EnsembleStats, Experiment, ExperimentConfig};
use contmeas::generalized::{run_commuting_qsd, MeasurementMap};
use contmeas::operators::linalg::{diag, frobenius_distance};
use contmeas::operators::random::{random_kraus_operators, random_projectors, random_pure_state};
use contmeas::operators::{apply_and_normalize, psd_sqrt, CMatrix, KrausSet, QuantumState};
use contmeas::sde::{
    checkpoint_step, projective_state_step, projector_weights, real_state, SdeConfig,
};
use contmeas::seed::{wiener_increments, StreamSeed};
use contmeas::simplex::SimplexPoint;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.2} s (limit {limit_s} s)"))
}

fn experiment(text: &str, overrides: &[&str]) -> Experiment {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let cfg =
        ExperimentConfig::from_toml_str(text, &overrides, Path::new("acceptance.toml")).unwrap();
    Experiment::new(cfg).unwrap()
}

fn qubit_amplitudes(p_first: f64) -> String {
    format!("[{}, {}]", p_first.sqrt(), (1.0 - p_first).sqrt())
}

fn random_interior<R: Rng>(n: usize, rng: &mut R) -> SimplexPoint {
    let w: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(Exp1) + 1e-300)
        .collect();
    SimplexPoint::from_weights(&w).unwrap()
}

fn group_axioms() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    while points < 100_000 {
        let n = rng.random_range(2..=8);
        let (x, y, z) = (
            random_interior(n, &mut rng),
            random_interior(n, &mut rng),
            random_interior(n, &mut rng),
        );
        points += 3;
        let e = SimplexPoint::identity(n).unwrap();
        let assoc = x
            .star(&y)
            .unwrap()
            .star(&z)
            .unwrap()
            .max_abs_diff(&x.star(&y.star(&z).unwrap()).unwrap());
        let ident = x.star(&e).unwrap().max_abs_diff(&x);
        let inv = x.star(&x.inverse().unwrap()).unwrap().max_abs_diff(&e);
        let comm = x.star(&y).unwrap().max_abs_diff(&y.star(&x).unwrap());
        worst = worst.max(assoc).max(ident).max(inv).max(comm);
    }
    let (fast, time) = within(started.elapsed(), 10.0);
    verdict(
        worst <= 1e-12 && fast,
        format!("{points} points, worst deviation {worst:.2e}, {time}"),
    )
}

fn two_track() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut chains = 0u64;
    let mut steps = 0usize;
    for (d, lambda) in [(2, 0.1), (2, 0.3), (3, 0.1), (3, 0.3)] {
        for _ in 0..250 {
            let projectors = KrausSet::new(random_projectors(d, &mut rng)).unwrap();
            let set = WeakOperatorSet::symmetric(projectors, lambda).unwrap();
            let psi0 = QuantumState::pure(random_pure_state(d, &mut rng)).unwrap();
            let Ok(basis) = CollapseBasis::new(&psi0, set.projectors()) else {
                continue;
            };
            let record = run_chain(
                &psi0,
                &set,
                &ChainConfig::default(),
                StreamSeed::new(202, chains),
            )
            .unwrap();
            chains += 1;
            let mut direct = psi0.clone();
            for (k, x) in record.outcomes.iter().zip(&record.xs[1..]) {
                direct = apply_and_normalize(set.operator(*k), &direct).unwrap().0;
                let rebuilt = reconstruct_state(x, &basis).unwrap();
                let (a, b) = (direct.as_pure().unwrap(), rebuilt.as_pure().unwrap());
                let overlap = a.dotc(b);
                let phase = if overlap.norm() > 0.0 {
                    overlap.unscale(overlap.norm())
                } else {
                    Complex::new(1.0, 0.0)
                };
                worst = worst.max((a - b * phase).norm());
                steps += 1;
            }
        }
    }
    let (fast, time) = within(started.elapsed(), 30.0);
    verdict(
        chains == 1000 && worst <= 1e-9 && fast,
        format!("{chains} chains, {steps} steps, worst state distance {worst:.2e}, {time}"),
    )
}

const DISCRETE_REFERENCE: &str = r#"
mode = "discrete"
trajectories = 10000
master_seed = 1
checkpoints = [1, 5, 20]

[system]
dimension = 2
initial_state = INITIAL

[chain]
lambda = 0.2
eps_stop = 1e-3
"#;

const CONTINUOUS_REFERENCE: &str = r#"
mode = "continuous"
trajectories = 10000
master_seed = 404
checkpoints = [1.0, 5.0, 20.0]

[system]
dimension = 2
initial_state = INITIAL

[sde]
dt = 1e-3
eps_stop = 1e-3
"#;

fn reference_run(template: &str) -> (EnsembleStats, Duration) {
    let text = template.replace("INITIAL", &qubit_amplitudes(0.3));
    let started = Instant::now();
    let run = run_ensemble(experiment(&text, &[])).unwrap();
    (run.stats, started.elapsed())
}

fn three_sigma(stats: &EnsembleStats) -> (bool, String) {
    let n = (stats.trajectories - stats.unterminated) as f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for f in &stats.frequencies {
        let band = 3.0 * (f.target * (1.0 - f.target) / n).sqrt();
        ok &= (f.frequency - f.target).abs() <= band;
        parts.push(format!("{:.4} vs {:.4}±{:.4}", f.frequency, f.target, band));
    }
    (ok, parts.join(", "))
}

fn discrete_collapse(stats: &EnsembleStats, elapsed: Duration) -> Verdict {
    let f = &stats.frequencies[0];
    let ok = (f.frequency - 0.3).abs() <= 0.014 && stats.unterminated == 0;
    let (fast, time) = within(elapsed, 60.0);
    verdict(
        ok && fast,
        format!(
            "outcome 1 frequency {:.4} (band 0.3±0.014), unterminated {}, {time}",
            f.frequency, stats.unterminated
        ),
    )
}

fn continuous_collapse(stats: &EnsembleStats, elapsed: Duration) -> Verdict {
    let (ok, bands) = three_sigma(stats);
    let unterminated = stats.unterminated as f64 / stats.trajectories as f64;
    let (fast, time) = within(elapsed, 300.0);
    verdict(
        ok && unterminated <= 0.01 && fast,
        format!("{bands}; unterminated fraction {unterminated:.4}, {time}"),
    )
}

fn martingale(discrete: &EnsembleStats, continuous: &EnsembleStats) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for stats in [discrete, continuous] {
        for row in &stats.martingale.rows {
            for z in &row.z_scores {
                match z {
                    Some(z) => {
                        worst = worst.max(z.abs());
                        ok &= z.abs() <= 3.0;
                    }
                    None => ok = false,
                }
            }
        }
    }
    verdict(
        ok,
        format!(
            "checkpoints 1, 5, 20 in both modes, max |mean x̃ - p0| = {worst:.2} standard errors"
        ),
    )
}

fn moment_functional(continuous: &EnsembleStats) -> Verdict {
    let means: Vec<f64> = continuous.moments.rows.iter().map(|r| r.mean).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let terminal = continuous.moments.terminal_mean;
    verdict(
        decreasing && terminal <= 0.01,
        format!(
            "checkpoint means [{}], at termination {terminal:.2e}",
            means
                .iter()
                .map(|m| format!("{m:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn map_endpoints() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(2..=6);
        let map =
            MeasurementMap::new(KrausSet::new(random_kraus_operators(d, n, &mut rng)).unwrap())
                .unwrap();
        let e = SimplexPoint::identity(n).unwrap();
        worst = worst.max(frobenius_distance(
            &map.measurement_map(&e).unwrap(),
            &CMatrix::identity(d, d),
        ));
        for k in 0..n {
            let v = SimplexPoint::vertex(n, k).unwrap();
            worst = worst.max(frobenius_distance(
                &map.measurement_map(&v).unwrap(),
                map.kraus().operator(k),
            ));
        }
    }
    let (fast, time) = within(started.elapsed(), 30.0);
    verdict(
        worst <= 1e-9 && fast,
        format!("100 sets, worst Frobenius distance {worst:.2e}, {time}"),
    )
}

fn real_matrix(rows: [[f64; 2]; 2]) -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| Complex::new(rows[i][j], 0.0))
}

/// Full-rank two-outcome set whose Kraus operators do not commute.
fn non_commuting_set() -> KrausSet {
    let (c, s) = (0.4f64.cos(), 0.4f64.sin());
    let r = real_matrix([[c, -s], [s, c]]);
    let e1 = &r * diag(&[0.8, 0.3]) * r.adjoint();
    let e2 = CMatrix::identity(2, 2) - &e1;
    let a = 0.35f64;
    let ua = CMatrix::from_fn(2, 2, |i, j| {
        if i == j {
            Complex::new(a.cos(), 0.0)
        } else {
            Complex::new(0.0, a.sin())
        }
    });
    let b = 0.6f64;
    let ub = real_matrix([[b.cos(), -b.sin()], [b.sin(), b.cos()]]);
    let m1 = ua * psd_sqrt(&e1).unwrap();
    let m2 = ub * psd_sqrt(&e2).unwrap();
    assert!(frobenius_distance(&(&m1 * &m2), &(&m2 * &m1)) > 0.1);
    KrausSet::new(vec![m1, m2]).unwrap()
}

const GENERALIZED: &str = r#"
mode = "generalized"
trajectories = 10000
master_seed = 808
checkpoints = [1.0, 5.0]

[system]
dimension = 2
initial_state = [1.0, 1.0]

[sde]
dt = 1e-3
eps_stop = 1e-3
"#;

fn generalized_collapse() -> Verdict {
    let unsharp = {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        KrausSet::new(vec![diag(&[c, s]), diag(&[s, c])]).unwrap()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, kraus, psi0) in [
        ("unsharp", unsharp, real_state(&[1.0, 1.0])),
        (
            "non-commuting",
            non_commuting_set(),
            real_state(&[0.6, 0.8]),
        ),
    ] {
        let mut exp = experiment(GENERALIZED, &[]);
        exp.psi0 = QuantumState::pure_normalized(psi0).unwrap();
        exp.p0 = kraus.born_probabilities(&exp.psi0).unwrap();
        exp.config.system.initial_state = contmeas::ensemble::StateSpec::Real(
            exp.psi0.as_pure().unwrap().iter().map(|a| a.re).collect(),
        );
        exp.kraus = kraus;
        let stats = run_ensemble(exp).unwrap().stats;
        let (bands_ok, bands) = three_sigma(&stats);
        let fid = stats.fidelity.clone().unwrap();
        let unterminated = stats.unterminated as f64 / stats.trajectories as f64;
        ok &= bands_ok && fid.fraction_at_least_0_999 >= 0.99 && unterminated <= 0.01;
        parts.push(format!(
            "{name}: {bands}, fidelity >= 0.999 in {:.2}%",
            100.0 * fid.fraction_at_least_0_999
        ));
    }
    verdict(ok, parts.join("; "))
}

fn qsd_consistency() -> Verdict {
    let cfg = SdeConfig::default();
    let unsharp = {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        KrausSet::new(vec![diag(&[c, s]), diag(&[s, c])]).unwrap()
    };
    let qutrit = {
        let effects = [[0.6, 0.2, 0.1], [0.3, 0.5, 0.2], [0.1, 0.3, 0.7]];
        KrausSet::new(effects.iter().map(|e| diag(&e.map(f64::sqrt))).collect()).unwrap()
    };
    let mut worst: f64 = 1.0;
    let mut paths = 0;
    for (kraus, psi0) in [
        (unsharp, real_state(&[1.0, 1.0])),
        (qutrit, real_state(&[0.5, 0.7, 0.5])),
    ] {
        let map = MeasurementMap::new(kraus).unwrap();
        let psi0 = QuantumState::pure_normalized(psi0).unwrap();
        for i in 0..100 {
            let run = run_commuting_qsd(
                &psi0,
                &map,
                &cfg,
                StreamSeed::new(909, i),
                &[0.5, 1.0, 2.0, 5.0, 10.0],
            )
            .unwrap();
            for c in run.checkpoints.iter().chain([&run.terminal]) {
                worst = worst.min(c.fidelity);
            }
            paths += 1;
        }
    }
    let bound = 1.0 - 10.0 * cfg.dt;
    verdict(
        worst >= bound,
        format!("{paths} paths, lowest fidelity {worst:.6} (bound {bound})"),
    )
}

fn projective_state_equation() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let projectors = KrausSet::new(random_projectors(3, &mut rng)).unwrap();
    let psi0 = random_pure_state(3, &mut rng);
    let p0 = projector_weights(&psi0, &projectors);
    let dt = 1e-3;
    let times = [1.0, 5.0, 20.0];
    let paths = 10_000u64;
    let mut sums = vec![[0.0f64; 3]; times.len()];
    let mut squares = vec![[0.0f64; 3]; times.len()];
    let mut dw = [0.0; 3];
    for i in 0..paths {
        let mut rng = StreamSeed::new(1010, i).rng();
        let mut psi = psi0.clone();
        let mut step = 0;
        for (c, &t) in times.iter().enumerate() {
            while step < checkpoint_step(t, dt) {
                wiener_increments(&mut rng, dt, &mut dw);
                psi = projective_state_step(&psi, &projectors, dt, 1.0, &dw).unwrap();
                step += 1;
            }
            for (j, w) in projector_weights(&psi, &projectors).into_iter().enumerate() {
                sums[c][j] += w;
                squares[c][j] += w * w;
            }
        }
    }
    let n = paths as f64;
    let mut worst_z: f64 = 0.0;
    for (s, q) in sums.iter().zip(&squares) {
        for j in 0..3 {
            let mean = s[j] / n;
            let var = (q[j] - n * mean * mean) / (n - 1.0);
            worst_z = worst_z.max((mean - p0[j]).abs() / (var / n).sqrt());
        }
    }

    // Eigenstates: computational projectors must leave basis vectors
    // bitwise unchanged; rotated ones up to rounding.
    let mut bitwise = true;
    let basis = KrausSet::computational_projectors(3).unwrap();
    for k in 0..3 {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        let v = real_state(&e);
        bitwise &= projective_state_step(&v, &basis, dt, 1.0, &[0.7, -2.1, 1.3]).unwrap() == v;
    }
    let mut rotated: f64 = 0.0;
    for p in projectors.operators() {
        // P = uu†, so its largest column is a multiple of u
        let col = (0..3)
            .map(|j| p.column(j).into_owned())
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap();
        let v = col.unscale(col.norm());
        let next = projective_state_step(&v, &projectors, dt, 1.0, &[0.7, -2.1, 1.3]).unwrap();
        rotated = rotated.max((next - &v).norm());
    }
    let (fast, time) = within(started.elapsed(), 600.0);
    verdict(
        worst_z <= 3.0 && bitwise && rotated <= 1e-14 && fast,
        format!(
            "{paths} paths, max |mean <P> - p0| = {worst_z:.2} standard errors; basis fixed points bitwise {bitwise}, rotated drift {rotated:.1e}; {time}"
        ),
    )
}

fn reproducibility() -> Verdict {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut ok = true;
    let mut parts = Vec::new();
    for name in [
        "projective_qubit.toml",
        "unsharp_qubit.toml",
        "qutrit_three_outcome.toml",
    ] {
        let mut files = Vec::new();
        for workers in [1usize, 4] {
            let mut exp = Experiment::load(&configs.join(name), &[]).unwrap();
            exp.config.workers = workers;
            let cfg = exp.config.clone();
            let run = run_ensemble(exp).unwrap();
            let dir = tempfile::tempdir().unwrap();
            write_run(dir.path(), &cfg, &run).unwrap();
            files.push(std::fs::read(dir.path().join(STATS_FILE)).unwrap());
        }
        let same = files[0] == files[1];
        ok &= same;
        parts.push(format!(
            "{name} {}",
            if same { "identical" } else { "DIFFERENT" }
        ));
    }
    verdict(ok, format!("workers 1 vs 4: {}", parts.join(", ")))
}

fn main() {
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut report = |id: usize, name: &'static str, v: Verdict| {
        println!(
            "criterion {id:>2} {:<4} {name}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
        verdicts.push((id, name, v));
    };
    report(1, "simplex group axioms", group_axioms());
    report(2, "discrete two-track equivalence", two_track());
    let (discrete, discrete_time) = reference_run(DISCRETE_REFERENCE);
    report(
        3,
        "discrete collapse",
        discrete_collapse(&discrete, discrete_time),
    );
    let (continuous, continuous_time) = reference_run(CONTINUOUS_REFERENCE);
    report(
        4,
        "continuous collapse",
        continuous_collapse(&continuous, continuous_time),
    );
    report(5, "martingale", martingale(&discrete, &continuous));
    report(6, "moment functional", moment_functional(&continuous));
    report(7, "map endpoints", map_endpoints());
    report(8, "generalized collapse", generalized_collapse());
    report(9, "commuting state equation vs pullback", qsd_consistency());
    report(10, "projective state equation", projective_state_equation());
    report(11, "reproducibility", reproducibility());
    let failed: Vec<_> = verdicts
        .iter()
        .filter(|(_, _, v)| !v.passed)
        .map(|(id, _, _)| *id)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", verdicts.len());
    } else {
        println!("acceptance: criteria {failed:?} FAIL");
        std::process::exit(1);
    }
}
