//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};

use distobs::certify;
use distobs::digraph::{self, SwitchingSchedule};
use distobs::linalg::{self, Mat, Vector};
use distobs::observer::{self, ErrorSnapshot, ObserverModel};
use distobs::simkit::{self, power, GainTable, Prepared, Scenario};
use distobs::sysdecomp::{self, Plant};
use nalgebra::Complex;
use rand::Rng;

use common::*;

type Outcome = Result<String, String>;

const SEEDS: u64 = 10;

fn lemma3_suite() -> Outcome {
    let mut rng = rng(1);
    let mut checked = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=12);
        let density = rng.random_range(0.1..=0.9);
        let g = random_digraph(&mut rng, n, density);
        for k in 0..n {
            let tg = digraph::transform(&g, k).map_err(|e| e.to_string())?;
            let inside = reachable(&g, k);
            for (i, &reached) in inside.iter().enumerate() {
                if tg.is_member(i) != reached {
                    return Err(format!("member set mismatch at node {i}, root {k}"));
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let same_side = inside[i] == inside[j];
                    let raw = g.has_arc(j, i);
                    let kept = tg.adj_t.has_arc(j, i);
                    if !same_side && kept {
                        return Err(format!("arc {j}->{i} crosses the cut of root {k}"));
                    }
                    if same_side && raw != kept {
                        return Err(format!("arc {j}->{i} on one side changed for root {k}"));
                    }
                }
            }
            let spans = reachable(&tg.adj_t, k);
            if (0..n).any(|i| inside[i] && !spans[i]) {
                return Err(format!("no spanning tree from root {k}"));
            }
            checked += 1;
        }
    }
    Ok(format!("500 graphs, {checked} roots"))
}

fn lemma2_suite() -> Outcome {
    let mut rng = rng(2);
    let mut count = 0;
    let mut worst = f64::INFINITY;
    while count < 500 {
        let n = rng.random_range(2..=12);
        let density = rng.random_range(0.1..=0.9);
        let g = random_digraph(&mut rng, n, density);
        let k = rng.random_range(0..n);
        let tg = digraph::transform(&g, k).map_err(|e| e.to_string())?;
        let mats = digraph::subgraph_matrices(&tg);
        if mats.pi == 0 {
            continue;
        }
        let min_re = linalg::eigenvalues(&mats.h_matrix)
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        worst = worst.min(min_re);
        if min_re.is_nan() || min_re <= 1e-9 {
            return Err(format!("min Re λ(𝓗) = {min_re:e}"));
        }
        count += 1;
    }
    Ok(format!("500 subgraphs, min Re λ = {worst:.3e}"))
}

fn decomposition_suite() -> Outcome {
    let mut rng = rng(3);
    let mut worst = 0.0_f64;
    for trial in 0..200 {
        let agents = rng.random_range(1..=4);
        let n = rng.random_range(agents.max(1)..=12);
        let mut plant = random_plant(&mut rng, n, agents);
        if trial % 4 == 0 && agents > 1 {
            // overlapping outputs: last agent repeats a row of the first
            let mut c = plant.c_blocks().to_vec();
            let row = c[0].row(0).into_owned();
            let last = c.len() - 1;
            c[last] = linalg::vstack(&c[last], &Mat::from_row_slice(1, n, row.as_slice()));
            plant = Plant::new(plant.a().clone(), c).map_err(|e| e.to_string())?;
        }
        let d = sysdecomp::decompose(&plant).map_err(|e| format!("trial {trial}: {e}"))?;
        let t_inv = d.t_mat.clone().try_inverse().ok_or("T singular")?;
        let at = &d.t_mat * plant.a() * &t_inv;
        for i in 0..d.blocks() {
            for k in i + 1..d.blocks() {
                let r = linalg::max_abs(
                    &at.view((d.offsets[i], d.offsets[k]), (d.indices[i], d.indices[k]))
                        .into_owned(),
                );
                worst = worst.max(r);
                if r > 1e-9 {
                    return Err(format!("trial {trial}: upper block ({i},{k}) residual {r:e}"));
                }
            }
        }
        let r = linalg::max_abs(&(&d.sigma_mat * &d.t_mat - plant.c_stacked()));
        worst = worst.max(r);
        if r > 1e-9 {
            return Err(format!("trial {trial}: Σ·T − C residual {r:e}"));
        }
        for i in 0..d.blocks() {
            let v = d.indices[i];
            // Kalman rank of the block pair
            let mut obs = Mat::zeros(0, v);
            let mut pow = Mat::identity(v, v);
            for _ in 0..v {
                obs = linalg::vstack(&obs, &(&d.blocks_c[i] * &pow));
                pow = &pow * &d.blocks_a[i];
            }
            if v > 0 && linalg::rank(&obs, 1e-9) < v {
                return Err(format!("trial {trial}: block {i} not observable"));
            }
        }
    }
    Ok(format!("200 plants, worst residual {worst:.2e}"))
}

fn matched_distance(got: &[Complex<f64>], want: &[Complex<f64>]) -> f64 {
    // brute-force optimal matching is overkill; sort both and compare
    let mut a = got.to_vec();
    let mut b = want.to_vec();
    linalg::sort_spectrum(&mut a);
    linalg::sort_spectrum(&mut b);
    a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn random_spectrum(rng: &mut rand_chacha::ChaCha8Rng, dim: usize) -> Vec<Complex<f64>> {
    let mut s = Vec::with_capacity(dim);
    while s.len() < dim {
        let re = -rng.random_range(0.5..6.0);
        if dim - s.len() >= 2 && rng.random_bool(0.4) {
            let im = rng.random_range(0.5..3.0);
            s.push(Complex::new(re, im));
            s.push(Complex::new(re, -im));
        } else {
            s.push(Complex::new(re, 0.0));
        }
    }
    s
}

fn gain_suite() -> Outcome {
    let mut rng = rng(4);
    let mut worst = 0.0_f64;
    let mut done = 0;
    while done < 100 {
        let v = rng.random_range(1..=6);
        let p = rng.random_range(1..=3.min(v));
        let a = random_matrix(&mut rng, v, v);
        let c = random_matrix(&mut rng, p, v);
        if sysdecomp::observability_rank(&c, &a) < v {
            continue;
        }
        let spec = random_spectrum(&mut rng, v);
        let h = sysdecomp::design_gain(&a, &c, &spec).map_err(|e| e.to_string())?;
        let d = matched_distance(&linalg::eigenvalues(&(&a - &h * &c)), &spec);
        worst = worst.max(d);
        if d > 1e-6 {
            return Err(format!("block {done}: spectrum off by {d:e}"));
        }
        done += 1;
    }
    for areas in [4, 8] {
        let s = simkit::power_scenario(areas).map_err(|e| e.to_string())?;
        let d = sysdecomp::decompose(&s.plant).map_err(|e| e.to_string())?;
        let g = sysdecomp::design_gains(&d, None).map_err(|e| e.to_string())?;
        let want: Vec<Complex<f64>> = [-12.0, -13.0, -14.0, -15.0]
            .iter()
            .map(|&r| Complex::new(r, 0.0))
            .collect();
        for i in 0..d.blocks() {
            let acl = &d.blocks_a[i] - &g.h_blocks[i] * &d.blocks_c[i];
            let dist = matched_distance(&linalg::eigenvalues(&acl), &want);
            worst = worst.max(dist);
            if dist > 1e-6 {
                return Err(format!("power-{areas} block {i}: off by {dist:e}"));
            }
        }
    }
    Ok(format!("100 random blocks and power blocks, worst {worst:.2e}"))
}

fn power4(transform: bool) -> Result<Prepared, String> {
    let mut s = simkit::power_scenario(4).map_err(|e| e.to_string())?;
    s.gains.gamma = 100.0;
    s.gains.table = GainTable::Certified { wp: None };
    s.transformation_enabled = transform;
    Prepared::new(s).map_err(|e| e.to_string())
}

fn terminal_ratios(p: &Prepared) -> Result<Vec<(f64, f64, bool)>, String> {
    let seeds: Vec<u64> = (0..SEEDS).collect();
    simkit::run_batch(p, &seeds)
        .into_iter()
        .map(|r| {
            let ts = r.map_err(|e| e.to_string())?;
            let m = simkit::metrics(&ts, 1e-3).map_err(|e| e.to_string())?;
            Ok((m.reduction, m.final_max, m.diverged))
        })
        .collect()
}

fn power4_end_to_end() -> Outcome {
    let p = power4(true)?;
    let r = terminal_ratios(&p)?;
    let worst = r.iter().map(|x| x.0).fold(0.0, f64::max);
    let ok = r.iter().filter(|x| !x.2 && x.0 <= 1e-2).count();
    let gains = p.certified.as_ref().map(|c| c.per_block.clone()).unwrap_or_default();
    let detail = format!("{ok}/{SEEDS} seeds, worst terminal/initial {worst:.2e}, γ̲ = {gains:.1?}");
    if ok == SEEDS as usize {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ablation() -> Outcome {
    let with = terminal_ratios(&power4(true)?)?;
    let without = terminal_ratios(&power4(false)?)?;
    let mut failing = 0;
    let mut best = f64::INFINITY;
    for (w, wo) in with.iter().zip(&without) {
        best = best.min(wo.0);
        let misses = wo.2 || wo.0 > 1e-2 || wo.1 >= 100.0 * w.1;
        if misses {
            failing += 1;
        }
    }
    let detail =
        format!("{failing}/{SEEDS} seeds non-convergent without transformation, smallest terminal/initial {best:.2e}");
    if failing == SEEDS as usize {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn adaptive_end_to_end() -> Outcome {
    let mut s = simkit::power_scenario(4).map_err(|e| e.to_string())?;
    s.gains.table = GainTable::Uniform(10.0);
    s.gains.adaptive = true;
    let p = Prepared::new(s).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let mut sup = 0.0_f64;
    for (seed, r) in simkit::run_batch(&p, &seeds).into_iter().enumerate() {
        let ts = r.map_err(|e| e.to_string())?;
        let m = simkit::metrics(&ts, 1e-3).map_err(|e| e.to_string())?;
        if !m.converged {
            return Err(format!("seed {seed}: terminal/initial {:.2e}", m.reduction));
        }
        for c in 0..ts.gains[0].len() {
            for s in 1..ts.len() {
                let (a, b) = (ts.gains[s - 1][c], ts.gains[s][c]);
                if !b.is_finite() || b < a {
                    return Err(format!(
                        "seed {seed}: gain column {c} decreases or is not finite at sample {s}"
                    ));
                }
            }
        }
        sup = sup.max(m.gain_sup.iter().copied().fold(0.0, f64::max));
    }
    Ok(format!(
        "{SEEDS}/{SEEDS} seeds converge, gains nondecreasing, sup γ = {sup:.1}"
    ))
}

/// Small plant where agent `i` sees its own one- or two-state slice, fed only
/// by lower slices, so every agent owns a nonempty block. Half the draws have
/// dissipative `A`; the rest switch among strongly connected slots.
fn random_certifiable(rng: &mut rand_chacha::ChaCha8Rng) -> (Plant, SwitchingSchedule) {
    let agents = rng.random_range(2..=3);
    let dissipative = rng.random_bool(0.5);
    loop {
        let dims: Vec<usize> = (0..agents).map(|_| rng.random_range(1..=2)).collect();
        let n: usize = dims.iter().sum();
        let start: Vec<usize> = dims
            .iter()
            .scan(0, |acc, d| {
                let s = *acc;
                *acc += d;
                Some(s)
            })
            .collect();
        let owner = |r: usize| start.iter().rposition(|&s| s <= r).unwrap();
        let raw = random_matrix(rng, n, n) * 0.3;
        let mut a = Mat::from_fn(n, n, |r, c| if owner(c) <= owner(r) { raw[(r, c)] } else { 0.0 });
        if dissipative {
            let shift = linalg::lambda_max_sym(&a) + 0.2;
            a -= Mat::identity(n, n) * shift;
        }
        let c_blocks = (0..agents)
            .map(|i| {
                let rows = rng.random_range(1..=dims[i]);
                let local = random_matrix(rng, rows, dims[i]);
                Mat::from_fn(rows, n, |r, c| {
                    if c >= start[i] && c < start[i] + dims[i] {
                        local[(r, c - start[i])]
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let Ok(plant) = Plant::new(a, c_blocks) else { continue };
        let schedule = if dissipative {
            let slots = rng.random_range(2..=3);
            random_valid_schedule(rng, agents, slots, 0.4)
        } else {
            loop {
                let s = random_valid_schedule(rng, agents, 2, 0.7);
                if s.library().iter().all(|g| g.is_strongly_connected()) {
                    break s;
                }
            }
        };
        return (plant, schedule);
    }
}

fn certifier_coherence() -> Outcome {
    let mut rng = rng(8);
    let mut passed = 0;
    let mut attempts = 0;
    while passed < 20 {
        attempts += 1;
        if attempts > 2000 {
            return Err(format!("only {passed} certified systems in 2000 draws"));
        }
        let (plant, schedule) = random_certifiable(&mut rng);
        let dec = sysdecomp::decompose(&plant).map_err(|e| e.to_string())?;
        let gains = sysdecomp::design_gains(&dec, None).map_err(|e| e.to_string())?;
        let wp = 1.0;
        let sug = match certify::suggest_gains(&dec, &gains, &schedule, wp) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let report = certify::check_theorem1(&dec, &gains, &sug.table, &schedule, wp).map_err(|e| e.to_string())?;
        if !report.pass {
            continue;
        }
        // monotone in a uniform gain increase
        for scale in [1.5, 3.0, 10.0] {
            let r = certify::check_theorem1(&dec, &gains, &(&sug.table * scale), &schedule, wp)
                .map_err(|e| e.to_string())?;
            if !r.gain_pass {
                return Err(format!("system {passed}: gain inequality flips at ×{scale}"));
            }
        }
        // step small enough for explicit RK4 on the stiffest consensus mode
        let gmax = sug.table.max().max(100.0);
        let deg = schedule
            .library()
            .iter()
            .map(|g| g.laplacian().diagonal().max())
            .fold(1.0, f64::max);
        let stiff = gmax * 2.0 * deg + gains.h_blocks.iter().map(|h| h.norm()).fold(0.0, f64::max) * 4.0;
        let per_slot = ((schedule.dwell() * stiff / 2.0).ceil() as usize).max(100);
        let mut s = Scenario::new(plant.clone(), schedule.clone());
        s.gains.table = GainTable::Explicit(sug.table.clone());
        s.step = schedule.dwell() / per_slot as f64;
        s.decimation = per_slot;
        s.horizon = 20.0;
        let ts = simkit::run(&s, passed as u64).map_err(|e| e.to_string())?;
        let m = simkit::metrics(&ts, 1e-3).map_err(|e| e.to_string())?;
        if !m.converged {
            return Err(format!(
                "certified system {passed} (n = {}, N = {}) did not converge: ratio {:.2e}",
                plant.n(),
                plant.agents(),
                m.reduction
            ));
        }
        passed += 1;
    }
    Ok(format!(
        "20 certified systems converge ({attempts} draws), monotone under gain scaling"
    ))
}

fn power_spectra() -> Outcome {
    let zero = |a: &Mat| simkit::spectrum(a).iter().filter(|z| z.norm() < 1e-9).count();
    let p4 = power::power_matrix(&power::table1(), &Mat::zeros(4, 4)).map_err(|e| e.to_string())?;
    let p8 = power::power_matrix(&power::table2(), &Mat::zeros(8, 8)).map_err(|e| e.to_string())?;
    let (z4, z8) = (zero(&p4), zero(&p8));
    let area1 = simkit::spectrum(&p4.view((0, 0), (4, 4)).into_owned());
    let want = [-10.0, -1.538, -0.0292, 0.0];
    let off = area1
        .iter()
        .zip(want)
        .map(|(z, w)| (z.re - w).abs() + z.im.abs())
        .fold(0.0, f64::max);
    let detail = format!("zeros: power-4 {z4}, power-8 {z8}; area-1 spectrum off by {off:.1e}");
    if z4 == 4 && z8 == 8 && off < 1e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn integrator_order() -> Outcome {
    let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.4]);
    let x0 = Vector::from_vec(vec![1.0, 0.0]);
    let horizon = 2.0;
    let exact = (a.clone() * horizon).exp() * &x0;
    let err = |steps: usize| {
        let h = horizon / steps as f64;
        let mut x = x0.as_slice().to_vec();
        let mut rk = simkit::Rk4::new(2);
        let mut f = |_t: f64, s: &[f64], d: &mut [f64]| {
            let v = &a * Vector::from_column_slice(s);
            d.copy_from_slice(v.as_slice());
            Ok(())
        };
        for k in 0..steps {
            rk.step(&mut f, k as f64 * h, &mut x, h).unwrap();
        }
        (Vector::from_vec(x) - &exact).norm()
    };
    let ratio = err(50) / err(100);
    let detail = format!("error ratio under halving {ratio:.2}");
    if (12.0..=20.0).contains(&ratio) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reorganization_identity() -> Outcome {
    let mut rng = rng(11);
    let mut worst = 0.0_f64;
    for trial in 0..100 {
        let agents = rng.random_range(2..=6);
        let n = rng.random_range(agents..=8);
        let plant = random_plant(&mut rng, n, agents);
        let dec = sysdecomp::decompose(&plant).map_err(|e| e.to_string())?;
        let gains = sysdecomp::design_gains(&dec, None).map_err(|e| e.to_string())?;
        let model = ObserverModel::new(dec.clone(), &gains, 100.0).map_err(|e| e.to_string())?;
        let density = rng.random_range(0.1..0.9);
        let g = random_digraph(&mut rng, agents, density);
        let root = rng.random_range(0..agents);
        let chi = Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let est: Vec<f64> = (0..model.state_len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tg = digraph::transform(&g, root).map_err(|e| e.to_string())?;
        let mats = digraph::subgraph_matrices(&tg);
        let snap = ErrorSnapshot::new(&model, &est, &chi);
        let r = observer::reorganize(&model, &snap, &tg, &mats, &est).map_err(|e| e.to_string())?;
        let res = r.identity_residual(&mats, dec.indices[root]);
        worst = worst.max(res);
        if res > 1e-10 {
            return Err(format!("trial {trial}: residual {res:e}"));
        }
    }
    Ok(format!("100 states, worst residual {worst:.2e}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("transformation isolates a rooted subgraph", lemma3_suite),
        ("member-subgraph matrix is positive stable", lemma2_suite),
        ("observability decomposition", decomposition_suite),
        ("gain placement", gain_suite),
        ("power-4 convergence with transformation", power4_end_to_end),
        ("ablation without transformation", ablation),
        ("adaptive gains", adaptive_end_to_end),
        ("certifier coherence", certifier_coherence),
        ("power-system spectra", power_spectra),
        ("RK4 convergence order", integrator_order),
        ("reorganization identity", reorganization_identity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", k + 1),
            Err(d) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
