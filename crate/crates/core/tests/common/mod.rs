#![allow(dead_code)]

use distobs::digraph::{self, Digraph, SwitchingSchedule};
use distobs::linalg::Mat;
use distobs::sysdecomp::Plant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; enough for test matrices
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| normal(rng))
}

pub fn random_digraph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Digraph {
    let adj = (0..n)
        .map(|i| (0..n).map(|j| i != j && rng.random_bool(density)).collect())
        .collect();
    Digraph::from_adjacency(adj).unwrap()
}

/// Random observable plant with `n` states and `agents` output blocks.
pub fn random_plant(rng: &mut ChaCha8Rng, n: usize, agents: usize) -> Plant {
    loop {
        let a = random_matrix(rng, n, n);
        let c = (0..agents)
            .map(|_| {
                let p = rng.random_range(1..=3);
                random_matrix(rng, p, n)
            })
            .collect();
        if let Ok(p) = Plant::new(a, c) {
            return p;
        }
    }
}

/// Nodes reachable from `root` by directed paths, by plain DFS.
pub fn reachable(g: &Digraph, root: usize) -> Vec<bool> {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for (v, s) in seen.iter_mut().enumerate() {
            if g.has_arc(u, v) && !*s {
                *s = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Random schedule over `n` agents meeting both switching assumptions.
pub fn random_valid_schedule(rng: &mut ChaCha8Rng, n: usize, slots: usize, density: f64) -> SwitchingSchedule {
    loop {
        let lib: Vec<Digraph> = (0..slots).map(|_| random_digraph(rng, n, density)).collect();
        let s = SwitchingSchedule::new(0.4 * slots as f64, slots, (0..slots).collect(), lib).unwrap();
        if digraph::validate_assumptions(&s).pass {
            return s;
        }
    }
}
