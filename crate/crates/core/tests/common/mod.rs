//! Random instance generators and brute-force references shared by the
//! integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use phasealign::align::{FeasibilityOracle, ScalarArcOracle};
use phasealign::graph::SimilarityGraph;
use phasealign::matrix::{c64, cis, diag, CMatrix};
use phasealign::{Cluster, Partition, PartitionSource};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex<R: Rng>(m: usize, n: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(m, n, |_, _| {
        c64(2.0 * rng.gen::<f64>() - 1.0, 2.0 * rng.gen::<f64>() - 1.0)
    })
}

pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    random_complex(n, n, rng).qr().q()
}

/// Well-conditioned random matrix `I + 0.4 E`.
pub fn random_congruence<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    CMatrix::identity(n, n) + random_complex(n, n, rng) * c64(0.4, 0.0)
}

/// Phases spread over a window of width below `pi` around a random center.
pub fn random_phases<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let center = 0.4 * (2.0 * rng.gen::<f64>() - 1.0);
    let half = 1.3 * rng.gen::<f64>();
    let mut p: Vec<f64> = (0..n)
        .map(|_| center + half * (2.0 * rng.gen::<f64>() - 1.0))
        .collect();
    p.sort_by(|a, b| b.total_cmp(a));
    p
}

/// `U diag(r_k e^{i theta_k}) U^H` together with the `theta_k`, descending.
pub fn random_normal_sectorial<R: Rng>(n: usize, rng: &mut R) -> (CMatrix, Vec<f64>) {
    let theta = random_phases(n, rng);
    let u = random_unitary(n, rng);
    let d: Vec<_> = theta
        .iter()
        .map(|&t| cis(t) * (0.5 + rng.gen::<f64>()))
        .collect();
    (&u * diag(&d) * u.adjoint(), theta)
}

/// `T^H diag(e^{i theta_k}) T` with `T` invertible, and the `theta_k`,
/// descending. Phases are invariant under congruence, so these are the phases
/// of the product.
pub fn random_sectorial<R: Rng>(n: usize, rng: &mut R) -> (CMatrix, Vec<f64>) {
    let theta = random_phases(n, rng);
    let t = random_congruence(n, rng);
    let d: Vec<_> = theta.iter().map(|&x| cis(x)).collect();
    (t.adjoint() * diag(&d) * &t, theta)
}

/// 2x2 sectorial matrices with phases `c +- w` for centers drawn from a few
/// bands, so that some groups align and others do not.
pub fn random_banded_set<R: Rng>(k: usize, rng: &mut R) -> Vec<CMatrix> {
    let bands = [-0.9, -0.3, 0.3, 0.9];
    (0..k)
        .map(|_| {
            let c = bands[rng.gen_range(0..bands.len())] + 0.1 * (2.0 * rng.gen::<f64>() - 1.0);
            let w = 0.05 + 0.1 * rng.gen::<f64>();
            let t = CMatrix::identity(2, 2) + random_complex(2, 2, rng) * c64(0.15, 0.0);
            t.adjoint() * diag(&[cis(c + w), cis(c - w)]) * t
        })
        .collect()
}

/// Angles drawn from a few clusters on the circle.
pub fn random_band_angles<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let centers: Vec<f64> = (0..rng.gen_range(1..=4))
        .map(|_| PI * (2.0 * rng.gen::<f64>() - 1.0))
        .collect();
    (0..k)
        .map(|_| centers[rng.gen_range(0..centers.len())] + 0.3 * (2.0 * rng.gen::<f64>() - 1.0))
        .collect()
}

/// Random graph on `n` vertices with edge probability `p`.
pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> SimilarityGraph {
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let chosen: Vec<(usize, usize)> = edges.into_iter().filter(|_| rng.gen::<f64>() < p).collect();
    SimilarityGraph::from_edges(n, &chosen, 0.5)
}

/// Exact independence number by subset enumeration.
pub fn brute_force_mis(g: &SimilarityGraph) -> usize {
    let n = g.len();
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let independent = (0..n).all(|i| {
            mask & (1 << i) == 0 || (i + 1..n).all(|j| mask & (1 << j) == 0 || !g.adjacent(i, j))
        });
        if independent {
            best = size;
        }
    }
    best
}

/// Smallest number of blocks of width at most `2 alpha` covering the angles,
/// by enumerating all set partitions with the closed-form arc test.
pub fn scalar_min_partition(angles: &[f64], alpha: f64) -> usize {
    fn fits(angles: &[f64], members: &[usize], alpha: f64) -> bool {
        let mut th: Vec<f64> = members
            .iter()
            .map(|&i| angles[i].rem_euclid(2.0 * PI))
            .collect();
        if th.len() <= 1 {
            return true;
        }
        th.sort_by(f64::total_cmp);
        let n = th.len();
        let mut gap = th[0] + 2.0 * PI - th[n - 1];
        for i in 1..n {
            gap = gap.max(th[i] - th[i - 1]);
        }
        (2.0 * PI - gap) / 2.0 <= alpha + 1e-12
    }
    fn go(v: usize, angles: &[f64], alpha: f64, blocks: &mut Vec<Vec<usize>>, best: &mut usize) {
        if blocks.len() >= *best {
            return;
        }
        if v == angles.len() {
            *best = blocks.len();
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(v);
            if fits(angles, &blocks[b], alpha) {
                go(v + 1, angles, alpha, blocks, best);
            }
            blocks[b].pop();
        }
        blocks.push(vec![v]);
        go(v + 1, angles, alpha, blocks, best);
        blocks.pop();
    }
    let mut best = angles.len() + 1;
    go(0, angles, alpha, &mut Vec::new(), &mut best);
    best.min(angles.len())
}

/// Minimum blocks for angles on a line (no wrap-around): sweep from the
/// smallest angle, opening a new block when the span would exceed `2 alpha`.
pub fn sweep_blocks(angles: &[f64], members: &[usize], alpha: f64) -> Vec<Vec<usize>> {
    let mut sorted = members.to_vec();
    sorted.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut start = f64::NEG_INFINITY;
    for v in sorted {
        if angles[v] - start > 2.0 * alpha {
            start = angles[v];
            blocks.push(Vec::new());
        }
        blocks.last_mut().unwrap().push(v);
    }
    blocks
}

pub fn scalar_set(angles: &[f64]) -> Vec<CMatrix> {
    angles
        .iter()
        .map(|&t| CMatrix::from_element(1, 1, cis(t)))
        .collect()
}

/// Angles, angle, partition `C`, replaced clusters `X`, replacements `Y`.
pub type SwapCase = (Vec<f64>, f64, Partition, Vec<Vec<usize>>, Vec<Vec<usize>>);

/// Builds a random feasible partition, a random sub-list `X` of its clusters
/// and a replacement `Y` covering `U = union X` plus some extra vertices.
/// Returns `None` when `Y` ends up larger than `X`.
pub fn random_swap(seed: u64) -> Option<SwapCase> {
    let mut r = rng(seed);
    let n = 6;
    let angles: Vec<f64> = (0..n).map(|_| 0.8 * (2.0 * r.gen::<f64>() - 1.0)).collect();
    let alpha = 0.1 + 0.4 * r.gen::<f64>();
    let o = ScalarArcOracle::from_angles(&angles);
    // Random partition: shuffle then cut into sweep blocks of random subsets.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for v in order {
        let fits: Vec<usize> = (0..clusters.len())
            .filter(|&c| {
                let mut m = clusters[c].clone();
                m.push(v);
                o.check(&m, alpha).unwrap().is_some()
            })
            .collect();
        match fits.choose(&mut r) {
            Some(&c) if r.gen::<f64>() < 0.7 => clusters[c].push(v),
            _ => clusters.push(vec![v]),
        }
    }
    let c = Partition::new(
        clusters
            .iter()
            .map(|m| Cluster::new(m.clone(), None))
            .collect(),
        alpha,
        PartitionSource::BnR,
    )
    .certify(&o)
    .ok()?;
    let picked: Vec<Vec<usize>> = c
        .clusters
        .iter()
        .filter(|_| r.gen::<f64>() < 0.5)
        .map(|cl| cl.members.clone())
        .collect();
    if picked.is_empty() {
        return None;
    }
    let mut q: Vec<usize> = picked.iter().flatten().copied().collect();
    for v in 0..n {
        if !q.contains(&v) && r.gen::<f64>() < 0.3 {
            q.push(v);
        }
    }
    let y = sweep_blocks(&angles, &q, alpha);
    (y.len() <= picked.len()).then_some((angles, alpha, c, picked, y))
}
