#![allow(dead_code)]

use icarh::{Dataset, Group, Pathway, PathwayGraph};
use ndarray::Array3;
use rand::seq::index::sample;
use rand::Rng;

/// Random pathways over `m` metabolites, each with 2..=max_size members and a random
/// spanning chain plus extra edges.
pub fn random_graph<R: Rng>(rng: &mut R, m: usize, p: usize) -> PathwayGraph {
    let pathways = (0..p)
        .map(|pp| {
            let size = rng.gen_range(2..=m.min(6));
            let members: Vec<usize> = sample(rng, m, size).into_vec();
            let mut edges: Vec<(usize, usize)> = members
                .windows(2)
                .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
                .collect();
            for _ in 0..size {
                let a = members[rng.gen_range(0..size)];
                let b = members[rng.gen_range(0..size)];
                if a != b && !edges.contains(&(a.min(b), a.max(b))) {
                    edges.push((a.min(b), a.max(b)));
                }
            }
            Pathway {
                id: format!("p{pp}"),
                members,
                edges,
            }
        })
        .collect();
    PathwayGraph {
        pathways,
        unresolved: vec![],
    }
}

pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, t: usize, m: usize, k: usize) -> Dataset {
    Dataset {
        x: Array3::from_shape_fn((n, t, m), |_| rng.gen_range(-2.0..2.0)),
        y: Array3::from_shape_fn((n, t, k), |_| rng.gen_range(-2.0..2.0)),
        groups: (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    Group::Cases
                } else {
                    Group::Controls
                }
            })
            .collect(),
        subjects: (0..n).map(|i| format!("s{i}")).collect(),
        metabolites: (0..m).map(|j| format!("m{j}")).collect(),
        covariates: (0..k).map(|c| format!("c{c}")).collect(),
    }
}
