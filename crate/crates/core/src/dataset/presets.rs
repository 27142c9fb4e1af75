//! Named synthetic structures used by the CLI and the test suites.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{paper_schema, DatasetError, Dimension, SemSpec};
use crate::graph::CausalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// A → B → C, weights 0.8, noise 0.5.
    Chain3,
    /// A → B, A → C, B → D, C → D, weights 0.8, noise 0.5.
    Diamond4,
    /// X → T (3.0), X → Y (0.8), T → Y (0.8), unit noise.
    ConfoundedTriple,
    /// The sixteen named urban factors with a random forward DAG over the
    /// Citizens → Locations → Mobility tiers.
    Paper16Random { structure_seed: u64 },
    /// Three-tier graph into one Mobility outcome plus eight non-ancestor
    /// columns that correlate with the outcome through shared causes.
    Distractor16,
}

impl Preset {
    pub const NAMES: [&'static str; 5] =
        ["chain3", "diamond4", "confounded-triple", "paper16-random", "distractor16"];

    pub fn spec(&self) -> SemSpec {
        match *self {
            Preset::Chain3 => uniform(
                &["A", "B", "C"],
                &[Dimension::Citizens, Dimension::Locations, Dimension::Mobility],
                &[(0, 1), (1, 2)],
                0.8,
                0.5,
            ),
            Preset::Diamond4 => uniform(
                &["A", "B", "C", "D"],
                &[
                    Dimension::Citizens,
                    Dimension::Locations,
                    Dimension::Locations,
                    Dimension::Mobility,
                ],
                &[(0, 1), (0, 2), (1, 3), (2, 3)],
                0.8,
                0.5,
            ),
            Preset::ConfoundedTriple => {
                let mut s = uniform(
                    &["X", "T", "Y"],
                    &[Dimension::Citizens, Dimension::Locations, Dimension::Mobility],
                    &[(0, 1), (0, 2), (1, 2)],
                    0.8,
                    1.0,
                );
                s.weights[(0, 1)] = 3.0;
                s
            }
            Preset::Paper16Random { structure_seed } => paper16_random(structure_seed),
            Preset::Distractor16 => distractor16(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Preset::Chain3 => "chain3",
            Preset::Diamond4 => "diamond4",
            Preset::ConfoundedTriple => "confounded-triple",
            Preset::Paper16Random { .. } => "paper16-random",
            Preset::Distractor16 => "distractor16",
        };
        f.write_str(s)
    }
}

impl FromStr for Preset {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain3" => Ok(Preset::Chain3),
            "diamond4" => Ok(Preset::Diamond4),
            "confounded-triple" => Ok(Preset::ConfoundedTriple),
            "paper16-random" => Ok(Preset::Paper16Random { structure_seed: 0 }),
            "distractor16" => Ok(Preset::Distractor16),
            other => Err(DatasetError::InvalidTable(format!(
                "unknown preset `{other}` (expected one of {})",
                Preset::NAMES.join(", ")
            ))),
        }
    }
}

fn uniform(
    names: &[&str],
    dims: &[Dimension],
    edges: &[(usize, usize)],
    weight: f64,
    noise: f64,
) -> SemSpec {
    let d = names.len();
    let graph = CausalGraph::from_edges(names.iter().map(|s| s.to_string()).collect(), edges)
        .expect("preset graphs are valid");
    let mut weights = DMatrix::zeros(d, d);
    for &(i, j) in edges {
        weights[(i, j)] = weight;
    }
    SemSpec {
        graph,
        weights,
        noise_std: vec![noise; d],
        dimensions: dims.to_vec(),
    }
}

fn paper16_random(seed: u64) -> SemSpec {
    let schema = paper_schema();
    let d = schema.factor.len();
    let tier = |dim: Dimension| match dim {
        Dimension::Citizens => 0,
        Dimension::Locations => 1,
        Dimension::Mobility => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut weights = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let (ti, tj) = (tier(schema.factor[i].dimension), tier(schema.factor[j].dimension));
            let p = if ti < tj { 0.25 } else { 0.1 };
            if rng.random::<f64>() < p {
                edges.push((i, j));
                let magnitude = rng.random_range(0.3..1.0);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                weights[(i, j)] = sign * magnitude;
            }
        }
    }
    let graph = CausalGraph::from_edges(schema.names(), &edges).expect("forward edges only");
    SemSpec {
        graph,
        weights,
        noise_std: vec![1.0; d],
        dimensions: schema.factor.iter().map(|f| f.dimension).collect(),
    }
}

fn distractor16() -> SemSpec {
    let names = [
        "C1", "C2", "C3", "L1", "L2", "L3", "L4", "D1", "D2", "D3", "D4", "D5", "D6", "D7", "D8", "Y",
    ];
    let y = 15;
    let mut dims = vec![Dimension::Citizens; 3];
    dims.extend([Dimension::Locations; 4]);
    dims.extend([Dimension::Locations; 8]);
    dims.push(Dimension::Mobility);

    let mut edges = Vec::new();
    let mut weights = DMatrix::zeros(16, 16);
    let mut add = |i: usize, j: usize, w: f64| {
        edges.push((i, j));
        weights[(i, j)] = w;
    };
    for (c, l) in [(0, 3), (0, 4), (1, 4), (1, 5), (2, 5), (2, 6)] {
        add(c, l, 0.8);
    }
    for l in 3..7 {
        add(l, y, 0.6);
    }
    for (src, dst) in [(0, 7), (1, 8), (2, 9), (3, 10), (4, 11), (5, 12), (6, 13), (3, 14)] {
        add(src, dst, 0.9);
    }
    let mut noise = vec![1.0; 7];
    noise.extend([0.5; 8]);
    noise.push(1.0);
    SemSpec {
        graph: CausalGraph::from_edges(names.iter().map(|s| s.to_string()).collect(), &edges)
            .expect("preset graph is valid"),
        weights,
        noise_std: noise,
        dimensions: dims,
    }
}
