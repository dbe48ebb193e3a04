use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LearnError;
use crate::charting::fast_marching;
use crate::mesh::Mesh;

/// A shape with per-vertex ground truth: `to_reference[v]` is the reference
/// point that vertex `v` corresponds to.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub mesh: &'a Mesh,
    pub to_reference: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexRef {
    pub shape: usize,
    pub vertex: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairSet {
    pub positives: Vec<(VertexRef, VertexRef)>,
    pub negatives: Vec<(VertexRef, VertexRef)>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws positive and negative vertex pairs across distinct shapes.
#[derive(Debug, Clone)]
pub struct PairSampler<'a> {
    shapes: Vec<GroundTruth<'a>>,
    /// Per shape, reference point → first vertex mapped to it.
    inverse: Vec<Vec<Option<usize>>>,
    exclusion: f64,
}

const ATTEMPTS_PER_PAIR: usize = 200;

impl<'a> PairSampler<'a> {
    /// Negatives closer than `2·rho0` to the true correspondent are rejected.
    pub fn new(shapes: &[GroundTruth<'a>], rho0: f64) -> Result<Self, LearnError> {
        if shapes.len() < 2 {
            return Err(LearnError::InsufficientGroundTruth(format!(
                "pair sampling needs at least 2 shapes, got {}",
                shapes.len()
            )));
        }
        let mut inverse = Vec::with_capacity(shapes.len());
        for (s, gt) in shapes.iter().enumerate() {
            if gt.to_reference.len() != gt.mesh.vertex_count() {
                return Err(LearnError::DimensionMismatch {
                    expected: gt.mesh.vertex_count(),
                    found: gt.to_reference.len(),
                });
            }
            let size = gt.to_reference.iter().copied().max().map_or(0, |m| m + 1);
            let mut inv = vec![None; size];
            for (v, &r) in gt.to_reference.iter().enumerate() {
                inv[r].get_or_insert(v);
            }
            if gt.to_reference.is_empty() {
                return Err(LearnError::InsufficientGroundTruth(format!("shape {s} has no vertices")));
            }
            inverse.push(inv);
        }
        Ok(Self {
            shapes: shapes.to_vec(),
            inverse,
            exclusion: 2.0 * rho0,
        })
    }

    fn correspondent(&self, from: VertexRef, to_shape: usize) -> Option<usize> {
        let r = self.shapes[from.shape].to_reference[from.vertex];
        self.inverse[to_shape].get(r).copied().flatten()
    }

    fn random_vertex<R: Rng>(&self, shape: usize, rng: &mut R) -> VertexRef {
        VertexRef {
            shape,
            vertex: rng.gen_range(0..self.shapes[shape].mesh.vertex_count()),
        }
    }

    fn shape_pair<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let s = rng.gen_range(0..self.shapes.len());
        let mut t = rng.gen_range(0..self.shapes.len() - 1);
        if t >= s {
            t += 1;
        }
        (s, t)
    }

    /// Geodesic distance on `shape` from `a` to `b` is below the exclusion radius.
    pub fn near(&self, shape: usize, a: usize, b: usize) -> bool {
        if a == b {
            return true;
        }
        let field = fast_marching(self.shapes[shape].mesh, a, self.exclusion);
        field.distances[b] < self.exclusion
    }

    pub fn sample<R: Rng>(&self, count_pos: usize, count_neg: usize, rng: &mut R) -> Result<PairSet, LearnError> {
        let mut seen = HashSet::new();
        let mut set = PairSet::default();
        let mut attempts = 0;
        while set.positives.len() < count_pos {
            attempts += 1;
            if attempts > ATTEMPTS_PER_PAIR * count_pos.max(1) {
                return Err(LearnError::InsufficientGroundTruth(format!(
                    "found only {} of {count_pos} positive pairs",
                    set.positives.len()
                )));
            }
            let (s, t) = self.shape_pair(rng);
            let a = self.random_vertex(s, rng);
            if let Some(v) = self.correspondent(a, t) {
                let pair = (a, VertexRef { shape: t, vertex: v });
                if seen.insert(pair) {
                    set.positives.push(pair);
                }
            }
        }
        attempts = 0;
        while set.negatives.len() < count_neg {
            attempts += 1;
            if attempts > ATTEMPTS_PER_PAIR * count_neg.max(1) {
                return Err(LearnError::InsufficientGroundTruth(format!(
                    "found only {} of {count_neg} negative pairs",
                    set.negatives.len()
                )));
            }
            let (s, t) = self.shape_pair(rng);
            let a = self.random_vertex(s, rng);
            let b = self.random_vertex(t, rng);
            if let Some(truth) = self.correspondent(a, t) {
                if self.near(t, truth, b.vertex) {
                    continue;
                }
            }
            let pair = (a, b);
            if seen.insert(pair) {
                set.negatives.push(pair);
            }
        }
        Ok(set)
    }
}

/// Seeded one-shot sampling.
pub fn sample_pairs(
    shapes: &[GroundTruth],
    count_pos: usize,
    count_neg: usize,
    rho0: f64,
    seed: u64,
) -> Result<PairSet, LearnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PairSampler::new(shapes, rho0)?.sample(count_pos, count_neg, &mut rng)
}
