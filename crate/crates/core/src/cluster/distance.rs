use nalgebra::DMatrix;

/// Symmetric dissimilarity over `len()` indexed points.
pub trait Distances: Sync {
    fn len(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cosine distance `1 - cos(u, v)`; a zero vector is at distance 1 from everything else.
#[derive(Debug, Clone)]
pub struct CosineDistances {
    points: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
}

impl CosineDistances {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        let sq_norms = points.iter().map(|p| dot(p, p)).collect();
        Self { points, sq_norms }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Distances for CosineDistances {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (ni, nj) = (self.sq_norms[i], self.sq_norms[j]);
        if ni == 0.0 || nj == 0.0 {
            return if ni == nj { 0.0 } else { 1.0 };
        }
        let cos = dot(&self.points[i], &self.points[j]) / (ni * nj).sqrt();
        (1.0 - cos.clamp(-1.0, 1.0)).max(0.0)
    }
}

/// Euclidean distance, mainly for fixtures.
#[derive(Debug, Clone)]
pub struct EuclideanDistances(pub Vec<Vec<f64>>);

impl Distances for EuclideanDistances {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.0[i]
            .iter()
            .zip(&self.0[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A precomputed square distance matrix.
#[derive(Debug, Clone)]
pub struct PrecomputedDistances(pub DMatrix<f64>);

impl Distances for PrecomputedDistances {
    fn len(&self) -> usize {
        self.0.nrows()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}
