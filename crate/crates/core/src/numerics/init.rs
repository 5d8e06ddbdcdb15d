use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Tensor;

/// Seeded Gaussian matrix with the given standard deviation.
pub fn gaussian_init(shape: (usize, usize), std: f64, seed: u64) -> Tensor {
    let (rows, cols) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
    Tensor::new(rows, cols, data).expect("shape matches")
}

/// Orthonormalised Gaussian matrix: orthonormal columns when `rows >= cols`,
/// orthonormal rows otherwise.
pub fn orthogonal_init(shape: (usize, usize), seed: u64) -> Tensor {
    let (rows, cols) = shape;
    assert!(rows >= 1 && cols >= 1, "orthogonal_init needs a non-empty shape");
    let g = gaussian_init(shape, 1.0, seed);
    if rows >= cols {
        // Work on columns by orthonormalising the rows of the transpose.
        orthonormalize_rows(&g.transpose()).transpose()
    } else {
        orthonormalize_rows(&g)
    }
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass.
fn orthonormalize_rows(m: &Tensor) -> Tensor {
    let (n, d) = m.shape();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for r in 0..n {
        let mut v = m.row(r).to_vec();
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    Tensor::new(n, d, basis.concat()).expect("shape matches")
}
