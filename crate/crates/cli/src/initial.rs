//! Seeded initial data: a base state plus uniform noise, piecewise linear on the
//! initial `n × n` grid so that it is reproduced exactly on every refinement of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    base: Vec<f64>,
    n: usize,
    /// Noise at the `(n+1)²` grid vertices, per species, row by row.
    noise: Vec<Vec<f64>>,
}

impl Perturbed {
    pub fn new(base: Vec<f64>, n: usize, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let np = (n + 1) * (n + 1);
        let noise = base
            .iter()
            .map(|_| {
                (0..np)
                    .map(|_| if amplitude > 0.0 { rng.gen_range(-amplitude..=amplitude) } else { 0.0 })
                    .collect()
            })
            .collect();
        Self { base, n, noise }
    }

    pub fn value(&self, species: usize, p: [f64; 2]) -> f64 {
        let n = self.n;
        let x = p[0].clamp(0.0, 1.0) * n as f64;
        let y = p[1].clamp(0.0, 1.0) * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let j = (y.floor() as usize).min(n - 1);
        let (x, y) = (x - i as f64, y - j as f64);
        let v = |a: usize, b: usize| self.noise[species][b * (n + 1) + a];
        // cells are split along their (0,0)-(1,1) diagonal
        let w = if x >= y {
            (1.0 - x) * v(i, j) + (x - y) * v(i + 1, j) + y * v(i + 1, j + 1)
        } else {
            (1.0 - y) * v(i, j) + x * v(i + 1, j + 1) + (y - x) * v(i, j + 1)
        };
        self.base[species] + w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodal_values_are_bounded_and_seeded() {
        let a = Perturbed::new(vec![1.0, 0.9], 4, 0.01, 7);
        let b = Perturbed::new(vec![1.0, 0.9], 4, 0.01, 7);
        let c = Perturbed::new(vec![1.0, 0.9], 4, 0.01, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for s in 0..2 {
            for j in 0..=4 {
                for i in 0..=4 {
                    let v = a.value(s, [i as f64 / 4.0, j as f64 / 4.0]);
                    assert!((v - a.base[s]).abs() <= 0.01);
                    assert!((v - a.base[s] - a.noise[s][j * 5 + i]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn linear_inside_each_triangle() {
        let f = Perturbed::new(vec![0.0], 2, 1.0, 3);
        // midpoint of a lower-triangle edge is the average of its ends
        let mid = f.value(0, [0.25, 0.0]);
        assert!((mid - 0.5 * (f.value(0, [0.0, 0.0]) + f.value(0, [0.5, 0.0]))).abs() < 1e-15);
        let diag = f.value(0, [0.25, 0.25]);
        assert!((diag - 0.5 * (f.value(0, [0.0, 0.0]) + f.value(0, [0.5, 0.5]))).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitude_is_the_base_state() {
        let f = Perturbed::new(vec![2.0, 3.0], 3, 0.0, 1);
        assert_eq!(f.value(1, [0.3, 0.7]), 3.0);
    }
}
