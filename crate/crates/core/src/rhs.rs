//! Right-hand sides (target designs).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::coefficient::GridSpec;
use crate::lowrank::LowRankMatrix;

/// Separable Gaussian `Π_ℓ exp(−((x_ℓ − c_ℓ)/w)²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianRhs {
    pub center: [f64; 2],
    pub width: f64,
}

impl Default for GaussianRhs {
    fn default() -> Self {
        Self { center: [0.5, 0.5], width: 0.15 }
    }
}

impl GaussianRhs {
    pub fn on(&self, grid: &GridSpec) -> LowRankMatrix {
        gaussian_rhs(grid, self.center, self.width)
    }
}

/// Rank-1 Gaussian sampled at the interior nodes of a 2D grid.
pub fn gaussian_rhs(grid: &GridSpec, center: [f64; 2], width: f64) -> LowRankMatrix {
    let factor = |l: usize| {
        let x = grid.nodes(l);
        DVector::from_fn(x.len(), |i, _| (-((x[i] - center[l]) / width).powi(2)).exp())
    };
    LowRankMatrix::from_outer(&factor(0), &factor(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_symmetric_peak() {
        let grid = GridSpec::square(2, 31).unwrap();
        let f = gaussian_rhs(&grid, [0.5, 0.5], 0.15);
        assert_eq!(f.rank(), 1);
        let d = f.to_dense().unwrap();
        let flipped = nalgebra::DMatrix::from_fn(31, 31, |i, j| d[(30 - i, 30 - j)]);
        assert!((&d - flipped).abs().max() < 1e-14);
        // x = 0.5 is node 16 (index 15).
        assert!((d[(15, 15)] - 1.0).abs() < 1e-15);
        assert_eq!(d.max(), d[(15, 15)]);
    }

    #[test]
    fn peak_near_off_grid_center() {
        let grid = GridSpec::square(2, 10).unwrap();
        let f = gaussian_rhs(&grid, [0.3, 0.62], 0.2).to_dense().unwrap();
        let h = grid.h(0);
        let (mut bi, mut bj) = (0, 0);
        for i in 0..10 {
            for j in 0..10 {
                if f[(i, j)] > f[(bi, bj)] {
                    (bi, bj) = (i, j);
                }
            }
        }
        assert!(((bi + 1) as f64 * h - 0.3).abs() <= h / 2.0 + 1e-12);
        assert!(((bj + 1) as f64 * h - 0.62).abs() <= h / 2.0 + 1e-12);
        assert!(f[(bi, bj)] > (-(h / 2.0 / 0.2f64).powi(2) * 2.0).exp() - 1e-12);
    }
}
