//! Time discretisation of the trading interval, truncated at `1 - epsilon`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Default terminal cutoff, 2^-20.
pub const DEFAULT_EPSILON: f64 = 9.5367431640625e-7;

/// Default number of integration steps (intervals) for simulation grids.
pub const DEFAULT_STEPS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    Uniform,
    /// Spacing proportional to the remaining time `1 - t`.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    epsilon: f64,
    refinement: Refinement,
}

impl TimeGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn refinement(&self) -> Refinement {
        self.refinement
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of intervals.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn last(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Index of the node closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let pos = self.nodes.partition_point(|&s| s < t);
        if pos == 0 {
            return 0;
        }
        if pos >= self.nodes.len() {
            return self.nodes.len() - 1;
        }
        if (self.nodes[pos] - t).abs() < (t - self.nodes[pos - 1]).abs() {
            pos
        } else {
            pos - 1
        }
    }

    /// Index of the first node at or after `t` (clamped to the last node).
    pub fn first_at_or_after(&self, t: f64) -> usize {
        self.nodes
            .partition_point(|&s| s < t)
            .min(self.nodes.len() - 1)
    }
}

/// Builds a grid of `n_nodes` points on `[0, 1 - epsilon]`.
///
/// The geometric grid has `1 - t_k = epsilon^(k / (n_nodes - 1))`, so each
/// spacing is a fixed fraction of the remaining time.
pub fn make_grid(epsilon: f64, n_nodes: usize, refinement: Refinement) -> Result<TimeGrid> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("{epsilon} is not in (0, 1)")));
    }
    if n_nodes < 2 {
        return Err(invalid("n_nodes", format!("{n_nodes} < 2")));
    }
    let last = 1.0 - epsilon;
    let m = (n_nodes - 1) as f64;
    let mut nodes: Vec<f64> = match refinement {
        Refinement::Uniform => (0..n_nodes).map(|k| last * k as f64 / m).collect(),
        Refinement::Geometric => {
            let log_eps = epsilon.ln();
            (0..n_nodes)
                .map(|k| -((log_eps * k as f64 / m).exp_m1()))
                .collect()
        }
    };
    nodes[0] = 0.0;
    nodes[n_nodes - 1] = last;
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            "n_nodes",
            format!("{n_nodes} nodes are too many to be strictly increasing in floating point"),
        ));
    }
    Ok(TimeGrid {
        nodes,
        epsilon,
        refinement,
    })
}

/// Grid with `steps` intervals (so `steps + 1` nodes).
pub fn grid_with_steps(epsilon: f64, steps: usize, refinement: Refinement) -> Result<TimeGrid> {
    make_grid(epsilon, steps + 1, refinement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_four_nodes() {
        let eps = 2f64.powi(-10);
        let g = make_grid(eps, 4, Refinement::Uniform).unwrap();
        let d = (1.0 - eps) / 3.0;
        let expect = [0.0, d, 2.0 * d, 1.0 - eps];
        for (a, b) in g.nodes().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_two_nodes() {
        let g = make_grid(0.5, 2, Refinement::Uniform).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.5]);
    }

    #[test]
    fn geometric_spacing_law() {
        let eps = 2f64.powi(-20);
        let n = 1 << 16;
        let g = make_grid(eps, n, Refinement::Geometric).unwrap();
        let nodes = g.nodes();
        let first = nodes[1] - nodes[0];
        let last = nodes[n - 1] - nodes[n - 2];
        assert!(last < first);
        // spacing proportional to distance from 1: ratio ~ eps / (1 - t_0)
        let expected = eps / (1.0 - nodes[0]);
        let ratio = last / first;
        assert!(
            (ratio / expected - 1.0).abs() < 0.1,
            "ratio {ratio} expected {expected}"
        );
        for k in [0, 100, n / 2, n - 2] {
            let dt = nodes[k + 1] - nodes[k];
            assert!((dt / (1.0 - nodes[k]) - first).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_grid(0.0, 4, Refinement::Uniform).is_err());
        assert!(make_grid(1.0, 4, Refinement::Uniform).is_err());
        assert!(make_grid(0.1, 1, Refinement::Geometric).is_err());
    }

    #[test]
    fn nearest_index_lookup() {
        let g = make_grid(0.5, 6, Refinement::Uniform).unwrap();
        assert_eq!(g.nearest_index(0.26), 3);
        assert_eq!(g.nearest_index(-1.0), 0);
        assert_eq!(g.nearest_index(2.0), 5);
        assert_eq!(g.first_at_or_after(0.21), 3);
    }

    proptest! {
        #[test]
        fn grids_are_valid(log_eps in -20.0f64..-0.5, n in 2usize..4000, geo in any::<bool>()) {
            let eps = 2f64.powf(log_eps);
            let r = if geo { Refinement::Geometric } else { Refinement::Uniform };
            let g = make_grid(eps, n, r).unwrap();
            prop_assert_eq!(g.nodes()[0], 0.0);
            prop_assert_eq!(g.last(), 1.0 - eps);
            prop_assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        }
    }
}
