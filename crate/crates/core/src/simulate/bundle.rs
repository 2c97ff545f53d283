use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

use super::engine::PathError;

/// Terminal wealth computed two ways: left-point sums of `theta dP` plus the
/// terminal settlement, and `int (Z_1 - P_-) d theta` by parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WealthPair {
    pub ito: f64,
    pub by_parts: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub node: usize,
    pub time: f64,
    pub dtheta: f64,
    pub theta_before: f64,
    pub xi_before: f64,
    pub xi_after: f64,
}

/// Full trajectories of one path; node values are taken after any block
/// trade at that node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub index: usize,
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
    pub z: Vec<f64>,
    pub xi: Vec<f64>,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    pub jumps: Vec<JumpRecord>,
    pub z_one: f64,
    pub wealth: WealthPair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub seed: u64,
    pub strategy: String,
    /// Price offset: `P = xi + c`.
    pub c: f64,
    pub paths: Vec<PathRecord>,
    pub errors: Vec<PathError>,
}

/// Recomputes both wealth forms from stored trajectories.
pub fn wealth(bundle: &PathBundle) -> Result<Vec<WealthPair>> {
    let n = bundle.grid.len();
    let c = bundle.c;
    bundle
        .paths
        .iter()
        .map(|p| {
            for (name, v) in [
                ("b", &p.b),
                ("z", &p.z),
                ("xi", &p.xi),
                ("y", &p.y),
                ("theta", &p.theta),
            ] {
                if v.len() != n {
                    return Err(Error::InconsistentBundle(format!(
                        "path {} has {} values of {name} on a grid of {n} nodes",
                        p.index,
                        v.len()
                    )));
                }
            }
            let mut ito = 0.0;
            let mut spent = 0.0;
            let mut jump_at = vec![0.0; n];
            for j in &p.jumps {
                if j.node >= n {
                    return Err(Error::InconsistentBundle(format!(
                        "jump at node {} beyond the grid",
                        j.node
                    )));
                }
                ito += j.theta_before * (j.xi_after - j.xi_before);
                spent += (j.xi_after + c) * j.dtheta;
                jump_at[j.node] += j.dtheta;
            }
            for k in 0..n - 1 {
                ito += p.theta[k] * (p.xi[k + 1] - p.xi[k]);
                let continuous = p.theta[k + 1] - p.theta[k] - jump_at[k + 1];
                spent += (p.xi[k] + c) * continuous;
            }
            let theta_n = p.theta[n - 1];
            let xi_n = p.xi[n - 1];
            Ok(WealthPair {
                ito: ito + (p.z_one - xi_n - c) * theta_n,
                by_parts: p.z_one * theta_n - spent,
            })
        })
        .collect()
}
