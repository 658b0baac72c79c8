use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{CctsError, Result};

/// Reference gradients of completed tasks, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradientMemory {
    capacity: usize,
    entries: VecDeque<(usize, Vec<f64>)>,
}

impl GradientMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::new(),
        }
    }

    /// Stores (or replaces) the gradient of `task`, evicting the oldest task
    /// when full.
    pub fn record(&mut self, task: usize, gradient: Vec<f64>) -> Result<()> {
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(CctsError::Numeric {
                step: task,
                what: "reference gradient".into(),
            });
        }
        if self.capacity == 0 {
            return Ok(());
        }
        self.entries.retain(|(t, _)| *t != task);
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((task, gradient));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(t, _)| *t)
    }

    pub fn gradients(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(|(_, g)| g.as_slice())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `G_SS u = -b_S` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve_active(gram: &[Vec<f64>], rhs: &[f64], active: &[usize]) -> Option<Vec<f64>> {
    let n = active.len();
    let mut a: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = active.iter().map(|&j| gram[i][j]).collect();
            row.push(-rhs[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() <= 1e-14 * gram[active[col]][active[col]] {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    let mut u = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * u[k]).sum();
        u[row] = (a[row][n] - tail) / a[row][row];
    }
    Some(u)
}

/// Euclidean projection of `g` onto `{g' : ⟨g_k, g'⟩ ≥ 0 for every stored g_k}`.
///
/// Solves the dual `min_{u ≥ 0} ½ uᵀGu + bᵀu` (G the Gram matrix of the
/// memory, `b_k = ⟨g_k, g⟩`) by cyclic coordinate descent, then polishes the
/// active set with an exact solve. `g' = g + Σ u_k g_k`. All-zero memory
/// entries carry no constraint and are skipped.
pub fn gem_project(gradient: &[f64], memory: &GradientMemory) -> Result<Vec<f64>> {
    let rows: Vec<&[f64]> = memory
        .gradients()
        .filter(|g| g.iter().any(|&v| v != 0.0))
        .collect();
    for row in &rows {
        if row.len() != gradient.len() {
            return Err(CctsError::arg(
                "gem_project: memory gradient length mismatch",
            ));
        }
    }
    let b: Vec<f64> = rows.iter().map(|r| dot(r, gradient)).collect();
    if b.iter().all(|&v| v >= 0.0) {
        return Ok(gradient.to_vec());
    }
    let k = rows.len();
    let gram: Vec<Vec<f64>> = rows
        .iter()
        .map(|ri| rows.iter().map(|rj| dot(ri, rj)).collect())
        .collect();
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);

    let mut u = vec![0.0; k];
    let mut residual = b.clone();
    for _ in 0..20_000 {
        let mut largest_move = 0.0f64;
        for i in 0..k {
            let next = (u[i] - residual[i] / gram[i][i]).max(0.0);
            let delta = next - u[i];
            if delta != 0.0 {
                for (j, r) in residual.iter_mut().enumerate() {
                    *r += delta * gram[j][i];
                }
                u[i] = next;
                largest_move = largest_move.max(delta.abs() * gram[i][i]);
            }
        }
        if largest_move <= 1e-15 * scale {
            break;
        }
    }

    let active: Vec<usize> = (0..k).filter(|&i| u[i] > 0.0).collect();
    if let Some(exact) = solve_active(&gram, &b, &active) {
        if exact.iter().all(|&v| v >= 0.0) {
            let mut candidate = vec![0.0; k];
            for (&i, &v) in active.iter().zip(&exact) {
                candidate[i] = v;
            }
            let feasible = (0..k).all(|i| {
                b[i] + (0..k).map(|j| gram[i][j] * candidate[j]).sum::<f64>() >= -1e-12 * scale
            });
            if feasible {
                u = candidate;
            }
        }
    }

    let mut projected = gradient.to_vec();
    for (row, &ui) in rows.iter().zip(&u) {
        if ui != 0.0 {
            projected
                .iter_mut()
                .zip(row.iter())
                .for_each(|(p, r)| *p += ui * r);
        }
    }
    // When the constraints pin the result to the origin, what remains is
    // cancellation noise with an arbitrary direction.
    let magnitude = dot(gradient, gradient).sqrt()
        + rows
            .iter()
            .zip(&u)
            .map(|(r, ui)| ui * dot(r, r).sqrt())
            .sum::<f64>();
    if dot(&projected, &projected).sqrt() <= 1e-10 * magnitude {
        projected.iter_mut().for_each(|p| *p = 0.0);
    }
    Ok(projected)
}
