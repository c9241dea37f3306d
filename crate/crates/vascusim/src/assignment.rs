//! Minimum-cost assignment (Kuhn–Munkres) for rectangular cost matrices.
//!
//! Shortest-augmenting-path formulation with dual potentials, O(n²·m). Finds
//! a maximal matching (all rows of the smaller dimension matched) of minimum
//! total cost. Costs must be finite; rows and columns are matched at most
//! once.

/// Result of solving a cost matrix: matched `(row, col)` pairs sorted by row,
/// plus the total cost summed over pairs in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Solves the rectangular min-cost assignment problem. `cost[i][j]` is the
/// cost of pairing row `i` with column `j`. All min(rows, cols) assignments
/// are made; an empty matrix yields an empty matching.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Matching {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Matching { pairs: Vec::new(), total_cost: 0.0 };
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    debug_assert!(
        cost.iter().flatten().all(|c| c.is_finite()),
        "costs must be finite"
    );

    // The augmenting loop requires rows <= cols; transpose otherwise.
    let mut pairs = if rows <= cols {
        solve_wide(cost, rows, cols)
    } else {
        let transposed: Vec<Vec<f64>> =
            (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        let mut p = solve_wide(&transposed, cols, rows);
        for pair in &mut p {
            *pair = (pair.1, pair.0);
        }
        p
    };
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Matching { pairs, total_cost }
}

/// Core solver for rows <= cols. Indices are 1-based internally with row 0 /
/// column 0 as sentinels for the augmenting-path bookkeeping.
fn solve_wide(cost: &[Vec<f64>], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0_f64; rows + 1]; // row potentials
    let mut v = vec![0.0_f64; cols + 1]; // column potentials
    let mut matched_row = vec![0_usize; cols + 1]; // column -> row (0 = free)
    let mut way = vec![0_usize; cols + 1]; // augmenting-path predecessor

    for i in 1..=rows {
        matched_row[0] = i;
        let mut j0 = 0_usize;
        let mut min_slack = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        // Dijkstra-style search for the cheapest augmenting path from row i.
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0_usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Unwind the path, flipping matched edges.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    (1..=cols)
        .filter(|&j| matched_row[j] != 0)
        .map(|j| (matched_row[j] - 1, j - 1))
        .collect()
}

#[cfg(test)]
pub(crate) mod brute {
    //! Exhaustive assignment oracle for matrices up to ~8 in the smaller
    //! dimension. Sums costs in ascending row order, matching
    //! [`solve_assignment`](super::solve_assignment)'s total exactly.

    pub fn best_assignment(cost: &[Vec<f64>]) -> (Vec<(usize, usize)>, f64) {
        let rows = cost.len();
        let cols = cost.first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 {
            return (Vec::new(), 0.0);
        }
        if rows <= cols {
            let mut best: Option<(Vec<usize>, f64)> = None;
            let mut chosen = Vec::with_capacity(rows);
            let mut used = vec![false; cols];
            recurse(cost, 0, rows, cols, &mut used, &mut chosen, &mut best);
            let (cols_for_rows, total) = best.unwrap();
            (cols_for_rows.iter().enumerate().map(|(i, &j)| (i, j)).collect(), total)
        } else {
            let t: Vec<Vec<f64>> =
                (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
            let (pairs, _) = best_assignment(&t);
            let mut flipped: Vec<(usize, usize)> = pairs.into_iter().map(|(a, b)| (b, a)).collect();
            flipped.sort_unstable();
            let total = flipped.iter().map(|&(i, j)| cost[i][j]).sum();
            (flipped, total)
        }
    }

    fn recurse(
        cost: &[Vec<f64>],
        row: usize,
        rows: usize,
        cols: usize,
        used: &mut [bool],
        chosen: &mut Vec<usize>,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        if row == rows {
            let total: f64 = chosen.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            if best.as_ref().is_none_or(|(_, t)| total < *t) {
                *best = Some((chosen.clone(), total));
            }
            return;
        }
        for j in 0..cols {
            if used[j] {
                continue;
            }
            used[j] = true;
            chosen.push(j);
            recurse(cost, row + 1, rows, cols, used, chosen, best);
            chosen.pop();
            used[j] = false;
        }
    }
}
