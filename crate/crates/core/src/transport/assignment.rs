use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Minimum-cost perfect matching for an `n × n` cost matrix (row-major).
///
/// Returns `col_for_row`, so the optimal assignment pairs row `i` with column
/// `col_for_row[i]`. Shortest augmenting paths with dual potentials
/// (Jonker–Volgenant, in Crouse's formulation); `O(n³)`.
pub fn linear_assignment(n: usize, cost: &[f64]) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::SizeMismatch {
            left: n * n,
            right: cost.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("assignment cost matrix has non-finite entries"));
    }

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut shortest = vec![f64::INFINITY; n];
    let mut path = vec![NONE; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];
    let mut seen_row = vec![false; n];
    let mut seen_col = vec![false; n];
    let mut remaining = vec![0usize; n];

    for cur_row in 0..n {
        // Dijkstra over reduced costs from `cur_row` to the nearest free column.
        let mut min_val = 0.0;
        let mut n_remaining = n;
        for (k, r) in remaining.iter_mut().enumerate() {
            *r = n - k - 1;
        }
        seen_row.fill(false);
        seen_col.fill(false);
        shortest.fill(f64::INFINITY);

        let mut i = cur_row;
        let sink = loop {
            seen_row[i] = true;
            let mut index = NONE;
            let mut lowest = f64::INFINITY;
            let row = &cost[i * n..(i + 1) * n];
            for it in 0..n_remaining {
                let j = remaining[it];
                let r = min_val + row[j] - u[i] - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == NONE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            if min_val == f64::INFINITY || index == NONE {
                return Err(Error::invalid("assignment problem is infeasible"));
            }
            let j = remaining[index];
            seen_col[j] = true;
            n_remaining -= 1;
            remaining[index] = remaining[n_remaining];
            if row4col[j] == NONE {
                break j;
            }
            i = row4col[j];
        };

        u[cur_row] += min_val;
        for r in 0..n {
            if seen_row[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for c in 0..n {
            if seen_col[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    Ok(col4row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(n: usize, cost: &[f64], perm: &[usize]) -> f64 {
        (0..n).map(|i| cost[i * n + perm[i]]).sum()
    }

    #[test]
    fn small_known_instance() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let perm = linear_assignment(3, &cost).unwrap();
        assert_eq!(total(3, &cost, &perm), 5.0);
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn constant_matrix_gives_identity() {
        let perm = linear_assignment(4, &[1.0; 16]).unwrap();
        assert_eq!(perm, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(linear_assignment(2, &[0.0; 3]).is_err());
        assert!(linear_assignment(1, &[f64::NAN]).is_err());
        assert!(linear_assignment(0, &[]).unwrap().is_empty());
    }
}
