//! Minimum-cost perfect matching on a dense square cost matrix
//! (shortest augmenting paths with dual potentials, O(n³)).

use crate::error::{invalid, Result};

/// Returns `(total cost, assignment)` where row `i` is matched to column
/// `assignment[i]`. `cost` is row-major `n × n`.
pub fn solve_assignment(cost: &[f64], n: usize) -> Result<(f64, Vec<usize>)> {
    if cost.len() != n * n {
        return invalid(format!("cost matrix has {} entries, expected {}", cost.len(), n * n));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return invalid("cost matrix has non-finite entries");
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[col_row[j] - 1] = j - 1;
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((total, assign))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_known() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let (v, a) = solve_assignment(&c, 3).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(a, vec![1, 0, 2]);
    }

    #[test]
    fn empty_and_bad_shape() {
        assert_eq!(solve_assignment(&[], 0).unwrap().0, 0.0);
        assert!(solve_assignment(&[1.0, 2.0], 2).is_err());
        assert!(solve_assignment(&[f64::NAN], 1).is_err());
    }
}
