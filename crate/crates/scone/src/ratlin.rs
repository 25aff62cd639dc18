//! Exact rational linear algebra for the point-in-simplex predicates.
//!
//! Reducedness of a circuit is a boundary-sensitive predicate, so affine
//! independence and membership in a convex hull are decided over `BigRational`
//! with no floating point involved.

use num_rational::BigRational;
use num_traits::{One, Zero};

type Rat = BigRational;

/// Row-reduce an augmented matrix in place (Gauss–Jordan with exact pivots).
/// Returns the pivot column of each pivot row.
fn row_reduce(mat: &mut [Vec<Rat>], cols: usize) -> Vec<usize> {
    let rows = mat.len();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let Some(pivot_row) = (row..rows).find(|&r| !mat[r][col].is_zero()) else {
            continue;
        };
        mat.swap(row, pivot_row);
        let inv = mat[row][col].clone();
        for entry in mat[row].iter_mut() {
            *entry = &*entry / &inv;
        }
        for r in 0..rows {
            if r != row && !mat[r][col].is_zero() {
                let factor = mat[r][col].clone();
                for c in 0..mat[r].len() {
                    let delta = &factor * &mat[row][c];
                    mat[r][c] = &mat[r][c] - delta;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// Whether the given points are affinely independent.
pub(crate) fn affinely_independent(points: &[&[Rat]]) -> bool {
    let k = points.len();
    if k <= 1 {
        return true;
    }
    let dim = points[0].len();
    if k > dim + 1 {
        return false;
    }
    // Rank of the differences p_i − p_0 must be k − 1.
    let mut mat: Vec<Vec<Rat>> = (1..k)
        .map(|i| {
            (0..dim)
                .map(|j| &points[i][j] - &points[0][j])
                .collect::<Vec<_>>()
        })
        .collect();
    row_reduce(&mut mat, dim).len() == k - 1
}

/// Coordinates of `target` as an affine combination of `points`.
///
/// Solves `Σ λ_i p_i = target`, `Σ λ_i = 1` exactly. Returns `None` when the
/// points are affinely dependent or the target lies outside their affine
/// hull; the combination is unique otherwise.
pub(crate) fn affine_coordinates(points: &[&[Rat]], target: &[Rat]) -> Option<Vec<Rat>> {
    let k = points.len();
    if k == 0 {
        return None;
    }
    let dim = points[0].len();
    debug_assert!(points.iter().all(|p| p.len() == dim) && target.len() == dim);
    if !affinely_independent(points) {
        return None;
    }
    // Augmented system: rows are the n coordinate equations plus Σ λ = 1.
    let mut mat: Vec<Vec<Rat>> = (0..dim)
        .map(|j| {
            let mut row: Vec<Rat> = points.iter().map(|p| p[j].clone()).collect();
            row.push(target[j].clone());
            row
        })
        .collect();
    let mut one_row: Vec<Rat> = vec![Rat::one(); k];
    one_row.push(Rat::one());
    mat.push(one_row);

    let pivots = row_reduce(&mut mat, k);
    if pivots.len() < k {
        return None; // dependent, already excluded above
    }
    // Any remaining nonzero row in the augmented column means inconsistency.
    for row in mat.iter().skip(k) {
        if row[..k].iter().all(Zero::is_zero) && !row[k].is_zero() {
            return None;
        }
    }
    let mut coords = vec![Rat::zero(); k];
    for (r, &col) in pivots.iter().enumerate() {
        coords[col] = mat[r][k].clone();
    }
    Some(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::FromPrimitive;

    fn rv(vals: &[i64]) -> Vec<Rat> {
        vals.iter().map(|&v| Rat::from_i64(v).unwrap()).collect()
    }

    #[test]
    fn independence_on_a_line() {
        let p0 = rv(&[0]);
        let p1 = rv(&[6]);
        let p2 = rv(&[2]);
        assert!(affinely_independent(&[&p0, &p1]));
        assert!(!affinely_independent(&[&p0, &p1, &p2]));
    }

    #[test]
    fn plane_triangle_coordinates() {
        let a = rv(&[0, 0]);
        let b = rv(&[4, 2]);
        let c = rv(&[2, 4]);
        let points = [a.as_slice(), b.as_slice(), c.as_slice()];
        let inner = rv(&[1, 1]);
        let coords = affine_coordinates(&points, &inner).unwrap();
        assert_eq!(coords[0], Rat::new(2.into(), 3.into()));
        assert_eq!(coords[1], Rat::new(1.into(), 6.into()));
        assert_eq!(coords[2], Rat::new(1.into(), 6.into()));

        // Outside the affine hull of two points in the plane.
        let seg = [a.as_slice(), b.as_slice()];
        assert!(affine_coordinates(&seg, &rv(&[0, 1])).is_none());
        // On the hull: still a valid affine (here convex) combination.
        assert_eq!(
            affine_coordinates(&seg, &rv(&[2, 1])).unwrap(),
            rv_halves()
        );
    }

    fn rv_halves() -> Vec<Rat> {
        vec![Rat::new(1.into(), 2.into()), Rat::new(1.into(), 2.into())]
    }

    #[test]
    fn negative_coordinates_outside_simplex() {
        let p0 = rv(&[0]);
        let p1 = rv(&[2]);
        let coords = affine_coordinates(&[&p0, &p1], &rv(&[3])).unwrap();
        assert_eq!(coords[0], -Rat::new(1.into(), 2.into()));
        assert!(coords.iter().any(|c| c < &Rat::zero()));
    }
}
