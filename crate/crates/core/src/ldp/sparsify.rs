//! Density correction after randomized response.
//!
//! Flipping inflates a sparse adjacency toward density `p_e`. Inverting the
//! expected density gives the likely true density `x_hat`; the surplus ones
//! are removed starting from the pairs whose sanitized vectors are farthest
//! apart, since linked nodes tend to have similar features.

use ndarray::Array2;

use super::LinkMatrix;

fn sq_distance(nodes: &Array2<f64>, i: usize, j: usize) -> f64 {
    nodes
        .row(i)
        .iter()
        .zip(nodes.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Prunes `noised` toward its estimated true density. `nodes` holds one
/// sanitized vector per row. Requires `p_e != 0.5`.
pub fn sparsify_correct(noised: &LinkMatrix, nodes: &Array2<f64>, p_e: f64) -> LinkMatrix {
    assert_eq!(noised.size(), nodes.nrows(), "one sanitized vector per batch node");
    assert!(p_e != 0.5, "density cannot be inverted at p_e = 1/2");
    let pairs = noised.num_pairs();
    if pairs == 0 {
        return noised.clone();
    }
    let observed = noised.density();
    let target = ((observed - p_e) / (1.0 - 2.0 * p_e)).clamp(0.0, observed);
    let remove = (((observed - target) * pairs as f64).round() as usize).min(noised.count_ones());
    if remove == 0 {
        return noised.clone();
    }

    let mut ones: Vec<(f64, usize, (usize, usize))> = noised
        .pairs()
        .enumerate()
        .filter(|&(idx, _)| noised.bits()[idx])
        .map(|(idx, (i, j))| (sq_distance(nodes, i, j), idx, (i, j)))
        .collect();
    ones.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut out = noised.clone();
    for &(_, _, (i, j)) in ones.iter().take(remove) {
        out.set(i, j, false);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldp::flip_links;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn clean_matrix_is_untouched_without_noise() {
        let mut m = LinkMatrix::zeros(4);
        m.set(0, 1, true);
        m.set(2, 3, true);
        let nodes = Array2::from_shape_fn((4, 2), |(i, j)| (i * j) as f64);
        assert_eq!(sparsify_correct(&m, &nodes, 0.0), m);
    }

    #[test]
    fn removes_farthest_pairs_first() {
        let nodes = ndarray::array![[0.0], [0.1], [5.0], [0.2]];
        // 2 of 6 pairs set, p_e = 0.25: target (1/3 - 1/4) / (1/2) = 1/6, so
        // round((1/3 - 1/6) * 6) = 1 pair goes, the far one.
        let mut s = LinkMatrix::zeros(4);
        s.set(0, 1, true);
        s.set(0, 2, true);
        let out = sparsify_correct(&s, &nodes, 0.25);
        assert!(out.get(0, 1));
        assert!(!out.get(0, 2));
        // Dense input: the inverted density exceeds the observed one and is
        // clamped, so nothing is removed.
        s.set(1, 3, true);
        s.set(2, 3, true);
        assert_eq!(sparsify_correct(&s, &nodes, 0.1), s);
    }

    #[test]
    fn flipped_empty_matrix_is_nearly_cleared() {
        let nodes = Array2::zeros((40, 3));
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = SimRng::seed_from_u64(seed);
            let noised = flip_links(&LinkMatrix::zeros(40), 0.25, &mut rng);
            total += sparsify_correct(&noised, &nodes, 0.25).density();
        }
        assert!(total / 20.0 <= 0.02, "mean corrected density {}", total / 20.0);
    }

    #[test]
    fn output_stays_symmetric_and_subset() {
        let mut rng = SimRng::seed_from_u64(9);
        let nodes = Array2::from_shape_fn((12, 2), |(i, j)| (i as f64) * 0.3 + j as f64);
        let noised = flip_links(&LinkMatrix::zeros(12), 0.3, &mut rng);
        let out = sparsify_correct(&noised, &nodes, 0.3);
        for (i, j) in out.pairs() {
            assert_eq!(out.get(i, j), out.get(j, i));
            assert!(!out.get(i, j) || noised.get(i, j));
        }
    }
}
