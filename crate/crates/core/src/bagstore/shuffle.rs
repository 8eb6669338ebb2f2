use crate::bagstore::Bag;
use crate::numkit::RngStream;

/// Number of instances a shuffle at `fraction` touches: `ceil(fraction * n)`.
pub fn shuffled_count(n: usize, fraction: f64) -> usize {
    let f = fraction.clamp(0.0, 1.0);
    // Guard against products such as 0.1 * 30 = 3.0000000000000004.
    (((f * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Coordinate-shuffle perturbation.
///
/// Picks `ceil(fraction * N)` instances uniformly without replacement and
/// permutes their coordinates uniformly among themselves. Embeddings, labels
/// and key indices are untouched, so composition is preserved exactly while
/// the spatial arrangement is destroyed. Identity draws are allowed.
pub fn shuffle_coords(bag: &Bag, fraction: f64, rng: &mut RngStream) -> Bag {
    let mut out = bag.clone();
    let m = shuffled_count(bag.len(), fraction);
    if m < 2 {
        return out;
    }
    let chosen = rng.sample_indices(bag.len(), m);
    let mut source = chosen.clone();
    rng.shuffle(&mut source);
    for (&dst, &src) in chosen.iter().zip(&source) {
        out.coords.row_mut(dst).copy_from_slice(bag.coords.row(src));
    }
    out
}
