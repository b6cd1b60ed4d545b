//! Node relabelling of prepared samples.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use vulngraph::model::Sample;

/// Random permutation of `0..m`; node `i` moves to position `perm[i]`.
pub fn random_permutation(m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..m).collect();
    p.shuffle(rng);
    p
}

pub fn permute_rows(a: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(a.dim());
    for (i, &to) in perm.iter().enumerate() {
        out.row_mut(to).assign(&a.row(i));
    }
    out
}

pub fn permute_sample(s: &Sample, perm: &[usize]) -> Sample {
    let mut out = s.clone();
    out.x = permute_rows(&s.x, perm);
    for ty in &mut out.adj.types {
        for e in &mut ty.edges {
            *e = (perm[e.0], perm[e.1]);
        }
    }
    for (i, &to) in perm.iter().enumerate() {
        out.token_ids[to] = s.token_ids[i].clone();
        out.types[to] = s.types[i];
    }
    out
}
