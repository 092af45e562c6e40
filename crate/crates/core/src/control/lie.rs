use crate::linalg::{CMatrix, C64, I};

/// Relative tolerance for deciding that a commutator adds a new direction.
const INDEPENDENCE_TOL: f64 = 1e-9;

/// Dimension of the real Lie algebra generated by `{−i·opₖ}`.
///
/// Elements are flattened to real vectors of length `2N²`; the span is grown
/// by closing under commutators until no new independent direction appears.
/// For Hermitian traceless `N`-level operators a rank of `N² − 1` certifies
/// controllability on SU(N).
pub fn lie_rank(generators: &[CMatrix]) -> usize {
    let Some(first) = generators.first() else {
        return 0;
    };
    let n = first.nrows();
    let ambient = 2 * n * n;

    let mut span = Span::new(ambient);
    let mut elements: Vec<CMatrix> = Vec::new();
    for op in generators {
        let x = op * (-I);
        if let Some(unit) = span.try_add(&x) {
            elements.push(unit);
        }
    }

    let mut i = 0;
    while i < elements.len() && span.len() < ambient {
        for j in 0..i {
            let c = &elements[i] * &elements[j] - &elements[j] * &elements[i];
            if let Some(unit) = span.try_add(&c) {
                elements.push(unit);
                if span.len() == ambient {
                    break;
                }
            }
        }
        i += 1;
    }
    span.len()
}

/// An orthonormal basis of real vectors.
struct Span {
    basis: Vec<Vec<f64>>,
    ambient: usize,
}

impl Span {
    fn new(ambient: usize) -> Self {
        Self {
            basis: Vec::new(),
            ambient,
        }
    }

    fn len(&self) -> usize {
        self.basis.len()
    }

    /// Adds `m` if it is independent of the current span and returns it
    /// normalized to unit Frobenius norm.
    fn try_add(&mut self, m: &CMatrix) -> Option<CMatrix> {
        let norm = m.norm();
        if !(norm > f64::MIN_POSITIVE) || self.basis.len() == self.ambient {
            return None;
        }
        let mut v = flatten(m);
        v.iter_mut().for_each(|x| *x /= norm);
        // Two passes of Gram-Schmidt.
        for _ in 0..2 {
            for b in &self.basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let rest = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rest <= INDEPENDENCE_TOL {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= rest);
        self.basis.push(v);
        Some(m.unscale(norm))
    }
}

fn flatten(m: &CMatrix) -> Vec<f64> {
    m.iter().flat_map(|z: &C64| [z.re, z.im]).collect()
}
