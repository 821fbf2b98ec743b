//! Finite permutations and their factorization into adjacent
//! transpositions. Symmetric-group actions on collections are stored on
//! generators; arbitrary permutations act through these factorizations.

/// A permutation of {0,..,n-1}; `map[i]` is the image of i.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Perm {
    map: Vec<usize>,
}

impl Perm {
    pub fn identity(n: usize) -> Perm {
        Perm {
            map: (0..n).collect(),
        }
    }

    pub fn from_images(map: Vec<usize>) -> Perm {
        let mut seen = vec![false; map.len()];
        for &i in &map {
            assert!(i < map.len() && !seen[i], "not a permutation");
            seen[i] = true;
        }
        Perm { map }
    }

    /// The adjacent transposition (i, i+1) in Σ_n.
    pub fn adjacent(n: usize, i: usize) -> Perm {
        assert!(i + 1 < n);
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(i, i + 1);
        Perm { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// self ∘ other: first other, then self.
    pub fn compose(&self, other: &Perm) -> Perm {
        assert_eq!(self.len(), other.len());
        Perm {
            map: (0..self.len()).map(|i| self.map[other.map[i]]).collect(),
        }
    }

    pub fn inverse(&self) -> Perm {
        let mut map = vec![0; self.len()];
        for (i, &j) in self.map.iter().enumerate() {
            map[j] = i;
        }
        Perm { map }
    }

    /// Permute the entries of a slice: result[σ(i)] = v[i].
    pub fn permute<T: Clone>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.len());
        let mut out = v.to_vec();
        for (i, x) in v.iter().enumerate() {
            out[self.map[i]] = x.clone();
        }
        out
    }

    /// Write self as a product s_{i_k} ∘ … ∘ s_{i_1} of adjacent
    /// transpositions (apply left to right over the returned order).
    pub fn adjacent_factorization(&self) -> Vec<usize> {
        // bubble sort the one-line notation; each swap is one generator
        let mut v = self.map.clone();
        let mut out = Vec::new();
        let n = v.len();
        loop {
            let mut swapped = false;
            for i in 0..n.saturating_sub(1) {
                if v[i] > v[i + 1] {
                    v.swap(i, i + 1);
                    out.push(i);
                    swapped = true;
                }
            }
            if !swapped {
                break;
            }
        }
        out
    }

    /// All of Σ_n in a deterministic order.
    pub fn all(n: usize) -> Vec<Perm> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Perm { map: cur.clone() });
            // next lexicographic permutation
            let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
                break;
            };
            let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
            cur.swap(i, j);
            cur[i + 1..].reverse();
        }
        out
    }

    /// Sign of the permutation.
    pub fn sign(&self) -> i64 {
        let mut inv = 0usize;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                if self.map[i] > self.map[j] {
                    inv += 1;
                }
            }
        }
        if inv % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// The permutation sorting `keys` stably: item i moves to slot σ(i)
    /// of the sorted output.
    pub fn sorting<T: Ord>(keys: &[T]) -> Perm {
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
        // order[t] = source index landing at slot t
        let mut map = vec![0; keys.len()];
        for (t, &s) in order.iter().enumerate() {
            map[s] = t;
        }
        Perm { map }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorization_reconstructs() {
        for p in Perm::all(4) {
            let mut acc = Perm::identity(4);
            for i in p.adjacent_factorization() {
                acc = Perm::adjacent(4, i).compose(&acc);
            }
            assert_eq!(acc, p, "factorization of {:?}", p);
        }
    }

    #[test]
    fn compose_inverse() {
        for p in Perm::all(4) {
            assert!(p.compose(&p.inverse()).is_identity());
            assert!(p.inverse().compose(&p).is_identity());
        }
    }

    #[test]
    fn permute_slices() {
        let p = Perm::from_images(vec![2, 0, 1]);
        assert_eq!(p.permute(&['a', 'b', 'c']), vec!['b', 'c', 'a']);
    }

    #[test]
    fn sorting_perm() {
        let keys = [30, 10, 20];
        let p = Perm::sorting(&keys);
        assert_eq!(p.permute(&keys), vec![10, 20, 30]);
    }

    #[test]
    fn all_has_factorial_size() {
        assert_eq!(Perm::all(4).len(), 24);
        assert_eq!(Perm::all(0).len(), 1);
    }

    #[test]
    fn sign_multiplicative() {
        for a in Perm::all(3) {
            for b in Perm::all(3) {
                assert_eq!(a.compose(&b).sign(), a.sign() * b.sign());
            }
        }
    }
}
