//! Joint data-vector enumeration and the quadrant-symmetry reduction.
//!
//! If `d[m] = ζ·d[n]` with `ζ ∈ {1, i, −1, −i}` then the optimal output
//! vectors satisfy `x[m] = ζ·x[n]`, so only one representative per coset
//! needs solving.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::Constellation;

pub const DEFAULT_VECTOR_CAP: usize = 1 << 20;

/// Element of the rotation group `{1, i, −1, −i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zeta {
    One,
    I,
    MinusOne,
    MinusI,
}

impl Zeta {
    pub fn value(self) -> Complex64 {
        match self {
            Zeta::One => Complex64::new(1.0, 0.0),
            Zeta::I => Complex64::new(0.0, 1.0),
            Zeta::MinusOne => Complex64::new(-1.0, 0.0),
            Zeta::MinusI => Complex64::new(0.0, -1.0),
        }
    }

    pub fn inverse(self) -> Zeta {
        match self {
            Zeta::I => Zeta::MinusI,
            Zeta::MinusI => Zeta::I,
            z => z,
        }
    }

    /// Exact multiplication (swaps and sign flips only).
    pub fn apply(self, z: Complex64) -> Complex64 {
        match self {
            Zeta::One => z,
            Zeta::I => Complex64::new(-z.im, z.re),
            Zeta::MinusOne => -z,
            Zeta::MinusI => Complex64::new(z.im, -z.re),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Full,
    Reduced,
}

/// Largest subgroup of `{1, i, −1, −i}` under which every constellation is
/// closed as a set.
pub fn reduction_group(constellations: &[Constellation]) -> Vec<Zeta> {
    let closed = |z: Zeta| {
        constellations
            .iter()
            .all(|k| k.points().iter().all(|&p| k.index_of(z.apply(p)).is_some()))
    };
    if closed(Zeta::I) {
        vec![Zeta::One, Zeta::I, Zeta::MinusOne, Zeta::MinusI]
    } else if closed(Zeta::MinusOne) {
        vec![Zeta::One, Zeta::MinusOne]
    } else {
        vec![Zeta::One]
    }
}

/// Half-open fundamental domain of user 1's symbol for a group of `order`.
fn in_fundamental_domain(z: Complex64, order: usize) -> bool {
    match order {
        4 => z.re > 0.0 && z.im >= 0.0,
        2 => z.re > 0.0 || (z.re == 0.0 && z.im > 0.0),
        _ => true,
    }
}

/// Enumerated joint data vectors, full or symmetry-reduced.
#[derive(Debug, Clone)]
pub struct DataVectorSet {
    constellations: Vec<Constellation>,
    /// Symbol indices (one per user) of each stored vector.
    vectors: Vec<Vec<usize>>,
    mode: Mode,
    group: Vec<Zeta>,
    /// For every full-space vector in lexicographic order: the stored
    /// representative and the `ζ` with `full = ζ·representative`.
    cosets: Vec<(usize, Zeta)>,
}

fn full_size(constellations: &[Constellation], cap: usize) -> Result<usize> {
    if constellations.is_empty() {
        return Err(Error::InvalidArgument("need at least one user".into()));
    }
    let size = constellations
        .iter()
        .try_fold(1u128, |acc, k| acc.checked_mul(k.order() as u128))
        .unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(Error::TooManyVectors { size, cap });
    }
    Ok(size as usize)
}

/// Lexicographic symbol tuples, user 1 most significant.
fn lexicographic(constellations: &[Constellation], size: usize) -> Vec<Vec<usize>> {
    let k = constellations.len();
    (0..size)
        .map(|mut idx| {
            let mut syms = vec![0; k];
            for j in (0..k).rev() {
                let order = constellations[j].order();
                syms[j] = idx % order;
                idx /= order;
            }
            syms
        })
        .collect()
}

/// Every joint data vector.
pub fn enumerate_all(constellations: &[Constellation]) -> Result<DataVectorSet> {
    enumerate_all_capped(constellations, DEFAULT_VECTOR_CAP)
}

pub fn enumerate_all_capped(constellations: &[Constellation], cap: usize) -> Result<DataVectorSet> {
    let size = full_size(constellations, cap)?;
    let vectors = lexicographic(constellations, size);
    Ok(DataVectorSet {
        constellations: constellations.to_vec(),
        cosets: (0..size).map(|n| (n, Zeta::One)).collect(),
        vectors,
        mode: Mode::Full,
        group: vec![Zeta::One],
    })
}

/// Representatives whose first-user symbol lies in the canonical domain,
/// plus the coset map for the whole space. Falls back to `Full` when the
/// reduction group is trivial.
pub fn reduced_set(constellations: &[Constellation]) -> Result<DataVectorSet> {
    reduced_set_capped(constellations, DEFAULT_VECTOR_CAP)
}

pub fn reduced_set_capped(constellations: &[Constellation], cap: usize) -> Result<DataVectorSet> {
    let group = reduction_group(constellations);
    if group.len() == 1 {
        return enumerate_all_capped(constellations, cap);
    }
    let size = full_size(constellations, cap)?;
    let all = lexicographic(constellations, size);
    let first = &constellations[0];

    let mut vectors = Vec::with_capacity(size / group.len());
    let mut position: HashMap<Vec<usize>, usize> = HashMap::new();
    for syms in &all {
        if in_fundamental_domain(first.point(syms[0]), group.len()) {
            position.insert(syms.clone(), vectors.len());
            vectors.push(syms.clone());
        }
    }

    let rotate = |syms: &[usize], z: Zeta| -> Option<Vec<usize>> {
        syms.iter()
            .zip(constellations)
            .map(|(&s, k)| k.index_of(z.apply(k.point(s))))
            .collect()
    };
    let mut cosets = Vec::with_capacity(size);
    for syms in &all {
        let d1 = first.point(syms[0]);
        let zeta = group
            .iter()
            .copied()
            .find(|z| in_fundamental_domain(z.inverse().apply(d1), group.len()))
            .expect("domain tiles the orbit");
        let rep = rotate(syms, zeta.inverse()).expect("constellations closed under group");
        cosets.push((position[&rep], zeta));
    }

    Ok(DataVectorSet {
        constellations: constellations.to_vec(),
        vectors,
        mode: Mode::Reduced,
        group,
        cosets,
    })
}

impl DataVectorSet {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn users(&self) -> usize {
        self.constellations.len()
    }

    pub fn constellations(&self) -> &[Constellation] {
        &self.constellations
    }

    pub fn group(&self) -> &[Zeta] {
        &self.group
    }

    /// Number of vectors in the full space.
    pub fn full_len(&self) -> usize {
        self.cosets.len()
    }

    pub fn symbols(&self, n: usize) -> &[usize] {
        &self.vectors[n]
    }

    /// Complex symbol vector `d[n]`.
    pub fn vector(&self, n: usize) -> Vec<Complex64> {
        self.vectors[n]
            .iter()
            .zip(&self.constellations)
            .map(|(&s, k)| k.point(s))
            .collect()
    }

    /// `(representative, ζ)` for full-space vector `m`.
    pub fn coset(&self, m: usize) -> (usize, Zeta) {
        self.cosets[m]
    }

    /// Symbol indices of full-space vector `m`.
    pub fn full_symbols(&self, m: usize) -> Vec<usize> {
        let mut idx = m;
        let mut syms = vec![0; self.users()];
        for j in (0..self.users()).rev() {
            let order = self.constellations[j].order();
            syms[j] = idx % order;
            idx /= order;
        }
        syms
    }

    pub fn full_vector(&self, m: usize) -> Vec<Complex64> {
        self.full_symbols(m)
            .iter()
            .zip(&self.constellations)
            .map(|(&s, k)| k.point(s))
            .collect()
    }

    /// Lexicographic index of a symbol tuple in the full space.
    pub fn full_index(&self, syms: &[usize]) -> usize {
        syms.iter()
            .zip(&self.constellations)
            .fold(0, |acc, (&s, k)| acc * k.order() + s)
    }
}

/// Map one output vector per stored vector to every full-space vector via
/// `x[m] = ζ·x[n]`.
pub fn expand_solutions(
    set: &DataVectorSet,
    solutions: &[Vec<Complex64>],
) -> Result<Vec<Vec<Complex64>>> {
    if solutions.len() != set.len() {
        return Err(Error::MissingRepresentative(solutions.len().min(set.len())));
    }
    (0..set.full_len())
        .map(|m| {
            let (rep, zeta) = set.coset(m);
            let x = solutions.get(rep).ok_or(Error::MissingRepresentative(rep))?;
            Ok(x.iter().map(|&v| zeta.apply(v)).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn k(name: &str) -> Constellation {
        name.parse().unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_all(&[k("qpsk"), k("qpsk")]).unwrap().len(), 16);
        let bpsk = enumerate_all(&[k("bpsk")]).unwrap();
        assert_eq!(bpsk.vector(0), vec![c(1.0, 0.0)]);
        assert_eq!(bpsk.vector(1), vec![c(-1.0, 0.0)]);

        let three = enumerate_all(&[k("qpsk"), k("qpsk"), k("qpsk")]).unwrap();
        assert_eq!(three.len(), 64);
        let mut seen: Vec<Vec<usize>> = (0..64).map(|n| three.symbols(n).to_vec()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn enumeration_cap() {
        let users = vec![k("16qam"); 6];
        assert!(matches!(
            enumerate_all(&users),
            Err(Error::TooManyVectors { .. })
        ));
        assert!(enumerate_all_capped(&[k("qpsk"), k("qpsk")], 15).is_err());
        assert!(enumerate_all(&[]).is_err());
    }

    #[test]
    fn group_detection() {
        assert_eq!(reduction_group(&[k("qpsk"), k("qpsk")]).len(), 4);
        assert_eq!(
            reduction_group(&[k("bpsk"), k("bpsk")]),
            vec![Zeta::One, Zeta::MinusOne]
        );
        assert_eq!(reduction_group(&[k("qpsk"), k("16qam")]).len(), 4);
        assert_eq!(reduction_group(&[k("8qam")]).len(), 2);
        assert_eq!(reduction_group(&[k("8psk"), k("16apsk")]).len(), 4);
        // Mixing a half-turn-only constellation limits the whole group.
        assert_eq!(reduction_group(&[k("qpsk"), k("bpsk")]).len(), 2);
    }

    #[test]
    fn reduced_qpsk_pair_matches_canonical_set() {
        let set = reduced_set(&[k("qpsk"), k("qpsk")]).unwrap();
        assert_eq!(set.mode(), Mode::Reduced);
        assert_eq!(set.len(), 4);
        assert_eq!(set.full_len(), 16);
        let s = FRAC_1_SQRT_2;
        let mut expected = vec![
            [c(s, s), c(s, s)],
            [c(s, s), c(s, -s)],
            [c(s, s), c(-s, s)],
            [c(s, s), c(-s, -s)],
        ];
        for n in 0..4 {
            let v = set.vector(n);
            let pos = expected
                .iter()
                .position(|e| (e[0] - v[0]).norm() < 1e-12 && (e[1] - v[1]).norm() < 1e-12)
                .expect("representative in canonical set");
            expected.remove(pos);
        }
        assert!(expected.is_empty());
    }

    #[test]
    fn reduced_bpsk_pair() {
        let set = reduced_set(&[k("bpsk"), k("bpsk")]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.vector(0), vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(set.vector(1), vec![c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(set.full_len() / set.len(), 2);
    }

    #[test]
    fn coset_map_is_a_bijection() {
        for users in [
            vec![k("qpsk"), k("qpsk")],
            vec![k("bpsk"), k("bpsk"), k("bpsk")],
            vec![k("8psk"), k("16qam")],
            vec![k("8qam"), k("8qam")],
            vec![k("16apsk"), k("qpsk")],
        ] {
            let set = reduced_set(&users).unwrap();
            assert_eq!(set.full_len(), set.len() * set.group().len());
            let mut hits = vec![0usize; set.len() * 4];
            for m in 0..set.full_len() {
                let (rep, zeta) = set.coset(m);
                let rebuilt: Vec<Complex64> =
                    set.vector(rep).iter().map(|&d| zeta.apply(d)).collect();
                assert_eq!(rebuilt, set.full_vector(m), "vector {m}");
                let zi = set.group().iter().position(|&z| z == zeta).unwrap();
                hits[rep * 4 + zi] += 1;
            }
            assert!(hits.iter().all(|&h| h <= 1));
            assert_eq!(hits.iter().sum::<usize>(), set.full_len());
        }
    }

    #[test]
    fn full_index_round_trip() {
        let set = enumerate_all(&[k("8psk"), k("qpsk"), k("bpsk")]).unwrap();
        for m in 0..set.full_len() {
            assert_eq!(set.full_index(&set.full_symbols(m)), m);
            assert_eq!(set.full_symbols(m), set.symbols(m));
        }
    }

    #[test]
    fn expansion_applies_zeta() {
        let set = reduced_set(&[k("qpsk"), k("qpsk")]).unwrap();
        let sols: Vec<Vec<Complex64>> = (0..set.len())
            .map(|n| vec![c(n as f64 + 1.0, 0.5), c(-0.25, n as f64)])
            .collect();
        let full = expand_solutions(&set, &sols).unwrap();
        assert_eq!(full.len(), 16);
        for m in 0..16 {
            let (rep, zeta) = set.coset(m);
            for (a, b) in full[m].iter().zip(&sols[rep]) {
                assert_eq!(*a, zeta.value() * b);
                assert!((a.norm() - b.norm()).abs() < 1e-15);
            }
            if zeta == Zeta::One {
                assert_eq!(full[m], sols[rep]);
            }
        }
        assert!(expand_solutions(&set, &sols[..3]).is_err());
    }

    #[test]
    fn zeta_arithmetic() {
        for z in [Zeta::One, Zeta::I, Zeta::MinusOne, Zeta::MinusI] {
            let p = c(0.3, -1.7);
            assert!((z.apply(p) - z.value() * p).norm() < 1e-15);
            assert_eq!(z.inverse().apply(z.apply(p)), p);
        }
    }
}
