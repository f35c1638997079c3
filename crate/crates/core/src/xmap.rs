//! Cross-lingual linear maps between translation-context spaces.
//!
//! Two stores built over the same target sentences share `(sentence_id,
//! position)` coordinates. Joining on those coordinates gives pairs `(x, y)`
//! of contexts for the same target token seen from two source languages, and
//! a least-squares fit of `y ≈ A·x` transports one language's contexts into
//! the other's region.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datastore::{coordinate_index, Datastore};
use crate::error::{Error, Result};
use crate::lang::LanguageTag;

/// Relative pivot size below which a factorization is treated as singular.
const PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPairSet {
    pub dim: usize,
    pub source_lang: Option<LanguageTag>,
    pub dest_lang: Option<LanguageTag>,
    /// `(sentence_id, position)` of each pair.
    pub coords: Vec<(u32, u16)>,
    /// Row-major `n × dim`.
    pub xs: Vec<f32>,
    pub ys: Vec<f32>,
}

impl AlignedPairSet {
    pub fn new(dim: usize) -> Self {
        AlignedPairSet {
            dim,
            source_lang: None,
            dest_lang: None,
            coords: Vec::new(),
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &[f32], y: &[f32]) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::invalid("pair vectors must match the set dimension"));
        }
        self.coords.push((self.coords.len() as u32, 0));
        self.xs.extend_from_slice(x);
        self.ys.extend_from_slice(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f32] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> &[f32] {
        &self.ys[i * self.dim..(i + 1) * self.dim]
    }

    /// The same pairs with `x` and `y` exchanged.
    pub fn swapped(&self) -> AlignedPairSet {
        AlignedPairSet {
            dim: self.dim,
            source_lang: self.dest_lang.clone(),
            dest_lang: self.source_lang.clone(),
            coords: self.coords.clone(),
            xs: self.ys.clone(),
            ys: self.xs.clone(),
        }
    }
}

fn single_source(store: &Datastore) -> Option<LanguageTag> {
    match store.origins().len() {
        1 => store.origins().get(0).map(|o| o.source.clone()),
        _ => None,
    }
}

/// Joins two stores on `(sentence_id, position)`.
///
/// Each store must hold at most one row per coordinate, as bilingual stores
/// do. Coordinates present in only one store are skipped. Pairs come out in
/// coordinate order.
pub fn extract_aligned_pairs(store1: &Datastore, store2: &Datastore) -> Result<AlignedPairSet> {
    if store1.dim() != store2.dim() {
        return Err(Error::invalid(format!(
            "dimensions differ: {} vs {}",
            store1.dim(),
            store2.dim()
        )));
    }
    if !store1.target_lang().same_language(store2.target_lang()) {
        return Err(Error::invalid("stores have different target languages"));
    }
    if !store1.is_sealed() || !store2.is_sealed() {
        return Err(Error::invalid("aligned pairs need sealed stores"));
    }
    let left: BTreeMap<(u32, u16), usize> = coordinate_index(store1)?.into_iter().collect();
    let right = coordinate_index(store2)?;

    let mut out = AlignedPairSet::new(store1.dim());
    out.source_lang = single_source(store1);
    out.dest_lang = single_source(store2);
    for (coord, i) in left {
        if let Some(&j) = right.get(&coord) {
            out.coords.push(coord);
            out.xs.extend_from_slice(store1.key(i));
            out.ys.extend_from_slice(store2.key(j));
        }
    }
    Ok(out)
}

/// Regularization for [`fit_linear_map`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ridge {
    Fixed(f64),
    /// `1e-6 · trace(XᵀX) / d`.
    Auto,
}

impl std::str::FromStr for Ridge {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Ridge::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(Ridge::Fixed(v)),
            _ => Err(Error::invalid(format!("ridge must be \"auto\" or a non-negative number, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub dim: usize,
    /// Row-major `dim × dim`.
    pub matrix: Vec<f64>,
    #[serde(default)]
    pub source_lang: Option<String>,
    #[serde(default)]
    pub dest_lang: Option<String>,
    pub ridge: f64,
    pub residual: f64,
    #[serde(default)]
    pub n_pairs: usize,
}

impl LinearMap {
    pub fn from_rows(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        let m = LinearMap {
            dim,
            matrix,
            source_lang: None,
            dest_lang: None,
            ridge: 0.0,
            residual: 0.0,
            n_pairs: 0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        LinearMap::from_rows(dim, m).expect("identity is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.matrix.len() != self.dim * self.dim {
            return Err(Error::invalid("map matrix must be dim × dim with dim ≥ 1"));
        }
        if self.matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("map matrix entries must be finite"));
        }
        if [self.residual, self.ridge].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::invalid("residual and ridge must be non-negative"));
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.dim + col]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: LinearMap = serde_json::from_str(s)?;
        m.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(m)
    }
}

/// Solves `(XᵀX + ridge·I) W = XᵀY` and returns `A = Wᵀ`, so that `y ≈ A·x`.
pub fn fit_linear_map(pairs: &AlignedPairSet, ridge: Ridge) -> Result<LinearMap> {
    let n = pairs.len();
    let d = pairs.dim;
    if n == 0 {
        return Err(Error::invalid("cannot fit a map from zero pairs"));
    }
    if d == 0 {
        return Err(Error::invalid("pair dimension is zero"));
    }

    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let x = pairs.x(i);
        let y = pairs.y(i);
        for a in 0..d {
            let xa = x[a] as f64;
            for b in 0..d {
                xtx[(a, b)] += xa * x[b] as f64;
                xty[(a, b)] += xa * y[b] as f64;
            }
        }
    }

    let lambda = match ridge {
        Ridge::Fixed(r) if r >= 0.0 && r.is_finite() => r,
        Ridge::Fixed(r) => return Err(Error::invalid(format!("ridge {r} must be non-negative"))),
        Ridge::Auto => 1e-6 * xtx.trace() / d as f64,
    };
    let mut normal = xtx;
    for i in 0..d {
        normal[(i, i)] += lambda;
    }

    let w = solve_spd(&normal, &xty)?;
    let a = w.transpose();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("solution has non-finite entries".into()));
    }

    let mut residual = 0.0;
    for i in 0..n {
        let x = DVector::from_iterator(d, pairs.x(i).iter().map(|&v| v as f64));
        let y = DVector::from_iterator(d, pairs.y(i).iter().map(|&v| v as f64));
        residual += (y - &a * x).norm_squared();
    }
    residual /= n as f64;

    Ok(LinearMap {
        dim: d,
        matrix: a.transpose().as_slice().to_vec(),
        source_lang: pairs.source_lang.as_ref().map(|l| l.code().to_owned()),
        dest_lang: pairs.dest_lang.as_ref().map(|l| l.code().to_owned()),
        ridge: lambda,
        residual,
        n_pairs: n,
    })
}

/// Cholesky, falling back to full-pivot LU.
fn solve_spd(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi > 0.0 && (lo / hi).powi(2) > PIVOT_TOL {
            return Ok(ch.solve(rhs));
        }
    }
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let (lo, hi) = u
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    if !(hi > 0.0 && lo / hi > PIVOT_TOL) {
        return Err(Error::SingularSystem(
            "normal matrix is rank deficient; retry with a positive ridge".into(),
        ));
    }
    lu.solve(rhs)
        .ok_or_else(|| Error::SingularSystem("LU solve failed; retry with a positive ridge".into()))
}

/// `A·v`.
pub fn apply_map(map: &LinearMap, v: &[f32]) -> Result<Vec<f32>> {
    if v.len() != map.dim {
        return Err(Error::invalid(format!(
            "vector has dimension {}, map expects {}",
            v.len(),
            map.dim
        )));
    }
    Ok(map
        .matrix
        .chunks_exact(map.dim)
        .map(|row| row.iter().zip(v).map(|(a, x)| a * *x as f64).sum::<f64>() as f32)
        .collect())
}

/// A sealed copy of `store` with every key replaced by `A·k`.
pub fn remap_store(store: &Datastore, map: &LinearMap) -> Result<Datastore> {
    if store.dim() != map.dim {
        return Err(Error::invalid(format!(
            "store dimension {} does not match map dimension {}",
            store.dim(),
            map.dim
        )));
    }
    if !store.is_sealed() {
        return Err(Error::invalid("remap needs a sealed store"));
    }
    map.validate()?;
    let mut out = store.map_keys(|k| apply_map(map, k).expect("dimension checked"))?;
    out.add_provenance(format!(
        "remapped by linear map {}->{} (dim {}, ridge {:e}, residual {:.6e}, {} pairs)",
        map.source_lang.as_deref().unwrap_or("?"),
        map.dest_lang.as_deref().unwrap_or("?"),
        map.dim,
        map.ridge,
        map.residual,
        map.n_pairs
    ))?;
    out.seal();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::Entry;
    use crate::index::{Index, NeighborSearch};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    fn lang(c: &str) -> LanguageTag {
        LanguageTag::new(c).unwrap()
    }

    fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect()
    }

    fn store(src: &str, dim: usize, rows: &[(u32, u16, Vec<f32>)]) -> Datastore {
        let mut s = Datastore::new(dim, lang("en")).unwrap();
        let o = s.add_origin(&lang(src), &lang("en")).unwrap();
        for (sid, pos, key) in rows {
            s.append_entry(&Entry { key: key.clone(), value: 1, origin: o, sentence_id: *sid, position: *pos })
                .unwrap();
        }
        s.seal();
        s
    }

    /// Independent route: least squares through a QR factorization of X.
    fn qr_oracle(pairs: &AlignedPairSet) -> (DMatrix<f64>, f64) {
        let (n, d) = (pairs.len(), pairs.dim);
        let x = DMatrix::from_row_iterator(n, d, pairs.xs.iter().map(|&v| v as f64));
        let y = DMatrix::from_row_iterator(n, d, pairs.ys.iter().map(|&v| v as f64));
        let qr = x.clone().qr();
        let qty = qr.q().transpose() * &y;
        let w = qr.r().solve_upper_triangular(&qty).unwrap();
        let resid = (&y - &x * &w).norm_squared() / n as f64;
        (w.transpose(), resid)
    }

    fn as_matrix(m: &LinearMap) -> DMatrix<f64> {
        DMatrix::from_row_slice(m.dim, m.dim, &m.matrix)
    }

    #[test]
    fn self_join_and_partial_overlap() {
        let rows = |sids: &[u32]| -> Vec<(u32, u16, Vec<f32>)> {
            sids.iter()
                .flat_map(|&s| (0..3u16).map(move |p| (s, p, vec![s as f32, p as f32])))
                .collect()
        };
        let a = store("be", 2, &rows(&[1, 2]));
        let b = store("uk", 2, &rows(&[2, 3]));
        let p = extract_aligned_pairs(&a, &a).unwrap();
        assert_eq!(p.len(), a.len());
        for i in 0..p.len() {
            assert_eq!(p.x(i), p.y(i));
        }
        let p = extract_aligned_pairs(&a, &b).unwrap();
        assert_eq!(p.coords, vec![(2, 0), (2, 1), (2, 2)]);
        assert_eq!(p.source_lang.as_ref().unwrap().code(), "be");
        assert_eq!(p.dest_lang.as_ref().unwrap().code(), "uk");
    }

    #[test]
    fn pairs_are_coordinate_ordered() {
        let a = store("be", 1, &[(5, 1, vec![1.0]), (2, 0, vec![2.0]), (5, 0, vec![3.0])]);
        let p = extract_aligned_pairs(&a, &a).unwrap();
        assert_eq!(p.coords, vec![(2, 0), (5, 0), (5, 1)]);
        assert_eq!(p.xs, vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn extract_errors() {
        let a = store("be", 2, &[(0, 0, vec![0.0, 0.0])]);
        let b = store("uk", 3, &[(0, 0, vec![0.0, 0.0, 0.0])]);
        assert!(matches!(extract_aligned_pairs(&a, &b), Err(Error::InvalidArgument(_))));
        let dup = store("be", 2, &[(0, 0, vec![0.0, 0.0]), (0, 0, vec![1.0, 0.0])]);
        assert!(extract_aligned_pairs(&dup, &a).is_err());
    }

    #[test]
    fn identity_from_self_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pairs = AlignedPairSet::new(6);
        for _ in 0..40 {
            let x = gauss(&mut rng, 6);
            pairs.push(&x, &x).unwrap();
        }
        let m = fit_linear_map(&pairs, Ridge::Fixed(0.0)).unwrap();
        let err = (as_matrix(&m) - DMatrix::identity(6, 6)).norm();
        assert!(err < 1e-6, "{err}");
        assert!(m.residual < 1e-10);
        let m = fit_linear_map(&pairs, Ridge::Fixed(1e-8)).unwrap();
        assert!((as_matrix(&m) - DMatrix::identity(6, 6)).norm() <= 1e-4);
    }

    #[test]
    fn recovers_planar_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pairs = AlignedPairSet::new(2);
        for _ in 0..100 {
            let x = gauss(&mut rng, 2);
            pairs.push(&x, &[-x[1], x[0]]).unwrap();
        }
        let m = fit_linear_map(&pairs, Ridge::Fixed(0.0)).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((as_matrix(&m) - r).norm() < 1e-6);
        let v = apply_map(&m, &[1.0, 0.0]).unwrap();
        assert!((v[0] - 0.0).abs() < 1e-6 && (v[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_residual_matches_qr_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 5;
        let a_true: Vec<f32> = gauss(&mut rng, d * d);
        let mut pairs = AlignedPairSet::new(d);
        for _ in 0..200 {
            let x = gauss(&mut rng, d);
            let noise = gauss(&mut rng, d);
            let y: Vec<f32> = (0..d)
                .map(|r| (0..d).map(|c| a_true[r * d + c] * x[c]).sum::<f32>() + 0.1 * noise[r])
                .collect();
            pairs.push(&x, &y).unwrap();
        }
        let m = fit_linear_map(&pairs, Ridge::Fixed(0.0)).unwrap();
        let (oa, ores) = qr_oracle(&pairs);
        assert!((as_matrix(&m) - oa).norm() < 1e-8);
        assert!((m.residual - ores).abs() <= 1e-6 * ores);
    }

    #[test]
    fn singular_without_ridge() {
        let mut pairs = AlignedPairSet::new(3);
        for i in 0..10 {
            let x = [i as f32, 2.0 * i as f32, 0.0];
            pairs.push(&x, &x).unwrap();
        }
        assert!(matches!(fit_linear_map(&pairs, Ridge::Fixed(0.0)), Err(Error::SingularSystem(_))));
        let m = fit_linear_map(&pairs, Ridge::Auto).unwrap();
        assert!(m.ridge > 0.0);
        assert!(m.matrix.iter().all(|v| v.is_finite()));
        assert!(fit_linear_map(&AlignedPairSet::new(3), Ridge::Auto).is_err());
    }

    #[test]
    fn auto_ridge_value() {
        let mut pairs = AlignedPairSet::new(2);
        pairs.push(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        pairs.push(&[3.0, 0.0], &[0.0, 0.0]).unwrap();
        // trace(XᵀX) = 1 + 4 + 9 + 0 = 14
        let m = fit_linear_map(&pairs, Ridge::Auto).unwrap();
        assert!((m.ridge - 1e-6 * 14.0 / 2.0).abs() < 1e-18);
    }

    #[test]
    fn apply_map_cases() {
        let id = LinearMap::identity(3);
        assert_eq!(apply_map(&id, &[1.5, -2.0, 3.0]).unwrap(), vec![1.5, -2.0, 3.0]);
        let zero = LinearMap::from_rows(2, vec![0.0; 4]).unwrap();
        assert_eq!(apply_map(&zero, &[4.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(apply_map(&id, &[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn map_json_round_trip() {
        let mut m = LinearMap::from_rows(2, vec![0.0, -1.0, 1.0, 0.0]).unwrap();
        m.source_lang = Some("be".into());
        let back = LinearMap::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(LinearMap::from_json(r#"{"dim":2,"matrix":[1.0],"ridge":0,"residual":0}"#).is_err());
    }

    #[test]
    fn remap_preserves_columns_and_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<_> = (0..200u32).map(|i| (i / 10, (i % 10) as u16, gauss(&mut rng, 4))).collect();
        let s = store("be", 4, &rows);
        let id = remap_store(&s, &LinearMap::identity(4)).unwrap();
        assert_eq!(id.keys(), s.keys());
        assert!(id.is_sealed());
        assert!(id.provenance().last().unwrap().contains("remapped"));

        // Orthogonal map from a QR factor.
        let q = DMatrix::from_row_slice(4, 4, &gauss(&mut rng, 16).iter().map(|&v| v as f64).collect::<Vec<_>>())
            .qr()
            .q();
        let map = LinearMap::from_rows(4, q.transpose().as_slice().to_vec()).unwrap();
        let r = remap_store(&s, &map).unwrap();
        assert_eq!(r.values(), s.values());
        assert_eq!(r.origin_ids(), s.origin_ids());
        assert_eq!(r.sentence_ids(), s.sentence_ids());
        assert_eq!(r.positions(), s.positions());
        assert_eq!(r.origins(), s.origins());
        let a = Index::flat(Arc::new(s)).unwrap();
        let b = Index::flat(Arc::new(r)).unwrap();
        for _ in 0..20 {
            let qv = gauss(&mut rng, 4);
            let qm = apply_map(&map, &qv).unwrap();
            assert_eq!(
                a.search(&qv, 1).unwrap().as_slice()[0].entry_index,
                b.search(&qm, 1).unwrap().as_slice()[0].entry_index
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn fit_beats_identity(seed in any::<u64>(), n in 8usize..60, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pairs = AlignedPairSet::new(d);
            for _ in 0..n {
                pairs.push(&gauss(&mut rng, d), &gauss(&mut rng, d)).unwrap();
            }
            let m = fit_linear_map(&pairs, Ridge::Auto).unwrap();
            let id_resid: f64 = (0..n)
                .map(|i| pairs.x(i).iter().zip(pairs.y(i)).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>())
                .sum::<f64>() / n as f64;
            prop_assert!(m.residual <= id_resid * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn extraction_is_swap_symmetric(seed in any::<u64>(), n1 in 0u32..8, n2 in 0u32..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r1: Vec<_> = (0..n1 * 3).map(|i| (i / 3, (i % 3) as u16, gauss(&mut rng, 2))).collect();
            let r2: Vec<_> = (0..n2 * 3).map(|i| (i / 3 + 2, (i % 3) as u16, gauss(&mut rng, 2))).collect();
            let (a, b) = (store("be", 2, &r1), store("uk", 2, &r2));
            let ab = extract_aligned_pairs(&a, &b).unwrap();
            let ba = extract_aligned_pairs(&b, &a).unwrap();
            prop_assert_eq!(ab.swapped(), ba);
        }
    }
}
