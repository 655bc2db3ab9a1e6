//! Toric intersection theory on the level needed by the localization sum:
//! curve classes of walls, divisor/curve pairing, Mori and nef generators,
//! effectiveness, the moment graph, the anticanonical divisor, point classes
//! and the virtual dimension.
//!
//! Curve classes are stored as full pairing vectors against all ray divisors
//! (no choice of homology basis), divisor classes as integer coefficient
//! vectors of ray divisors. Linear equivalence is never quotiented out; it
//! pairs to zero against every curve class, which is all the formulas use.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::fan::{dot, Fan, Wall};
use crate::linalg;
use crate::rat::Rat;

/// An effective 1-cycle, represented by its intersection numbers with the ray
/// divisors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CurveClass(pub Vec<i64>);

/// An integer combination of ray divisors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DivisorClass(pub Vec<i64>);

impl DivisorClass {
    pub fn unit(ray_count: usize, ray: usize) -> DivisorClass {
        let mut v = vec![0; ray_count];
        v[ray] = 1;
        DivisorClass(v)
    }
}

/// Exact dot product of a divisor class with a curve class.
pub fn pair(divisor: &DivisorClass, curve: &CurveClass) -> Result<i64> {
    if divisor.0.len() != curve.0.len() {
        return Err(Error::MismatchedFan {
            left: divisor.0.len(),
            right: curve.0.len(),
        });
    }
    Ok(dot(&divisor.0, &curve.0))
}

/// The curve class of a wall, from the relation
/// `rho_a + rho_b + sum_k c_k rho_k = 0` over the facet rays: the pairing is
/// 1 at both opposite rays, `c_k` at facet ray `rho_k`, 0 elsewhere.
/// Smoothness makes the `c_k` integral.
pub fn wall_curve_class(fan: &Fan, wall: &Wall) -> CurveClass {
    let mut rows: Vec<Vec<i64>> = wall
        .facet_rays
        .iter()
        .map(|&k| fan.ray(k).to_vec())
        .collect();
    rows.push(fan.ray(wall.opposite_a).to_vec());
    let cols: Vec<Vec<i64>> = (0..fan.dim())
        .map(|i| rows.iter().map(|r| r[i]).collect())
        .collect();
    let sol = linalg::solve_square(&cols, fan.ray(wall.opposite_b))
        .expect("facet rays plus opposite ray form a basis");
    debug_assert_eq!(sol[fan.dim() - 1], crate::rat::rat(-1));
    let mut cls = vec![0i64; fan.ray_count()];
    cls[wall.opposite_a] = 1;
    cls[wall.opposite_b] = 1;
    for (k, &ray) in wall.facet_rays.iter().enumerate() {
        debug_assert!(sol[k].is_integer());
        cls[ray] = -i64::try_from(sol[k].numer()).expect("wall coefficient exceeds i64");
    }
    CurveClass(cls)
}

/// Deduplicated wall curve classes. These generate the Mori cone; wall
/// classes always have two entries equal to 1, hence are primitive.
pub fn mori_generators(fan: &Fan) -> Vec<CurveClass> {
    let mut out: Vec<CurveClass> = Vec::new();
    for wall in fan.walls() {
        let cls = wall_curve_class(fan, wall);
        if !out.contains(&cls) {
            out.push(cls);
        }
    }
    out
}

/// Primitive divisor representatives of the extremal rays of the nef cone.
///
/// Divisor classes are coordinatized on the Picard basis given by the ray
/// divisors outside the first canonical maximal cone; in those coordinates
/// the nef cone is the dual of the cone spanned by the Mori generators.
/// Extremal rays are found by enumerating (rank - 1)-subsets of the
/// generators and testing their kernel vectors — exact and ample at the
/// Picard ranks this library targets.
///
/// Errors with `NotProjective` when the dual cone is not full-dimensional of
/// dimension `r - n`.
pub fn nef_generators(fan: &Fan) -> Result<Vec<DivisorClass>> {
    let mori = mori_generators(fan);
    let out_rays: Vec<usize> = (0..fan.ray_count())
        .filter(|k| !fan.cone(0).contains(k))
        .collect();
    let s = out_rays.len();
    debug_assert_eq!(s, fan.ray_count() - fan.dim());
    let coords: Vec<Vec<i64>> = mori
        .iter()
        .map(|c| out_rays.iter().map(|&k| c.0[k]).collect())
        .collect();
    if linalg::rank(&coords) != s {
        return Err(Error::NotProjective);
    }

    let mut extremal: Vec<Vec<i64>> = Vec::new();
    let mut push_candidate = |v: Vec<i64>| {
        for sign in [1i64, -1] {
            let cand: Vec<i64> = v.iter().map(|&x| sign * x).collect();
            let mut positive = false;
            let mut feasible = true;
            for c in &coords {
                let p = dot(&cand, c);
                if p < 0 {
                    feasible = false;
                    break;
                }
                positive |= p > 0;
            }
            if feasible && positive && !extremal.contains(&cand) {
                extremal.push(cand);
            }
        }
    };
    if s == 1 {
        push_candidate(vec![1]);
    } else {
        for subset in subsets(coords.len(), s - 1) {
            let rows: Vec<Vec<i64>> = subset.iter().map(|&i| coords[i].clone()).collect();
            if let Some(kernel) = linalg::kernel_vector(&rows, s) {
                push_candidate(kernel);
            }
        }
    }
    if linalg::rank(&extremal) != s {
        return Err(Error::NotProjective);
    }
    extremal.sort();
    let mut gens = Vec::with_capacity(extremal.len());
    for coeffs in extremal {
        let mut d = vec![0i64; fan.ray_count()];
        for (c, &ray) in coeffs.iter().zip(&out_rays) {
            d[ray] = *c;
        }
        gens.push(DivisorClass(d));
    }
    Ok(gens)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// `true` iff the class pairs non-negatively with every nef generator.
pub fn is_effective(beta: &CurveClass, nef: &[DivisorClass]) -> bool {
    nef.iter()
        .all(|m| pair(m, beta).map(|p| p >= 0).unwrap_or(false))
}

/// The maximal number of invariant curves a decomposition of `beta` can use:
/// `p = sum_i pair(M_i, beta)` over the nef generators.
pub fn max_edges(beta: &CurveClass, nef: &[DivisorClass]) -> Result<usize> {
    if beta.0.iter().all(|&x| x == 0) {
        return Err(Error::ZeroClass);
    }
    if !is_effective(beta, nef) {
        return Err(Error::NotEffective {
            class: beta.0.clone(),
        });
    }
    let p: i64 = nef
        .iter()
        .map(|m| pair(m, beta))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    debug_assert!(p >= 1);
    Ok(p as usize)
}

/// One vertex per maximal cone, one edge per wall, labeled by the wall's
/// curve class. Indices follow the fan's canonical cone order (which need not
/// match any other system's ordering; the classes themselves are canonical).
#[derive(Debug, Clone)]
pub struct MomentGraph {
    cone_count: usize,
    entries: BTreeMap<(usize, usize), (Wall, CurveClass)>,
}

impl MomentGraph {
    pub fn cone_count(&self) -> usize {
        self.cone_count
    }

    /// Wall and curve class for an unordered adjacent pair of cone indices.
    pub fn get(&self, i: usize, j: usize) -> Result<&(Wall, CurveClass)> {
        self.entries
            .get(&(i.min(j), i.max(j)))
            .ok_or(Error::NotAdjacent { a: i + 1, b: j + 1 })
    }

    pub fn are_adjacent(&self, i: usize, j: usize) -> bool {
        self.entries.contains_key(&(i.min(j), i.max(j)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&(usize, usize), &(Wall, CurveClass))> {
        self.entries.iter()
    }
}

pub fn moment_graph(fan: &Fan) -> MomentGraph {
    let mut entries = BTreeMap::new();
    for wall in fan.walls() {
        entries.insert(
            (wall.cone_a, wall.cone_b),
            (wall.clone(), wall_curve_class(fan, wall)),
        );
    }
    MomentGraph {
        cone_count: fan.cone_count(),
        entries,
    }
}

/// `-K_X = sum of all ray divisors`.
pub fn anticanonical_divisor(fan: &Fan) -> DivisorClass {
    DivisorClass(vec![1; fan.ray_count()])
}

/// Graded polynomial in the ray divisor classes: monomials are exponent
/// vectors over the rays, coefficients exact rationals. All monomials share
/// one total degree; the zero polynomial has no degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohomExpr {
    terms: BTreeMap<Vec<u32>, Rat>,
    ray_count: usize,
}

impl CohomExpr {
    pub fn constant(ray_count: usize, value: Rat) -> CohomExpr {
        let mut terms = BTreeMap::new();
        if !value.is_zero() {
            terms.insert(vec![0; ray_count], value);
        }
        CohomExpr { terms, ray_count }
    }

    pub fn ray_divisor(ray_count: usize, ray: usize) -> CohomExpr {
        let mut exps = vec![0u32; ray_count];
        exps[ray] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(exps, Rat::from_integer(1.into()));
        CohomExpr { terms, ray_count }
    }

    pub fn from_divisor(d: &DivisorClass) -> CohomExpr {
        let mut out = CohomExpr::zero(d.0.len());
        for (ray, &c) in d.0.iter().enumerate() {
            if c != 0 {
                let mut exps = vec![0u32; d.0.len()];
                exps[ray] = 1;
                out.terms.insert(exps, crate::rat::rat(c));
            }
        }
        out
    }

    pub fn zero(ray_count: usize) -> CohomExpr {
        CohomExpr {
            terms: BTreeMap::new(),
            ray_count,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn ray_count(&self) -> usize {
        self.ray_count
    }

    /// Common total degree of the monomials; `None` for the zero polynomial.
    pub fn codim(&self) -> Option<u32> {
        self.terms.keys().next().map(|e| e.iter().sum())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Rat)> {
        self.terms.iter()
    }

    fn insert(&mut self, exps: Vec<u32>, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps.clone()).or_insert_with(Rat::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(&exps);
        }
    }

    /// Sum of two graded classes. Fails unless both sides are homogeneous of
    /// the same degree (a zero side adopts the other's degree).
    pub fn add(&self, other: &CohomExpr) -> Result<CohomExpr> {
        if self.ray_count != other.ray_count {
            return Err(Error::MismatchedFan {
                left: self.ray_count,
                right: other.ray_count,
            });
        }
        match (self.codim(), other.codim()) {
            (Some(a), Some(b)) if a != b => return Err(Error::InhomogeneousSum { pos: 0 }),
            _ => {}
        }
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn mul(&self, other: &CohomExpr) -> CohomExpr {
        let mut out = CohomExpr::zero(self.ray_count);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                out.insert(exps, ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn scale(&self, factor: &Rat) -> CohomExpr {
        let mut out = CohomExpr::zero(self.ray_count);
        for (e, c) in &self.terms {
            out.insert(e.clone(), c.clone() * factor.clone());
        }
        out
    }

    pub fn pow(&self, exp: u32) -> CohomExpr {
        let mut out = CohomExpr::constant(self.ray_count, Rat::from_integer(1.into()));
        for _ in 0..exp {
            out = out.mul(self);
        }
        out
    }
}

/// The class of a torus-fixed point: the squarefree monomial over the rays of
/// the chosen maximal cone. `point_class` uses the first canonical cone; any
/// other choice represents the same cohomology class and every integral is
/// invariant under the choice.
pub fn point_class_at(fan: &Fan, cone_index: usize) -> CohomExpr {
    let mut exps = vec![0u32; fan.ray_count()];
    for &k in fan.cone(cone_index) {
        exps[k] = 1;
    }
    let mut terms = BTreeMap::new();
    terms.insert(exps, Rat::from_integer(1.into()));
    CohomExpr {
        terms,
        ray_count: fan.ray_count(),
    }
}

pub fn point_class(fan: &Fan) -> CohomExpr {
    point_class_at(fan, 0)
}

/// Expected dimension of the moduli space of genus-0 maps of class `beta`
/// with `m` marked points: `n + (-K_X . beta) + m - 3`.
pub fn virtual_dimension(fan: &Fan, beta: &CurveClass, m: usize) -> Result<i64> {
    let deg = pair(&anticanonical_divisor(fan), beta)?;
    Ok(fan.dim() as i64 + deg + m as i64 - 3)
}
