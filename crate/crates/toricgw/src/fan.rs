//! Fans of smooth projective toric varieties.
//!
//! A [`Fan`] stores the rays (primitive integer vectors) and the maximal
//! cones (size-`n` subsets of ray indices) of a complete smooth simplicial
//! fan, together with precomputed wall data. Construction validates:
//!
//! * every ray is primitive and distinct,
//! * every maximal cone is unimodular (|det| = 1),
//! * every facet is shared by exactly two maximal cones and the resulting
//!   adjacency graph is connected (completeness proxy for a pure smooth
//!   simplicial fan).
//!
//! Maximal cones are reordered canonically (each cone sorted, cones sorted
//! lexicographically) so that cone and wall indices are reproducible across
//! runs regardless of input order. Projectivity is not checked here; it
//! surfaces in `cycles::nef_generators`.

use std::collections::BTreeMap;

use num_traits::{One, Signed};

use crate::error::{Error, Result};
use crate::linalg;

/// A shared facet between two maximal cones; corresponds to a torus-invariant
/// curve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wall {
    /// Index of the smaller adjacent cone (canonical orientation).
    pub cone_a: usize,
    /// Index of the larger adjacent cone.
    pub cone_b: usize,
    /// The `n - 1` shared ray indices, sorted.
    pub facet_rays: Vec<usize>,
    /// The ray of `cone_a` outside the facet.
    pub opposite_a: usize,
    /// The ray of `cone_b` outside the facet.
    pub opposite_b: usize,
}

#[derive(Debug, Clone)]
pub struct Fan {
    dim: usize,
    rays: Vec<Vec<i64>>,
    cones: Vec<Vec<usize>>,
    walls: Vec<Wall>,
    neighbors: Vec<Vec<usize>>,
    wall_index: BTreeMap<(usize, usize), usize>,
}

impl Fan {
    /// Validates raw ray/cone data and precomputes the wall list.
    ///
    /// `max_cones` uses 0-based ray indices.
    pub fn build(dim: usize, rays: Vec<Vec<i64>>, max_cones: Vec<Vec<usize>>) -> Result<Fan> {
        if dim == 0 {
            return Err(Error::InvalidInput("ambient rank must be >= 1".into()));
        }
        if rays.len() < dim + 1 {
            return Err(Error::InvalidInput(format!(
                "need at least {} rays for rank {dim}, got {}",
                dim + 1,
                rays.len()
            )));
        }
        for (i, ray) in rays.iter().enumerate() {
            if ray.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "ray #{} has {} entries, expected {dim}",
                    i + 1,
                    ray.len()
                )));
            }
            if linalg::content(ray) != 1 {
                return Err(Error::NonPrimitiveRay {
                    index: i + 1,
                    ray: ray.clone(),
                });
            }
        }
        for i in 0..rays.len() {
            for j in i + 1..rays.len() {
                if rays[i] == rays[j] {
                    return Err(Error::DuplicateRay {
                        first: i + 1,
                        second: j + 1,
                    });
                }
            }
        }

        let mut cones: Vec<Vec<usize>> = Vec::with_capacity(max_cones.len());
        for cone in &max_cones {
            let mut c = cone.clone();
            c.sort_unstable();
            c.dedup();
            if c.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "maximal cone {cone:?} does not have {dim} distinct rays"
                )));
            }
            if c.iter().any(|&k| k >= rays.len()) {
                return Err(Error::InvalidInput(format!(
                    "maximal cone {cone:?} references a ray out of range"
                )));
            }
            cones.push(c);
        }
        cones.sort();
        cones.dedup();
        if cones.is_empty() {
            return Err(Error::InvalidInput("no maximal cones given".into()));
        }

        for cone in &cones {
            let mat: Vec<Vec<i64>> = cone.iter().map(|&k| rays[k].clone()).collect();
            let d = linalg::det(&mat);
            if !d.clone().abs().is_one() {
                return Err(Error::NonSmoothCone {
                    cone: cone.iter().map(|&k| k + 1).collect(),
                    det: d.to_string(),
                });
            }
        }

        // Each facet must be shared by exactly two maximal cones.
        let mut facets: BTreeMap<Vec<usize>, Vec<(usize, usize)>> = BTreeMap::new();
        for (ci, cone) in cones.iter().enumerate() {
            for drop in 0..dim {
                let facet: Vec<usize> = cone
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != drop)
                    .map(|(_, &r)| r)
                    .collect();
                facets.entry(facet).or_default().push((ci, cone[drop]));
            }
        }
        let mut walls = Vec::new();
        for (facet, owners) in &facets {
            if owners.len() != 2 {
                return Err(Error::DanglingFacet {
                    facet: facet.iter().map(|&k| k + 1).collect(),
                    count: owners.len(),
                });
            }
            let (a, oa) = owners[0];
            let (b, ob) = owners[1];
            debug_assert!(a < b);
            walls.push(Wall {
                cone_a: a,
                cone_b: b,
                facet_rays: facet.clone(),
                opposite_a: oa,
                opposite_b: ob,
            });
        }
        walls.sort_by_key(|w| (w.cone_a, w.cone_b));

        let mut neighbors = vec![Vec::new(); cones.len()];
        let mut wall_index = BTreeMap::new();
        for (wi, w) in walls.iter().enumerate() {
            neighbors[w.cone_a].push(w.cone_b);
            neighbors[w.cone_b].push(w.cone_a);
            wall_index.insert((w.cone_a, w.cone_b), wi);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }

        // Connectivity of the cone adjacency graph.
        let mut seen = vec![false; cones.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(c) = stack.pop() {
            for &nb in &neighbors[c] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::DisconnectedFan);
        }

        Ok(Fan {
            dim,
            rays,
            cones,
            walls,
            neighbors,
            wall_index,
        })
    }

    /// The fan of projective `n`-space: rays `e_1..e_n` and `-(e_1+..+e_n)`,
    /// maximal cones all `n`-subsets of the `n + 1` rays.
    pub fn projective_space(n: usize) -> Fan {
        assert!(n >= 1);
        let mut rays: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..n).map(|j| i64::from(j == i)).collect())
            .collect();
        rays.push(vec![-1; n]);
        let cones: Vec<Vec<usize>> = (0..=n)
            .map(|skip| (0..=n).filter(|&k| k != skip).collect())
            .collect();
        Fan::build(n, rays, cones).expect("projective space fan is always valid")
    }

    /// The fan of the split projective bundle `P(O + O(m))` over `P^n`.
    /// For `n = 1` this is the Hirzebruch surface `F_m`.
    ///
    /// Rays: `e_1..e_n`, `e_{n+1}`, `-e_{n+1}`, `-e_1-..-e_n - m*e_{n+1}`.
    /// Cones: each fiber ray `±e_{n+1}` together with `n` of the `n + 1`
    /// base-type rays.
    pub fn proj_split(n: usize, m: i64) -> Fan {
        assert!(n >= 1 && m >= 0);
        let dim = n + 1;
        let mut rays: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..dim).map(|j| i64::from(j == i)).collect())
            .collect();
        let mut up = vec![0i64; dim];
        up[n] = 1;
        let mut down = vec![0i64; dim];
        down[n] = -1;
        let mut twisted = vec![-1i64; dim];
        twisted[n] = -m;
        rays.push(up);
        rays.push(down);
        rays.push(twisted);
        let base: Vec<usize> = (0..n).chain(std::iter::once(n + 2)).collect();
        let mut cones = Vec::new();
        for fiber in [n, n + 1] {
            for skip in &base {
                let mut cone: Vec<usize> =
                    base.iter().copied().filter(|r| r != skip).collect();
                cone.push(fiber);
                cones.push(cone);
            }
        }
        Fan::build(dim, rays, cones).expect("split projective bundle fan is always valid")
    }

    /// Product fan: block-embedded rays, cones the unions of one cone from
    /// each factor.
    pub fn product(a: &Fan, b: &Fan) -> Fan {
        let dim = a.dim + b.dim;
        let mut rays = Vec::with_capacity(a.rays.len() + b.rays.len());
        for r in &a.rays {
            let mut v = r.clone();
            v.extend(std::iter::repeat(0).take(b.dim));
            rays.push(v);
        }
        for r in &b.rays {
            let mut v = vec![0; a.dim];
            v.extend_from_slice(r);
            rays.push(v);
        }
        let mut cones = Vec::new();
        for ca in &a.cones {
            for cb in &b.cones {
                let mut c = ca.clone();
                c.extend(cb.iter().map(|&k| k + a.rays.len()));
                cones.push(c);
            }
        }
        Fan::build(dim, rays, cones).expect("product of valid fans is valid")
    }

    /// Star subdivision at the torus-fixed point of a maximal cone: the new
    /// ray is the sum of the cone's rays, and the cone is replaced by the `n`
    /// cones substituting the new ray for each of its rays.
    pub fn blow_up_fixed_point(&self, cone_index: usize) -> Result<Fan> {
        if cone_index >= self.cones.len() {
            return Err(Error::InvalidInput(format!(
                "cone index {} out of range ({} maximal cones)",
                cone_index + 1,
                self.cones.len()
            )));
        }
        let target = &self.cones[cone_index];
        let mut new_ray = vec![0i64; self.dim];
        for &k in target {
            for (c, x) in new_ray.iter_mut().zip(&self.rays[k]) {
                *c += x;
            }
        }
        let mut rays = self.rays.clone();
        let new_idx = rays.len();
        rays.push(new_ray);
        let mut cones: Vec<Vec<usize>> = self
            .cones
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != cone_index)
            .map(|(_, c)| c.clone())
            .collect();
        for drop in target {
            let mut c: Vec<usize> = target.iter().copied().filter(|r| r != drop).collect();
            c.push(new_idx);
            cones.push(c);
        }
        Fan::build(self.dim, rays, cones)
    }

    /// The unique integer covector `u` with `<rho, u> = 0` for every facet ray
    /// of the cone and `<rho', u> = 1` for the distinguished ray. Exists and
    /// is integral by smoothness.
    pub fn dual_covector(&self, cone_index: usize, distinguished_ray: usize) -> Result<Vec<i64>> {
        let cone = self
            .cones
            .get(cone_index)
            .ok_or_else(|| Error::InvalidInput(format!("cone index {cone_index} out of range")))?;
        if !cone.contains(&distinguished_ray) {
            return Err(Error::RayNotInCone {
                ray: distinguished_ray + 1,
                cone: cone_index + 1,
            });
        }
        let mut rows: Vec<Vec<i64>> = cone
            .iter()
            .filter(|&&k| k != distinguished_ray)
            .map(|&k| self.rays[k].clone())
            .collect();
        rows.push(self.rays[distinguished_ray].clone());
        let mut rhs = vec![0i64; self.dim];
        rhs[self.dim - 1] = 1;
        let sol = linalg::solve_square(&rows, &rhs).expect("cone rays form a lattice basis");
        let u: Vec<i64> = sol
            .iter()
            .map(|x| {
                debug_assert!(x.is_integer());
                i64::try_from(x.numer()).expect("dual covector entry exceeds i64")
            })
            .collect();
        debug_assert!(cone.iter().all(|&k| {
            let p = dot(&self.rays[k], &u);
            if k == distinguished_ray {
                p == 1
            } else {
                p == 0
            }
        }));
        Ok(u)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ray_count(&self) -> usize {
        self.rays.len()
    }

    pub fn rays(&self) -> &[Vec<i64>] {
        &self.rays
    }

    pub fn ray(&self, index: usize) -> &[i64] {
        &self.rays[index]
    }

    pub fn cone_count(&self) -> usize {
        self.cones.len()
    }

    /// Maximal cones in canonical order, each a sorted list of ray indices.
    pub fn cones(&self) -> &[Vec<usize>] {
        &self.cones
    }

    pub fn cone(&self, index: usize) -> &[usize] {
        &self.cones[index]
    }

    /// Walls in canonical order.
    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    /// Cones adjacent to `cone` across a shared facet (the set `sigma*`).
    pub fn neighbors(&self, cone: usize) -> &[usize] {
        &self.neighbors[cone]
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.wall_index.contains_key(&key)
    }

    pub fn wall_between(&self, a: usize, b: usize) -> Result<&Wall> {
        let key = (a.min(b), a.max(b));
        self.wall_index
            .get(&key)
            .map(|&i| &self.walls[i])
            .ok_or(Error::NotAdjacent { a: a + 1, b: b + 1 })
    }

    /// The unique neighbor of `cone` across the facet opposite `ray`
    /// (`ray` must belong to the cone).
    pub fn neighbor_across(&self, cone: usize, ray: usize) -> Result<usize> {
        if !self.cones[cone].contains(&ray) {
            return Err(Error::RayNotInCone {
                ray: ray + 1,
                cone: cone + 1,
            });
        }
        for &nb in &self.neighbors[cone] {
            if !self.cones[nb].contains(&ray) {
                return Ok(nb);
            }
        }
        unreachable!("complete fan: every facet has a cone on the other side")
    }
}

pub fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2_data() -> (Vec<Vec<i64>>, Vec<Vec<usize>>) {
        (
            vec![vec![1, 0], vec![0, 1], vec![-1, -1]],
            vec![vec![0, 1], vec![1, 2], vec![0, 2]],
        )
    }

    #[test]
    fn p2_builds_with_three_walls() {
        let (rays, cones) = p2_data();
        let fan = Fan::build(2, rays, cones).unwrap();
        assert_eq!(fan.walls().len(), 3);
        assert_eq!(fan.cone_count(), 3);
    }

    #[test]
    fn non_smooth_cone_rejected() {
        let err = Fan::build(
            2,
            vec![vec![1, 0], vec![0, 1], vec![-1, -2]],
            vec![vec![0, 2]],
        )
        .unwrap_err();
        assert_eq!(err.name(), "NonSmoothCone");
    }

    #[test]
    fn dangling_facet_rejected() {
        let (rays, mut cones) = p2_data();
        cones.pop();
        let err = Fan::build(2, rays, cones).unwrap_err();
        assert_eq!(err.name(), "DanglingFacet");
    }

    #[test]
    fn non_primitive_and_duplicate_rays_rejected() {
        let err = Fan::build(2, vec![vec![2, 0], vec![0, 1], vec![-1, -1]], vec![vec![0, 1]])
            .unwrap_err();
        assert_eq!(err.name(), "NonPrimitiveRay");
        let err = Fan::build(
            2,
            vec![vec![1, 0], vec![1, 0], vec![-1, -1]],
            vec![vec![0, 1]],
        )
        .unwrap_err();
        assert_eq!(err.name(), "DuplicateRay");
    }

    #[test]
    fn projective_space_counts() {
        let p1 = Fan::projective_space(1);
        assert_eq!(p1.rays(), &[vec![1], vec![-1]]);
        assert_eq!(p1.cone_count(), 2);
        let p2 = Fan::projective_space(2);
        assert_eq!((p2.ray_count(), p2.cone_count(), p2.walls().len()), (3, 3, 3));
        let p3 = Fan::projective_space(3);
        assert_eq!((p3.ray_count(), p3.cone_count(), p3.walls().len()), (4, 4, 6));
    }

    #[test]
    fn proj_split_matches_known_cone_counts() {
        for m in 0..4 {
            let fm = Fan::proj_split(1, m);
            assert_eq!((fm.ray_count(), fm.cone_count(), fm.walls().len()), (4, 4, 4));
        }
        let x = Fan::proj_split(2, 2);
        assert_eq!((x.ray_count(), x.cone_count()), (5, 6));
        let y = Fan::proj_split(3, 1);
        assert_eq!((y.ray_count(), y.cone_count()), (6, 8));
    }

    #[test]
    fn hirzebruch_cones_match_listed_generators() {
        let m = 3;
        let fm = Fan::proj_split(1, m);
        let expect: Vec<Vec<i64>> = vec![vec![1, 0], vec![0, 1], vec![0, -1], vec![-1, -m]];
        assert_eq!(fm.rays(), expect.as_slice());
        let mut cone_rays: Vec<Vec<Vec<i64>>> = fm
            .cones()
            .iter()
            .map(|c| {
                let mut v: Vec<Vec<i64>> = c.iter().map(|&k| fm.ray(k).to_vec()).collect();
                v.sort();
                v
            })
            .collect();
        cone_rays.sort();
        let mut want = vec![
            vec![vec![1, 0], vec![0, 1]],
            vec![vec![1, 0], vec![0, -1]],
            vec![vec![0, 1], vec![-1, -m]],
            vec![vec![0, -1], vec![-1, -m]],
        ];
        for c in &mut want {
            c.sort();
        }
        want.sort();
        assert_eq!(cone_rays, want);
    }

    #[test]
    fn products_validate() {
        let p1 = Fan::projective_space(1);
        let p1xp1 = Fan::product(&p1, &p1);
        assert_eq!((p1xp1.ray_count(), p1xp1.cone_count()), (4, 4));
        let p2 = Fan::projective_space(2);
        let p1xp2 = Fan::product(&p1, &p2);
        assert_eq!((p1xp2.ray_count(), p1xp2.cone_count()), (5, 6));
    }

    #[test]
    fn blow_up_p3_counts() {
        let p3 = Fan::projective_space(3);
        let cone_idx = p3
            .cones()
            .iter()
            .position(|c| c == &vec![0, 1, 2])
            .unwrap();
        let bl = p3.blow_up_fixed_point(cone_idx).unwrap();
        assert_eq!((bl.ray_count(), bl.cone_count()), (5, 6));
        assert_eq!(bl.ray(4), &[1, 1, 1]);
    }

    #[test]
    fn blow_up_p2_counts() {
        let p2 = Fan::projective_space(2);
        let bl = p2.blow_up_fixed_point(0).unwrap();
        assert_eq!((bl.ray_count(), bl.cone_count(), bl.walls().len()), (4, 4, 4));
    }

    #[test]
    fn revalidation_of_constructors() {
        for fan in [
            Fan::projective_space(3),
            Fan::proj_split(2, 2),
            Fan::product(&Fan::projective_space(1), &Fan::projective_space(1)),
            Fan::projective_space(3).blow_up_fixed_point(0).unwrap(),
        ] {
            let again = Fan::build(fan.dim(), fan.rays().to_vec(), fan.cones().to_vec()).unwrap();
            assert_eq!(again.cones(), fan.cones());
            assert_eq!(again.walls(), fan.walls());
        }
    }

    #[test]
    fn walls_independent_of_cone_input_order() {
        let (rays, mut cones) = p2_data();
        cones.reverse();
        let fan = Fan::build(2, rays, cones).unwrap();
        let reference = {
            let (r, c) = p2_data();
            Fan::build(2, r, c).unwrap()
        };
        assert_eq!(fan.walls(), reference.walls());
    }

    #[test]
    fn dual_covector_examples() {
        let p1 = Fan::projective_space(1);
        assert_eq!(p1.dual_covector(0, 0).unwrap(), vec![1]);

        let p2 = Fan::projective_space(2);
        let c01 = p2.cones().iter().position(|c| c == &vec![0, 1]).unwrap();
        assert_eq!(p2.dual_covector(c01, 0).unwrap(), vec![1, 0]);
        let c12 = p2.cones().iter().position(|c| c == &vec![1, 2]).unwrap();
        assert_eq!(p2.dual_covector(c12, 2).unwrap(), vec![-1, 0]);

        assert_eq!(
            p2.dual_covector(c01, 2).unwrap_err().name(),
            "RayNotInCone"
        );
    }

    #[test]
    fn neighbor_across_is_unique() {
        let p2 = Fan::projective_space(2);
        for ci in 0..p2.cone_count() {
            for &ray in p2.cone(ci).to_vec().iter() {
                let nb = p2.neighbor_across(ci, ray).unwrap();
                assert!(!p2.cone(nb).contains(&ray));
                assert!(p2.are_adjacent(ci, nb));
            }
        }
    }
}
