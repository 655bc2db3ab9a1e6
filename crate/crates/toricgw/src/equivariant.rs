//! Exact evaluation of the localized equivariant classes attached to a
//! decorated graph: edge weights of the torus action, flag weights, the edge
//! factor `Delta(e)`, the graph factor `Xi`, the psi-class factor, the
//! inverse Euler class of the normal bundle, fixed-point restrictions of
//! cohomology classes, evaluation-map factors and the Euler class of a
//! push-forward bundle.
//!
//! The torus weights are specialized to distinct random integers drawn from a
//! seeded generator and all arithmetic is exact rational. Specializations
//! that put a zero where an inverse is required raise `DegenerateWeights`,
//! which the integrator answers by resampling.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cycles::{self, CohomExpr, DivisorClass};
use crate::error::{Error, Result};
use crate::fan::{dot, Fan, Wall};
use crate::graphs::{DecoratedGraph, Tree};
use crate::rat::{factorial, ipow, rat, Rat};

/// Range from which the weights are drawn: distinct integers, uniform on
/// `[-WEIGHT_RANGE, WEIGHT_RANGE]`.
pub const WEIGHT_RANGE: i64 = 1_000_000;

/// One exact rational weight per ray, pairwise distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightAssignment {
    pub omegas: Vec<Rat>,
}

/// Draws `r` pairwise distinct integers from the documented range,
/// reproducibly from the seed (rejection sampling on collisions).
pub fn sample_weights(r: usize, seed: u64) -> WeightAssignment {
    assert!(r >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn: Vec<i64> = Vec::with_capacity(r);
    while drawn.len() < r {
        let x = rng.gen_range(-WEIGHT_RANGE..=WEIGHT_RANGE);
        if !drawn.contains(&x) {
            drawn.push(x);
        }
    }
    WeightAssignment {
        omegas: drawn.into_iter().map(rat).collect(),
    }
}

/// Which endpoint of an edge plays the role of the base cone in the
/// orientation-dependent factors. The integral is policy-independent; the
/// acceptance suite checks both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrientationPolicy {
    #[default]
    SmallerIndexFirst,
    LargerIndexFirst,
}

impl OrientationPolicy {
    /// Orders a pair of distinct cone indices according to the policy.
    pub fn orient(self, a: usize, b: usize) -> (usize, usize) {
        match self {
            OrientationPolicy::SmallerIndexFirst => (a.min(b), a.max(b)),
            OrientationPolicy::LargerIndexFirst => (a.max(b), a.min(b)),
        }
    }
}

/// Weight of the induced one-parameter action on the invariant curve of the
/// wall between adjacent cones, at the fixed point of `sigma1`:
/// `sum_j <rho_j, u> omega_j` with `u` the dual covector of the ray of
/// `sigma1` outside the shared facet.
pub fn omega_edge(fan: &Fan, sigma1: usize, sigma2: usize, w: &WeightAssignment) -> Result<Rat> {
    let wall = fan.wall_between(sigma1, sigma2)?;
    let rho_prime = if wall.cone_a == sigma1 {
        wall.opposite_a
    } else {
        wall.opposite_b
    };
    let u = fan.dual_covector(sigma1, rho_prime)?;
    let mut acc = Rat::zero();
    for j in 0..fan.ray_count() {
        let p = dot(fan.ray(j), &u);
        if p != 0 {
            acc += rat(p) * w.omegas[j].clone();
        }
    }
    Ok(acc)
}

/// Degree of `d [V(sigma1 ∩ sigma2)] · [V(rho)]` where `rho` is the ray of
/// `sigma1` outside `gamma`: `d` times the wall class pairing at `rho`.
pub fn lambda_edge_degree(
    fan: &Fan,
    wall: &Wall,
    d: u64,
    sigma1: usize,
    gamma: usize,
) -> Result<i64> {
    if sigma1 != wall.cone_a && sigma1 != wall.cone_b {
        return Err(Error::NotAdjacent {
            a: sigma1 + 1,
            b: wall.cone_a + 1,
        });
    }
    let rho = fan
        .cone(sigma1)
        .iter()
        .copied()
        .find(|r| !fan.cone(gamma).contains(r))
        .filter(|_| fan.are_adjacent(sigma1, gamma))
        .ok_or(Error::GammaNotNeighbor {
            sigma: sigma1 + 1,
            gamma: gamma + 1,
        })?;
    let cls = cycles::wall_curve_class(fan, wall);
    Ok(d as i64 * cls.0[rho])
}

/// Precomputed weight data for one fan and one weight sample: the edge
/// weights `omega^sigma_gamma` for every ordered adjacent pair and the
/// tangent-weight product at every fixed point. Construction fails with
/// `DegenerateWeights` when any edge weight vanishes.
#[derive(Debug, Clone)]
pub struct EvalContext<'f> {
    pub fan: &'f Fan,
    pub weights: WeightAssignment,
    pub policy: OrientationPolicy,
    omega: BTreeMap<(usize, usize), Rat>,
    tangent_product: Vec<Rat>,
    delta_cache: BTreeMap<(usize, usize, u64), Rat>,
}

impl<'f> EvalContext<'f> {
    pub fn new(fan: &'f Fan, weights: WeightAssignment, policy: OrientationPolicy) -> Result<Self> {
        let mut omega = BTreeMap::new();
        for wall in fan.walls() {
            for (s1, s2) in [(wall.cone_a, wall.cone_b), (wall.cone_b, wall.cone_a)] {
                let val = omega_edge(fan, s1, s2, &weights)?;
                if val.is_zero() {
                    return Err(Error::DegenerateWeights);
                }
                omega.insert((s1, s2), val);
            }
        }
        let tangent_product = (0..fan.cone_count())
            .map(|s| {
                fan.neighbors(s)
                    .iter()
                    .map(|&g| omega[&(s, g)].clone())
                    .product()
            })
            .collect();
        Ok(EvalContext {
            fan,
            weights,
            policy,
            omega,
            tangent_product,
            delta_cache: BTreeMap::new(),
        })
    }

    /// Eagerly evaluates the edge factor for every oriented wall and every
    /// weight up to `max_weight`, so later lookups are shared and lock-free.
    /// Fails with `DegenerateWeights` when any inverted factor vanishes.
    pub fn precompute_edge_factors(&mut self, max_weight: u64) -> Result<()> {
        let mut cache = BTreeMap::new();
        for wall in self.fan.walls() {
            let (s1, s2) = self.policy.orient(wall.cone_a, wall.cone_b);
            for d in 1..=max_weight {
                cache.insert((s1, s2, d), self.delta_edge(s1, s2, d)?);
            }
        }
        self.delta_cache = cache;
        Ok(())
    }

    /// `omega^sigma_gamma` for an ordered adjacent pair.
    pub fn omega(&self, sigma: usize, gamma: usize) -> Result<&Rat> {
        self.omega.get(&(sigma, gamma)).ok_or(Error::NotAdjacent {
            a: sigma + 1,
            b: gamma + 1,
        })
    }

    /// Product of the tangent weights at the fixed point of `sigma`.
    pub fn tangent_product(&self, sigma: usize) -> &Rat {
        &self.tangent_product[sigma]
    }

    /// Fixed-point restriction of a single ray-divisor power: zero when the
    /// ray misses the cone (and `k > 0`), else the `k`-th power of the
    /// tangent weight toward the neighbor across the facet opposite the ray.
    pub fn lambda_eval(&self, sigma: usize, ray: usize, k: u32) -> Result<Rat> {
        if k == 0 {
            return Ok(Rat::one());
        }
        if !self.fan.cone(sigma).contains(&ray) {
            return Ok(Rat::zero());
        }
        let gamma = self.fan.neighbor_across(sigma, ray)?;
        Ok(ipow(self.omega(sigma, gamma)?, k as i64).expect("nonzero base"))
    }

    /// Fixed-point restriction of a graded class, extended linearly over its
    /// monomials.
    pub fn lambda_class(&self, sigma: usize, class: &CohomExpr) -> Result<Rat> {
        let mut acc = Rat::zero();
        'terms: for (exps, coeff) in class.terms() {
            let mut term = coeff.clone();
            for (ray, &k) in exps.iter().enumerate() {
                if k > 0 {
                    let f = self.lambda_eval(sigma, ray, k)?;
                    if f.is_zero() {
                        continue 'terms;
                    }
                    term *= f;
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    /// The edge factor of the Euler class: for the ordered pair
    /// `(sigma1, sigma2)` and weight `d`,
    ///
    /// ```text
    /// (-1)^d d^(2d) / ((d!)^2 (w12)^(2d))
    ///   * prod over gamma in sigma1* \ {sigma2}, i in K of
    ///     (omega^sigma1_gamma - (i/d) w12)^(-sgn(lambda + 1))
    /// ```
    ///
    /// with `K = {0..lambda}` when `lambda >= 0`, `{lambda+1..-1}` when
    /// `lambda <= -2`, empty when `lambda = -1`.
    pub fn delta_edge(&self, sigma1: usize, sigma2: usize, d: u64) -> Result<Rat> {
        if let Some(cached) = self.delta_cache.get(&(sigma1, sigma2, d)) {
            return Ok(cached.clone());
        }
        let w12 = self.omega(sigma1, sigma2)?.clone();
        let wall = self.fan.wall_between(sigma1, sigma2)?;
        let dd = d as i64;
        let sign = if d % 2 == 0 { Rat::one() } else { -Rat::one() };
        let mut val = sign * ipow(&rat(dd), 2 * dd).unwrap() / factorial(d as usize).pow(2)
            / ipow(&w12, 2 * dd).ok_or(Error::DegenerateWeights)?;
        for &gamma in self.fan.neighbors(sigma1) {
            if gamma == sigma2 {
                continue;
            }
            let lambda = lambda_edge_degree(self.fan, wall, d, sigma1, gamma)?;
            let (range, exponent): (std::ops::RangeInclusive<i64>, i64) = if lambda >= 0 {
                (0..=lambda, -1)
            } else if lambda <= -2 {
                ((lambda + 1)..=-1, 1)
            } else {
                (1..=0, 0) // empty
            };
            let wg = self.omega(sigma1, gamma)?.clone();
            for i in range {
                let factor = wg.clone() - Rat::new(i.into(), dd.into()) * w12.clone();
                val *= ipow(&factor, exponent).ok_or(Error::DegenerateWeights)?;
            }
        }
        Ok(val)
    }
}

/// Flag weights of a decorated graph: for each vertex, the list of
/// `omega_F = omega^{c(v)}_{c(v')} / w(e)` over its flags, plus the inverse
/// sum and inverse product used by the psi and Euler factors. Marking data
/// (`S_v`, `n(v)`) comes in separately so one flag table serves every
/// marking of a fixed (tree, coloring, weighting).
#[derive(Debug, Clone)]
pub struct FlagData {
    pub flags: Vec<Vec<Rat>>,
    pub inv_sum: Vec<Rat>,
    pub inv_prod: Vec<Rat>,
}

impl FlagData {
    pub fn new(ctx: &EvalContext, tree: &Tree, coloring: &[usize], weights: &[u64]) -> Result<FlagData> {
        let mut flags = vec![Vec::new(); tree.vertex_count];
        for (&(u, v), &d) in tree.edges.iter().zip(weights) {
            let wuv = ctx.omega(coloring[u], coloring[v])?.clone();
            let wvu = ctx.omega(coloring[v], coloring[u])?.clone();
            flags[u].push(wuv / rat(d as i64));
            flags[v].push(wvu / rat(d as i64));
        }
        let mut inv_sum = Vec::with_capacity(tree.vertex_count);
        let mut inv_prod = Vec::with_capacity(tree.vertex_count);
        for per_vertex in &flags {
            let mut s = Rat::zero();
            let mut p = Rat::one();
            for f in per_vertex {
                let inv = f.clone().recip();
                s += inv.clone();
                p *= inv;
            }
            inv_sum.push(s);
            inv_prod.push(p);
        }
        Ok(FlagData {
            flags,
            inv_sum,
            inv_prod,
        })
    }

    /// `|F_v| + |S_v|` for each vertex under the given marking.
    pub fn valences(&self, marking: &[usize]) -> Vec<usize> {
        let mut n: Vec<usize> = self.flags.iter().map(Vec::len).collect();
        for &v in marking {
            n[v] += 1;
        }
        n
    }
}

/// `Xi(Gamma)`: the tangent-weight product at each vertex raised to
/// `|F_v| - 1`, times the product of edge factors.
pub fn xi(ctx: &EvalContext, graph: &DecoratedGraph) -> Result<Rat> {
    let mut val = Rat::one();
    for (v, _) in (0..graph.tree.vertex_count).map(|v| (v, ())) {
        let deg = graph
            .tree
            .edges
            .iter()
            .filter(|&&(a, b)| a == v || b == v)
            .count() as i64;
        val *= ipow(ctx.tangent_product(graph.coloring[v]), deg - 1)
            .ok_or(Error::DegenerateWeights)?;
    }
    for (&(u, v), &d) in graph.tree.edges.iter().zip(&graph.weights) {
        let (s1, s2) = ctx.policy.orient(graph.coloring[u], graph.coloring[v]);
        val *= ctx.delta_edge(s1, s2, d)?;
    }
    Ok(val)
}

/// The multinomial prefactor of the psi factor at one vertex, with the
/// extended conventions for unstable valences.
fn psi_multinomial(n_v: usize, marks: &[usize], a: &[u32]) -> Rat {
    let s_bar: u32 = marks.iter().map(|&i| a[i]).sum();
    if s_bar == 0 {
        return Rat::one();
    }
    if n_v >= 3 {
        let top = n_v - 3;
        if s_bar as usize > top {
            return Rat::zero();
        }
        let mut value = factorial(top) / factorial(top - s_bar as usize);
        for &i in marks {
            value /= factorial(a[i] as usize);
        }
        value
    } else if marks.len() == 1 && n_v == 2 {
        if a[marks[0]] % 2 == 0 {
            Rat::one()
        } else {
            -Rat::one()
        }
    } else {
        unreachable!("a vertex of a decorated tree has a flag; no other unstable case exists")
    }
}

/// `Psi(Gamma)` for exponents `a_1..a_m`: the product over vertices of the
/// extended multinomial times `(sum_F omega_F^{-1})^(-S_bar)`.
pub fn psi_factor(
    ctx: &EvalContext,
    graph: &DecoratedGraph,
    fd: &FlagData,
    a: &[u32],
) -> Result<Rat> {
    let _ = ctx;
    if a.iter().all(|&x| x == 0) {
        return Ok(Rat::one());
    }
    let n = fd.valences(&graph.marking);
    let mut marks_at: Vec<Vec<usize>> = vec![Vec::new(); graph.tree.vertex_count];
    for (i, &v) in graph.marking.iter().enumerate() {
        marks_at[v].push(i);
    }
    let mut val = Rat::one();
    for v in 0..graph.tree.vertex_count {
        let s_bar: u32 = marks_at[v].iter().map(|&i| a[i]).sum();
        if s_bar == 0 {
            continue;
        }
        let mult = psi_multinomial(n[v], &marks_at[v], a);
        if mult.is_zero() {
            return Ok(Rat::zero());
        }
        let power = ipow(&fd.inv_sum[v], -(s_bar as i64)).ok_or(Error::DegenerateWeights)?;
        val *= mult * power;
    }
    Ok(val)
}

/// The inverse equivariant Euler class of the normal bundle of the fixed
/// stratum (psi exponents all zero):
/// `Xi * prod_v [ prod_F omega_F^{-1} * (sum_F omega_F^{-1})^(n(v)-3) ]`.
pub fn euler_inverse(ctx: &EvalContext, graph: &DecoratedGraph, fd: &FlagData) -> Result<Rat> {
    let mut val = xi(ctx, graph)?;
    let n = fd.valences(&graph.marking);
    for v in 0..graph.tree.vertex_count {
        val *= fd.inv_prod[v].clone();
        val *= ipow(&fd.inv_sum[v], n[v] as i64 - 3).ok_or(Error::DegenerateWeights)?;
    }
    Ok(val)
}

/// Contribution of pulling back a class along the evaluation map at mark `i`:
/// the restriction of the class to the fixed point of the cone coloring the
/// marked vertex.
pub fn ev_factor(
    ctx: &EvalContext,
    graph: &DecoratedGraph,
    i: usize,
    class: &CohomExpr,
) -> Result<Rat> {
    let m = graph.marking.len();
    if i == 0 || i > m {
        return Err(Error::MarkOutOfRange { mark: i, m });
    }
    let sigma = graph.coloring[graph.marking[i - 1]];
    ctx.lambda_class(sigma, class)
}

/// Equivariant Euler class of the push-forward of a line bundle with no
/// higher cohomology along the curves: vertex factors
/// `Lambda(c(v), M)^(1-|F_v|)` over vertices of valence != 1 and, for each
/// edge with positive bundle degree `M_e = w(e) * (M . C_e)`, the product of
/// the interpolated section weights
/// `[alpha * Lambda(c(v), M) + (M_e - alpha) * Lambda(c(v'), M)] / M_e`.
pub fn push_ev_factor(
    ctx: &EvalContext,
    graph: &DecoratedGraph,
    fd: &FlagData,
    bundle: &DivisorClass,
) -> Result<Rat> {
    let class = CohomExpr::from_divisor(bundle);
    let mut restriction: BTreeMap<usize, Rat> = BTreeMap::new();
    for &sigma in &graph.coloring {
        if !restriction.contains_key(&sigma) {
            restriction.insert(sigma, ctx.lambda_class(sigma, &class)?);
        }
    }
    let mut val = Rat::one();
    for v in 0..graph.tree.vertex_count {
        let valence = fd.flags[v].len();
        if valence != 1 {
            val *= ipow(&restriction[&graph.coloring[v]], 1 - valence as i64)
                .ok_or(Error::DegenerateWeights)?;
        }
    }
    for (&(u, v), &d) in graph.tree.edges.iter().zip(&graph.weights) {
        let (cu, cv) = (graph.coloring[u], graph.coloring[v]);
        let (s1, s2) = ctx.policy.orient(cu, cv);
        let wall = ctx.fan.wall_between(cu, cv)?;
        let edge_degree =
            d as i64 * cycles::pair(bundle, &cycles::wall_curve_class(ctx.fan, wall))?;
        if edge_degree < 0 {
            return Err(Error::NegativeEdgeDegree {
                degree: edge_degree,
            });
        }
        if edge_degree == 0 {
            continue;
        }
        let a = restriction[&s1].clone();
        let b = restriction[&s2].clone();
        let me = rat(edge_degree);
        for alpha in 0..=edge_degree {
            val *= (rat(alpha) * a.clone() + rat(edge_degree - alpha) * b.clone()) / me.clone();
        }
    }
    Ok(val)
}
