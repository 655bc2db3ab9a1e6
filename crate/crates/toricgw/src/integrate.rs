//! The localization sum: for a fan, a curve class, a marking count and a
//! parsed integrand, sum `P(Gamma) * EulerInv(Gamma) / (aut_c * prod w(e))`
//! over every decorated graph, exactly.
//!
//! The sum is data-parallel over (tree, coloring) units when the `parallel`
//! feature is enabled (the default); without it, or with `workers = Some(1)`,
//! the same units fold sequentially. Exact rational addition is associative
//! and commutative, so the value is identical for any worker count.
//!
//! Weights are specialized to random integers per attempt; a degenerate
//! specialization (zero where an inverse is needed) triggers a resample, up
//! to [`IntegrateOptions::max_attempts`] times.

use std::time::{Duration, Instant};

use num_traits::{One, Zero};

use crate::cycles::{self, CurveClass, DivisorClass, MomentGraph};
use crate::equivariant::{
    sample_weights, EvalContext, FlagData, OrientationPolicy,
};
use crate::error::{Error, Result};
use crate::expr::{self, AtomEval, ParsedIntegrand};
use crate::fan::Fan;
use crate::graphs::{self, DecoratedGraph, Tree};
use crate::rat::{ipow, rat, Rat};

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    /// Seed for the weight specialization; attempt `k` uses
    /// `seed ^ (k * 0x9E3779B97F4A7C15)`.
    pub seed: u64,
    /// `Some(1)` forces the sequential path; `Some(k)` runs on a dedicated
    /// `k`-thread pool; `None` uses the global pool (or the sequential path
    /// when the `parallel` feature is off).
    pub workers: Option<usize>,
    pub policy: OrientationPolicy,
    /// Weight resampling cap before giving up with `WeightExhaustion`.
    pub max_attempts: u32,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            seed: 0x0A71_AB07,
            workers: None,
            policy: OrientationPolicy::default(),
            max_attempts: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationResult {
    pub value: Rat,
    pub graph_count: u64,
    pub retries: u32,
    pub elapsed: Duration,
    /// Set when the integrand codimension differs from the virtual dimension;
    /// the value is then 0 by degree reasons and no graphs are evaluated.
    pub dimension_mismatch: bool,
}

fn attempt_seed(seed: u64, attempt: u32) -> u64 {
    seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One parallel work unit: a tree with one coloring orbit representative.
struct Unit {
    tree_idx: usize,
    coloring: Vec<usize>,
    aut_c: u64,
}

/// Per-attempt evaluation state shared read-only across workers.
struct Tables<'f> {
    ctx: EvalContext<'f>,
    /// `lambda[class_idx][cone]`: fixed-point restriction of each ev class.
    lambda: Vec<Vec<Rat>>,
    /// `push_vertex[bundle_idx][cone]`: restriction of each push bundle.
    push_vertex: Vec<Vec<Rat>>,
    /// Per bundle: degree and interpolation product for each oriented wall
    /// and admissible edge weight.
    push_edge: Vec<std::collections::BTreeMap<(usize, usize, u64), (i64, Option<Rat>)>>,
}

impl<'f> Tables<'f> {
    fn new(
        fan: &'f Fan,
        expr: &ParsedIntegrand,
        seed: u64,
        policy: OrientationPolicy,
        max_weight: u64,
    ) -> Result<Tables<'f>> {
        let weights = sample_weights(fan.ray_count(), seed);
        let mut ctx = EvalContext::new(fan, weights, policy)?;
        ctx.precompute_edge_factors(max_weight)?;
        let lambda = expr
            .classes
            .iter()
            .map(|class| {
                (0..fan.cone_count())
                    .map(|sigma| ctx.lambda_class(sigma, class))
                    .collect()
            })
            .collect::<Result<Vec<Vec<Rat>>>>()?;
        let mut push_vertex = Vec::with_capacity(expr.bundles.len());
        let mut push_edge = Vec::with_capacity(expr.bundles.len());
        for (_, bundle) in &expr.bundles {
            let class = cycles::CohomExpr::from_divisor(bundle);
            let per_cone = (0..fan.cone_count())
                .map(|sigma| ctx.lambda_class(sigma, &class))
                .collect::<Result<Vec<Rat>>>()?;
            let mut edges = std::collections::BTreeMap::new();
            for wall in fan.walls() {
                let (s1, s2) = policy.orient(wall.cone_a, wall.cone_b);
                let unit_degree = cycles::pair(bundle, &cycles::wall_curve_class(fan, wall))?;
                for d in 1..=max_weight {
                    let edge_degree = d as i64 * unit_degree;
                    let factor = if edge_degree > 0 {
                        let a = &per_cone[s1];
                        let b = &per_cone[s2];
                        let me = rat(edge_degree);
                        let mut acc = Rat::one();
                        for alpha in 0..=edge_degree {
                            acc *= (rat(alpha) * a.clone()
                                + rat(edge_degree - alpha) * b.clone())
                                / me.clone();
                        }
                        Some(acc)
                    } else {
                        None
                    };
                    edges.insert((s1, s2, d), (edge_degree, factor));
                }
            }
            push_vertex.push(per_cone);
            push_edge.push(edges);
        }
        Ok(Tables {
            ctx,
            lambda,
            push_vertex,
            push_edge,
        })
    }
}

/// Table-backed atom evaluation for one decorated graph.
struct TableAtoms<'a, 'f> {
    tables: &'a Tables<'f>,
    graph: &'a DecoratedGraph,
    fd: &'a FlagData,
}

impl AtomEval for TableAtoms<'_, '_> {
    fn ev(&mut self, mark: usize, class_idx: usize) -> Result<Rat> {
        let m = self.graph.marking.len();
        if mark == 0 || mark > m {
            return Err(Error::MarkOutOfRange { mark, m });
        }
        let sigma = self.graph.coloring[self.graph.marking[mark - 1]];
        Ok(self.tables.lambda[class_idx][sigma].clone())
    }

    fn psi(&mut self, a: &[u32]) -> Result<Rat> {
        crate::equivariant::psi_factor(&self.tables.ctx, self.graph, self.fd, a)
    }

    fn push_ev(&mut self, bundle_idx: usize) -> Result<Rat> {
        let graph = self.graph;
        let mut val = Rat::one();
        for v in 0..graph.tree.vertex_count {
            let valence = self.fd.flags[v].len();
            if valence != 1 {
                let base = &self.tables.push_vertex[bundle_idx][graph.coloring[v]];
                val *= ipow(base, 1 - valence as i64).ok_or(Error::DegenerateWeights)?;
            }
        }
        for (&(u, v), &d) in graph.tree.edges.iter().zip(&graph.weights) {
            let (s1, s2) = self
                .tables
                .ctx
                .policy
                .orient(graph.coloring[u], graph.coloring[v]);
            let (degree, factor) = self.tables.push_edge[bundle_idx]
                .get(&(s1, s2, d))
                .expect("edge factors precomputed for all walls and weights");
            if *degree < 0 {
                return Err(Error::NegativeEdgeDegree { degree: *degree });
            }
            if let Some(fac) = factor {
                val *= fac.clone();
            }
        }
        Ok(val)
    }
}

/// Sums a unit: every admissible weighting and every marking of one colored
/// tree. Returns the exact partial sum and the number of decorated graphs.
#[allow(clippy::too_many_arguments)]
fn unit_sum(
    unit: &Unit,
    trees: &[Tree],
    tables: &Tables,
    expr: &ParsedIntegrand,
    beta: &CurveClass,
    nef: &[DivisorClass],
    mg: &MomentGraph,
    m: usize,
) -> Result<(Rat, u64)> {
    let tree = &trees[unit.tree_idx];
    let mut acc = Rat::zero();
    let mut count = 0u64;
    let mut graph = DecoratedGraph {
        tree: tree.clone(),
        coloring: unit.coloring.clone(),
        weights: Vec::new(),
        marking: Vec::new(),
        aut_c: unit.aut_c,
    };
    for weights in graphs::edge_weightings(tree, &unit.coloring, beta, nef, mg)? {
        let weight_product: u64 = weights.iter().product();
        let denom = rat((unit.aut_c * weight_product) as i64);
        graph.weights = weights;
        let fd = FlagData::new(&tables.ctx, tree, &unit.coloring, &graph.weights)?;
        for marking in graphs::markings(tree.vertex_count, m) {
            graph.marking = marking;
            let mut atoms = TableAtoms {
                tables,
                graph: &graph,
                fd: &fd,
            };
            let numerator = expr::evaluate_with(&expr.root, &mut atoms)?;
            count += 1;
            if numerator.is_zero() {
                continue;
            }
            let euler = crate::equivariant::euler_inverse(&tables.ctx, &graph, &fd)?;
            acc += numerator * euler / denom.clone();
        }
    }
    Ok((acc, count))
}

fn fold_units<F>(units: &[Unit], workers: Option<usize>, f: F) -> Result<(Rat, u64)>
where
    F: Fn(&Unit) -> Result<(Rat, u64)> + Sync,
{
    let sequential = |units: &[Unit]| -> Result<(Rat, u64)> {
        let mut acc = Rat::zero();
        let mut count = 0u64;
        for unit in units {
            let (v, c) = f(unit)?;
            acc += v;
            count += c;
        }
        Ok((acc, count))
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let parallel = |units: &[Unit]| -> Result<(Rat, u64)> {
            units
                .par_iter()
                .map(&f)
                .try_reduce(|| (Rat::zero(), 0u64), |a, b| Ok((a.0 + b.0, a.1 + b.1)))
        };
        match workers {
            Some(1) => sequential(units),
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
                .install(|| parallel(units)),
            None => parallel(units),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        sequential(units)
    }
}

/// Evaluates the invariant. Degree bookkeeping first: when the integrand
/// codimension differs from the virtual dimension the value is zero and the
/// result carries `dimension_mismatch`.
pub fn integrate_ab(
    fan: &Fan,
    beta: &CurveClass,
    m: usize,
    expr: &ParsedIntegrand,
    opts: &IntegrateOptions,
) -> Result<IntegrationResult> {
    let start = Instant::now();
    if expr.m != m {
        return Err(Error::InvalidInput(format!(
            "integrand was parsed for m = {}, integration asked for m = {m}",
            expr.m
        )));
    }
    let nef = cycles::nef_generators(fan)?;
    if beta.0.len() != fan.ray_count() {
        return Err(Error::MismatchedFan {
            left: beta.0.len(),
            right: fan.ray_count(),
        });
    }
    if beta.0.iter().all(|&x| x == 0) {
        return Err(Error::ZeroClass);
    }
    if !cycles::is_effective(beta, &nef) {
        return Err(Error::NotEffective {
            class: beta.0.clone(),
        });
    }
    if expr::codimension(expr, beta)? != cycles::virtual_dimension(fan, beta, m)? {
        return Ok(IntegrationResult {
            value: Rat::zero(),
            graph_count: 0,
            retries: 0,
            elapsed: start.elapsed(),
            dimension_mismatch: true,
        });
    }

    let p = cycles::max_edges(beta, &nef)?;
    let mg = cycles::moment_graph(fan);
    let trees = graphs::free_trees(p);
    let mut units = Vec::new();
    for (tree_idx, tree) in trees.iter().enumerate() {
        for (coloring, aut_c) in graphs::colorings(tree, &mg) {
            units.push(Unit {
                tree_idx,
                coloring,
                aut_c,
            });
        }
    }

    for attempt in 0..opts.max_attempts {
        let tables = match Tables::new(
            fan,
            expr,
            attempt_seed(opts.seed, attempt),
            opts.policy,
            p as u64,
        ) {
            Ok(t) => t,
            Err(Error::DegenerateWeights) => continue,
            Err(e) => return Err(e),
        };
        let outcome = fold_units(&units, opts.workers, |unit| {
            unit_sum(unit, &trees, &tables, expr, beta, &nef, &mg, m)
        });
        match outcome {
            Ok((value, graph_count)) => {
                return Ok(IntegrationResult {
                    value,
                    graph_count,
                    retries: attempt,
                    elapsed: start.elapsed(),
                    dimension_mismatch: false,
                })
            }
            Err(Error::DegenerateWeights) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::WeightExhaustion {
        attempts: opts.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, SymbolTable};

    fn line(fan: &Fan) -> CurveClass {
        cycles::wall_curve_class(fan, &fan.walls()[0])
    }

    fn scale(c: &CurveClass, k: i64) -> CurveClass {
        CurveClass(c.0.iter().map(|x| k * x).collect())
    }

    #[test]
    fn fundamental_class_of_degree_one_maps_to_p1() {
        let p1 = Fan::projective_space(1);
        let symbols = SymbolTable::new(&p1);
        let expr = parse_expression("1", 0, &symbols).unwrap();
        let res = integrate_ab(&p1, &line(&p1), 0, &expr, &IntegrateOptions::default()).unwrap();
        assert_eq!(res.value, Rat::one());
        assert_eq!(res.graph_count, 1);
        assert!(!res.dimension_mismatch);
    }

    #[test]
    fn one_line_through_two_points_in_p2() {
        let p2 = Fan::projective_space(2);
        let symbols = SymbolTable::new(&p2);
        let expr = parse_expression("ev(1,a_point)*ev(2,a_point)", 2, &symbols).unwrap();
        let res = integrate_ab(&p2, &line(&p2), 2, &expr, &IntegrateOptions::default()).unwrap();
        assert_eq!(res.value, Rat::one());
    }

    #[test]
    fn dimension_mismatch_returns_zero_with_warning() {
        let p3 = Fan::projective_space(3);
        let symbols = SymbolTable::new(&p3);
        let expr = parse_expression("1", 0, &symbols).unwrap();
        let res = integrate_ab(&p3, &line(&p3), 0, &expr, &IntegrateOptions::default()).unwrap();
        assert!(res.dimension_mismatch);
        assert!(res.value.is_zero());
        assert_eq!(res.graph_count, 0);
    }

    #[test]
    fn non_effective_class_rejected() {
        let p3 = Fan::projective_space(3);
        let symbols = SymbolTable::new(&p3);
        let expr = parse_expression("1", 0, &symbols).unwrap();
        let beta = scale(&line(&p3), -1);
        assert_eq!(
            integrate_ab(&p3, &beta, 0, &expr, &IntegrateOptions::default())
                .unwrap_err()
                .name(),
            "NotEffective"
        );
        let zero = CurveClass(vec![0; 4]);
        assert_eq!(
            integrate_ab(&p3, &zero, 0, &expr, &IntegrateOptions::default())
                .unwrap_err()
                .name(),
            "ZeroClass"
        );
    }

    #[test]
    fn deterministic_given_seed_and_counts_graphs() {
        let p2 = Fan::projective_space(2);
        let symbols = SymbolTable::new(&p2);
        let expr = parse_expression("ev(1,a_point)*ev(2,a_point)", 2, &symbols).unwrap();
        let opts = IntegrateOptions {
            seed: 1234,
            ..Default::default()
        };
        let a = integrate_ab(&p2, &line(&p2), 2, &expr, &opts).unwrap();
        let b = integrate_ab(&p2, &line(&p2), 2, &expr, &opts).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.graph_count, b.graph_count);
        // 1 tree, 3 coloring orbits, 1 weighting, 4 markings each.
        assert_eq!(a.graph_count, 12);
    }

    #[test]
    fn worker_counts_agree() {
        let p3 = Fan::projective_space(3);
        let symbols = SymbolTable::new(&p3);
        let expr = parse_expression(
            "ev(1,a_point)*ev(2,a_point)*ev(3,D1)*ev(4,D2)",
            4,
            &symbols,
        )
        .unwrap();
        let beta = scale(&line(&p3), 1);
        // codim 3+3+1+1 = 8 = 3 + 4 + 4 - 3.
        let mut opts = IntegrateOptions::default();
        opts.workers = Some(1);
        let seq = integrate_ab(&p3, &beta, 4, &expr, &opts).unwrap();
        opts.workers = Some(4);
        let par = integrate_ab(&p3, &beta, 4, &expr, &opts).unwrap();
        assert_eq!(seq.value, par.value);
        assert_eq!(seq.graph_count, par.graph_count);
    }

    #[test]
    fn evaluator_tables_match_direct_evaluation() {
        let p3 = Fan::projective_space(3);
        let symbols = SymbolTable::new(&p3);
        let expr = parse_expression(
            "ev(1,a_point)*ev(2,D1^2)*Psi(0,1)*push_ev(anticanonical)",
            2,
            &symbols,
        )
        .unwrap();
        let beta = line(&p3);
        let seed = attempt_seed(99, 0);
        let tables = Tables::new(&p3, &expr, seed, OrientationPolicy::default(), 1).unwrap();
        for g in graphs::decorated_graphs(&p3, &beta, 2).unwrap() {
            let fd = FlagData::new(&tables.ctx, &g.tree, &g.coloring, &g.weights).unwrap();
            let mut atoms = TableAtoms {
                tables: &tables,
                graph: &g,
                fd: &fd,
            };
            let fast = expr::evaluate_with(&expr.root, &mut atoms).unwrap();
            let direct = expr::evaluate(&expr, &tables.ctx, &g, &fd).unwrap();
            assert_eq!(fast, direct);
        }
    }
}
