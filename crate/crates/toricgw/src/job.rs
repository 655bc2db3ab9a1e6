//! Job files: a single JSON document describing the fan, the named classes,
//! the curve class, the marking count and the integrand.
//!
//! ```json
//! {
//!   "fan": {"construct": "projective_space", "args": [3]},
//!   "define": {"h": "D1"},
//!   "beta": "2*mg[1,2]",
//!   "m": 5,
//!   "integrand": "ev(1,h^3)*ev(2,h^3)*ev(3,h^3)*ev(4,h^2)*ev(5,h^2)",
//!   "seed": 42,
//!   "verify": false
//! }
//! ```
//!
//! `fan` is either raw data `{"rays": [[...]], "max_cones": [[...]]}` with
//! 1-based ray indices, or a constructor call: `projective_space [n]`,
//! `proj_split [n, m]`, `product [fan, fan]`, `blow_up [fan, cone_index]`
//! (1-based cone index into the canonical order). `define` entries are
//! evaluated top to bottom (later entries may use earlier names). `beta` is
//! an expression over `mg[i,j]` and defined names, or an explicit pairing
//! vector. Definitions may use `D1..Dr`, `a_point`, `anticanonical` and
//! `mg[i,j]`.

use std::path::Path;

use serde_json::Value;

use crate::cycles::{self, CurveClass, MomentGraph};
use crate::error::{Error, Result};
use crate::expr::{self, ParsedIntegrand, SymbolTable};
use crate::fan::Fan;
use crate::integrate::{integrate_ab, IntegrateOptions, IntegrationResult};
use crate::linalg;

#[derive(Debug)]
pub struct Job {
    pub fan: Fan,
    pub beta: CurveClass,
    pub m: usize,
    pub integrand_text: String,
    pub defines: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub verify: bool,
}

impl Job {
    pub fn from_path(path: &Path) -> Result<Job> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Job::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Job> {
        let doc: Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("job file is not valid JSON: {e}")))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::InvalidInput("job file must be a JSON object".into()))?;
        for key in obj.keys() {
            if !matches!(
                key.as_str(),
                "fan" | "define" | "beta" | "m" | "integrand" | "seed" | "verify"
            ) {
                return Err(Error::InvalidInput(format!("unknown job field `{key}`")));
            }
        }
        let fan_spec = obj
            .get("fan")
            .ok_or_else(|| Error::InvalidInput("job file needs a `fan` field".into()))?;
        let fan = parse_fan(fan_spec)?;

        let mut defines = Vec::new();
        if let Some(defs) = obj.get("define") {
            let map = defs.as_object().ok_or_else(|| {
                Error::InvalidInput("`define` must map names to expressions".into())
            })?;
            for (name, v) in map {
                let text = v.as_str().ok_or_else(|| {
                    Error::InvalidInput(format!("definition of `{name}` must be a string"))
                })?;
                defines.push((name.clone(), text.to_owned()));
            }
        }

        let m = obj
            .get("m")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::InvalidInput("job file needs an integer `m`".into()))?
            as usize;
        let integrand_text = obj
            .get("integrand")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidInput("job file needs an `integrand` string".into()))?
            .to_owned();
        let seed = obj.get("seed").and_then(Value::as_u64);
        let verify = obj.get("verify").and_then(Value::as_bool).unwrap_or(false);

        let beta_spec = obj
            .get("beta")
            .ok_or_else(|| Error::InvalidInput("job file needs a `beta` field".into()))?;
        let mg = cycles::moment_graph(&fan);
        let beta = parse_beta(beta_spec, &fan, &mg, &defines)?;
        validate_beta_in_curve_lattice(&fan, &beta)?;

        Ok(Job {
            fan,
            beta,
            m,
            integrand_text,
            defines,
            seed,
            verify,
        })
    }

    /// Builds the symbol table from the `define` entries, top to bottom.
    pub fn symbols<'f>(&self, fan: &'f Fan, mg: &'f MomentGraph) -> Result<SymbolTable<'f>> {
        build_symbols(fan, mg, &self.defines)
    }

    pub fn parse_integrand(&self, symbols: &SymbolTable) -> Result<ParsedIntegrand> {
        expr::parse_expression(&self.integrand_text, self.m, symbols)
    }

    /// Runs the job: parse, validate, integrate. With `verify`, runs again
    /// under an independent seed and insists on exact agreement.
    pub fn run(&self, opts: &IntegrateOptions) -> Result<IntegrationResult> {
        let mg = cycles::moment_graph(&self.fan);
        let symbols = self.symbols(&self.fan, &mg)?;
        let integrand = self.parse_integrand(&symbols)?;
        let mut opts = opts.clone();
        if let Some(seed) = self.seed {
            opts.seed = seed;
        }
        let result = integrate_ab(&self.fan, &self.beta, self.m, &integrand, &opts)?;
        if self.verify {
            let mut second = opts.clone();
            second.seed = opts.seed.wrapping_add(0x5EED_0001);
            let check = integrate_ab(&self.fan, &self.beta, self.m, &integrand, &second)?;
            if check.value != result.value {
                return Err(Error::VerifyMismatch {
                    a: crate::rat::format_ratio(&result.value),
                    b: crate::rat::format_ratio(&check.value),
                });
            }
        }
        Ok(result)
    }
}

fn build_symbols<'f>(
    fan: &'f Fan,
    mg: &'f MomentGraph,
    defines: &[(String, String)],
) -> Result<SymbolTable<'f>> {
    let mut symbols = SymbolTable::new(fan).with_moment_graph(mg);
    for (name, text) in defines {
        let value = expr::parse_define(text, &symbols)?;
        symbols.define(name, value);
    }
    Ok(symbols)
}

fn parse_fan(spec: &Value) -> Result<Fan> {
    let obj = spec
        .as_object()
        .ok_or_else(|| Error::InvalidInput("`fan` must be an object".into()))?;
    if let Some(rays) = obj.get("rays") {
        let cones = obj
            .get("max_cones")
            .ok_or_else(|| Error::InvalidInput("raw fan data needs `max_cones`".into()))?;
        let rays = int_matrix(rays, "rays")?;
        let dim = rays
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidInput("`rays` must be non-empty".into()))?;
        let cones: Vec<Vec<usize>> = int_matrix(cones, "max_cones")?
            .into_iter()
            .map(|cone| {
                cone.into_iter()
                    .map(|k| {
                        if k < 1 {
                            Err(Error::InvalidInput(
                                "`max_cones` uses 1-based ray indices".into(),
                            ))
                        } else {
                            Ok(k as usize - 1)
                        }
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        return Fan::build(dim, rays, cones);
    }
    let name = obj
        .get("construct")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::InvalidInput("`fan` needs `rays` or `construct`".into()))?;
    let args = obj
        .get("args")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("`construct` needs an `args` array".into()))?;
    match name {
        "projective_space" => {
            let n = arg_u64(args, 0, "projective_space(n)")?;
            Ok(Fan::projective_space(n as usize))
        }
        "proj_split" => {
            let n = arg_u64(args, 0, "proj_split(n, m)")?;
            let m = arg_u64(args, 1, "proj_split(n, m)")?;
            Ok(Fan::proj_split(n as usize, m as i64))
        }
        "product" => {
            let a = parse_fan(args.first().ok_or_else(|| {
                Error::InvalidInput("product takes two fan arguments".into())
            })?)?;
            let b = parse_fan(args.get(1).ok_or_else(|| {
                Error::InvalidInput("product takes two fan arguments".into())
            })?)?;
            Ok(Fan::product(&a, &b))
        }
        "blow_up" => {
            let base = parse_fan(args.first().ok_or_else(|| {
                Error::InvalidInput("blow_up takes a fan and a cone index".into())
            })?)?;
            let idx = args
                .get(1)
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::InvalidInput("blow_up needs a 1-based cone index".into()))?;
            if idx < 1 {
                return Err(Error::InvalidInput("cone index is 1-based".into()));
            }
            base.blow_up_fixed_point(idx as usize - 1)
        }
        other => Err(Error::InvalidInput(format!("unknown constructor `{other}`"))),
    }
}

fn arg_u64(args: &[Value], idx: usize, what: &str) -> Result<u64> {
    args.get(idx)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::InvalidInput(format!("{what} needs integer argument #{idx}")))
}

fn int_matrix(v: &Value, what: &str) -> Result<Vec<Vec<i64>>> {
    v.as_array()
        .ok_or_else(|| Error::InvalidInput(format!("`{what}` must be an array of arrays")))?
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| Error::InvalidInput(format!("`{what}` must be an array of arrays")))?
                .iter()
                .map(|x| {
                    x.as_i64().ok_or_else(|| {
                        Error::InvalidInput(format!("`{what}` entries must be integers"))
                    })
                })
                .collect()
        })
        .collect()
}

fn parse_beta(
    spec: &Value,
    fan: &Fan,
    mg: &MomentGraph,
    defines: &[(String, String)],
) -> Result<CurveClass> {
    match spec {
        Value::Array(entries) => {
            let pairing: Vec<i64> = entries
                .iter()
                .map(|x| {
                    x.as_i64()
                        .ok_or_else(|| Error::InvalidInput("`beta` entries must be integers".into()))
                })
                .collect::<Result<_>>()?;
            if pairing.len() != fan.ray_count() {
                return Err(Error::MismatchedFan {
                    left: pairing.len(),
                    right: fan.ray_count(),
                });
            }
            Ok(CurveClass(pairing))
        }
        Value::String(text) => {
            let symbols = build_symbols(fan, mg, defines)?;
            expr::parse_curve(text, &symbols)
        }
        _ => Err(Error::InvalidInput(
            "`beta` must be a pairing vector or an expression string".into(),
        )),
    }
}

/// A raw pairing vector must lie in the rational span of the wall classes;
/// anything outside cannot be a curve class of the fan.
fn validate_beta_in_curve_lattice(fan: &Fan, beta: &CurveClass) -> Result<()> {
    let mori = cycles::mori_generators(fan);
    let rows: Vec<Vec<i64>> = mori.iter().map(|c| c.0.clone()).collect();
    let base_rank = linalg::rank(&rows);
    let mut with_beta = rows;
    with_beta.push(beta.0.clone());
    if linalg::rank(&with_beta) != base_rank {
        return Err(Error::InvalidInput(format!(
            "beta {:?} is not in the span of the invariant curve classes",
            beta.0
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn runs_an_inline_fan_job() {
        let job = Job::from_json(
            r#"{
                "fan": {"rays": [[1,0],[0,1],[-1,-1]], "max_cones": [[1,2],[2,3],[1,3]]},
                "define": {"pt": "a_point"},
                "beta": "mg[1,2]",
                "m": 2,
                "integrand": "ev(1,pt)*ev(2,pt)",
                "seed": 7
            }"#,
        )
        .unwrap();
        let res = job.run(&IntegrateOptions::default()).unwrap();
        assert!(res.value.is_one());
    }

    #[test]
    fn constructor_fans_and_vector_beta() {
        let job = Job::from_json(
            r#"{
                "fan": {"construct": "projective_space", "args": [1]},
                "beta": [1, 1],
                "m": 0,
                "integrand": "1",
                "verify": true
            }"#,
        )
        .unwrap();
        let res = job.run(&IntegrateOptions::default()).unwrap();
        assert!(res.value.is_one());
    }

    #[test]
    fn nested_constructors() {
        let job = Job::from_json(
            r#"{
                "fan": {"construct": "product",
                        "args": [{"construct": "projective_space", "args": [1]},
                                 {"construct": "projective_space", "args": [1]}]},
                "beta": "mg[1,2]",
                "m": 1,
                "integrand": "ev(1,a_point)"
            }"#,
        )
        .unwrap();
        assert_eq!(job.fan.cone_count(), 4);

        let job = Job::from_json(
            r#"{
                "fan": {"construct": "blow_up",
                        "args": [{"construct": "projective_space", "args": [3]}, 1]},
                "beta": [0, 0, 0, 1, 1],
                "m": 1,
                "integrand": "ev(1,a_point)"
            }"#,
        )
        .unwrap();
        assert_eq!(job.fan.ray_count(), 5);
    }

    #[test]
    fn beta_outside_the_curve_lattice_rejected() {
        // On P1 x P1 the pairing vectors of curves satisfy two linear
        // relations; (1,0,0,0) violates them.
        let err = Job::from_json(
            r#"{
                "fan": {"construct": "product",
                        "args": [{"construct": "projective_space", "args": [1]},
                                 {"construct": "projective_space", "args": [1]}]},
                "beta": [1, 0, 0, 0],
                "m": 0,
                "integrand": "1"
            }"#,
        )
        .unwrap_err();
        assert_eq!(err.name(), "InvalidInput");
    }

    #[test]
    fn define_entries_chain_in_order() {
        let job = Job::from_json(
            r#"{
                "fan": {"construct": "projective_space", "args": [3]},
                "define": {"h": "D1", "l": "4*h"},
                "beta": "mg[1,2]",
                "m": 1,
                "integrand": "ev(1,l^3)*ev(1,h^2)"
            }"#,
        )
        .unwrap();
        let mg = cycles::moment_graph(&job.fan);
        let symbols = job.symbols(&job.fan, &mg).unwrap();
        let parsed = job.parse_integrand(&symbols).unwrap();
        assert_eq!(expr::codimension(&parsed, &job.beta).unwrap(), 5);
    }

    #[test]
    fn bad_jobs_error_cleanly() {
        assert!(Job::from_json("{").is_err());
        assert_eq!(
            Job::from_json(r#"{"fan": {"construct": "projective_space", "args": [2]}, "beta": [1,1,1], "m": 0, "integrand": "1", "typo": 1}"#)
                .unwrap_err()
                .name(),
            "InvalidInput"
        );
        // Non-smooth inline fan.
        assert_eq!(
            Job::from_json(
                r#"{"fan": {"rays": [[1,0],[0,1],[-1,-2]], "max_cones": [[1,2],[2,3],[1,3]]},
                    "beta": [1,1,1], "m": 0, "integrand": "1"}"#
            )
            .unwrap_err()
            .name(),
            "NonSmoothCone"
        );
    }
}
