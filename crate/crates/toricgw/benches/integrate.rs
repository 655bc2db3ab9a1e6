//! Sequential vs parallel localization sums on two representative workloads:
//! conics in P^3 through three points and two lines (6k graphs, five
//! evaluation classes) and plane conics through five points (2k graphs,
//! point classes only).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use toricgw::cycles::{self, CurveClass, DivisorClass};
use toricgw::expr::{parse_expression, ParsedIntegrand, SymbolTable, SymbolValue};
use toricgw::fan::Fan;
use toricgw::integrate::{integrate_ab, IntegrateOptions};

struct Workload {
    name: &'static str,
    fan: Fan,
    beta: CurveClass,
    m: usize,
    integrand: ParsedIntegrand,
}

fn conics_in_p3() -> Workload {
    let fan = Fan::projective_space(3);
    let mut symbols = SymbolTable::new(&fan);
    symbols.define("h", SymbolValue::Divisor(DivisorClass::unit(4, 0)));
    let integrand = parse_expression(
        "ev(1,h^3)*ev(2,h^3)*ev(3,h^3)*ev(4,h^2)*ev(5,h^2)",
        5,
        &symbols,
    )
    .unwrap();
    let line = cycles::wall_curve_class(&fan, &fan.walls()[0]);
    let beta = CurveClass(line.0.iter().map(|x| 2 * x).collect());
    Workload {
        name: "p3_conics",
        fan,
        beta,
        m: 5,
        integrand,
    }
}

fn plane_conics() -> Workload {
    let fan = Fan::projective_space(2);
    let symbols = SymbolTable::new(&fan);
    let integrand = parse_expression(
        "ev(1,a_point)*ev(2,a_point)*ev(3,a_point)*ev(4,a_point)*ev(5,a_point)",
        5,
        &symbols,
    )
    .unwrap();
    let line = cycles::wall_curve_class(&fan, &fan.walls()[0]);
    let beta = CurveClass(line.0.iter().map(|x| 2 * x).collect());
    Workload {
        name: "p2_conics",
        fan,
        beta,
        m: 5,
        integrand,
    }
}

fn bench_integrate(c: &mut Criterion) {
    for workload in [plane_conics(), conics_in_p3()] {
        let mut group = c.benchmark_group(workload.name);
        group.sample_size(10);
        group.bench_function(BenchmarkId::new("sequential", 1), |b| {
            let opts = IntegrateOptions {
                workers: Some(1),
                ..Default::default()
            };
            b.iter(|| {
                integrate_ab(
                    &workload.fan,
                    &workload.beta,
                    workload.m,
                    &workload.integrand,
                    &opts,
                )
                .unwrap()
            })
        });
        #[cfg(feature = "parallel")]
        group.bench_function(BenchmarkId::new("parallel", 0), |b| {
            let opts = IntegrateOptions::default();
            b.iter(|| {
                integrate_ab(
                    &workload.fan,
                    &workload.beta,
                    workload.m,
                    &workload.integrand,
                    &opts,
                )
                .unwrap()
            })
        });
        group.finish();
    }
}

criterion_group!(benches, bench_integrate);
criterion_main!(benches);
