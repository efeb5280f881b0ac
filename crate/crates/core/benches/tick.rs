// Per-tick cost of the fleet simulator with the rayon pool against the
// inline loop. Build with `--no-default-features` to compile rayon out.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dcmrta::allocation::Mpdm;
use dcmrta::exec::PARALLEL_AVAILABLE;
use dcmrta::sim::{NavMode, SimConfig, Simulation};
use dcmrta::world::LayoutPreset;
use std::hint::black_box;
use std::sync::Arc;

/// A simulation warmed up for 40 ticks so robots are spread over the floor.
fn warmed(n_robots: usize, nav_mode: NavMode, parallel: bool) -> Simulation {
    let layout = match nav_mode {
        NavMode::Direct => LayoutPreset::Open.generate(300, 300, 1),
        _ => LayoutPreset::C.generate(128, 128, 1),
    };
    let mut c = SimConfig::new(Arc::new(layout.unwrap()));
    c.n_robots = n_robots;
    c.nav_mode = nav_mode;
    c.total_tasks = usize::MAX;
    c.parallel = parallel;
    c.seed = 7;
    let mut sim = Simulation::new(c).unwrap();
    sim.start(&mut Mpdm).unwrap();
    for _ in 0..40 {
        sim.tick(&mut Mpdm).unwrap();
    }
    sim
}

fn tick(c: &mut Criterion) {
    let mut modes = vec![("sequential", false)];
    if PARALLEL_AVAILABLE {
        modes.push(("parallel", true));
    }
    for (nav, robots) in [(NavMode::AstarOrca, 100), (NavMode::AstarOrca, 400), (NavMode::Direct, 1000)] {
        let mut group = c.benchmark_group(format!("tick/{nav}"));
        group.sample_size(20);
        for &(name, parallel) in &modes {
            group.bench_with_input(BenchmarkId::new(name, robots), &robots, |b, &m| {
                b.iter_batched_ref(
                    || warmed(m, nav, parallel),
                    |sim| black_box(sim.tick(&mut Mpdm).unwrap()),
                    criterion::BatchSize::LargeInput,
                )
            });
        }
        group.finish();
    }
}

criterion_group!(benches, tick);
criterion_main!(benches);
