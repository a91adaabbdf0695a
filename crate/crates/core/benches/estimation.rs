use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fisheye_me::blockmatch::{estimate_projected_with, estimate_tme_with, Method, SearchConfig};
use fisheye_me::frames::upscale_with;
use fisheye_me::geometry::{CameraGeometry, Lens};
use fisheye_me::synth::{generate_with, required_source_size, texture, SynthSpec};
use fisheye_me::{Execution, Frame};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pair(size: usize) -> (Lens, Frame, Frame) {
    let lens = Lens::equisolid(CameraGeometry::reference_rig(size, size).with_fov(170.0)).unwrap();
    let n = required_source_size(&lens, (3, 1), 2).unwrap();
    let spec = SynthSpec {
        lens: lens.clone(),
        source: texture(n, n, 3),
        shift: (3, 1),
        frame_count: 2,
    };
    let mut frames = generate_with(&spec, Execution::Parallel).unwrap().frames;
    let current = frames.pop().unwrap();
    (lens, frames.pop().unwrap(), current)
}

fn upscale(c: &mut Criterion) {
    let (_, reference, _) = pair(256);
    let mut group = c.benchmark_group("upscale_256");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| upscale_with(&reference, 8, exec)));
    }
    group.finish();
}

fn tme(c: &mut Criterion) {
    let (_, reference, current) = pair(256);
    let cfg = SearchConfig::new(16, 8, Method::Tme);
    let mut group = c.benchmark_group("tme_256_r8");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_tme_with(&current, &reference, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn eme(c: &mut Criterion) {
    let (lens, reference, current) = pair(128);
    let ref_up = upscale_with(&reference, 8, Execution::Parallel);
    let cfg = SearchConfig::new(16, 4, Method::EmePlus);
    let mut group = c.benchmark_group("eme_128_r4");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_projected_with(&current, &ref_up, &cfg, &lens, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, upscale, tme, eme);
criterion_main!(benches);
