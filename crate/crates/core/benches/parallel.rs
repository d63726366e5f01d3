//! Sequential versus rayon execution on the two hot loops: batch gradients
//! through the classifier and Gaussian blur over a set of test images.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use texcal_core::augment::gaussian_blur;
use texcal_core::classifier::{batch_gradient, init_model, preprocess, ModelConfig};
use texcal_core::{Exec, ImageBuffer};

fn images(n: usize, size: usize) -> Vec<ImageBuffer> {
    (0..n)
        .map(|i| ImageBuffer::from_fn(size, size, |x, y| ((x * 7 + y * 13 + i * 31) % 256) as u8))
        .collect()
}

fn modes() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn bench_gradient(c: &mut Criterion) {
    let cfg = ModelConfig::default();
    let params = init_model(&cfg, 1).unwrap();
    let inputs: Vec<Vec<f64>> = images(16, 224).iter().map(|img| preprocess(img, &cfg)).collect();
    let labels: Vec<usize> = (0..inputs.len()).map(|i| i % cfg.num_classes).collect();
    let mut group = c.benchmark_group("batch_gradient_16");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| batch_gradient(&params, &cfg, &inputs, &labels, 1.0, exec))
        });
    }
    group.finish();
}

fn bench_blur(c: &mut Criterion) {
    let imgs = images(8, 224);
    let mut group = c.benchmark_group("blur_8x224");
    group.sample_size(10);
    for sigma in [4.0, 64.0] {
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, sigma), &sigma, |b, &s| {
                b.iter(|| exec.map(&imgs, |img| gaussian_blur(img, s).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_gradient, bench_blur);
criterion_main!(benches);
