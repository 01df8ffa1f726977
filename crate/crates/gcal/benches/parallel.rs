//! Compares the rayon-parallel forward batch against a sequential loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gcal::data::Dataset;
use gcal::graph::{build_graph, HeteroGraph};
use gcal::model::{forward_news, ModelConfig, ModelParams};
use gcal::parallel;
use gcal::synthetic::{generate, SyntheticConfig};
use gcal::tensor::{ParamSet, Tape};

struct Bundle {
    dataset: Dataset,
    graph: HeteroGraph,
    config: ModelConfig,
    set: ParamSet,
    model: ModelParams,
}

fn bundle(news_count: usize) -> Bundle {
    let dataset = generate(&SyntheticConfig {
        news_count,
        fake_count: news_count / 2,
        ..SyntheticConfig::default()
    });
    let graph = build_graph(&dataset);
    let config = ModelConfig {
        d: 32,
        d_word: 16,
        encoder_layers: 1,
        encoder_heads: 2,
        d_g: 32,
        k_a: 16,
        ..ModelConfig::default()
    };
    let (set, model) = ModelParams::init(&config, dataset.vocabulary.len(), 7);
    Bundle {
        dataset,
        graph,
        config,
        set,
        model,
    }
}

fn forward_batch(bundle: &Bundle) -> f64 {
    let items: Vec<_> = bundle.dataset.news.iter().collect();
    let losses = parallel::map_collect(items, |news| {
        let mut tape = Tape::new();
        let fwd = forward_news(
            &mut tape,
            &bundle.set,
            &bundle.model,
            &bundle.config,
            &bundle.dataset,
            &bundle.graph,
            7,
            news,
        )
        .expect("forward succeeds");
        tape.value(fwd.loss).get(0, 0)
    });
    losses.iter().sum()
}

fn forward_batch_sequential(bundle: &Bundle) -> f64 {
    let mut sum = 0.0;
    for news in &bundle.dataset.news {
        let mut tape = Tape::new();
        let fwd = forward_news(
            &mut tape,
            &bundle.set,
            &bundle.model,
            &bundle.config,
            &bundle.dataset,
            &bundle.graph,
            7,
            news,
        )
        .expect("forward succeeds");
        sum += tape.value(fwd.loss).get(0, 0);
    }
    sum
}

fn bench_forward_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_batch");
    group.sample_size(10);
    for news_count in [16, 64] {
        let bundle = bundle(news_count);
        group.bench_with_input(
            BenchmarkId::new("sequential", news_count),
            &bundle,
            |b, bundle| b.iter(|| forward_batch_sequential(bundle)),
        );
        group.bench_with_input(
            BenchmarkId::new("rayon_pool", news_count),
            &bundle,
            |b, bundle| b.iter(|| forward_batch(bundle)),
        );
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("pool builds");
        group.bench_with_input(
            BenchmarkId::new("rayon_one_thread", news_count),
            &bundle,
            |b, bundle| b.iter(|| single.install(|| forward_batch(bundle))),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_forward_batch);
criterion_main!(benches);
