#include <benchmark/benchmark.h>

#include "vmb/embedding.hpp"
#include "vmb/retrieval.hpp"
#include "vmb/synthetic.hpp"

namespace {

vmb::RetrievalIndex make_index(size_t n_tracks) {
  vmb::DemoWorldConfig cfg;
  cfg.n_tracks = n_tracks;
  cfg.with_text_store = false;
  vmb::DemoWorld world = vmb::build_demo_world(cfg);
  auto [manifest, report] =
      vmb::ingest_dataset(world.raw_records, world.vocabulary, world.store_refs());
  return vmb::build_index(manifest);
}

void BM_BroadRetrieve(benchmark::State& state) {
  vmb::RetrievalIndex index = make_index(static_cast<size_t>(state.range(0)));
  vmb::EmbeddingVector query =
      vmb::stub_embed("bench query", vmb::EmbeddingSpace::audio, 64, 7);
  for (auto _ : state) {
    auto hits = vmb::broad_retrieve(query, vmb::EmbeddingSpace::audio, index, 1);
    benchmark::DoNotOptimize(hits);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BroadRetrieve)->Arg(256)->Arg(1024)->Arg(4096);

void BM_TargetedRetrieve(benchmark::State& state) {
  vmb::RetrievalIndex index = make_index(static_cast<size_t>(state.range(0)));
  vmb::StubAttributeEmbedder embedder(64, 0);
  for (auto _ : state) {
    auto hit = vmb::targeted_retrieve("fast tempo", vmb::TagCategory::tempo, "fast", index,
                                      embedder);
    benchmark::DoNotOptimize(hit);
  }
}
BENCHMARK(BM_TargetedRetrieve)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
