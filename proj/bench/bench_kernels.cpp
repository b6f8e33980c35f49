// Serial reference vs OpenMP paths of the hot kernels.
#include <benchmark/benchmark.h>

#include "riskexplain/forest.hpp"
#include "riskexplain/shap.hpp"
#include "riskexplain/synthetic.hpp"

using namespace riskexplain;

namespace {

const Dataset& cohort() {
  static const Dataset ds = [] {
    auto schema = std::make_shared<const CohortSchema>(load_schema(default_schema_path()));
    return generate_synthetic_cohort(schema, load_generator_config(default_generator_path()), 1, 5000)
        .dataset;
  }();
  return ds;
}

const RandomForest& model() {
  static const RandomForest m = train_forest(cohort(), {50, 10, 5, 0.0}, 1);
  return m;
}

Execution exec_of(const benchmark::State& state) {
  return state.range(0) ? Execution::kParallel : Execution::kSerial;
}

void BM_Train(benchmark::State& state) {
  cohort();
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_forest(cohort(), {20, 10, 5, 0.0}, 3, exec_of(state)));
  }
}

void BM_PredictBatch(benchmark::State& state) {
  model();
  for (auto _ : state) benchmark::DoNotOptimize(model().predict_batch(cohort().records(), exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cohort().size()));
}

void BM_ShapBatch(benchmark::State& state) {
  model();
  const std::span<const PatientRecord> records(cohort().records().data(), 200);
  for (auto _ : state) benchmark::DoNotOptimize(shap_batch(model(), records, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * 200);
}

}  // namespace

BENCHMARK(BM_Train)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ShapBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
