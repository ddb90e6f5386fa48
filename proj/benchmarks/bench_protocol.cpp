#include <benchmark/benchmark.h>

#include <vector>

#include "lodstream/io.hpp"
#include "lodstream/protocol.hpp"

using namespace lodstream;

namespace {

void BM_EncodePoints(benchmark::State& state) {
  const auto points = make_synthetic(SyntheticKind::Uniform, static_cast<std::size_t>(state.range(0)), 5);
  const StreamMessage message = PointsAppendedMsg{42, points};
  std::vector<std::uint8_t> out;
  for (auto _ : state) {
    out.clear();
    encode_into(message, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(out.size()));
}

void BM_DecodePoints(benchmark::State& state) {
  const auto points = make_synthetic(SyntheticKind::Uniform, static_cast<std::size_t>(state.range(0)), 5);
  const auto bytes = encode(PointsAppendedMsg{42, points});
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode(bytes));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}

}  // namespace

BENCHMARK(BM_EncodePoints)->Arg(1000)->Arg(50'000);
BENCHMARK(BM_DecodePoints)->Arg(1000)->Arg(50'000);
