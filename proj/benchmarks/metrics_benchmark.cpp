#include <benchmark/benchmark.h>

#include <random>

#include "evil/analysis.hpp"
#include "evil/text_metrics.hpp"

namespace {

using evil::TokenSequence;

std::string sentence(std::mt19937_64& gen, std::size_t len) {
  static const std::vector<std::string> vocab = {"the", "a", "man", "woman", "dog", "is", "are", "holding",
                                                 "running", "red", "blue", "umbrella", "because", "it", "rains",
                                                 "park", "in", "on", "street", "sitting", "ball", "two", "people"};
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += vocab[gen() % vocab.size()] + " ";
  return s;
}

struct Pairs {
  std::vector<TokenSequence> cands;
  std::vector<std::vector<TokenSequence>> refs;
};

const Pairs& pairs() {
  static const Pairs p = [] {
    Pairs out;
    std::mt19937_64 gen(1);
    for (int i = 0; i < 1000; ++i) {
      out.cands.push_back(evil::tokenize(sentence(gen, 8 + gen() % 10)));
      std::vector<TokenSequence> r;
      for (int k = 0; k < 3; ++k) r.push_back(evil::tokenize(sentence(gen, 8 + gen() % 10)));
      out.refs.push_back(std::move(r));
    }
    return out;
  }();
  return p;
}

void BM_Bleu4(benchmark::State& state) {
  const auto& p = pairs();
  for (auto _ : state) {
    double s = 0;
    for (std::size_t i = 0; i < p.cands.size(); ++i) s += evil::bleu_n(p.cands[i], p.refs[i], 4, evil::BleuSmoothing::kEpsilon);
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.cands.size()));
}
BENCHMARK(BM_Bleu4);

void BM_RougeL(benchmark::State& state) {
  const auto& p = pairs();
  for (auto _ : state) {
    double s = 0;
    for (std::size_t i = 0; i < p.cands.size(); ++i) s += evil::rouge_l(p.cands[i], p.refs[i]).f;
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.cands.size()));
}
BENCHMARK(BM_RougeL);

void BM_Meteor(benchmark::State& state) {
  const auto& p = pairs();
  for (auto _ : state) {
    double s = 0;
    for (std::size_t i = 0; i < p.cands.size(); ++i) s += evil::meteor(p.cands[i], p.refs[i]);
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.cands.size()));
}
BENCHMARK(BM_Meteor);

void BM_CiderD(benchmark::State& state) {
  const auto& p = pairs();
  evil::ReferenceCorpus corpus;
  for (std::size_t i = 0; i < p.refs.size(); ++i) corpus["i" + std::to_string(i)] = p.refs[i];
  for (auto _ : state) {
    const evil::CiderD cider(corpus);
    double s = 0;
    for (std::size_t i = 0; i < p.cands.size(); ++i) s += cider.score(p.cands[i], p.refs[i]);
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.cands.size()));
}
BENCHMARK(BM_CiderD);

void BM_Spearman(benchmark::State& state) {
  std::mt19937_64 gen(2);
  std::vector<double> x(static_cast<std::size_t>(state.range(0)));
  std::vector<double> y(x.size());
  for (auto& v : x) v = static_cast<double>(gen() % 50);
  for (auto& v : y) v = static_cast<double>(gen() % 50);
  for (auto _ : state) benchmark::DoNotOptimize(evil::spearman(x, y));
}
BENCHMARK(BM_Spearman)->Arg(300)->Arg(3000);

}  // namespace

BENCHMARK_MAIN();
