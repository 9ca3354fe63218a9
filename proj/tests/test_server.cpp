#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <memory>
#include <numeric>
#include <random>

#include <stdlib.h>

#include "dapperfl/errors.hpp"
#include "dapperfl/local_trainer.hpp"
#include "dapperfl/mfp.hpp"
#include "dapperfl/parallel.hpp"
#include "dapperfl/seeding.hpp"
#include "dapperfl/server.hpp"
#include "oracles.hpp"

using namespace dapperfl;

namespace {

DomainDataset toy_data(std::size_t n, int domain, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DomainDataset d;
  d.domain_id = domain;
  d.features = oracle::random_tensor({n, 4}, rng);
  d.labels = oracle::random_labels(n, 3, rng);
  d.source_index.resize(n);
  std::iota(d.source_index.begin(), d.source_index.end(), 0);
  return d;
}

Network toy_net(std::uint64_t seed) {
  const std::size_t hidden[] = {10};
  return init_network(dense_chain(4, hidden, 3), seed);
}

std::vector<ClientProfile> make_clients(std::size_t n, std::uint64_t seed) {
  std::vector<ClientProfile> out;
  for (std::size_t i = 0; i < n; ++i) {
    ClientProfile c;
    c.id = static_cast<int>(i);
    c.level = static_cast<int>(i % 5) + 1;
    c.dataset = std::make_shared<const DomainDataset>(toy_data(12 + 4 * i, static_cast<int>(i % 2), seed * 100 + i));
    c.sample_count = c.dataset->size();
    c.seed = derive_seed(seed, {i});
    out.push_back(std::move(c));
  }
  assign_ratios(out);
  return out;
}

RoundConfig small_round() {
  RoundConfig rc;
  rc.hp.batch_size = 5;
  rc.hp.local_epochs = 3;
  rc.hp.lr = 0.05;
  rc.record_wall_time = false;
  return rc;
}

std::vector<DomainDataset> tests_for(std::uint64_t seed) { return {toy_data(20, 0, seed), toy_data(20, 1, seed + 1)}; }

}  // namespace

TEST_CASE("capability levels map to pruning ratios") {
  std::vector<ClientProfile> cs(5);
  for (int i = 0; i < 5; ++i) cs[i].level = i + 1;
  assign_ratios(cs);
  CHECK(cs[0].rho == 0.0);
  CHECK(cs[1].rho == 0.2);
  CHECK(cs[2].rho == 0.4);
  CHECK(cs[3].rho == 0.6);
  CHECK(cs[4].rho == 0.8);
  cs[0].level = 6;
  CHECK_THROWS_AS(assign_ratios(cs), ConfigError);
}

TEST_CASE("recover_all edge cases and brute force") {
  const Network g = toy_net(1);
  Network local = toy_net(2);
  ClientUpdate unpruned{local, all_ones_mask(local), {}, 0.0};
  const ChannelMask m = build_mask(g, channel_l1_scores(g), 0.6);
  ClientUpdate untrained{apply_mask(g, m), m, {}, 0.0};
  ClientUpdate mixed{apply_mask(local, m), m, {}, 0.0};
  const std::vector<ClientUpdate> ups{unpruned, untrained, mixed};
  const auto r = recover_all(ups, g);
  CHECK(r[0] == local);
  CHECK(r[1] == g);
  const auto fl = oracle::flatten(mixed.local), fg = oracle::flatten(g), fr = oracle::flatten(r[2]);
  std::vector<std::uint8_t> bits;
  for (const auto& lm : m.params) {
    bits.insert(bits.end(), lm.weight.begin(), lm.weight.end());
    bits.insert(bits.end(), lm.bias.begin(), lm.bias.end());
  }
  for (std::size_t i = 0; i < fr.size(); ++i) CHECK(fr[i] == (bits[i] ? fl[i] : fg[i]));
  const std::vector<ClientUpdate> wrong{ClientUpdate{init_network(dense_chain(4, {}, 3), 1), {}, {}, 0.0}};
  CHECK_THROWS(recover_all(wrong, g));
}

TEST_CASE("aggregate small cases") {
  const std::vector<LayerSpec> specs{{LayerKind::dense, 1, 1, Activation::none, false, 1}};
  Network a = init_network(specs, 1), b = init_network(specs, 1);
  a.params[0].weight.data = {1.0};
  b.params[0].weight.data = {3.0};
  const std::vector<Network> two{a, b};
  const std::vector<std::size_t> counts{1, 3};
  CHECK(aggregate(two, counts).params[0].weight.data[0] == 2.5);
  const std::vector<Network> one{a};
  CHECK(aggregate(one, std::vector<std::size_t>{7}) == a);
  CHECK_THROWS_AS(aggregate(std::vector<Network>{}, std::vector<std::size_t>{}), InputError);
  CHECK_THROWS_AS(aggregate(two, std::vector<std::size_t>{1, 0}), InputError);
}

TEST_CASE("aggregate matches a weighted-sum oracle and stays in the hull") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Network> models;
    std::vector<std::vector<double>> flat;
    std::vector<std::size_t> counts;
    for (int c = 0; c < 5; ++c) {
      Network n = toy_net(1);
      oracle::randomize(n, rng, 2.0);
      flat.push_back(oracle::flatten(n));
      models.push_back(std::move(n));
      counts.push_back(1 + rng() % 500);
    }
    const auto got = oracle::flatten(aggregate(models, counts));
    const auto want = oracle::weighted_average(flat, counts);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i] - want[i]) <= 1e-12);
      double lo = flat[0][i], hi = flat[0][i];
      for (const auto& f : flat) {
        lo = std::min(lo, f[i]);
        hi = std::max(hi, f[i]);
      }
      CHECK(got[i] >= lo);
      CHECK(got[i] <= hi);
    }
    double wsum = 0.0;
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (auto n : counts) wsum += static_cast<double>(n) / total;
    CHECK(std::abs(wsum - 1.0) <= 1e-15);
  }
}

TEST_CASE("zero learning rate leaves the global model unchanged") {
  const Network g = toy_net(3);
  auto clients = make_clients(4, 3);
  RoundConfig rc = small_round();
  rc.hp.lr = 0.0;
  const auto tests = tests_for(3);
  const RoundResult r = run_round(g, clients, 1, rc, tests);
  CHECK(r.global_model == g);
  CHECK(r.record.footprints.size() == 4);
}

TEST_CASE("round matches a scripted sequential replay") {
  const Network w0 = toy_net(4);
  const auto clients = make_clients(2, 4);
  const RoundConfig rc = small_round();
  const auto tests = tests_for(4);

  Network w = w0;
  for (int t = 1; t <= 2; ++t) {
    std::vector<Network> recovered;
    std::vector<std::size_t> counts;
    for (const auto& c : clients) {
      const auto round = static_cast<std::uint64_t>(t);
      const PruneResult pr = model_fusion_pruning(w, *c.dataset, c.rho, rc.hp.fusion, t, rc.hp,
                                                  derive_seed(c.seed, {round, phase_id(Phase::finetune)}));
      const Network trained =
          train_local(pr.pruned, pr.mask, *c.dataset, rc.hp, derive_seed(c.seed, {round, phase_id(Phase::local)}));
      Network rec = trained;
      for (std::size_t k = 0; k < rec.params.size(); ++k) {
        for (std::size_t i = 0; i < rec.params[k].weight.size(); ++i) {
          if (!pr.mask.params[k].weight[i]) rec.params[k].weight.data[i] = w.params[k].weight.data[i];
        }
        for (std::size_t i = 0; i < rec.params[k].bias.size(); ++i) {
          if (!pr.mask.params[k].bias[i]) rec.params[k].bias.data[i] = w.params[k].bias.data[i];
        }
      }
      recovered.push_back(std::move(rec));
      counts.push_back(c.sample_count);
    }
    w = aggregate(recovered, counts);
  }

  RoundConfig two = rc;
  two.hp.rounds = 2;
  const TrainingResult tr = run_training(w0, clients, two, tests);
  CHECK(tr.final_model == w);
  CHECK(tr.records.size() == 2);
  CHECK(tr.records[1].alpha == doctest::Approx(0.72).epsilon(1e-15));
}

TEST_CASE("sequential and concurrent rounds are bit-identical") {
  const Network g = toy_net(5);
  auto clients = make_clients(6, 5);
  std::swap(clients[1], clients[4]);  // input order must not matter either
  const auto tests = tests_for(5);
  RoundConfig seq = small_round();
  seq.hp.rounds = 3;
  RoundConfig par = seq;
  par.threads = 4;
  const TrainingResult a = run_training(g, clients, seq, tests);
  const TrainingResult b = run_training(g, clients, par, tests);
  CHECK(a.final_model == b.final_model);
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    CHECK(a.records[t].footprints == b.records[t].footprints);
    CHECK(a.records[t].domain_accuracy == b.records[t].domain_accuracy);
  }
}

// Plain FedAvg: every client trains E epochs of cross-entropy from the global
// model (one epoch on the fine-tune stream, the rest on the local stream), the
// server averages by sample count.
TEST_CASE("homogeneous settings degenerate to FedAvg") {
  const Network w0 = toy_net(6);
  auto clients = make_clients(3, 6);
  for (auto& c : clients) c.rho = 0.0;
  RoundConfig rc = small_round();
  rc.hp.gamma = 0.0;
  rc.hp.fusion.alpha0 = rc.hp.fusion.alpha_min = 1.0;
  rc.hp.rounds = 3;
  const auto tests = tests_for(6);

  Network w = w0;
  for (int t = 1; t <= rc.hp.rounds; ++t) {
    const auto round = static_cast<std::uint64_t>(t);
    std::vector<Network> locals;
    std::vector<std::size_t> counts;
    for (const auto& c : clients) {
      // The fine-tune epoch is discarded when alpha is 1.
      const Network trained = train_epochs(w, *c.dataset, rc.hp, rc.hp.local_epochs - 1, 0.0, nullptr,
                                           derive_seed(c.seed, {round, phase_id(Phase::local)}));
      locals.push_back(trained);
      counts.push_back(c.sample_count);
    }
    Network next = w;
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (std::size_t k = 0; k < next.params.size(); ++k) {
      auto avg = [&](std::vector<double>& dst, auto member) {
        for (std::size_t i = 0; i < dst.size(); ++i) {
          double acc = 0.0;
          for (std::size_t c = 0; c < locals.size(); ++c) {
            acc += (static_cast<double>(counts[c]) / total) * (locals[c].params[k].*member).data[i];
          }
          dst[i] = acc;
        }
      };
      avg(next.params[k].weight.data, &LayerParams::weight);
      avg(next.params[k].bias.data, &LayerParams::bias);
    }
    w = next;
  }
  CHECK(run_training(w0, clients, rc, tests).final_model == w);
}

TEST_CASE("training composition") {
  const Network g = toy_net(7);
  const auto clients = make_clients(3, 7);
  const auto tests = tests_for(7);
  RoundConfig rc = small_round();
  rc.hp.rounds = 0;
  const TrainingResult none = run_training(g, clients, rc, tests);
  CHECK(none.records.empty());
  CHECK(none.final_model == g);

  rc.hp.rounds = 3;
  const TrainingResult three = run_training(g, clients, rc, tests);
  Network w = g;
  for (int t = 1; t <= 3; ++t) {
    RoundResult r = run_round(w, clients, t, rc, tests);
    CHECK(r.record.domain_accuracy == three.records[t - 1].domain_accuracy);
    w = r.global_model;
  }
  CHECK(three.final_model == w);
  const auto& rec = three.records.back();
  CHECK(rec.global_accuracy == (rec.domain_accuracy[0] + rec.domain_accuracy[1]) / 2.0);
  CHECK_THROWS_AS(run_round(g, clients, 0, rc, tests), InputError);
}

TEST_CASE("each client reports its own footprint") {
  const Network g = toy_net(8);
  const auto clients = make_clients(5, 8);
  const auto tests = tests_for(8);
  const RoundResult r = run_round(g, clients, 1, small_round(), tests);
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t kept = 10 - dropped_count(10, clients[i].rho);
    CHECK(r.record.footprints[i].param_count == 4 * kept + kept + kept * 3 + 3);
  }
}

TEST_CASE("thread count honours the environment cap") {
  ::setenv("DAPPERFL_THREADS", "2", 1);
  CHECK(resolve_thread_count(8) == 2);
  CHECK(resolve_thread_count(1) == 1);
  CHECK(resolve_thread_count(0) == 2);
  ::setenv("DAPPERFL_THREADS", "junk", 1);
  CHECK(resolve_thread_count(3) == 3);
  ::unsetenv("DAPPERFL_THREADS");
  CHECK(resolve_thread_count(0) >= 1);
}
