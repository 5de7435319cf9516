#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "explore/cmc/agent.hpp"
#include "explore/cmc/env.hpp"
#include "explore/diff/gradient_check.hpp"
#include "explore/io/pgm.hpp"
#include "mc_oracles.hpp"

using namespace explore;
using namespace explore::cmc;
using doctest::Approx;

namespace {

// Dirichlet entropy through Boost special functions, independent of num::.
double oracle_entropy(const std::vector<double>& a) {
  double a0 = std::accumulate(a.begin(), a.end(), 0.0);
  double lb = -boost::math::lgamma(a0);
  for (double x : a) lb += boost::math::lgamma(x);
  double h = lb + (a0 - static_cast<double>(a.size())) * boost::math::digamma(a0);
  for (double x : a) h -= (x - 1.0) * boost::math::digamma(x);
  return h;
}

std::vector<double> plus_one(std::span<const double> h) {
  std::vector<double> a(h.begin(), h.end());
  for (double& v : a) v += 1.0;
  return a;
}

// Direct transcription of the BAS score with exact posteriors Dir(h + 1).
double oracle_bas(const HistoryTensor& h, std::size_t s, std::size_t a, bool efu) {
  const std::size_t n = h.n_states();
  auto counts = h.row(s, a);
  auto alpha = plus_one(counts);
  const double a0 = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  double score = oracle_entropy(alpha);
  for (std::size_t j = 0; j < n; ++j) {
    auto next = alpha;
    next[j] += 1.0;
    score -= alpha[j] / a0 * oracle_entropy(next);
    if (efu) {
      double u = 0.0;
      for (std::size_t b = 0; b < h.n_actions(); ++b) u += oracle_entropy(plus_one(h.row(j, b)));
      score += alpha[j] / a0 * u;
    }
  }
  return score;
}

}  // namespace

TEST_CASE("dense world construction") {
  num::Rng rng(0);
  auto k = make_dense_world(10, 4, rng);
  CHECK(k.n_states() == 10);
  CHECK(k.n_actions() == 4);
  for (std::size_t s = 0; s < 10; ++s) {
    for (std::size_t a = 0; a < 4; ++a) {
      auto r = k.row(s, a);
      CHECK(std::accumulate(r.begin(), r.end(), 0.0) == Approx(1.0).epsilon(1e-12));
    }
  }
  num::Rng rng2(0);
  CHECK(make_dense_world(10, 4, rng2) == k);

  // Dirichlet-mean law over many kernels
  const int draws = 10000;
  num::Rng r3(1);
  std::vector<testing::Accumulator> acc(4);
  for (int i = 0; i < draws; ++i) {
    auto kk = make_dense_world(4, 1, r3);
    for (std::size_t j = 0; j < 4; ++j) acc[j].add(kk.row(0, 0)[j]);
  }
  for (auto& a : acc) {
    auto e = a.result();
    CHECK(std::abs(e.mean - 0.25) <= 3 * e.se);
  }
}

TEST_CASE("kernel validation") {
  CHECK_THROWS(TransitionKernel(2, 1, {0.5, 0.4, 0.5, 0.5}));
  CHECK_THROWS(TransitionKernel(2, 1, {0.5, 0.5}));
  CHECK_NOTHROW(TransitionKernel(2, 1, {0.5, 0.5, 1.0, 0.0}));
}

TEST_CASE("maze layout and kernel") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    num::Rng rng(seed);
    auto spec = generate_maze_layout(6, rng);
    CHECK(spec.connected());
    auto k = make_maze(spec, rng);
    for (std::size_t s = 0; s < 36; ++s) {
      for (std::size_t a = 0; a < 4; ++a) {
        auto r = k.row(s, a);
        std::size_t support = 0;
        for (std::size_t t = 0; t < 36; ++t) {
          if (r[t] > 0.0) {
            ++support;
            bool adjacent = t == s;
            for (Direction d : {up, down, right, left}) adjacent = adjacent || spec.neighbor(s, d) == t;
            CHECK(adjacent);
          }
        }
        CHECK(support <= 5);
      }
    }
  }
  MazeSpec open = MazeSpec::open(3);
  // corner (0, 0): up and left are off-grid
  CHECK(open.neighbor(0, up) == 0);
  CHECK(open.neighbor(0, left) == 0);
  CHECK(open.neighbor(0, right) == 1);
  CHECK(open.neighbor(0, down) == 3);
  num::Rng rng(3);
  auto k = make_maze(open, rng);
  auto r = k.row(0, right);
  for (std::size_t t = 0; t < 9; ++t) {
    if (t != 0 && t != 1 && t != 3) CHECK(r[t] == 0.0);
  }
  // generating distribution: intended neighbor has the largest concentration
  const double bias = open.bias_concentration, base = open.base_concentration;
  CHECK(bias > base);

  // a fully walled grid is rejected
  CHECK_THROWS(make_maze(MazeSpec::closed(3), rng));
  num::Rng a(9), b(9);
  auto la = generate_maze_layout(6, a), lb = generate_maze_layout(6, b);
  CHECK(la.wall_right == lb.wall_right);
  CHECK(la.wall_down == lb.wall_down);
}

TEST_CASE("maze intended direction dominates on average") {
  MazeSpec open = MazeSpec::open(3);
  num::Rng rng(5);
  std::vector<double> mean(9, 0.0);
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    auto k = make_maze(open, rng);
    auto r = k.row(4, right);  // centre cell, all four neighbors open
    for (std::size_t t = 0; t < 9; ++t) mean[t] += r[t] / draws;
  }
  // expected: 1.0 / 2.0 for the right neighbor, 0.25 / 2.0 for the others
  CHECK(mean[5] == Approx(0.5).epsilon(0.05));
  for (std::size_t t : {1u, 3u, 4u, 7u}) CHECK(mean[t] < mean[5]);
}

TEST_CASE("step follows the kernel row") {
  TransitionKernel det(3, 1, {0, 1, 0, 0, 0, 1, 1, 0, 0});
  num::Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(step(det, 0, 0, rng) == 1);
  CHECK_THROWS(step(det, 3, 0, rng));
  CHECK_THROWS(step(det, 0, 1, rng));

  TransitionKernel half(2, 1, {0.5, 0.5, 0.5, 0.5});
  const int n = 100000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += static_cast<int>(step(half, 0, 0, rng));
  CHECK(std::abs(ones / double(n) - 0.5) <= 3 * std::sqrt(0.25 / n));

  // chi-square goodness of fit on random rows
  num::Rng krng(2);
  auto k = make_dense_world(6, 20, krng);
  for (std::size_t a = 0; a < 20; ++a) {
    std::vector<double> counts(6, 0.0);
    for (int i = 0; i < n; ++i) counts[step(k, 0, a, rng)] += 1.0;
    double chi2 = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      const double e = n * k.row(0, a)[j];
      chi2 += (counts[j] - e) * (counts[j] - e) / e;
    }
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(5), chi2));
    CHECK_MESSAGE(p > 0.001, "row " << a << " chi2 " << chi2);
  }

  num::Rng r1(4), r2(4);
  std::vector<std::size_t> t1, t2;
  std::size_t s1 = 0, s2 = 0;
  for (int i = 0; i < 50; ++i) {
    t1.push_back(s1 = step(k, s1, i % 20, r1));
    t2.push_back(s2 = step(k, s2, i % 20, r2));
  }
  CHECK(t1 == t2);
}

TEST_CASE("missing information") {
  TransitionKernel p(2, 1, {0.5, 0.5, 0.5, 0.5});
  TransitionKernel q(2, 1, {0.75, 0.25, 0.5, 0.5});
  CHECK(missing_information(p, p) == 0.0);
  CHECK(missing_information(p, q) == Approx(0.1438410362).epsilon(1e-10));
  TransitionKernel z(2, 1, {1.0, 0.0, 0.5, 0.5});
  CHECK(std::isinf(missing_information(p, z)));
  CHECK(missing_information(z, p) == Approx(std::log(2.0)));

  num::Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    auto a = make_dense_world(5, 2, rng);
    auto b = make_dense_world(5, 2, rng);
    const double d = missing_information(a, b);
    CHECK(d > 1e-12);
    // mixing the learned kernel toward the truth reduces I_M
    std::vector<double> mix(a.probs().size());
    for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = 0.5 * a.probs()[j] + 0.5 * b.probs()[j];
    TransitionKernel m(5, 2, mix);
    CHECK(missing_information(a, m) < d);
  }
}

TEST_CASE("coverage and visitation map") {
  HistoryTensor h(2, 2);
  CHECK(coverage(h) == 0.0);
  h.record(0, 0, 1);
  CHECK(coverage(h) == 0.25);
  h.record(0, 1, 1);
  h.record(1, 0, 0);
  h.record(1, 1, 0);
  CHECK(coverage(h) == 1.0);
  CHECK(h.total() == 4);

  std::vector<std::size_t> traj{0, 0, 1, 0};
  auto m = visitation_map(traj, 2);
  CHECK(m == std::vector<double>{3, 1, 0, 0});
  auto img = io::to_gray_max_normalized(m, 2, 2);
  CHECK(img.pixels == std::vector<std::uint8_t>{255, 85, 0, 0});
  auto empty = visitation_map(std::vector<std::size_t>{}, 2);
  CHECK(io::to_gray_max_normalized(empty, 2, 2).pixels == std::vector<std::uint8_t>(4, 0));
}

TEST_CASE("history counts are order invariant") {
  std::vector<std::array<std::size_t, 3>> obs;
  num::Rng rng(6);
  for (int i = 0; i < 200; ++i) obs.push_back({rng.index(4), rng.index(3), rng.index(4)});
  HistoryTensor a(4, 3), b(4, 3);
  for (auto& o : obs) a.record(o[0], o[1], o[2]);
  std::reverse(obs.begin(), obs.end());
  std::swap(obs[3], obs[100]);
  for (auto& o : obs) b.record(o[0], o[1], o[2]);
  CHECK(a == b);
}

TEST_CASE("kernel json round trip") {
  num::Rng rng(7);
  auto k = make_dense_world(7, 3, rng);
  CHECK(kernel_from_json(kernel_to_json(k)) == k);
  const auto path = std::filesystem::temp_directory_path() / "explore_kernel_test.json";
  save_kernel(path, k);
  CHECK(load_kernel(path) == k);
  std::filesystem::remove(path);
  CHECK_THROWS(kernel_from_json("{\"n_states\":2}"));
}

TEST_CASE("cmc elbo examples") {
  num::Rng rng(1);
  using num::DirichletParams;
  CHECK(std::abs(cmc_elbo(DirichletParams({1, 1}), std::vector<double>{0, 0}, 1.0, ElboMode::analytic, rng)) < 1e-15);
  CHECK(cmc_elbo(DirichletParams({2, 1}), std::vector<double>{1, 0}, 0.0, ElboMode::analytic, rng) ==
        Approx(0.5).epsilon(1e-12));
  CHECK(cmc_elbo(DirichletParams({2, 1}), std::vector<double>{0, 0}, 1.0, ElboMode::analytic, rng) ==
        Approx(0.1931471806).epsilon(1e-10));
  CHECK_THROWS(cmc_elbo(DirichletParams({2, 1}), std::vector<double>{-1, 0}, 1.0, ElboMode::analytic, rng));
  CHECK_THROWS(cmc_elbo(DirichletParams({2, 1}), std::vector<double>{1, 0, 0}, 1.0, ElboMode::analytic, rng));

  // taped and plain values agree
  for (int i = 0; i < 20; ++i) {
    std::vector<double> a(4), h(4);
    for (double& v : a) v = rng.uniform(0.2, 20);
    for (double& v : h) v = static_cast<double>(rng.index(10));
    const double beta = rng.uniform(0, 2);
    diff::Tape t;
    const double taped = cmc_elbo(t, t.constant(a), h, beta, ElboMode::analytic, rng).scalar();
    CHECK(taped == Approx(cmc_elbo(DirichletParams(a), h, beta, ElboMode::analytic, rng)).epsilon(1e-12));
  }
}

TEST_CASE("analytic and mc elbo agree in expectation") {
  num::Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rng.index(5);
    std::vector<double> a(n), h(n);
    for (double& v : a) v = rng.uniform(0.5, 10);
    for (double& v : h) v = static_cast<double>(rng.index(6));
    num::DirichletParams alpha(a);
    testing::Accumulator acc;
    for (int k = 0; k < 10000; ++k) acc.add(cmc_elbo(alpha, h, 1.0, ElboMode::mc, rng));
    auto e = acc.result();
    CHECK(std::abs(e.mean - cmc_elbo(alpha, h, 1.0, ElboMode::analytic, rng)) <= 3 * e.se);
  }
}

TEST_CASE("perception output, gradient and descent") {
  num::Rng rng(3);
  CmcPerception p(5, 4, {}, rng);
  // positivity under fuzzed inputs
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> h(5);
    for (double& v : h) v = static_cast<double>(rng.index(1000));
    auto a = p.posterior(rng.index(5), rng.index(4), h);
    for (double v : a.alpha()) CHECK(v >= diff::DenseNet::kOutputFloor);
  }
  std::vector<double> h{3, 0, 1, 0, 2};
  CHECK(p.posterior(1, 2, h) == p.posterior(1, 2, h));

  auto params = p.parameters();
  for (int point = 0; point < 10; ++point) {
    std::vector<double> hh(5);
    for (double& v : hh) v = static_cast<double>(rng.index(8));
    const std::size_t s = rng.index(5), a = rng.index(4);
    num::Rng dummy(0);
    auto rep = diff::gradient_check(
        [&](diff::Tape& t) { return cmc_elbo(t, p.alpha(t, s, a, hh), hh, 0.7, ElboMode::analytic, dummy); }, params,
        {.h = 1e-5, .max_coords = 60, .seed = static_cast<std::uint64_t>(point)});
    CHECK_MESSAGE(rep.pass, "rel " << rep.max_rel_error);
  }

  // descent: one small step lowers the loss on the same input
  int decreased = 0;
  for (int start = 0; start < 100; ++start) {
    num::Rng init(100 + start);
    PerceptionConfig cfg;
    cfg.optimizer.lr = 1e-4;
    CmcPerception q(5, 4, cfg, init);
    std::vector<double> hh(5);
    for (double& v : hh) v = static_cast<double>(init.index(8));
    const std::size_t s = init.index(5), a = init.index(4);
    num::Rng r(0);
    const double before = q.train_step(s, a, hh, r);
    const double after = cmc_elbo(q.posterior(s, a, hh), hh, 1.0, ElboMode::analytic, r);
    decreased += after < before ? 1 : 0;
  }
  CHECK(decreased >= 95);
}

TEST_CASE("prior minimum gives zero gradient") {
  num::Rng rng(4);
  CmcPerception p(2, 1, {}, rng);
  auto& net = p.net();
  const std::size_t last = net.layer_count() - 1;
  std::fill(net.weight(last).value.begin(), net.weight(last).value.end(), 0.0);
  // softplus(b) + floor = 1
  const double b = std::log(std::expm1(1.0 - diff::DenseNet::kOutputFloor));
  std::fill(net.bias(last).value.begin(), net.bias(last).value.end(), b);
  auto a = p.posterior(0, 0, std::vector<double>{0, 0});
  CHECK(a[0] == Approx(1.0).epsilon(1e-12));
  auto params = p.parameters();
  params.zero_grad();
  diff::Tape t;
  num::Rng dummy(0);
  std::vector<double> h{0, 0};
  t.backward(cmc_elbo(t, p.alpha(t, 0, 0, h), h, 1.0, ElboMode::analytic, dummy));
  double mx = 0.0;
  for (double g : params.flatten_grads()) mx = std::max(mx, std::abs(g));
  CHECK(mx < 1e-9);
}

TEST_CASE("bas score with exact posteriors") {
  ConjugatePosterior exact(2, 4);
  HistoryTensor empty(2, 4);
  auto sc = bas_score(exact, 0, empty, {.efu = false});
  for (double v : sc) CHECK(v == Approx(0.1931471806).epsilon(1e-10));
  CHECK(argmax_lowest(sc) == 0);

  // 3-state world, EFU on: compare with direct enumeration
  num::Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    HistoryTensor h(3, 2);
    const int n = static_cast<int>(rng.index(15));
    for (int i = 0; i < n; ++i) h.record(rng.index(3), rng.index(2), rng.index(3));
    ConjugatePosterior model(3, 2);
    const std::size_t s = rng.index(3);
    for (bool efu : {false, true}) {
      auto got = bas_score(model, s, h, {.efu = efu});
      for (std::size_t a = 0; a < 2; ++a) CHECK(got[a] == Approx(oracle_bas(h, s, a, efu)).epsilon(1e-10));
    }
  }

  // symmetric histories tie
  HistoryTensor sym(3, 3);
  for (std::size_t a = 0; a < 3; ++a) sym.record(0, a, 1);
  auto ties = bas_score(ConjugatePosterior(3, 3), 0, sym, {});
  CHECK(ties[0] == ties[1]);
  CHECK(ties[1] == ties[2]);

  CHECK_THROWS(bas_score(exact, 0, empty, {.sampled_weights = true}, nullptr));
}

TEST_CASE("boltzmann policy") {
  HistoryTensor h(2, 4);
  auto p = boltzmann_policy(h, 0, 1.0);
  for (double v : p) CHECK(v == 0.25);
  for (int i = 0; i < 10; ++i) h.record(0, 0, 1);
  p = boltzmann_policy(h, 0, 1.0);
  CHECK(std::abs(p[0] - 1.5133e-5) < 1e-9);
  const double rest = 1.0 / (3.0 + std::exp(-10.0));
  for (std::size_t a = 1; a < 4; ++a) CHECK(std::abs(p[a] - rest) < 1e-12);
  CHECK(std::abs(p[1] - 0.333328) < 1e-6);
  HistoryTensor one(2, 4);
  one.record(0, 1, 0);
  for (double v : boltzmann_policy(one, 0, 1e3)) CHECK(std::abs(v - 0.25) < 1e-3);
  CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
  CHECK_THROWS(boltzmann_policy(h, 0, 0.0));

  // permutation equivariance: move the counts to action 2
  HistoryTensor g(2, 4);
  for (int i = 0; i < 10; ++i) g.record(0, 2, 1);
  auto q = boltzmann_policy(g, 0, 1.0);
  CHECK(q[2] == p[0]);
  CHECK(q[0] == p[2]);

  CHECK(boltzmann_temperature(0, 100, 1.0, 0.1) == 1.0);
  CHECK(boltzmann_temperature(99, 100, 1.0, 0.1) == Approx(0.1));
  CHECK(boltzmann_temperature(33, 100, 1.0, 0.1) == Approx(0.7));
}

TEST_CASE("episodes") {
  num::Rng krng(num::derive_seed(0, 0));
  auto dense = make_dense_world(10, 4, krng);
  CmcRunConfig cfg;
  cfg.steps = 2000;
  cfg.seed = 0;
  auto log = run_episode(cfg, dense);
  CHECK(log.rows.size() == 2000);
  CHECK(log.rows.back().missing_info < log.initial_missing_info);
  CHECK(log.trajectory.size() == 2001);
  CHECK(log.history.total() == 2000);

  cfg.steps = 300;
  CHECK(run_episode(cfg, dense) == run_episode(cfg, dense));
  cfg.strategy = Strategy::boltzmann;
  CHECK(run_episode(cfg, dense) == run_episode(cfg, dense));

  num::Rng mrng(num::derive_seed(1, 0));
  auto maze = make_maze(generate_maze_layout(6, mrng), mrng);
  cfg.strategy = Strategy::random;
  cfg.steps = 3000;
  auto mlog = run_episode(cfg, maze);
  CHECK(mlog.rows.size() == 3000);
  cfg.log_every = 10;
  CHECK(run_episode(cfg, maze).rows.size() == 300);

  CHECK_THROWS(parse_strategy("greedy"));
  CHECK(parse_strategy("boltzmann") == Strategy::boltzmann);
}
