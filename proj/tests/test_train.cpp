#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "bsde/checkpoint.hpp"
#include "bsde/train.hpp"
#include "helpers.hpp"

using namespace bsde;

namespace {

std::vector<double> vec1(double v) { return {v}; }

}  // namespace

TEST_CASE("adam leaves parameters alone on a zero gradient") {
  std::vector<double> theta{0.5, -1.0, 2.0};
  const std::vector<double> grad(3, 0.0);
  AdamState st;
  CHECK(adam_step(theta, grad, st, 0.1));
  CHECK(theta == std::vector<double>{0.5, -1.0, 2.0});
}

TEST_CASE("first adam step moves by about the learning rate") {
  // m_hat / sqrt(v_hat) = 1 at k = 1 for any constant gradient
  std::vector<double> theta{1.0};
  AdamState st;
  CHECK(adam_step(theta, vec1(1.0), st, 0.1));
  CHECK(theta[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam shrinks a quadratic in two steps") {
  // loss(x) = (x - 2)^2, gradient 2(x - 2)
  double x = 5.0;
  AdamState st;
  const double loss0 = (x - 2.0) * (x - 2.0);
  for (int k = 0; k < 2; ++k) {
    std::vector<double> theta{x};
    CHECK(adam_step(theta, vec1(2.0 * (x - 2.0)), st, 0.05));
    x = theta[0];
  }
  CHECK((x - 2.0) * (x - 2.0) < loss0);
}

TEST_CASE("first-step update is nearly invariant to gradient scale") {
  auto first_step = [](double g) {
    std::vector<double> theta{0.0};
    AdamState st;
    adam_step(theta, {&g, 1}, st, 0.1);
    return theta[0];
  };
  const double a = first_step(1.0), b = first_step(2.0);
  CHECK(std::fabs(a - b) / std::fabs(a) < 1e-6);
}

TEST_CASE("non-finite gradients reject the step and keep state") {
  std::vector<double> theta{1.0, 2.0};
  AdamState st;
  std::vector<double> good{0.1, 0.2};
  CHECK(adam_step(theta, good, st, 0.1));
  const auto saved_theta = theta;
  const auto saved_m = st.m;
  const auto saved_k = st.k;
  std::vector<double> bad{0.1, std::nan("")};
  CHECK(!adam_step(theta, bad, st, 0.1));
  CHECK(theta == saved_theta);
  CHECK(st.m == saved_m);
  CHECK(st.k == saved_k);
}

TEST_CASE("plateau policy halves, holds, and stops as specified") {
  DecayPolicy policy;
  policy.lr0 = 0.4;
  policy.lr_min = 0.1;
  PlateauState st;
  st.lr = policy.lr0;

  std::vector<double> flat{1.0, 1.0, 1.0};
  std::vector<double> better{0.5, 0.5, 0.5};

  // first boundary only primes the average
  auto d0 = plateau_update(st, policy, flat);
  CHECK(d0.lr == 0.4);
  CHECK(!d0.stop);

  // identical losses: relative change 0 -> halve
  auto d1 = plateau_update(st, policy, flat);
  CHECK(d1.lr == doctest::Approx(0.2));
  CHECK(!d1.stop);

  // 50% improvement: hold
  auto d2 = plateau_update(st, policy, better);
  CHECK(d2.lr == doctest::Approx(0.2));
  CHECK(!d2.stop);

  // an increase is at least a plateau: halve down to the floor
  auto d3 = plateau_update(st, policy, flat);
  CHECK(d3.lr == doctest::Approx(0.1));
  CHECK(!d3.stop);

  // stagnating at the floor: two strikes then stop
  auto d4 = plateau_update(st, policy, flat);
  CHECK(d4.lr == doctest::Approx(0.1));
  CHECK(!d4.stop);
  auto d5 = plateau_update(st, policy, flat);
  CHECK(d5.stop);
}

TEST_CASE("improvement at the floor clears the stagnation count") {
  DecayPolicy policy;
  policy.lr0 = 0.1;
  policy.lr_min = 0.1;
  PlateauState st;
  st.lr = policy.lr0;
  plateau_update(st, policy, vec1(4.0));
  CHECK(!plateau_update(st, policy, vec1(4.0)).stop);  // strike one
  CHECK(!plateau_update(st, policy, vec1(2.0)).stop);  // 50% better: reset
  CHECK(!plateau_update(st, policy, vec1(2.0)).stop);  // strike one again
  CHECK(plateau_update(st, policy, vec1(2.0)).stop);   // strike two
}

TEST_CASE("step schedule hits the published plateaus") {
  CHECK(step_schedule(1) == 1e-3);
  CHECK(step_schedule(20000) == 1e-3);
  CHECK(step_schedule(20001) == 1e-4);
  CHECK(step_schedule(50000) == 1e-4);
  CHECK(step_schedule(50001) == 1e-5);
  CHECK(step_schedule(80000) == 1e-5);
  CHECK(step_schedule(80001) == 1e-6);
  CHECK(step_schedule(100000) == 1e-6);
  CHECK_THROWS_AS(step_schedule(0), std::invalid_argument);
  CHECK_THROWS_AS(step_schedule(100001), std::invalid_argument);
}

TEST_CASE("per-scheme learning-rate defaults") {
  CHECK(default_policy(SchemeKind::DBSDE).lr0 == 1e-2);
  CHECK(default_policy(SchemeKind::DBSDE).lr_min == 1e-4);
  CHECK(default_policy(SchemeKind::LaDBSDE).lr0 == 1e-3);
  CHECK(default_policy(SchemeKind::LDBSDE).lr_min == 1e-5);
}

TEST_CASE("zero learning rate leaves the parameters where they started") {
  ProblemSpec p = example1(1, 0.2, 0.2, 1.0, 1.0);
  SchemeModel model(SchemeConfig{SchemeKind::LaDBSDE}, p, TimeGrid{0.2, 4});
  TrainConfig tc;
  tc.batch = 8;
  tc.seed = 3;
  tc.policy.kind = PolicyKind::Constant;
  tc.policy.lr0 = 0.0;
  tc.policy.max_steps = 30;
  tc.policy.probe_every = 10;
  tc.policy.validation_size = 16;
  TrainResult res = train(model, tc);
  ParameterSet fresh = model.init(mix_seed(3, 0x100), InitDist::Uniform);
  CHECK(res.params.theta == fresh.theta);
  // fixed validation batch + frozen parameters: probes are identical
  REQUIRE(res.record.val_loss.size() == 3);
  CHECK(res.record.val_loss[0].second == res.record.val_loss[1].second);
  CHECK(res.record.val_loss[1].second == res.record.val_loss[2].second);
}

TEST_CASE("a short run on a small problem halves the validation loss") {
  ProblemSpec p = example1(1, 0.2, 0.2, 1.0, 1.0);
  SchemeModel model(SchemeConfig{SchemeKind::LaDBSDE}, p, TimeGrid{0.2, 4});
  TrainConfig tc;
  tc.batch = 32;
  tc.seed = 11;
  tc.policy = default_policy(SchemeKind::LaDBSDE);
  tc.policy.max_steps = 500;
  tc.policy.probe_every = 50;
  tc.policy.validation_size = 128;
  TrainResult res = train(model, tc);
  REQUIRE(res.record.reason == TerminationReason::MaxSteps);
  REQUIRE(!res.record.val_loss.empty());
  const double first = res.record.val_loss.front().second;
  const double last = res.record.val_loss.back().second;
  CHECK(last < 0.5 * first);
}

TEST_CASE("training is deterministic in (config, seed)") {
  auto run = [] {
    ProblemSpec p = example1(1, 0.2, 0.2, 1.0, 1.0);
    SchemeModel model(SchemeConfig{SchemeKind::LaDBSDE}, p, TimeGrid{0.2, 4});
    TrainConfig tc;
    tc.batch = 16;
    tc.seed = 21;
    tc.policy = default_policy(SchemeKind::LaDBSDE);
    tc.policy.max_steps = 120;
    tc.policy.probe_every = 20;
    tc.policy.validation_size = 32;
    return train(model, tc);
  };
  TrainResult a = run();
  TrainResult b = run();
  CHECK(a.params.theta == b.params.theta);
  CHECK(a.record.train_loss == b.record.train_loss);
  CHECK(a.record.val_loss == b.record.val_loss);
  CHECK(a.record.lr == b.record.lr);
  CHECK(a.record.reason == b.record.reason);
}

TEST_CASE("checkpoints appear at period boundaries and restore") {
  namespace fs = std::filesystem;
  ProblemSpec p = example1(1, 0.2, 0.2, 1.0, 1.0);
  SchemeModel model(SchemeConfig{SchemeKind::LaDBSDE}, p, TimeGrid{0.2, 4});
  const std::string path = (fs::temp_directory_path() / "bsde_ck_test.bin").string();
  TrainConfig tc;
  tc.batch = 8;
  tc.seed = 5;
  tc.policy = default_policy(SchemeKind::LaDBSDE);
  tc.policy.max_steps = 40;
  tc.policy.period = 20;
  tc.policy.probe_every = 10;
  tc.policy.probe_count = 2;
  tc.policy.validation_size = 16;
  tc.checkpoint_path = path;
  TrainResult res = train(model, tc);
  REQUIRE(fs::exists(path));
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.step == res.record.steps);
  CHECK(ck.params.theta == res.params.theta);
  CHECK(ck.has_adam);
  CHECK(ck.adam_k == res.adam.k);
  CHECK(ck.adam_m == res.adam.m);
  std::remove(path.c_str());
}

TEST_CASE("runaway optimization is reported as non-convergent") {
  // the quadratic driver of the first example explodes once the step
  // networks push Y past the divergence bound
  ProblemSpec p = example1(1, 2.0, 0.2, 1.0, 1.0);
  SchemeModel model(SchemeConfig{SchemeKind::DBSDE}, p, TimeGrid{2.0, 8});
  TrainConfig tc;
  tc.batch = 16;
  tc.seed = 2;
  tc.policy = default_policy(SchemeKind::DBSDE);
  tc.policy.lr0 = 1e6;  // deliberately hostile
  tc.policy.kind = PolicyKind::Constant;
  tc.policy.max_steps = 200;
  tc.policy.probe_every = 50;
  tc.policy.validation_size = 16;
  TrainResult res = train(model, tc);
  CHECK(res.record.reason == TerminationReason::NC);
}
