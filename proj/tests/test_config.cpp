#include "qsam/config_json.hpp"

#include "doctest.h"

using namespace qsam;

TEST_SUITE("config") {

TEST_CASE("network config survives a json round trip") {
  NetConfig c;
  c.widths = {8, 16, 32};
  c.blocks_per_scale = 2;
  c.kernel = 5;
  c.leaky_slope = 0.1;
  c.norm_eps = 1e-6;
  c.algebra = Algebra::real;
  const NetConfig d = net_config_from_json(net_config_to_json(c));
  CHECK(d.widths == c.widths);
  CHECK(d.blocks_per_scale == 2);
  CHECK(d.kernel == 5);
  CHECK(d.leaky_slope == 0.1);
  CHECK(d.norm_eps == 1e-6);
  CHECK(d.algebra == Algebra::real);

  c.algebra = Algebra::quaternion;
  CHECK(net_config_from_json(net_config_to_json(c)).algebra == Algebra::quaternion);
}

TEST_CASE("unknown or missing fields are rejected") {
  nlohmann::json j = net_config_to_json(NetConfig{});
  j["algebra"] = "octonion";
  CHECK_THROWS_AS(net_config_from_json(j), std::invalid_argument);
  nlohmann::json partial = net_config_to_json(NetConfig{});
  partial.erase("kernel");
  CHECK_THROWS(net_config_from_json(partial));
  // deserialized configs are validated like constructed ones
  nlohmann::json bad = net_config_to_json(NetConfig{});
  bad["widths"] = std::vector<int>{8, 24};  // not doubling
  CHECK_THROWS_AS(net_config_from_json(bad), std::invalid_argument);
}

TEST_CASE("training config survives a json round trip") {
  TrainConfig t;
  t.patch = 64;
  t.batch = 3;
  t.iters = 1234;
  t.lr_start = 1e-3;
  t.lr_end = 1e-6;
  t.seed = 0xDEADBEEFCAFEULL;
  t.ckpt_interval = 77;
  const TrainConfig u = train_config_from_json(train_config_to_json(t));
  CHECK(u.patch == 64);
  CHECK(u.batch == 3);
  CHECK(u.iters == 1234);
  CHECK(u.lr_start == 1e-3);
  CHECK(u.lr_end == 1e-6);
  CHECK(u.seed == 0xDEADBEEFCAFEULL);
  CHECK(u.ckpt_interval == 77);

  nlohmann::json bad = train_config_to_json(t);
  bad["lr_end"] = 1e-2;  // must stay below lr_start
  CHECK_THROWS_AS(train_config_from_json(bad), std::invalid_argument);
}

TEST_CASE("the combined blob nests both configs") {
  NetConfig n;
  n.widths = {4, 8};
  TrainConfig t;
  t.iters = 10;
  const nlohmann::json j = nlohmann::json::parse(combined_config_json(n, t));
  CHECK(net_config_from_json(j.at("net")).widths == n.widths);
  CHECK(train_config_from_json(j.at("train")).iters == 10);
  // identical inputs serialize identically (key order is canonical)
  CHECK(combined_config_json(n, t) == combined_config_json(n, t));
}

TEST_CASE("training config validation pins every field") {
  TrainConfig t;
  t.iters = 1;
  CHECK_NOTHROW(t.validate());
  auto reject = [](auto mutate) {
    TrainConfig c;
    c.iters = 1;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  };
  reject([](TrainConfig& c) { c.patch = 0; });
  reject([](TrainConfig& c) { c.patch = 24; });
  reject([](TrainConfig& c) { c.patch = -16; });
  reject([](TrainConfig& c) { c.batch = 0; });
  reject([](TrainConfig& c) { c.iters = -1; });
  reject([](TrainConfig& c) { c.lr_end = c.lr_start; });
  reject([](TrainConfig& c) { c.lr_start = 0; });
  reject([](TrainConfig& c) { c.ckpt_interval = 0; });
}

}  // TEST_SUITE
