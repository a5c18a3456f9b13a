#include "qsam/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "support/test_images.hpp"

using namespace qsam;
namespace fs = std::filesystem;

namespace {

// A tiny on-disk dataset shared by the suite: three 24x24 pairs.
fs::path shared_dataset() {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / "qsam_train_ds";
    fs::remove_all(r);
    fs::create_directories(r / "rainy");
    fs::create_directories(r / "clean");
    for (int i = 0; i < 3; ++i) {
      char name[16];
      std::snprintf(name, sizeof name, "p%d.png", i);
      save_image(r / "rainy" / name, test_images::texture<float>(24, 24, 50 + i));
      save_image(r / "clean" / name, test_images::texture<float>(24, 24, 80 + i));
    }
    return r;
  }();
  return root;
}

NetConfig tiny_net() {
  NetConfig nc;
  nc.widths = {4};
  nc.blocks_per_scale = 1;
  return nc;
}

TrainConfig tiny_train(std::int64_t iters) {
  TrainConfig tc;
  tc.patch = 16;
  tc.batch = 2;
  tc.iters = iters;
  tc.seed = 123;
  tc.ckpt_interval = 4;
  return tc;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE_MESSAGE(bool(f), "cannot open " << p.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("two identical runs produce bitwise-identical traces and weights") {
  const auto ds = PairedDataset<float>::open(shared_dataset());
  TrainSession a(tiny_net(), tiny_train(6));
  TrainSession b(tiny_net(), tiny_train(6));
  const auto ta = train(a, ds, "");
  const auto tb = train(b, ds, "");
  REQUIRE(ta.size() == 6);
  REQUIRE(tb.size() == 6);
  for (size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].iteration == std::int64_t(i) + 1);
    CHECK(ta[i].lr == tb[i].lr);
    CHECK(ta[i].loss_stage1 == tb[i].loss_stage1);
    CHECK(ta[i].loss_stage2 == tb[i].loss_stage2);
    CHECK(ta[i].loss_total == tb[i].loss_total);
    // the recorded schedule matches the closed form
    CHECK(ta[i].lr == cosine_lr(ta[i].iteration - 1, 6, a.train_cfg.lr_start,
                                a.train_cfg.lr_end));
    CHECK(ta[i].loss_total == ta[i].loss_stage1 + ta[i].loss_stage2);
  }
  const auto pa = a.net.parameters(), pb = b.net.parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i]->value.data == pb[i]->value.data).all());
  CHECK(a.opt.step_count() == 6);
  // a different seed shifts the trace
  TrainConfig other = tiny_train(6);
  other.seed = 321;
  TrainSession c(tiny_net(), other);
  const auto tc_trace = train(c, ds, "");
  CHECK(tc_trace[0].loss_total != ta[0].loss_total);
}

TEST_CASE("trace csv carries the exact header and round-trips every row") {
  const auto ds = PairedDataset<float>::open(shared_dataset());
  const fs::path out = fs::temp_directory_path() / "qsam_train_csv";
  fs::remove_all(out);
  TrainSession s(tiny_net(), tiny_train(5));
  const auto rows = train(s, ds, out);

  std::ifstream f(out / "trace.csv");
  REQUIRE(bool(f));
  std::string line;
  std::getline(f, line);
  CHECK(line == "iteration,lr,loss_stage1,loss_stage2,loss_total");
  size_t i = 0;
  while (std::getline(f, line)) {
    REQUIRE(i < rows.size());
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::int64_t it = 0;
    double lr = 0, l1 = 0, l2 = 0, lt = 0;
    ss >> it >> lr >> l1 >> l2 >> lt;
    CHECK(it == rows[i].iteration);
    // 17 significant digits round-trip doubles exactly
    CHECK(lr == rows[i].lr);
    CHECK(l1 == rows[i].loss_stage1);
    CHECK(l2 == rows[i].loss_stage2);
    CHECK(lt == rows[i].loss_total);
    ++i;
  }
  CHECK(i == rows.size());
  fs::remove_all(out);
}

TEST_CASE("checkpoint cadence: periodic files, none at the final iteration") {
  const auto ds = PairedDataset<float>::open(shared_dataset());
  const fs::path out = fs::temp_directory_path() / "qsam_train_ckpts";
  fs::remove_all(out);
  TrainSession s(tiny_net(), tiny_train(8));  // interval 4
  train(s, ds, out);
  CHECK(fs::exists(out / "ckpt_00000004.bin"));
  CHECK_FALSE(fs::exists(out / "ckpt_00000008.bin"));  // final iter: skipped
  CHECK(fs::exists(out / "final.bin"));
  const Checkpoint fin = load_checkpoint(out / "final.bin");
  CHECK(fin.iteration == 8);
  const Checkpoint mid = load_checkpoint(out / "ckpt_00000004.bin");
  CHECK(mid.iteration == 4);
  fs::remove_all(out);

  // interval larger than the run: only final.bin appears
  const fs::path out2 = fs::temp_directory_path() / "qsam_train_ckpts2";
  fs::remove_all(out2);
  TrainConfig tc = tiny_train(3);
  tc.ckpt_interval = 100;
  TrainSession s2(tiny_net(), tc);
  train(s2, ds, out2);
  int ckpts = 0;
  for (const auto& e : fs::directory_iterator(out2))
    if (e.path().filename().string().rfind("ckpt_", 0) == 0) ++ckpts;
  CHECK(ckpts == 0);
  CHECK(fs::exists(out2 / "final.bin"));
  fs::remove_all(out2);
}

TEST_CASE("resuming from a checkpoint replays the straight-through run exactly") {
  const auto ds = PairedDataset<float>::open(shared_dataset());
  const fs::path dir_a = fs::temp_directory_path() / "qsam_train_straight";
  const fs::path dir_c = fs::temp_directory_path() / "qsam_train_resumed";
  fs::remove_all(dir_a);
  fs::remove_all(dir_c);

  // straight run to 8
  TrainSession a(tiny_net(), tiny_train(8));
  const auto trace_a = train(a, ds, dir_a);

  // first half only, then resume from its final checkpoint
  TrainSession c1(tiny_net(), tiny_train(4));
  train(c1, ds, dir_c);
  TrainSession c2(load_checkpoint(dir_c / "final.bin"));
  CHECK(c2.start_iter == 4);
  c2.train_cfg.iters = 8;  // extend the run, as the CLI override does
  const auto trace_c = train(c2, ds, dir_c);

  REQUIRE(trace_c.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(trace_c[i].iteration == trace_a[i + 4].iteration);
    CHECK(trace_c[i].lr == trace_a[i + 4].lr);
    CHECK(trace_c[i].loss_stage1 == trace_a[i + 4].loss_stage1);
    CHECK(trace_c[i].loss_stage2 == trace_a[i + 4].loss_stage2);
    CHECK(trace_c[i].loss_total == trace_a[i + 4].loss_total);
  }
  // appended csv equals the straight run's csv byte for byte
  CHECK(slurp(dir_c / "trace.csv") == slurp(dir_a / "trace.csv"));
  // and so do the final checkpoints (weights, moments, rng state, config)
  CHECK(slurp(dir_c / "final.bin") == slurp(dir_a / "final.bin"));
  CHECK(c2.opt.step_count() == 8);

  // resuming an already-finished run trains zero iterations
  TrainSession done(load_checkpoint(dir_a / "final.bin"));
  const auto none = train(done, ds, "");
  CHECK(none.empty());

  fs::remove_all(dir_a);
  fs::remove_all(dir_c);
}

TEST_CASE("a poisoned parameter raises a training error naming iteration 1") {
  const auto ds = PairedDataset<float>::open(shared_dataset());
  TrainSession s(tiny_net(), tiny_train(3));
  s.net.parameters()[0]->value.data[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(s, ds, "");
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.iteration == 1);
    CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
  }
}

TEST_CASE("invalid dataset or patch size is rejected up front") {
  const fs::path empty = fs::temp_directory_path() / "qsam_train_empty";
  fs::remove_all(empty);
  fs::create_directories(empty / "rainy");
  fs::create_directories(empty / "clean");
  const auto ds_empty = PairedDataset<float>::open(empty);
  TrainSession s(tiny_net(), tiny_train(2));
  CHECK_THROWS_AS(train(s, ds_empty, ""), std::invalid_argument);
  fs::remove_all(empty);

  // patch 16 against a six-scale network (spatial divisor 32)
  const auto ds = PairedDataset<float>::open(shared_dataset());
  NetConfig deep;
  deep.widths = {2, 4, 8, 16, 32, 64};
  deep.blocks_per_scale = 1;
  TrainSession sd(deep, tiny_train(1));
  CHECK_THROWS_AS(train(sd, ds, ""), std::invalid_argument);

  // config validation runs in the session constructor
  TrainConfig bad = tiny_train(2);
  bad.patch = 20;  // not a multiple of 16
  CHECK_THROWS_AS(TrainSession(tiny_net(), bad), std::invalid_argument);
}

}  // TEST_SUITE
