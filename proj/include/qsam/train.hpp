#pragma once

#include "qsam/checkpoint.hpp"
#include "qsam/config_json.hpp"
#include "qsam/dataset.hpp"
#include "qsam/network.hpp"
#include "qsam/ops.hpp"
#include "qsam/optim.hpp"
#include "qsam/train_config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace qsam {

struct TraceRow {
  std::int64_t iteration = 0;
  double lr = 0;
  double loss_stage1 = 0;
  double loss_stage2 = 0;
  double loss_total = 0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& msg, std::int64_t iteration_)
      : std::runtime_error(msg), iteration(iteration_) {}
  std::int64_t iteration = 0;
};

inline std::string rng_state_string(const std::mt19937_64& g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

/// A model + optimizer pair bound to one training configuration, either
/// freshly initialized or restored from a checkpoint.
struct TrainSession {
  NetConfig net_cfg;
  TrainConfig train_cfg;
  QSAMNet<float> net;
  Adam<float> opt;
  std::int64_t start_iter = 0;

  TrainSession(const NetConfig& nc, const TrainConfig& tc)
      : net_cfg(nc), train_cfg(tc), net(nc) {
    nc.validate();
    tc.validate();
    net.init(tc.seed);
    opt = Adam<float>(net.parameters());
  }

  explicit TrainSession(const Checkpoint& c)
      : net_cfg(parse_net_cfg(c)), train_cfg(parse_train_cfg(c)), net(net_cfg) {
    opt = Adam<float>(net.parameters());
    restore_parameters(c, net);
    restore_optimizer(c, net, opt);
    start_iter = std::int64_t(c.iteration);
  }

  static NetConfig parse_net_cfg(const Checkpoint& c) {
    return net_config_from_json(nlohmann::json::parse(c.config_json).at("net"));
  }
  static TrainConfig parse_train_cfg(const Checkpoint& c) {
    return train_config_from_json(nlohmann::json::parse(c.config_json).at("train"));
  }

  Checkpoint snapshot(std::int64_t iteration, const std::string& rng_state) {
    return make_checkpoint(net, opt, std::uint64_t(iteration),
                           combined_config_json(net_cfg, train_cfg), rng_state);
  }
};

inline void append_trace_csv(std::ostream& os, const TraceRow& r) {
  os << r.iteration << ',' << std::setprecision(17) << r.lr << ','
     << r.loss_stage1 << ',' << r.loss_stage2 << ',' << r.loss_total << '\n';
}

/// Runs iterations start_iter+1 .. train_cfg.iters.
///
/// Reproducibility contract: iteration `it` draws its batch from a fresh
/// mt19937_64 seeded with derive_seed(seed, it); per batch item the draw
/// order is pair index, then row offset, column offset, flip. Training is
/// therefore a pure function of (dataset, configs, start state), and resuming
/// from a checkpoint replays exactly the trace a straight-through run
/// produces. The master engine (mt19937_64 seeded with `seed`, advanced once
/// per completed iteration) is serialized into each checkpoint.
///
/// If out_dir is non-empty, appends to out_dir/trace.csv (created with a
/// header when starting from iteration 0), writes periodic checkpoints
/// ckpt_NNNNNNNN.bin every ckpt_interval iterations, and always writes
/// final.bin on completion. Throws TrainingError naming the iteration if a
/// loss turns non-finite.
inline std::vector<TraceRow> train(TrainSession& s, const PairedDataset<float>& ds,
                                   const std::filesystem::path& out_dir,
                                   std::ostream* log = nullptr) {
  const TrainConfig& tc = s.train_cfg;
  check(ds.size() > 0, "train: dataset is empty");
  check(tc.patch % s.net_cfg.spatial_divisor() == 0,
        "train: patch size must be divisible by the network's spatial divisor");

  std::ofstream csv;
  const bool persist = !out_dir.empty();
  if (persist) {
    std::filesystem::create_directories(out_dir);
    if (s.start_iter == 0) {
      csv.open(out_dir / "trace.csv", std::ios::trunc);
      csv << "iteration,lr,loss_stage1,loss_stage2,loss_total\n";
    } else {
      csv.open(out_dir / "trace.csv", std::ios::app);
    }
    if (!csv) throw std::runtime_error("train: cannot open trace csv in " + out_dir.string());
  }

  std::mt19937_64 master(tc.seed);
  master.discard(std::uint64_t(s.start_iter));

  const auto params = s.net.parameters();
  std::vector<TraceRow> trace;
  trace.reserve(std::size_t(std::max<std::int64_t>(0, tc.iters - s.start_iter)));

  for (std::int64_t it = s.start_iter + 1; it <= tc.iters; ++it) {
    const double lr = cosine_lr(it - 1, tc.iters, tc.lr_start, tc.lr_end);
    std::mt19937_64 rng(derive_seed(tc.seed, std::uint64_t(it)));

    std::vector<Rgb<float>> rainy_patches, clean_patches;
    rainy_patches.reserve(std::size_t(tc.batch));
    clean_patches.reserve(std::size_t(tc.batch));
    for (int b = 0; b < tc.batch; ++b) {
      const int idx = uniform_int(rng, 0, int(ds.size()) - 1);
      auto [rainy, clean] = ds.load_pair(std::size_t(idx));
      auto [rp, cp] = sample_patch(rainy, clean, tc.patch, rng);
      rainy_patches.push_back(std::move(rp));
      clean_patches.push_back(std::move(cp));
    }

    Tape<float> t;
    Var<float> input = t.constant(encode_batch(rainy_patches));
    Var<float> target = t.constant(encode_batch(clean_patches));
    s.net.zero_grad();
    typename QSAMNet<float>::Outputs out = s.net.forward(t, input);
    Var<float> l1 = mse(out.x1, target);
    Var<float> l2 = mse(out.x2, target);
    Var<float> total = add(l1, l2);

    TraceRow row;
    row.iteration = it;
    row.lr = lr;
    row.loss_stage1 = double(t.value(l1).data[0]);
    row.loss_stage2 = double(t.value(l2).data[0]);
    row.loss_total = double(t.value(total).data[0]);
    if (!std::isfinite(row.loss_total))
      throw TrainingError("non-finite loss at iteration " + std::to_string(it), it);

    t.backward(total);
    s.opt.step(params, lr);
    master();  // one draw per completed iteration; snapshotted below

    trace.push_back(row);
    if (persist) {
      append_trace_csv(csv, row);
      if (it % tc.ckpt_interval == 0 && it != tc.iters) {
        char fname[40];
        std::snprintf(fname, sizeof fname, "ckpt_%08lld.bin", (long long)it);
        save_checkpoint(out_dir / fname, s.snapshot(it, rng_state_string(master)));
      }
    }
    if (log && (it % 50 == 0 || it == tc.iters)) {
      *log << "iter " << it << "  lr " << std::setprecision(6) << lr << "  loss "
           << row.loss_total << '\n';
    }
  }

  if (persist) {
    csv.flush();
    save_checkpoint(out_dir / "final.bin",
                    s.snapshot(tc.iters, rng_state_string(master)));
  }
  return trace;
}

}  // namespace qsam
