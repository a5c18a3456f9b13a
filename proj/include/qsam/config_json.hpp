#pragma once

#include "qsam/network.hpp"
#include "qsam/train_config.hpp"

#include "json.hpp"

#include <string>

namespace qsam {

inline nlohmann::json net_config_to_json(const NetConfig& c) {
  return nlohmann::json{
      {"widths", c.widths},
      {"blocks_per_scale", c.blocks_per_scale},
      {"kernel", c.kernel},
      {"leaky_slope", c.leaky_slope},
      {"norm_eps", c.norm_eps},
      {"algebra", algebra_name(c.algebra)},
  };
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.widths = j.at("widths").get<std::vector<int>>();
  c.blocks_per_scale = j.at("blocks_per_scale").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.norm_eps = j.at("norm_eps").get<double>();
  const std::string alg = j.at("algebra").get<std::string>();
  if (alg == "quaternion") {
    c.algebra = Algebra::quaternion;
  } else if (alg == "real") {
    c.algebra = Algebra::real;
  } else {
    throw std::invalid_argument("config: unknown algebra '" + alg + "'");
  }
  c.validate();
  return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"patch", c.patch},
      {"batch", c.batch},
      {"iters", c.iters},
      {"lr_start", c.lr_start},
      {"lr_end", c.lr_end},
      {"seed", c.seed},
      {"ckpt_interval", c.ckpt_interval},
  };
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.patch = j.at("patch").get<int>();
  c.batch = j.at("batch").get<int>();
  c.iters = j.at("iters").get<std::int64_t>();
  c.lr_start = j.at("lr_start").get<double>();
  c.lr_end = j.at("lr_end").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.ckpt_interval = j.at("ckpt_interval").get<std::int64_t>();
  c.validate();
  return c;
}

/// The JSON blob stored inside a checkpoint: both configs side by side.
inline std::string combined_config_json(const NetConfig& n, const TrainConfig& t) {
  nlohmann::json j{{"net", net_config_to_json(n)}, {"train", train_config_to_json(t)}};
  return j.dump();
}

}  // namespace qsam
