#pragma once

#include "qsam/network.hpp"
#include "qsam/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsam {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'Q', 'S', 'A', 'M'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File claims a format version this build does not understand.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Trailing CRC-32 does not match the file contents.
class CheckpointCorruptError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Structurally invalid: wrong magic, truncated, or malformed field.
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct NamedTensorF32 {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

/// In-memory image of a checkpoint file.
///
/// On disk (all integers little-endian):
///   magic "QSAM" | version u32 | config-JSON length u64 + bytes
///   | tensor table | optimizer tensor table | iteration u64
///   | RNG state length u64 + bytes | CRC-32 (zlib) of everything before it, u32
/// Each tensor table is: count u64, then per tensor
///   name length u16 + UTF-8 bytes | rank u8 | dims u64 each | f32 payload.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;
  std::vector<NamedTensorF32> tensors;
  std::vector<NamedTensorF32> opt_tensors;
  std::uint64_t iteration = 0;
  std::string rng_state;
};

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// --- glue between the in-memory model/optimizer and the checkpoint image ---

inline NamedTensorF32 to_named_tensor(const std::string& name, const Tensor<float>& t) {
  NamedTensorF32 out;
  out.name = name;
  out.dims = {std::uint64_t(t.n), std::uint64_t(t.c), std::uint64_t(t.h), std::uint64_t(t.w)};
  out.values.assign(t.data.data(), t.data.data() + t.numel());
  return out;
}

inline void fill_from_named(const NamedTensorF32& src, Tensor<float>& dst,
                            const std::string& expected_name) {
  if (src.name != expected_name) {
    throw std::invalid_argument("checkpoint does not match model: expected tensor '" +
                                expected_name + "', found '" + src.name + "'");
  }
  const std::vector<std::uint64_t> want = {std::uint64_t(dst.n), std::uint64_t(dst.c),
                                           std::uint64_t(dst.h), std::uint64_t(dst.w)};
  if (src.dims != want || src.values.size() != std::size_t(dst.numel())) {
    throw std::invalid_argument("checkpoint does not match model: tensor '" + src.name +
                                "' has mismatched shape");
  }
  std::copy(src.values.begin(), src.values.end(), dst.data.data());
}

/// Snapshot the model parameters plus Adam moments. The Adam step counter is
/// not stored separately: the training loop steps the optimizer exactly once
/// per iteration, so it always equals `iteration` and is restored from it.
inline Checkpoint make_checkpoint(QSAMNet<float>& net, const Adam<float>& opt,
                                  std::uint64_t iteration, const std::string& config_json,
                                  const std::string& rng_state) {
  Checkpoint c;
  c.config_json = config_json;
  c.iteration = iteration;
  c.rng_state = rng_state;
  const auto params = net.parameters();
  check(opt.first_moments().size() == params.size(),
        "checkpoint: optimizer was not built from this model's parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.tensors.push_back(to_named_tensor(params[i]->name, params[i]->value));
    c.opt_tensors.push_back(to_named_tensor("adam.m." + params[i]->name, opt.first_moments()[i]));
    c.opt_tensors.push_back(to_named_tensor("adam.v." + params[i]->name, opt.second_moments()[i]));
  }
  return c;
}

inline void restore_parameters(const Checkpoint& c, QSAMNet<float>& net) {
  const auto params = net.parameters();
  if (c.tensors.size() != params.size()) {
    throw std::invalid_argument("checkpoint does not match model: parameter count differs");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    fill_from_named(c.tensors[i], params[i]->value, params[i]->name);
  }
}

inline void restore_optimizer(const Checkpoint& c, QSAMNet<float>& net, Adam<float>& opt) {
  const auto params = net.parameters();
  if (c.opt_tensors.size() != 2 * params.size() ||
      opt.first_moments().size() != params.size()) {
    throw std::invalid_argument("checkpoint does not match optimizer: moment count differs");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    fill_from_named(c.opt_tensors[2 * i], opt.first_moments()[i], "adam.m." + params[i]->name);
    fill_from_named(c.opt_tensors[2 * i + 1], opt.second_moments()[i],
                    "adam.v." + params[i]->name);
  }
  opt.set_step_count(std::int64_t(c.iteration));
}

}  // namespace qsam
