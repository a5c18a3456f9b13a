#include "qsam/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "doctest.h"

using namespace qsam;
namespace fs = std::filesystem;

namespace {

Checkpoint small_checkpoint() {
  Checkpoint c;
  c.config_json = R"({"net":{"widths":[4]}})";
  c.iteration = 123456789ULL;
  c.rng_state = std::string("\x00\x01 binary rng \n\xff", 16);
  NamedTensorF32 t;
  t.name = "stage1.head.W";
  t.dims = {2, 8, 3, 3};
  t.values.resize(2 * 8 * 3 * 3);
  for (size_t i = 0; i < t.values.size(); ++i) t.values[i] = 0.25f * float(i) - 3.0f;
  c.tensors.push_back(t);
  NamedTensorF32 m = t, v = t;
  m.name = "adam.m.stage1.head.W";
  v.name = "adam.v.stage1.head.W";
  for (auto& x : m.values) x *= 0.125f;
  for (auto& x : v.values) x = x * x;
  c.opt_tensors.push_back(m);
  c.opt_tensors.push_back(v);
  return c;
}

std::uint64_t read_u64le(const std::string& s, size_t off) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | std::uint8_t(s[off + i]);
  return v;
}

std::uint32_t read_u32le(const std::string& s, size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | std::uint8_t(s[off + i]);
  return v;
}

NetConfig tiny_cfg() {
  NetConfig cfg;
  cfg.widths = {4, 8};
  cfg.blocks_per_scale = 1;
  return cfg;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("header layout: magic, little-endian version, config length") {
  const Checkpoint c = small_checkpoint();
  const std::string bytes = serialize_checkpoint(c);
  REQUIRE(bytes.size() > 16);
  CHECK(bytes[0] == 'Q');
  CHECK(bytes[1] == 'S');
  CHECK(bytes[2] == 'A');
  CHECK(bytes[3] == 'M');
  CHECK(read_u32le(bytes, 4) == 1);
  CHECK(read_u64le(bytes, 8) == c.config_json.size());
  CHECK(bytes.compare(16, c.config_json.size(), c.config_json) == 0);
  // tensor count immediately follows the config blob
  CHECK(read_u64le(bytes, 16 + c.config_json.size()) == 1);
}

TEST_CASE("trailing CRC-32 covers every preceding byte") {
  const std::string bytes = serialize_checkpoint(small_checkpoint());
  REQUIRE(bytes.size() > 4);
  const std::uint32_t stored = read_u32le(bytes, bytes.size() - 4);
  unsigned long crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
                uInt(bytes.size() - 4));
  CHECK(stored == std::uint32_t(crc));
}

TEST_CASE("serialize/deserialize round trip preserves every field") {
  const Checkpoint c = small_checkpoint();
  const Checkpoint d = deserialize_checkpoint(serialize_checkpoint(c));
  CHECK(d.version == 1);
  CHECK(d.config_json == c.config_json);
  CHECK(d.iteration == c.iteration);
  CHECK(d.rng_state == c.rng_state);
  REQUIRE(d.tensors.size() == 1);
  REQUIRE(d.opt_tensors.size() == 2);
  CHECK(d.tensors[0].name == c.tensors[0].name);
  CHECK(d.tensors[0].dims == c.tensors[0].dims);
  CHECK(d.tensors[0].values == c.tensors[0].values);
  CHECK(d.opt_tensors[1].name == "adam.v.stage1.head.W");
  CHECK(d.opt_tensors[1].values == c.opt_tensors[1].values);
}

TEST_CASE("non-square dims and an empty checkpoint round trip") {
  Checkpoint c;
  c.config_json = "";
  c.rng_state = "";
  const Checkpoint d0 = deserialize_checkpoint(serialize_checkpoint(c));
  CHECK(d0.tensors.empty());
  CHECK(d0.opt_tensors.empty());
  CHECK(d0.config_json.empty());

  NamedTensorF32 t;
  t.name = "bias";
  t.dims = {5};  // rank-1 tensor
  t.values = {1.f, 2.f, 3.f, 4.f, 5.f};
  c.tensors.push_back(t);
  const Checkpoint d1 = deserialize_checkpoint(serialize_checkpoint(c));
  REQUIRE(d1.tensors.size() == 1);
  CHECK(d1.tensors[0].dims == std::vector<std::uint64_t>{5});
  CHECK(d1.tensors[0].values == t.values);
}

TEST_CASE("file save/load round trips byte-identically") {
  const fs::path path = fs::temp_directory_path() / "qsam_ckpt_rt.bin";
  const Checkpoint c = small_checkpoint();
  save_checkpoint(path, c);
  const Checkpoint d = load_checkpoint(path);
  CHECK(serialize_checkpoint(d) == serialize_checkpoint(c));
  fs::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}

TEST_CASE("a single corrupted payload byte is detected by the CRC") {
  const Checkpoint c = small_checkpoint();
  std::string bytes = serialize_checkpoint(c);
  // offset of the first tensor's f32 payload:
  // header (16) + json + count u64 + name u16+bytes + rank u8 + 4 dims u64
  const size_t payload =
      16 + c.config_json.size() + 8 + 2 + c.tensors[0].name.size() + 1 + 32;
  REQUIRE(payload + 16 < bytes.size());
  for (const size_t victim : {payload, payload + 7, payload + 101}) {
    std::string mutated = bytes;
    mutated[victim] = char(std::uint8_t(mutated[victim]) ^ 0x40);
    CHECK_THROWS_AS(deserialize_checkpoint(mutated), CheckpointCorruptError);
  }
  // flipping a bit inside the stored CRC itself must also be caught
  std::string tail = bytes;
  tail[tail.size() - 2] = char(std::uint8_t(tail[tail.size() - 2]) ^ 0x01);
  CHECK_THROWS_AS(deserialize_checkpoint(tail), CheckpointCorruptError);
}

TEST_CASE("truncated data reports a format error") {
  const std::string bytes = serialize_checkpoint(small_checkpoint());
  CHECK_THROWS_AS(deserialize_checkpoint(std::string()), CheckpointFormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 5)), CheckpointFormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 11)), CheckpointFormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 20)), CheckpointFormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 10)),
                  CheckpointFormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)),
                  CheckpointFormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "xyz"), CheckpointFormatError);
}

TEST_CASE("wrong magic and unknown version are distinguished") {
  const std::string bytes = serialize_checkpoint(small_checkpoint());
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_magic), CheckpointFormatError);

  // the version field is validated before the CRC, so no need to re-sign
  std::string future = bytes;
  future[4] = 2;
  CHECK_THROWS_AS(deserialize_checkpoint(future), CheckpointVersionError);
  std::string v0 = bytes;
  v0[4] = 0;
  CHECK_THROWS_AS(deserialize_checkpoint(v0), CheckpointVersionError);
}

TEST_CASE("model snapshot restores parameters and optimizer state exactly") {
  QSAMNet<float> net(tiny_cfg());
  net.init(31);
  Adam<float> opt(net.parameters());

  // run a couple of fake steps so the moments are non-trivial
  std::mt19937_64 rng(77);
  std::normal_distribution<float> g(0.f, 0.1f);
  for (int s = 0; s < 2; ++s) {
    for (Parameter<float>* p : net.parameters())
      for (std::int64_t i = 0; i < p->grad.numel(); ++i) p->grad.data[i] = g(rng);
    opt.step(net.parameters(), 1e-3);
  }

  const Checkpoint c = make_checkpoint(net, opt, 2, "{}", "rngstate");
  CHECK(c.tensors.size() == net.parameters().size());
  CHECK(c.opt_tensors.size() == 2 * net.parameters().size());

  // perturb everything, then restore
  QSAMNet<float> net2(tiny_cfg());
  net2.init(99);
  Adam<float> opt2(net2.parameters());
  restore_parameters(c, net2);
  restore_optimizer(c, net2, opt2);
  CHECK(opt2.step_count() == 2);

  const auto pa = net.parameters();
  const auto pb = net2.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK((pa[i]->value.data == pb[i]->value.data).all());
    CHECK((opt.first_moments()[i].data == opt2.first_moments()[i].data).all());
    CHECK((opt.second_moments()[i].data == opt2.second_moments()[i].data).all());
  }
}

TEST_CASE("restoring into a different architecture is rejected") {
  QSAMNet<float> net(tiny_cfg());
  net.init(1);
  Adam<float> opt(net.parameters());
  const Checkpoint c = make_checkpoint(net, opt, 0, "{}", "");

  NetConfig wider = tiny_cfg();
  wider.widths = {8, 16};  // same tensor count, different shapes
  QSAMNet<float> net_w(wider);
  net_w.init(1);
  CHECK_THROWS_AS(restore_parameters(c, net_w), std::invalid_argument);

  NetConfig deeper = tiny_cfg();
  deeper.blocks_per_scale = 2;  // different tensor count
  QSAMNet<float> net_d(deeper);
  net_d.init(1);
  CHECK_THROWS_AS(restore_parameters(c, net_d), std::invalid_argument);
  Adam<float> opt_d(net_d.parameters());
  CHECK_THROWS_AS(restore_optimizer(c, net_d, opt_d), std::invalid_argument);
}

}  // TEST_SUITE
