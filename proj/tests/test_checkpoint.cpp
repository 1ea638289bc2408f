#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dmt/checkpoint.hpp"
#include "dmt/errors.hpp"
#include "dmt/rng.hpp"

using namespace dmt;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("save/load round-trips values and shapes") {
  Checkpoint ck;
  Tensor a = Tensor::from(2, 3, {1.5, -2.25, 3.0, 0.0, 1e-7, -42.0});
  ck.add("weights/a", a);
  ck.add_scalar("meta/d_model", 32.0f);
  ck.add_raw("raw/b", {1, 4}, {1.0f, 2.0f, 3.0f, 4.0f});

  fs::path path = temp_file("dmt_ck_roundtrip.dmt1");
  ck.save(path);
  Checkpoint back = Checkpoint::load(path);

  CHECK(back.entries.size() == 3);
  CHECK(back.has("weights/a"));
  CHECK(back.scalar("meta/d_model") == 32.0f);

  Tensor a2 = back.tensor("weights/a");
  CHECK(a2.rows() == 2);
  CHECK(a2.cols() == 3);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(float(a2.at(i, j)) == float(a.at(i, j)));  // exact after f32 narrowing

  fs::remove(path);
}

TEST_CASE("second save is byte-identical") {
  Checkpoint ck;
  rng::Stream stream(99);
  std::vector<float> data(256);
  for (auto& v : data) v = float(stream.range(-2.0, 2.0));
  ck.add_raw("blob", {16, 16}, data);

  fs::path p1 = temp_file("dmt_ck_b1.dmt1");
  fs::path p2 = temp_file("dmt_ck_b2.dmt1");
  ck.save(p1);
  Checkpoint::load(p1).save(p2);
  CHECK(slurp(p1) == slurp(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("entry order is preserved") {
  Checkpoint ck;
  ck.add_scalar("z", 1.0f);
  ck.add_scalar("a", 2.0f);
  fs::path path = temp_file("dmt_ck_order.dmt1");
  ck.save(path);
  Checkpoint back = Checkpoint::load(path);
  CHECK(back.entries[0].name == "z");
  CHECK(back.entries[1].name == "a");
  fs::remove(path);
}

TEST_CASE("missing entries and files fail loudly") {
  Checkpoint ck;
  ck.add_scalar("present", 1.0f);
  CHECK_THROWS_AS(ck.at("absent"), ConfigError);
  CHECK_THROWS(Checkpoint::load(temp_file("dmt_ck_nonexistent.dmt1")));
}

TEST_CASE("corrupted magic is rejected") {
  fs::path path = temp_file("dmt_ck_badmagic.dmt1");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS(Checkpoint::load(path));
  fs::remove(path);
}

TEST_CASE("tensor() respects requires_grad flag") {
  Checkpoint ck;
  ck.add_raw("w", {1, 2}, {1.0f, 2.0f});
  CHECK_FALSE(ck.tensor("w").requires_grad());
  CHECK(ck.tensor("w", true).requires_grad());
}
