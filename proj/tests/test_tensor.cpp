#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tensor.hpp"
#include "util.hpp"

using namespace fedsab;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tensor shape and data invariants") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK_THROWS_AS(Tensor({2, 0, 4}), Error);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), Error);  // length mismatch
  Tensor f = Tensor::full({3}, 2.5);
  CHECK(f[2] == 2.5);
  CHECK(f.all_finite());
  f[1] = std::numeric_limits<scalar_t>::infinity();
  CHECK_FALSE(f.all_finite());
}

TEST_CASE("paramset insertion order and conformance") {
  ParamSet a;
  a.add("w1", Tensor({2, 2}));
  a.add("b1", Tensor({2}));
  CHECK(a.name_at(0) == "w1");
  CHECK(a.name_at(1) == "b1");
  CHECK_THROWS_AS(a.add("w1", Tensor({1})), Error);  // duplicate

  ParamSet b;
  b.add("w1", Tensor({2, 2}));
  b.add("b1", Tensor({2}));
  CHECK(a.conformant_with(b));

  ParamSet c;
  c.add("b1", Tensor({2}));
  c.add("w1", Tensor({2, 2}));
  CHECK_FALSE(a.conformant_with(c));  // order matters

  ParamSet d;
  d.add("w1", Tensor({2, 2}));
  d.add("b1", Tensor({3}));
  CHECK_FALSE(a.conformant_with(d));  // shape matters
}

TEST_CASE("paramset binary format round trip and layout") {
  ParamSet ps;
  Tensor w({2, 3});
  for (int64_t i = 0; i < w.size(); ++i) w[i] = 0.25 * static_cast<double>(i) - 0.6;
  ps.add("layer.w", std::move(w));
  ps.add("layer.b", Tensor::full({3}, 1.5));

  const std::string path = temp_path("fedsab_params_test.bin");
  ps.save(path);

  // header magic and little-endian tensor count
  std::ifstream f(path, std::ios::binary);
  char head[12];
  f.read(head, 12);
  CHECK(std::string(head, 8) == "FSAB0001");
  CHECK(static_cast<unsigned char>(head[8]) == 2);
  CHECK(head[9] == 0);

  ParamSet back = ParamSet::load(path);
  REQUIRE(back.size() == 2);
  CHECK(back.name_at(0) == "layer.w");
  CHECK(back.tensor_at(0).shape() == std::vector<int>{2, 3});
  for (int64_t i = 0; i < back.tensor_at(0).size(); ++i)
    CHECK(back.tensor_at(0)[i] ==
          doctest::Approx(ps.tensor_at(0)[i]).epsilon(1e-7));  // float32 quantization
  CHECK(back.tensor_at(1)[2] == 1.5);

  // a second save/load is exact: values are already float32-representable
  const std::string path2 = temp_path("fedsab_params_test2.bin");
  back.save(path2);
  ParamSet back2 = ParamSet::load(path2);
  for (int64_t i = 0; i < back.tensor_at(0).size(); ++i)
    CHECK(back2.tensor_at(0)[i] == back.tensor_at(0)[i]);
}

TEST_CASE("paramset load rejects malformed files") {
  const std::string path = temp_path("fedsab_params_bad.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTMAGIC" << std::string(16, '\0');
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(ParamSet::load(path)), doctest::Contains("bad magic"),
                       Error);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "FSAB0001";  // cut off before the count
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(ParamSet::load(path)), doctest::Contains("truncated"),
                       Error);
  CHECK_THROWS_AS(static_cast<void>(ParamSet::load(temp_path("fedsab_missing.bin"))), Error);
}

TEST_CASE("param_diff and axpy") {
  ParamSet a, b;
  a.add("x", Tensor::full({4}, 3.0));
  b.add("x", Tensor::full({4}, 1.0));
  ParamSet d = param_diff(a, b);
  CHECK(d.get("x")[0] == 2.0);
  param_axpy(b, d, 0.5);
  CHECK(b.get("x")[3] == 2.0);

  ParamSet c;
  c.add("y", Tensor({4}));
  CHECK_THROWS_AS(static_cast<void>(param_diff(a, c)), Error);
}
