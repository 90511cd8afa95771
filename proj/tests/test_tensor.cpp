#include "doctest.h"

#include <cmath>
#include <limits>

#include "convoice/params.hpp"
#include "convoice/tensor.hpp"

using namespace convoice;

TEST_CASE("size equals product of dims") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(NumElements({5, 7}) == 35);
  CHECK_THROWS_AS(Tensor<float>({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("row-major indexing") {
  auto t = Tensor<double>::FromList({2, 3}, {0, 1, 2, 10, 11, 12});
  CHECK(t.at(1, 2) == 12);
  CHECK(t.row(1)[0] == 10);
  auto u = Transposed(t);
  CHECK(u.dims() == Dims{3, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(u.at(j, i) == t.at(i, j));
  auto r = t.Reshaped({3, 2});
  CHECK(r.at(2, 1) == 12);
}

TEST_CASE("CheckDims names the offending axis") {
  Tensor<float> t({4, 5});
  CHECK_NOTHROW(CheckDims(t, {4, 5}, "x"));
  try {
    CheckDims(t, {4, 6}, "x");
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("axis 1") != std::string::npos);
  }
  CHECK_THROWS_AS(CheckRank(t, 3, "x"), ShapeError);
}

TEST_CASE("cast round trip and finiteness") {
  Rng rng(3);
  auto t = rng.NormalTensor<float>({3, 4}, 1.0);
  CHECK(t.Cast<double>().Cast<float>() == t);
  CHECK(AllFinite(t));
  t[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(AllFinite(t));
  t[5] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(AllFinite(t));
}

TEST_CASE("AddInPlace requires matching shapes") {
  Tensor<double> a({2, 2}, 1.0), b({2, 2}, 2.0), c({4});
  AddInPlace(a, b);
  CHECK(a[3] == 3.0);
  CHECK_THROWS_AS(AddInPlace(a, c), ShapeError);
}

TEST_CASE("param store helpers") {
  ParamStore<float> p;
  p["a.x"] = Tensor<float>({2}, 1.0f);
  p["b.y"] = Tensor<float>({3}, 2.0f);
  CHECK(Subset(p, "a.").size() == 1);
  CHECK_THROWS_AS(GetParam(p, "missing"), InputError);
  ParamStore<float> g;
  Accumulate(g, "a.x", p["a.x"]);
  Accumulate(g, "a.x", p["a.x"]);
  CHECK(g["a.x"][1] == 2.0f);
  Rng r1(9), r2(9);
  CHECK(r1.NormalTensor<double>({8}, 1.0) == r2.NormalTensor<double>({8}, 1.0));
}
