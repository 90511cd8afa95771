#include "doctest.h"
#include "grad_suite.hpp"

using namespace convoice;

TEST_CASE("analytic gradients match central differences") {
  for (const testing::GradCase& c : testing::RunGradientSuite()) {
    INFO(c.name << ": input " << c.result.worst_input << " element " << c.result.worst_element);
    CHECK(c.result.max_relative_error < 1e-5);
  }
}

TEST_CASE("grad check flags a wrong gradient") {
  Rng rng(5);
  auto loss = [](const std::vector<Tensor<double>>& in) { return in[0][0] * in[0][0]; };
  auto wrong = [](const std::vector<Tensor<double>>& in) {
    return std::vector<Tensor<double>>{Tensor<double>(in[0].dims(), 3.0 * in[0][0])};
  };
  const auto r = GradCheck(loss, wrong, {Tensor<double>({1}, 2.0)});
  CHECK(r.max_relative_error > 0.1);
}

TEST_CASE("grad check rejects a gradient of the wrong count") {
  auto loss = [](const std::vector<Tensor<double>>& in) { return in[0][0]; };
  auto none = [](const std::vector<Tensor<double>>&) { return std::vector<Tensor<double>>{}; };
  CHECK_THROWS_AS(GradCheck(loss, none, {Tensor<double>({1}, 1.0)}), ShapeError);
}
