#include <doctest.h>

#include "ldvi/params.hpp"
#include "ldvi/scorenet.hpp"
#include "reference.hpp"

using namespace ldvi;

TEST_SUITE("params") {
  TEST_CASE("flatten and unflatten round trip") {
    ParameterSet p;
    p.add("a", {2}, {1.0, 2.0});
    p.add("b", {1, 3}, {3.0, 4.0, 5.0});
    CHECK(p.total_size() == 5);
    const auto flat = p.flatten();
    CHECK(flat == std::vector<double>{1, 2, 3, 4, 5});
    std::vector<double> other = {5, 4, 3, 2, 1};
    p.unflatten(other);
    CHECK(p.at("b").values == std::vector<double>{3, 2, 1});
    CHECK_THROWS(p.unflatten(std::vector<double>{1.0}));
    CHECK_THROWS(p.add("a", {1}, {0.0}));
    CHECK_THROWS(p.add("c", {2}, {0.0}));
  }

  TEST_CASE("checkpoint round trip is exact") {
    ParameterSet p;
    p.add("q.mean", {3}, {0.1, -1e-300, 12345.678901234567});
    init_score_net(p, 3, 6, 99);
    const std::string path = std::string(LDVI_BINARY_DIR) + "/params_roundtrip.ckpt";
    write_checkpoint(p, path);
    const ParameterSet q = read_checkpoint(path);
    REQUIRE(q.blocks().size() == p.blocks().size());
    for (std::size_t i = 0; i < p.blocks().size(); ++i) {
      CHECK(q.blocks()[i].name == p.blocks()[i].name);
      CHECK(q.blocks()[i].shape == p.blocks()[i].shape);
      CHECK(q.blocks()[i].values == p.blocks()[i].values);
    }
    CHECK_THROWS(read_checkpoint(std::string(LDVI_SOURCE_DIR) + "/CMakeLists.txt"));
  }

  TEST_CASE("inverse softplus") {
    for (double y : {1e-6, 0.05, 1.0, 3.0, 40.0}) {
      CHECK(reference::softplus(inverse_softplus(y)) == doctest::Approx(y).epsilon(1e-12));
    }
  }
}
