#include <catch2/catch_amalgamated.hpp>

#include "evkit/json_io.hpp"
#include "evkit/rng.hpp"
#include "evkit/tensor.hpp"

using namespace evkit;

TEST_CASE("tensor construction enforces shape/data agreement") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    for (double x : t.data()) CHECK(x == 0.0);

    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
    CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor({-1}), DimensionError);
}

TEST_CASE("row-major indexing") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t(0, 0) == 1.0);
    CHECK(t(0, 2) == 3.0);
    CHECK(t(1, 0) == 4.0);
    CHECK(t(1, 2) == 6.0);
    CHECK_THROWS_AS(t(1), DimensionError);  // wrong index rank

    Tensor cube({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(cube(1, 0, 1) == 5.0);
}

TEST_CASE("identity and arithmetic helpers") {
    const Tensor i3 = Tensor::identity(3);
    CHECK(i3(0, 0) == 1.0);
    CHECK(i3(0, 1) == 0.0);

    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 2}, {4, 3, 2, 1});
    const Tensor s = add(a, b);
    for (double x : s.data()) CHECK(x == 5.0);
    CHECK(scale(a, 2.0)(1, 1) == 8.0);
    CHECK(dot(a, b) == 1 * 4 + 2 * 3 + 3 * 2 + 4 * 1);
    CHECK(max_abs_diff(a, b) == 3.0);
    CHECK_THROWS_AS(add(a, Tensor({3})), DimensionError);
}

TEST_CASE("json debug form round-trips") {
    SplitMix64 rng(11);
    Tensor t({3, 4, 2});
    for (double& x : t.data()) x = rng.next_in(-5.0, 5.0);
    const Tensor back = tensor_from_json(tensor_to_json(t));
    CHECK(back == t);

    const nlohmann::json j = tensor_to_json(t);
    CHECK(j.at("shape").size() == 3);
    CHECK(j.at("data").size() == 24);
    CHECK_THROWS_AS(tensor_from_json(nlohmann::json{{"shape", {2}}}), ParseError);
}
