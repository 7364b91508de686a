#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hmip/datasets.hpp"
#include "hmip/error.hpp"

using namespace hmip;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "hmip_test_datasets";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("labels satisfy the sample invariants") {
    for (auto kind : {FamilyKind::kKnapsack, FamilyKind::kFacility}) {
        const auto family = generate_family(kind, {3, 2, 4}, 9);
        const Dataset ds = generate_dataset(*family, 10, 4);
        REQUIRE(ds.samples.size() == 10);
        for (const auto& s : ds.samples) {
            CHECK_NOTHROW(check_sample(*family, s));
            CHECK(s.l <= s.z + 1e-6);
            CHECK(s.label_gap <= 1e-4 + 1e-12);
            CHECK(family->true_cost(s.theta, s.x_star) <= s.z + 1e-6 * std::max(1.0, std::abs(s.z)));
        }
    }
}

TEST_CASE("generation is deterministic in the seed") {
    const auto family = generate_family(FamilyKind::kKnapsack, {3, 2, 4}, 2);
    const Dataset a = generate_dataset(*family, 6, 17);
    const Dataset b = generate_dataset(*family, 6, 17);
    const Dataset c = generate_dataset(*family, 6, 18);
    for (int i = 0; i < 6; ++i) {
        CHECK(a.samples[i].theta == b.samples[i].theta);
        CHECK(a.samples[i].z == b.samples[i].z);
    }
    CHECK(a.samples[0].theta != c.samples[0].theta);
}

TEST_CASE("parallel labeling matches serial labeling") {
    const auto family = generate_family(FamilyKind::kKnapsack, {3, 2, 4}, 2);
    const Dataset a = generate_dataset(*family, 8, 3, labeling_config(), 1);
    const Dataset b = generate_dataset(*family, 8, 3, labeling_config(), 3);
    for (int i = 0; i < 8; ++i) {
        CHECK(a.samples[i].x_star == b.samples[i].x_star);
        CHECK(a.samples[i].z == b.samples[i].z);
    }
}

TEST_CASE("split of five samples into 2/1/1/1") {
    const auto family = generate_family(FamilyKind::kKnapsack, {2, 2, 3}, 1);
    const Dataset ds = generate_dataset(*family, 5, 1);
    SplitSpec spec{2, 1, 1, 1, 42};
    const SplitIndices s = split(ds, spec);
    CHECK(s.train.size() == 2);
    CHECK(s.eval.size() == 1);
    CHECK(s.calib.size() == 1);
    CHECK(s.test.size() == 1);
    std::set<int> all(s.train.begin(), s.train.end());
    all.insert(s.eval.begin(), s.eval.end());
    all.insert(s.calib.begin(), s.calib.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all == std::set<int>{0, 1, 2, 3, 4});

    const SplitIndices again = split(ds, spec);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);

    // Some seed must order the samples differently.
    bool differs = false;
    for (std::uint64_t seed = 0; seed < 20 && !differs; ++seed) {
        const SplitIndices other = split(ds, {2, 1, 1, 1, seed});
        differs = other.train != s.train || other.test != s.test;
    }
    CHECK(differs);
}

TEST_CASE("split needs enough samples and positive sizes") {
    const auto family = generate_family(FamilyKind::kKnapsack, {2, 2, 3}, 1);
    const Dataset ds = generate_dataset(*family, 4, 1);
    try {
        split(ds, {2, 1, 1, 1, 0});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kInsufficientSamples);
    }
    CHECK_THROWS_AS(split(ds, {0, 1, 1, 1, 0}), Error);
}

TEST_CASE("save, load, save is byte identical") {
    const auto family = generate_family(FamilyKind::kFacility, {3, 3, 4}, 5);
    Dataset ds = generate_dataset(*family, 5, 8);
    ds.header.family_seed = 5;
    const auto p1 = scratch("a.txt");
    const auto p2 = scratch("b.txt");
    save_dataset(ds, p1);
    const Dataset back = load_dataset(p1);
    save_dataset(back, p2);
    CHECK(slurp(p1) == slurp(p2));
    REQUIRE(back.samples.size() == ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].theta == ds.samples[i].theta);
        CHECK(back.samples[i].y_star == ds.samples[i].y_star);
        CHECK(back.samples[i].z == ds.samples[i].z);
        CHECK(back.samples[i].l == ds.samples[i].l);
    }
    CHECK(back.header.kind == FamilyKind::kFacility);
    CHECK(back.header.upper_dim == family->upper_dim());

    const SplitIndices s = split(ds, {2, 1, 1, 1, 3});
    const auto sp = scratch("splits.txt");
    save_splits(s, sp);
    const SplitIndices s2 = load_splits(sp);
    CHECK(s2.train == s.train);
    CHECK(s2.eval == s.eval);
    CHECK(s2.calib == s.calib);
    CHECK(s2.test == s.test);
}

TEST_CASE("malformed dataset files are rejected") {
    const auto p = scratch("bad.txt");
    {
        std::ofstream out(p);
        out << "{\"format\": \"something-else\"}\n";
    }
    CHECK_THROWS_AS(load_dataset(p), Error);
    CHECK_THROWS_AS(load_dataset(scratch("does_not_exist.txt")), Error);
}

TEST_CASE("dataset directory layout") {
    CHECK(dataset_dir("data", FamilyKind::kKnapsack, 3) == std::filesystem::path("data") / "knapsack" / "3");
}
