#include <functional>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "vidfp/error.hpp"
#include "vidfp/forest.hpp"

using namespace vidfp;
using testutil::TempDir;

namespace {

std::string error_code(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.qualified_code();
    }
    return "";
}

Dataset xor_data() {
    return Dataset::from_named({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {"even", "odd", "odd", "even"});
}

// Slot 0 separates the classes; the other slots are noise unless `all_informative`.
Dataset separable(int per_class, int classes, std::uint64_t seed, bool all_informative = false) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> rows;
    std::vector<std::string> names;
    const int offset = all_informative ? 10 : 0;
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            rows.push_back({static_cast<double>(c * 10 + static_cast<int>(rng() % 5)),
                            static_cast<double>(c * offset + static_cast<int>(rng() % 7)),
                            static_cast<double>(c * offset + static_cast<int>(rng() % 3))});
            names.push_back("c" + std::to_string(c));
        }
    return Dataset::from_named(rows, names);
}

TrainConfig small(int trees, int depth, int m) {
    TrainConfig c;
    c.n_trees = trees;
    c.max_depth = depth;
    c.n_attributes_per_split = m;
    c.rng_seed = 42;
    return c;
}

Forest voting_forest(int a_votes, int b_votes) {
    Forest f;
    f.classes = {"a", "b"};
    f.width = 1;
    for (int i = 0; i < a_votes + b_votes; ++i) {
        Tree t;
        t.nodes.push_back(TreeNode{-1, 0, -1, -1, i < a_votes ? std::vector<std::uint32_t>{3, 1}
                                                              : std::vector<std::uint32_t>{0, 2}});
        f.trees.push_back(t);
    }
    return f;
}

// Class histogram of every subtree, for checking the split rule.
std::vector<std::uint32_t> subtree_hist(const Tree& t, int id, std::vector<std::vector<std::uint32_t>>& out) {
    const auto& n = t.nodes[id];
    if (n.slot < 0) return out[id] = n.histogram;
    auto l = subtree_hist(t, n.left, out), r = subtree_hist(t, n.right, out);
    for (std::size_t i = 0; i < l.size(); ++i) l[i] += r[i];
    return out[id] = l;
}

double gini(const std::vector<std::uint32_t>& h) {
    double n = 0, sq = 0;
    for (auto c : h) n += c;
    for (auto c : h) sq += double(c) * c;
    return n > 0 ? 1 - sq / (n * n) : 0;
}

double total(const std::vector<std::uint32_t>& h) {
    double n = 0;
    for (auto c : h) n += c;
    return n;
}

}  // namespace

TEST_CASE("forest: linearly separable data with depth 1") {
    auto d = Dataset::from_named({{1}, {2}, {3}, {10}, {11}, {12}}, {"a", "a", "a", "b", "b", "b"});
    auto f = train(d, small(20, 1, 1));
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(predict(f, d.rows[i]).class_id == d.labels[i]);
    for (const auto& t : f.trees) CHECK(t.depth() <= 1);
}

TEST_CASE("forest: XOR truth table") {
    auto d = xor_data();
    auto f = train(d, small(100, 2, 2));
    for (std::size_t i = 0; i < 4; ++i) CHECK(predict(f, d.rows[i]).label == (i == 0 || i == 3 ? "even" : "odd"));
}

TEST_CASE("forest: same seed gives byte-identical models, threads do not matter") {
    auto d = separable(30, 3, 1);
    auto c = small(25, 6, 2);
    c.threads = 1;
    auto a = train(d, c).serialize();
    c.threads = 4;
    auto b = train(d, c).serialize();
    CHECK(a == b);
    c.rng_seed = 43;
    CHECK(train(d, c).serialize() != a);
}

TEST_CASE("forest: vote fractions") {
    auto f1 = voting_forest(1, 0);
    auto p = predict(f1, std::vector<double>{0});
    CHECK(p.confidence == 1.0);
    auto f = voting_forest(8, 2);
    p = predict(f, std::vector<double>{0});
    CHECK(p.label == "a");
    CHECK(p.confidence == doctest::Approx(0.8));
    CHECK(p.distribution == std::vector<double>{0.8, 0.2});
    std::reverse(f.trees.begin(), f.trees.end());
    auto q = predict(f, std::vector<double>{0});
    CHECK(q.distribution == p.distribution);
    CHECK(q.class_id == p.class_id);
}

TEST_CASE("forest: single-tree confidences are 0 or 1") {
    auto d = separable(20, 3, 2);
    auto f = train(d, small(1, 16, 3));
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        auto p = predict(f, std::vector<double>{double(rng() % 40), double(rng() % 8), double(rng() % 4)});
        for (double v : p.distribution) CHECK((v == 0.0 || v == 1.0));
    }
}

TEST_CASE("forest: bagging, depth bound and split rule hold in every tree") {
    auto d = separable(25, 4, 3);
    for (std::size_t i = 0; i < d.size(); i += 3) d.labels[i] = (d.labels[i] + 1) % 4;  // add noise
    auto c = small(15, 5, 2);
    auto f = train(d, c);
    for (const auto& t : f.trees) {
        CHECK(t.depth() <= c.max_depth);
        std::vector<std::vector<std::uint32_t>> hist(t.nodes.size());
        auto root = subtree_hist(t, 0, hist);
        CHECK(total(root) == d.size());
        for (std::size_t i = 0; i < t.nodes.size(); ++i) {
            const auto& n = t.nodes[i];
            if (n.slot < 0) continue;
            double nl = total(hist[n.left]), nr = total(hist[n.right]), np = total(hist[i]);
            CHECK(nl > 0);
            CHECK(nr > 0);
            double child = (nl * gini(hist[n.left]) + nr * gini(hist[n.right])) / np;
            CHECK(child <= gini(hist[i]) + 1e-12);
        }
    }
}

TEST_CASE("forest: allowed slots restrict splits") {
    auto d = separable(20, 3, 4);
    auto c = small(10, 8, 1);
    c.allowed_slots = {1, 2};
    auto f = train(d, c);
    for (const auto& t : f.trees)
        for (const auto& n : t.nodes) CHECK(n.slot != 0);
}

TEST_CASE("forest: degenerate and invalid input") {
    auto one = Dataset::from_named({{1}, {2}, {3}}, {"a", "a", "a"});
    auto f = train(one, small(10, 3, 1));
    CHECK(f.degenerate);
    CHECK(predict(f, std::vector<double>{9}).label == "a");
    CHECK(error_code([] { train(Dataset{}, TrainConfig{}); }) == "forest.BadData");
    auto d = separable(5, 2, 5);
    CHECK(error_code([&] { train(d, small(10, 3, 4)); }) == "forest.BadConfig");
    CHECK(error_code([&] { train(d, small(0, 3, 1)); }) == "forest.BadConfig");
    CHECK(error_code([&] { predict(train(d, small(3, 3, 1)), std::vector<double>{1, 2}); }) ==
          "forest.LayoutMismatch");
}

TEST_CASE("forest: layout fingerprint is checked on vectors") {
    auto d = separable(5, 2, 6);
    auto f = train(d, small(3, 3, 1));
    f.layout_fingerprint = "abc";
    AttributeVector v;
    v.values = d.rows[0];
    v.layout_fingerprint = "xyz";
    CHECK(error_code([&] { predict(f, v); }) == "forest.LayoutMismatch");
    v.layout_fingerprint = "abc";
    CHECK_NOTHROW(predict(f, v));
}

TEST_CASE("forest: serialization round trip") {
    TempDir dir;
    auto d = separable(15, 3, 7);
    auto f = train(d, small(10, 6, 2));
    f.provider = "YT";
    f.protocol = "QUIC";
    f.objective = "platform";
    f.save(dir.file("m.json"));
    auto g = Forest::load(dir.file("m.json"));
    CHECK(g.serialize() == f.serialize());
    for (const auto& r : d.rows) CHECK(predict(g, r).distribution == predict(f, r).distribution);

    auto j = f.to_json();
    j["schema"] = "vidfp.forest/0";
    CHECK(error_code([&] { Forest::from_json(j); }) == "forest.SchemaVersionMismatch");
    j = f.to_json();
    j["trees"][0]["left"][0] = 999;
    CHECK(error_code([&] { Forest::from_json(j); }) == "forest.BadModel");
}

TEST_CASE("forest: cross-validation on separable data is perfect") {
    auto d = separable(20, 3, 8);
    auto r = cross_validate(d, small(10, 8, 2), 10, 1);
    CHECK(r.accuracy == 1.0);
    auto nc = r.normalized_confusion();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(nc[i][j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("forest: shuffled labels give chance accuracy") {
    std::mt19937_64 rng(99);
    std::vector<std::vector<double>> rows;
    std::vector<std::string> names;
    for (int i = 0; i < 800; ++i) {
        std::vector<double> r(6);
        for (auto& v : r) v = static_cast<double>(rng() % 10);
        rows.push_back(r);
        names.push_back("k" + std::to_string(i % 4));
    }
    std::shuffle(names.begin(), names.end(), rng);
    auto r = cross_validate(Dataset::from_named(rows, names), small(30, 8, 3), 10, 5);
    CHECK(std::abs(r.accuracy - 0.25) <= 0.05);
}

TEST_CASE("forest: cross-validation needs k samples per class") {
    auto d = separable(5, 2, 9);
    CHECK(error_code([&] { cross_validate(d, small(3, 3, 1), 10); }) == "forest.InsufficientClassSamples");
    CHECK(error_code([&] { cross_validate(d, small(3, 3, 1), 1); }) == "forest.BadConfig");
}

TEST_CASE("forest: grid search") {
    auto d = separable(20, 2, 10, true);
    auto one = grid_search(d, {4}, {2}, small(10, 1, 1), 5, 1);
    CHECK(one.best.max_depth == 4);
    CHECK(one.best.n_attributes_per_split == 2);
    CHECK(one.surface.size() == 1);
    // Every cell reaches 1.0 here, so the smallest depth and attribute count win.
    auto g = grid_search(d, {8, 2, 4}, {3, 1}, small(10, 1, 1), 5, 1);
    CHECK(g.best_accuracy == 1.0);
    CHECK(g.best.max_depth == 2);
    CHECK(g.best.n_attributes_per_split == 1);
    CHECK(g.surface.size() == 6);
    CHECK(g.surface_csv().rfind("max_depth,n_attributes,accuracy\n2,1,1.000000\n", 0) == 0);
}

TEST_CASE("forest: config JSON round trip") {
    TrainConfig c = small(7, 9, 3);
    c.allowed_slots = {1, 5};
    c.min_samples_leaf = 2;
    auto back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.allowed_slots == c.allowed_slots);
}
