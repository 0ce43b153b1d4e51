#include "vidfp/forest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "vidfp/error.hpp"

namespace vidfp {

using nlohmann::json;

namespace {

[[noreturn]] void bad_config(const std::string& what) { throw Error("forest", "BadConfig", what); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t tree_seed(std::uint64_t master, std::size_t tree) {
    return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(tree) + 1));
}

int argmax(const std::vector<std::uint32_t>& h) {
    return static_cast<int>(std::max_element(h.begin(), h.end()) - h.begin());
}

class TreeBuilder {
public:
    TreeBuilder(const Dataset& d, const TrainConfig& c, const std::vector<std::size_t>& candidates, std::uint64_t seed)
        : d_(d), c_(c), candidates_(candidates), rng_(seed), k_(d.class_count()) {}

    Tree build() {
        const std::size_t n = d_.size();
        std::vector<std::uint32_t> idx(n);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (auto& i : idx) i = static_cast<std::uint32_t>(pick(rng_));
        grow(idx, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        std::size_t slot = 0;
        double threshold = 0;
        double impurity = 2;  // weighted child Gini; above any real value
        bool found = false;
    };

    static double gini(double sumsq, double n) { return n > 0 ? 1.0 - sumsq / (n * n) : 0.0; }

    // Best threshold on one slot; returns false if the slot is constant here.
    bool evaluate(std::size_t slot, const std::vector<std::uint32_t>& idx, const std::vector<std::uint32_t>& hist,
                  Split& best) {
        vals_.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) vals_[i] = {d_.rows[idx[i]][slot], d_.labels[idx[i]]};
        std::sort(vals_.begin(), vals_.end());
        if (vals_.front().first == vals_.back().first) return false;

        left_.assign(k_, 0);
        right_.assign(hist.begin(), hist.end());
        double sq_l = 0, sq_r = 0;
        for (auto c : right_) sq_r += double(c) * c;
        const double n = static_cast<double>(idx.size());
        const std::size_t min_leaf = static_cast<std::size_t>(c_.min_samples_leaf);
        for (std::size_t i = 0; i + 1 < vals_.size(); ++i) {
            const int y = vals_[i].second;
            sq_l += 2.0 * left_[y] + 1;
            ++left_[y];
            sq_r -= 2.0 * right_[y] - 1;
            --right_[y];
            if (vals_[i].first == vals_[i + 1].first) continue;
            const double nl = double(i + 1), nr = n - nl;
            if (i + 1 < min_leaf || vals_.size() - (i + 1) < min_leaf) continue;
            const double imp = (nl * gini(sq_l, nl) + nr * gini(sq_r, nr)) / n;
            if (imp < best.impurity) {
                best.impurity = imp;
                best.slot = slot;
                best.threshold = vals_[i].first + (vals_[i + 1].first - vals_[i].first) / 2;
                best.found = true;
            }
        }
        return true;
    }

    int grow(std::vector<std::uint32_t>& idx, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::vector<std::uint32_t> hist(k_, 0);
        for (auto i : idx) ++hist[d_.labels[i]];
        const bool pure = std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; }) <= 1;
        const std::size_t min_leaf = static_cast<std::size_t>(c_.min_samples_leaf);
        if (pure || depth >= c_.max_depth || idx.size() < 2 * min_leaf) {
            tree_.nodes[id].histogram = std::move(hist);
            return id;
        }

        double sq = 0;
        for (auto c : hist) sq += double(c) * c;
        const double parent = gini(sq, double(idx.size()));

        // Draw slots without replacement until m non-constant ones were tried.
        order_ = candidates_;
        const std::size_t want = std::min<std::size_t>(c_.n_attributes_per_split, order_.size());
        std::size_t tried = 0;
        Split best;
        for (std::size_t t = 0; t < order_.size() && tried < want; ++t) {
            std::uniform_int_distribution<std::size_t> pick(t, order_.size() - 1);
            std::swap(order_[t], order_[pick(rng_)]);
            if (evaluate(order_[t], idx, hist, best)) ++tried;
        }
        if (!best.found || best.impurity > parent + 1e-12) {
            tree_.nodes[id].histogram = std::move(hist);
            return id;
        }

        std::vector<std::uint32_t> left, right;
        for (auto i : idx) (d_.rows[i][best.slot] <= best.threshold ? left : right).push_back(i);
        idx = {};
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        TreeNode& node = tree_.nodes[id];
        node.slot = static_cast<int>(best.slot);
        node.threshold = best.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    const Dataset& d_;
    const TrainConfig& c_;
    const std::vector<std::size_t>& candidates_;
    std::mt19937_64 rng_;
    std::size_t k_;
    Tree tree_;
    std::vector<std::pair<double, int>> vals_;
    std::vector<std::uint32_t> left_, right_;
    std::vector<std::size_t> order_;
};

void validate(const Dataset& data, const TrainConfig& c) {
    if (data.size() < 2) throw Error("forest", "BadData", "training needs at least 2 samples");
    const std::size_t w = data.width();
    for (const auto& r : data.rows)
        if (r.size() != w) throw Error("forest", "BadData", "rows differ in width");
    for (auto y : data.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= data.class_count())
            throw Error("forest", "BadData", "label id outside the class table");
    if (c.n_trees < 1) bad_config("n_trees must be >= 1");
    if (c.max_depth < 1) bad_config("max_depth must be >= 1");
    if (c.min_samples_leaf < 1) bad_config("min_samples_leaf must be >= 1");
    if (c.n_attributes_per_split < 1) bad_config("n_attributes_per_split must be >= 1");
    if (static_cast<std::size_t>(c.n_attributes_per_split) > w)
        bad_config("n_attributes_per_split exceeds the vector length " + std::to_string(w));
    for (auto s : c.allowed_slots)
        if (s >= w) bad_config("allowed slot " + std::to_string(s) + " out of range");
}

}  // namespace

json TrainConfig::to_json() const {
    return {{"n_trees", n_trees},
            {"max_depth", max_depth},
            {"n_attributes_per_split", n_attributes_per_split},
            {"min_samples_leaf", min_samples_leaf},
            {"rng_seed", rng_seed},
            {"allowed_slots", allowed_slots}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.n_trees = j.value("n_trees", c.n_trees);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.n_attributes_per_split = j.value("n_attributes_per_split", c.n_attributes_per_split);
    c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    if (j.contains("allowed_slots")) c.allowed_slots = j.at("allowed_slots").get<std::vector<std::size_t>>();
    c.threads = j.value("threads", 0);
    return c;
}

int Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, d[i]);
        if (nodes[i].slot >= 0) d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
    }
    return best;
}

const TreeNode& Tree::leaf(const std::vector<double>& row) const {
    const TreeNode* n = &nodes[0];
    while (n->slot >= 0) n = &nodes[row[n->slot] <= n->threshold ? n->left : n->right];
    return *n;
}

Forest train(const Dataset& data, const TrainConfig& config) {
    validate(data, config);
    Forest f;
    f.classes = data.classes;
    f.config = config;
    f.width = data.width();

    std::vector<std::uint32_t> present(data.class_count(), 0);
    for (auto y : data.labels) ++present[y];
    if (std::count_if(present.begin(), present.end(), [](auto c) { return c > 0; }) < 2) {
        f.degenerate = true;
        Tree t;
        t.nodes.push_back(TreeNode{-1, 0, -1, -1, present});
        f.trees.push_back(std::move(t));
        return f;
    }

    std::vector<std::size_t> candidates = config.allowed_slots;
    if (candidates.empty()) {
        candidates.resize(f.width);
        std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    } else {
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    }

    f.trees.resize(static_cast<std::size_t>(config.n_trees));
    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t t = begin; t < f.trees.size(); t += step)
            f.trees[t] = TreeBuilder(data, config, candidates, tree_seed(config.rng_seed, t)).build();
    };
    std::size_t threads = config.threads > 0 ? static_cast<std::size_t>(config.threads)
                                             : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, f.trees.size());
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(work, i, threads);
        for (auto& th : pool) th.join();
    }
    return f;
}

Prediction predict(const Forest& forest, const std::vector<double>& row) {
    if (row.size() != forest.width)
        throw Error("forest", "LayoutMismatch",
                    "vector has " + std::to_string(row.size()) + " slots, model expects " + std::to_string(forest.width));
    Prediction p;
    p.distribution.assign(forest.classes.size(), 0.0);
    for (const auto& t : forest.trees) p.distribution[argmax(t.leaf(row).histogram)] += 1.0;
    for (auto& v : p.distribution) v /= static_cast<double>(forest.trees.size());
    p.class_id = static_cast<int>(std::max_element(p.distribution.begin(), p.distribution.end()) - p.distribution.begin());
    p.confidence = p.distribution[p.class_id];
    p.label = forest.classes[p.class_id];
    return p;
}

Prediction predict(const Forest& forest, const AttributeVector& vector) {
    if (!forest.layout_fingerprint.empty() && vector.layout_fingerprint != forest.layout_fingerprint)
        throw Error("forest", "LayoutMismatch", "attribute layout differs from the one the model was trained on");
    return predict(forest, vector.values);
}

json Forest::to_json() const {
    json trees_j = json::array();
    for (const auto& t : trees) {
        json slot = json::array(), thr = json::array(), left = json::array(), right = json::array(),
             hist = json::array();
        for (const auto& n : t.nodes) {
            slot.push_back(n.slot);
            thr.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            hist.push_back(n.slot < 0 ? json(n.histogram) : json(nullptr));
        }
        trees_j.push_back({{"slot", slot}, {"threshold", thr}, {"left", left}, {"right", right}, {"histogram", hist}});
    }
    json j = {{"schema", kSchema},
              {"provider", provider},
              {"protocol", protocol},
              {"objective", objective},
              {"config", config.to_json()},
              {"width", width},
              {"layout_fingerprint", layout_fingerprint},
              {"dict_version", dict_version},
              {"degenerate", degenerate},
              {"classes", classes},
              {"trees", trees_j}};
    if (dictionaries) j["dictionaries"] = dictionaries->to_json();
    return j;
}

std::string Forest::serialize() const { return to_json().dump(); }

Forest Forest::from_json(const json& j) {
    if (j.value("schema", "") != kSchema)
        throw Error("forest", "SchemaVersionMismatch", "expected model schema " + std::string(kSchema));
    try {
        Forest f;
        f.provider = j.value("provider", "");
        f.protocol = j.value("protocol", "");
        f.objective = j.value("objective", "");
        f.config = TrainConfig::from_json(j.at("config"));
        f.width = j.at("width").get<std::size_t>();
        f.layout_fingerprint = j.value("layout_fingerprint", "");
        f.dict_version = j.value("dict_version", "");
        f.degenerate = j.value("degenerate", false);
        f.classes = j.at("classes").get<std::vector<std::string>>();
        for (const auto& tj : j.at("trees")) {
            Tree t;
            const auto& slot = tj.at("slot");
            t.nodes.resize(slot.size());
            for (std::size_t i = 0; i < slot.size(); ++i) {
                auto& n = t.nodes[i];
                n.slot = slot[i].get<int>();
                n.threshold = tj.at("threshold")[i].get<double>();
                n.left = tj.at("left")[i].get<int>();
                n.right = tj.at("right")[i].get<int>();
                if (n.slot < 0) {
                    n.histogram = tj.at("histogram")[i].get<std::vector<std::uint32_t>>();
                    if (n.histogram.size() != f.classes.size())
                        throw Error("forest", "BadModel", "leaf histogram size differs from class count");
                } else {
                    const int sz = static_cast<int>(slot.size());
                    if (n.left <= static_cast<int>(i) || n.right <= static_cast<int>(i) || n.left >= sz ||
                        n.right >= sz || n.slot >= static_cast<int>(f.width))
                        throw Error("forest", "BadModel", "tree node references are out of range");
                }
            }
            if (t.nodes.empty()) throw Error("forest", "BadModel", "empty tree");
            f.trees.push_back(std::move(t));
        }
        if (f.trees.empty()) throw Error("forest", "BadModel", "model has no trees");
        if (j.contains("dictionaries")) f.dictionaries = DictionaryStore::from_json(j.at("dictionaries"));
        return f;
    } catch (const json::exception& e) {
        throw Error("forest", "BadModel", e.what());
    }
}

void Forest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("forest", "IOError", "cannot write " + path);
    out << serialize() << '\n';
    if (!out) throw Error("forest", "IOError", "write failed for " + path);
}

Forest Forest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("forest", "IOError", "cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("forest", "BadModel", path + ": " + e.what());
    }
    return from_json(j);
}

std::vector<std::vector<double>> CvResult::normalized_confusion() const {
    std::vector<std::vector<double>> out;
    for (const auto& row : confusion) {
        double sum = std::accumulate(row.begin(), row.end(), 0.0);
        std::vector<double> r(row.size(), 0.0);
        if (sum > 0)
            for (std::size_t i = 0; i < row.size(); ++i) r[i] = row[i] / sum;
        out.push_back(std::move(r));
    }
    return out;
}

CvResult cross_validate(const Dataset& data, const TrainConfig& config, int k, std::uint64_t seed) {
    if (k < 2) bad_config("cross-validation needs k >= 2");
    const std::size_t nc = data.class_count();
    std::vector<std::vector<std::size_t>> by_class(nc);
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
    std::vector<int> fold(data.size(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < nc; ++c) {
        auto& v = by_class[c];
        if (v.empty()) continue;
        if (v.size() < static_cast<std::size_t>(k))
            throw Error("forest", "InsufficientClassSamples",
                        "class '" + data.classes[c] + "' has " + std::to_string(v.size()) + " samples, fewer than k=" +
                            std::to_string(k));
        std::shuffle(v.begin(), v.end(), rng);
        for (std::size_t i = 0; i < v.size(); ++i) fold[v[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }

    CvResult res;
    res.confusion.assign(nc, std::vector<std::size_t>(nc, 0));
    std::size_t correct = 0;
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < data.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
        TrainConfig c = config;
        c.rng_seed = splitmix64(config.rng_seed + static_cast<std::uint64_t>(f));
        Forest model = train(data.subset(tr), c);
        for (auto i : te) {
            auto p = predict(model, data.rows[i]);
            ++res.confusion[data.labels[i]][p.class_id];
            correct += p.class_id == data.labels[i];
        }
    }
    res.accuracy = data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
    return res;
}

std::string GridResult::surface_csv() const {
    std::ostringstream os;
    os << "max_depth,n_attributes,accuracy\n";
    for (const auto& p : surface) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", p.accuracy);
        os << p.max_depth << ',' << p.n_attributes << ',' << buf << '\n';
    }
    return os.str();
}

GridResult grid_search(const Dataset& data, std::vector<int> depths, std::vector<int> n_attributes,
                       const TrainConfig& base, int k, std::uint64_t seed) {
    if (depths.empty() || n_attributes.empty()) bad_config("grid search needs non-empty grids");
    std::sort(depths.begin(), depths.end());
    depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
    std::sort(n_attributes.begin(), n_attributes.end());
    n_attributes.erase(std::unique(n_attributes.begin(), n_attributes.end()), n_attributes.end());
    GridResult g;
    bool have = false;
    for (int d : depths) {
        for (int m : n_attributes) {
            TrainConfig c = base;
            c.max_depth = d;
            c.n_attributes_per_split = m;
            double acc = cross_validate(data, c, k, seed).accuracy;
            g.surface.push_back({d, m, acc});
            if (!have || acc > g.best_accuracy) {
                g.best = c;
                g.best_accuracy = acc;
                have = true;
            }
        }
    }
    return g;
}

}  // namespace vidfp
