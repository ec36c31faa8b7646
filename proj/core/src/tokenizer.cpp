// Copyright 2026 The gifcodes Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gif/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "gif/cvm_io.hpp"
#include "gif/error.hpp"
#include <nlohmann/json.hpp>

namespace gif {
namespace {

using Json = nlohmann::json;

constexpr double kExhaustiveLimit = 65536.0;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vector mean_direction(const Matrix& points, const std::vector<int>& idx, const Vector& fallback) {
  Vector sum = Vector::Zero(points.cols());
  for (int i : idx) sum += points.row(i).transpose();
  const double n = sum.norm();
  if (n <= 1e-12) return fallback;
  return sum / n;
}

int argmax_row(const Vector& sims) {
  int best = 0;
  for (Index c = 1; c < sims.size(); ++c) {
    if (sims[c] > sims[best]) best = static_cast<int>(c);
  }
  return best;
}

Matrix seed_plus_plus(const Matrix& points, int k, std::mt19937_64& rng) {
  const Index n = points.rows();
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Vector best_cos = points * centroids.row(0).transpose();
  for (int c = 1; c < k; ++c) {
    Vector weight = (1.0 - best_cos.array()).max(0.0).matrix();
    const double total = weight.sum();
    Index chosen = 0;
    if (total <= 0.0) {
      chosen = first(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (chosen = 0; chosen + 1 < n; ++chosen) {
        r -= weight[chosen];
        if (r <= 0.0) break;
      }
    }
    centroids.row(c) = points.row(chosen);
    best_cos = best_cos.cwiseMax(points * centroids.row(c).transpose());
  }
  return centroids;
}

// First-variation pass: move single points between clusters while that
// raises sum_c ||S_c||, then recompute centroids.
void refine_transfers(const Matrix& points, int k, int max_passes, KMeansResult& res) {
  const Index n = points.rows();
  Matrix sums = Matrix::Zero(k, points.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < n; ++i) {
    const int a = res.assignment[static_cast<std::size_t>(i)];
    sums.row(a) += points.row(i);
    ++counts[static_cast<std::size_t>(a)];
  }
  for (int pass = 0; pass < max_passes; ++pass) {
    bool moved = false;
    for (Index i = 0; i < n; ++i) {
      const int a = res.assignment[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(a)] <= 1) continue;
      const auto x = points.row(i);
      const double leave = (sums.row(a) - x).norm() - sums.row(a).norm();
      int target = -1;
      double best_gain = 1e-12;
      for (int c = 0; c < k; ++c) {
        if (c == a) continue;
        const double gain = leave + (sums.row(c) + x).norm() - sums.row(c).norm();
        if (gain > best_gain) {
          best_gain = gain;
          target = c;
        }
      }
      if (target < 0) continue;
      sums.row(a) -= x;
      sums.row(target) += x;
      --counts[static_cast<std::size_t>(a)];
      ++counts[static_cast<std::size_t>(target)];
      res.assignment[static_cast<std::size_t>(i)] = target;
      moved = true;
    }
    if (!moved) break;
  }
  for (int c = 0; c < k; ++c) {
    const double norm = sums.row(c).norm();
    if (norm > 1e-12) res.centroids.row(c) = sums.row(c) / norm;
  }
}

Matrix seed_uniform(const Matrix& points, int k, std::mt19937_64& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(points.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  Matrix centroids(k, points.cols());
  for (int c = 0; c < k; ++c) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(c), idx.size() - 1);
    std::swap(idx[static_cast<std::size_t>(c)], idx[pick(rng)]);
    centroids.row(c) = points.row(idx[static_cast<std::size_t>(c)]);
  }
  return centroids;
}

KMeansResult lloyd(const Matrix& points, int k, int max_iters, bool plus_plus, std::mt19937_64& rng) {
  const Index n = points.rows();
  KMeansResult res;
  res.centroids = plus_plus ? seed_plus_plus(points, k, rng) : seed_uniform(points, k, rng);
  res.assignment.assign(static_cast<std::size_t>(n), -1);

  for (int iter = 0; iter < max_iters; ++iter) {
    const Matrix sims = points * res.centroids.transpose();
    bool changed = false;
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int c = argmax_row(sims.row(i).transpose());
      if (c != res.assignment[static_cast<std::size_t>(i)]) changed = true;
      res.assignment[static_cast<std::size_t>(i)] = c;
      ++counts[static_cast<std::size_t>(c)];
    }
    // Empty-cluster repair: steal the point farthest from its centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Index worst = -1;
      double worst_cos = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n; ++i) {
        const int own = res.assignment[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(own)] <= 1) continue;
        const double s = sims(i, own);
        if (s < worst_cos) {
          worst_cos = s;
          worst = i;
        }
      }
      if (worst < 0) break;
      --counts[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(worst)])];
      res.assignment[static_cast<std::size_t>(worst)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      res.centroids.row(c) = points.row(worst);
      changed = true;
    }
    Matrix sums = Matrix::Zero(k, points.cols());
    for (Index i = 0; i < n; ++i) sums.row(res.assignment[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c) {
      const double norm = sums.row(c).norm();
      if (norm > 1e-12) res.centroids.row(c) = sums.row(c) / norm;
    }
    if (!changed && iter > 0) break;
  }
  refine_transfers(points, k, max_iters, res);
  res.objective = 0.0;
  for (Index i = 0; i < n; ++i) {
    res.objective += points.row(i).dot(res.centroids.row(res.assignment[static_cast<std::size_t>(i)]));
  }
  return res;
}

// Exact search over every assignment with all k clusters non-empty; only
// called when k^n is small.
KMeansResult exhaustive(const Matrix& points, int k) {
  const Index n = points.rows();
  std::vector<int> a(static_cast<std::size_t>(n), 0), best_a;
  double best = -std::numeric_limits<double>::infinity();
  Matrix sums(k, points.cols());
  for (;;) {
    sums.setZero();
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(a[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])];
    }
    if (std::all_of(counts.begin(), counts.end(), [](int c) { return c > 0; })) {
      double obj = 0.0;
      for (int c = 0; c < k; ++c) obj += sums.row(c).norm();
      if (obj > best + 1e-12) {
        best = obj;
        best_a = a;
      }
    }
    Index pos = 0;
    while (pos < n && ++a[static_cast<std::size_t>(pos)] == k) a[static_cast<std::size_t>(pos++)] = 0;
    if (pos == n) break;
  }
  KMeansResult res;
  res.assignment = best_a;
  res.centroids = Matrix::Zero(k, points.cols());
  for (Index i = 0; i < n; ++i) res.centroids.row(best_a[static_cast<std::size_t>(i)]) += points.row(i);
  res.objective = 0.0;
  for (int c = 0; c < k; ++c) {
    const double norm = res.centroids.row(c).norm();
    if (norm > 1e-12) res.centroids.row(c) /= norm;
  }
  for (Index i = 0; i < n; ++i) {
    res.objective += points.row(i).dot(res.centroids.row(best_a[static_cast<std::size_t>(i)]));
  }
  return res;
}

// Moves members out of clusters holding more than `cap` until every cluster
// fits, always taking the single move with the highest cosine to a cluster
// that still has room.
void rebalance(const Matrix& points, const Matrix& centroids, std::vector<int>& assignment,
               std::int64_t cap) {
  const int k = static_cast<int>(centroids.rows());
  std::vector<std::int64_t> size(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++size[static_cast<std::size_t>(a)];
  const Matrix sims = points * centroids.transpose();
  for (;;) {
    int best_point = -1, best_target = -1;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (size[static_cast<std::size_t>(assignment[i])] <= cap) continue;
      for (int c = 0; c < k; ++c) {
        if (size[static_cast<std::size_t>(c)] >= cap) continue;
        const double s = sims(static_cast<Index>(i), c);
        if (s > best_sim) {
          best_sim = s;
          best_point = static_cast<int>(i);
          best_target = c;
        }
      }
    }
    if (best_point < 0) return;
    --size[static_cast<std::size_t>(assignment[static_cast<std::size_t>(best_point)])];
    assignment[static_cast<std::size_t>(best_point)] = best_target;
    ++size[static_cast<std::size_t>(best_target)];
  }
}

std::int64_t capacity_at(int v, int l, int depth) { return vocabulary_size(v, l - depth); }

class TreeBuilder {
 public:
  TreeBuilder(const CodeVectorMatrix& h, const TokenizerConfig& cfg) : h_(h), cfg_(cfg) {}

  std::vector<CodeTree::Node> run() {
    std::vector<int> all(static_cast<std::size_t>(h_.m()));
    std::iota(all.begin(), all.end(), 0);
    CodeTree::Node root;
    root.depth = 0;
    root.centroid = mean_direction(h_.rows(), all, h_.row(0).transpose());
    root.members = all;
    nodes_.push_back(std::move(root));
    expand(0);
    return std::move(nodes_);
  }

 private:
  void expand(int node_idx) {
    const int depth = nodes_[static_cast<std::size_t>(node_idx)].depth;
    const std::vector<int> members = nodes_[static_cast<std::size_t>(node_idx)].members;
    nodes_[static_cast<std::size_t>(node_idx)].children.assign(static_cast<std::size_t>(cfg_.v), -1);

    if (depth == cfg_.l - 1) {
      add_leaves(node_idx, members);
      return;
    }

    Matrix pts(static_cast<Index>(members.size()), h_.d());
    for (std::size_t i = 0; i < members.size(); ++i) pts.row(static_cast<Index>(i)) = h_.row(members[i]);
    KMeansConfig kc{mix_seed(cfg_.seed, static_cast<std::uint64_t>(node_idx)), cfg_.kmeans_iters,
                    cfg_.restarts};
    KMeansResult km = spherical_kmeans(pts, cfg_.v, kc);
    rebalance(pts, km.centroids, km.assignment, capacity_at(cfg_.v, cfg_.l, depth + 1));

    for (int c = 0; c < cfg_.v; ++c) {
      std::vector<int> local;
      for (std::size_t i = 0; i < members.size(); ++i) {
        if (km.assignment[i] == c) local.push_back(static_cast<int>(i));
      }
      if (local.empty()) continue;
      CodeTree::Node child;
      child.depth = depth + 1;
      child.parent = node_idx;
      child.token = c;
      child.centroid = mean_direction(pts, local, km.centroids.row(c).transpose());
      for (int i : local) child.members.push_back(members[static_cast<std::size_t>(i)]);
      std::sort(child.members.begin(), child.members.end());
      const int child_idx = static_cast<int>(nodes_.size());
      nodes_.push_back(std::move(child));
      nodes_[static_cast<std::size_t>(node_idx)].children[static_cast<std::size_t>(c)] = child_idx;
      expand(child_idx);
    }
  }

  void add_leaves(int node_idx, const std::vector<int>& members) {
    if (static_cast<int>(members.size()) > cfg_.v) {
      throw CapacityError("tree node at depth " + std::to_string(cfg_.l - 1) + " holds " +
                          std::to_string(members.size()) + " identities, capacity " +
                          std::to_string(cfg_.v));
    }
    const Vector centroid = nodes_[static_cast<std::size_t>(node_idx)].centroid;
    std::vector<std::pair<double, int>> ranked;
    for (int id : members) ranked.emplace_back(h_.row(id).dot(centroid), id);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      CodeTree::Node leaf;
      leaf.depth = cfg_.l;
      leaf.parent = node_idx;
      leaf.token = static_cast<int>(r);
      leaf.centroid = h_.row(ranked[r].second).transpose();
      leaf.members = {ranked[r].second};
      leaf.identity = ranked[r].second;
      const int leaf_idx = static_cast<int>(nodes_.size());
      nodes_.push_back(std::move(leaf));
      nodes_[static_cast<std::size_t>(node_idx)].children[r] = leaf_idx;
    }
  }

  const CodeVectorMatrix& h_;
  const TokenizerConfig& cfg_;
  std::vector<CodeTree::Node> nodes_;
};

void check_lv(int l, int v) {
  if (l < 1) throw ConfigError("code length l must be >= 1");
  if (v < 2) throw ConfigError("token range v must be >= 2");
}

}  // namespace

KMeansResult spherical_kmeans(const Matrix& points, int k, const KMeansConfig& cfg) {
  if (k <= 0) throw ConfigError("spherical_kmeans: k must be >= 1, got " + std::to_string(k));
  const Index n = points.rows();
  if (n == 0) throw DegenerateInputError("spherical_kmeans: no points");

  if (k >= n) {
    KMeansResult res;
    res.assignment.resize(static_cast<std::size_t>(n));
    std::iota(res.assignment.begin(), res.assignment.end(), 0);
    res.centroids = points.row(0).replicate(k, 1);
    res.centroids.topRows(n) = points;
    res.objective = static_cast<double>(n);
    return res;
  }

  if (std::pow(static_cast<double>(k), static_cast<double>(n)) <= kExhaustiveLimit) {
    return exhaustive(points, k);
  }

  KMeansResult best;
  best.objective = -std::numeric_limits<double>::infinity();
  const int restarts = std::max(1, cfg.restarts);
  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    KMeansResult res = lloyd(points, k, std::max(1, cfg.max_iters), r % 2 == 0, rng);
    if (res.objective > best.objective + 1e-12) best = std::move(res);
  }
  return best;
}

std::int64_t vocabulary_size(int v, int l) {
  std::int64_t size = 1;
  for (int j = 0; j < l; ++j) {
    if (size > std::numeric_limits<std::int64_t>::max() / v) {
      return std::numeric_limits<std::int64_t>::max();
    }
    size *= v;
  }
  return size;
}

CodeTree::CodeTree(int l, int v, int m, std::vector<Node> nodes)
    : l_(l), v_(v), m_(m), nodes_(std::move(nodes)) {
  check_lv(l_, v_);
  if (nodes_.empty()) throw FormatError("code tree has no nodes");
  leaf_of_.assign(static_cast<std::size_t>(m_), -1);
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const int id = nodes_[n].identity;
    if (id < 0) continue;
    if (id >= m_) throw FormatError("leaf identity " + std::to_string(id) + " out of range");
    if (leaf_of_[static_cast<std::size_t>(id)] >= 0) {
      throw FormatError("identity " + std::to_string(id) + " appears in two leaves");
    }
    leaf_of_[static_cast<std::size_t>(id)] = static_cast<int>(n);
  }
  validate();
}

void CodeTree::validate() const {
  for (int id = 0; id < m_; ++id) {
    if (leaf_of_[static_cast<std::size_t>(id)] < 0) {
      throw FormatError("identity " + std::to_string(id) + " has no leaf");
    }
  }
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const Node& node = nodes_[n];
    const auto cap = capacity_at(v_, l_, node.depth);
    if (static_cast<std::int64_t>(node.members.size()) > cap) {
      throw CapacityError("node at depth " + std::to_string(node.depth) + " holds " +
                          std::to_string(node.members.size()) + " identities, capacity " +
                          std::to_string(cap));
    }
    if (node.depth == l_) {
      if (node.identity < 0) throw FormatError("leaf without identity");
      continue;
    }
    if (node.identity >= 0) {
      throw FormatError("identity " + std::to_string(node.identity) + " sits at depth " +
                        std::to_string(node.depth) + ", expected " + std::to_string(l_));
    }
    if (static_cast<int>(node.children.size()) != v_) {
      throw FormatError("internal node without v child slots");
    }
    for (int c = 0; c < v_; ++c) {
      const int child = node.children[static_cast<std::size_t>(c)];
      if (child < 0) continue;
      if (child >= static_cast<int>(nodes_.size()) ||
          nodes_[static_cast<std::size_t>(child)].parent != static_cast<int>(n) ||
          nodes_[static_cast<std::size_t>(child)].depth != node.depth + 1 ||
          nodes_[static_cast<std::size_t>(child)].token != c) {
        throw FormatError("inconsistent child link in code tree");
      }
    }
  }
}

CodeTree CodeTree::from_codes(const std::vector<IdentityCode>& codes, const CodeVectorMatrix& h,
                              int l, int v) {
  check_lv(l, v);
  const int m = static_cast<int>(codes.size());
  if (h.m() != m) throw DimensionError("code count differs from code vector rows");
  std::vector<Node> nodes(1);
  nodes[0].depth = 0;
  nodes[0].children.assign(static_cast<std::size_t>(v), -1);

  for (const auto& code : codes) {
    if (code.identity < 0 || code.identity >= m) throw RangeError("code identity out of range");
    if (static_cast<int>(code.tokens.size()) != l) throw DimensionError("code length differs from l");
    int cur = 0;
    nodes[0].members.push_back(code.identity);
    for (int j = 0; j < l; ++j) {
      const int tok = code.tokens[static_cast<std::size_t>(j)];
      if (tok < 0 || tok >= v) throw RangeError("token " + std::to_string(tok) + " outside [0, v)");
      int next = nodes[static_cast<std::size_t>(cur)].children[static_cast<std::size_t>(tok)];
      if (next < 0) {
        Node child;
        child.depth = j + 1;
        child.parent = cur;
        child.token = tok;
        if (j + 1 < l) child.children.assign(static_cast<std::size_t>(v), -1);
        next = static_cast<int>(nodes.size());
        nodes.push_back(std::move(child));
        nodes[static_cast<std::size_t>(cur)].children[static_cast<std::size_t>(tok)] = next;
      } else if (j + 1 == l) {
        throw ConfigError("two identities share code; codes must be injective");
      }
      nodes[static_cast<std::size_t>(next)].members.push_back(code.identity);
      cur = next;
    }
    nodes[static_cast<std::size_t>(cur)].identity = code.identity;
  }
  for (auto& node : nodes) {
    std::sort(node.members.begin(), node.members.end());
    node.centroid = mean_direction(h.rows(), node.members, h.row(node.members.front()).transpose());
  }
  return CodeTree(l, v, m, std::move(nodes));
}

CodeTree build_code_tree(const CodeVectorMatrix& h, const TokenizerConfig& cfg) {
  check_lv(cfg.l, cfg.v);
  const std::int64_t cap = vocabulary_size(cfg.v, cfg.l);
  if (cap < h.m()) {
    throw CapacityError("vocabulary v^l = " + std::to_string(cfg.v) + "^" + std::to_string(cfg.l) +
                        " = " + std::to_string(cap) + " cannot hold m = " + std::to_string(h.m()) +
                        " identities");
  }
  TreeBuilder builder(h, cfg);
  return CodeTree(cfg.l, cfg.v, static_cast<int>(h.m()), builder.run());
}

std::vector<IdentityCode> assign_codes(const CodeTree& tree) {
  std::vector<IdentityCode> codes(static_cast<std::size_t>(tree.m()));
  const auto& nodes = tree.nodes();
  for (int id = 0; id < tree.m(); ++id) {
    IdentityCode& code = codes[static_cast<std::size_t>(id)];
    code.identity = id;
    code.tokens.assign(static_cast<std::size_t>(tree.l()), 0);
    int cur = tree.leaf_of()[static_cast<std::size_t>(id)];
    while (nodes[static_cast<std::size_t>(cur)].parent >= 0) {
      const auto& node = nodes[static_cast<std::size_t>(cur)];
      code.tokens[static_cast<std::size_t>(node.depth - 1)] = node.token;
      cur = node.parent;
    }
  }
  return codes;
}

std::optional<int> decode(std::span<const int> tokens, const CodeTree& tree) {
  if (static_cast<int>(tokens.size()) != tree.l()) {
    throw DimensionError("code has length " + std::to_string(tokens.size()) + ", tree expects " +
                         std::to_string(tree.l()));
  }
  for (int tok : tokens) {
    if (tok < 0 || tok >= tree.v()) {
      throw RangeError("token " + std::to_string(tok) + " outside [0, " + std::to_string(tree.v()) +
                       ")");
    }
  }
  const auto& nodes = tree.nodes();
  int cur = 0;
  for (int tok : tokens) {
    cur = nodes[static_cast<std::size_t>(cur)].children[static_cast<std::size_t>(tok)];
    if (cur < 0) return std::nullopt;
  }
  return nodes[static_cast<std::size_t>(cur)].identity;
}

LengthSuggestion suggest_length(std::int64_t m) {
  constexpr int kLow = 5, kHigh = 25;
  constexpr double kMid = 0.5 * (kLow + kHigh);
  if (m < 2) throw ConfigError("suggest_length needs m >= 2");

  LengthSuggestion best_in, best_out;
  double best_in_gap = std::numeric_limits<double>::infinity();
  int best_out_gap = std::numeric_limits<int>::max();
  for (int l = 2; l <= 64; ++l) {
    // smallest v with v^l >= m, i.e. ceil(m^(1/l))
    int v = std::max(2, static_cast<int>(std::floor(std::pow(static_cast<double>(m), 1.0 / l))));
    while (v > 2 && vocabulary_size(v - 1, l) >= m) --v;
    while (vocabulary_size(v, l) < m) ++v;
    if (v > kLow && v < kHigh) {
      const double gap = std::abs(v - kMid);
      if (gap < best_in_gap) {
        best_in_gap = gap;
        best_in = {l, v, true};
      }
    } else {
      const int gap = v <= kLow ? kLow + 1 - v : v - (kHigh - 1);
      if (gap < best_out_gap) {
        best_out_gap = gap;
        best_out = {l, v, false};
      }
    }
    if (v == 2) break;
  }
  return best_in.l > 0 ? best_in : best_out;
}

std::vector<IdentityCode> random_codes(int m, int l, int v, std::uint64_t seed) {
  check_lv(l, v);
  const std::int64_t space = vocabulary_size(v, l);
  if (space < m) throw CapacityError("v^l smaller than m for atomic codes");
  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> picks;
  if (space <= 4'000'000) {
    std::vector<std::int64_t> all(static_cast<std::size_t>(space));
    std::iota(all.begin(), all.end(), std::int64_t{0});
    for (int i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::int64_t> pick(i, space - 1);
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
    }
    picks.assign(all.begin(), all.begin() + m);
  } else {
    std::unordered_set<std::int64_t> seen;
    std::uniform_int_distribution<std::int64_t> pick(0, space - 1);
    while (static_cast<int>(picks.size()) < m) {
      const auto x = pick(rng);
      if (seen.insert(x).second) picks.push_back(x);
    }
  }
  std::vector<IdentityCode> codes(static_cast<std::size_t>(m));
  for (int id = 0; id < m; ++id) {
    auto& code = codes[static_cast<std::size_t>(id)];
    code.identity = id;
    code.tokens.assign(static_cast<std::size_t>(l), 0);
    std::int64_t x = picks[static_cast<std::size_t>(id)];
    for (int j = l - 1; j >= 0; --j) {
      code.tokens[static_cast<std::size_t>(j)] = static_cast<int>(x % v);
      x /= v;
    }
  }
  return codes;
}

void write_codes(const std::filesystem::path& path, const std::vector<IdentityCode>& codes, int l,
                 int v, const std::string& config_hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "#l=" << l << " v=" << v << " m=" << codes.size() << '\n';
  if (!config_hash.empty()) out << "#config_hash=" << config_hash << '\n';
  for (const auto& code : codes) {
    out << code.identity;
    for (int tok : code.tokens) out << ',' << tok;
    out << '\n';
  }
}

CodesFile read_codes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  CodesFile file;
  std::string line;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "#l=%d v=%d m=%d", &file.l, &file.v, &file.m) != 3) {
    throw FormatError("codes file " + path.string() + ": missing '#l= v= m=' header");
  }
  check_lv(file.l, file.v);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "#config_hash=";
      if (line.rfind(key, 0) == 0) file.config_hash = line.substr(key.size());
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    IdentityCode code;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      int value = 0;
      try {
        value = std::stoi(cell);
      } catch (const std::exception&) {
        throw FormatError("codes file: bad integer '" + cell + "'");
      }
      if (first) {
        code.identity = value;
        first = false;
      } else {
        code.tokens.push_back(value);
      }
    }
    if (static_cast<int>(code.tokens.size()) != file.l) {
      throw FormatError("codes file: identity " + std::to_string(code.identity) + " has " +
                        std::to_string(code.tokens.size()) + " tokens, header says l=" +
                        std::to_string(file.l));
    }
    file.codes.push_back(std::move(code));
  }
  if (static_cast<int>(file.codes.size()) != file.m) {
    throw FormatError("codes file: header m=" + std::to_string(file.m) + " but " +
                      std::to_string(file.codes.size()) + " rows");
  }
  std::sort(file.codes.begin(), file.codes.end(),
            [](const auto& a, const auto& b) { return a.identity < b.identity; });
  for (int id = 0; id < file.m; ++id) {
    if (file.codes[static_cast<std::size_t>(id)].identity != id) {
      throw FormatError("codes file: identities are not dense 0..m-1");
    }
  }
  return file;
}

namespace {

Json node_to_json(const CodeTree& tree, int idx) {
  const auto& node = tree.nodes()[static_cast<std::size_t>(idx)];
  Json j;
  j["token"] = node.token;
  j["depth"] = node.depth;
  j["centroid_row"] = idx;
  if (node.identity >= 0) {
    j["identity"] = node.identity;
    return j;
  }
  Json children = Json::array();
  for (int child : node.children) {
    if (child >= 0) children.push_back(node_to_json(tree, child));
  }
  j["children"] = std::move(children);
  return j;
}

int json_to_nodes(const Json& j, int parent, int v, int l, const Matrix& centroids,
                  std::vector<CodeTree::Node>& nodes) {
  CodeTree::Node node;
  node.depth = j.at("depth").get<int>();
  node.token = j.at("token").get<int>();
  node.parent = parent;
  const int row = j.at("centroid_row").get<int>();
  if (row < 0 || row >= centroids.rows()) throw FormatError("tree: centroid_row out of range");
  node.centroid = centroids.row(row).transpose();
  node.centroid.normalize();
  const int idx = static_cast<int>(nodes.size());
  if (j.contains("identity")) {
    node.identity = j.at("identity").get<int>();
    node.members = {node.identity};
    nodes.push_back(std::move(node));
    return idx;
  }
  node.children.assign(static_cast<std::size_t>(v), -1);
  nodes.push_back(std::move(node));
  std::vector<int> members;
  for (const auto& cj : j.at("children")) {
    const int child = json_to_nodes(cj, idx, v, l, centroids, nodes);
    const int tok = nodes[static_cast<std::size_t>(child)].token;
    if (tok < 0 || tok >= v) throw FormatError("tree: child token out of range");
    nodes[static_cast<std::size_t>(idx)].children[static_cast<std::size_t>(tok)] = child;
    const auto& cm = nodes[static_cast<std::size_t>(child)].members;
    members.insert(members.end(), cm.begin(), cm.end());
  }
  std::sort(members.begin(), members.end());
  nodes[static_cast<std::size_t>(idx)].members = std::move(members);
  return idx;
}

}  // namespace

void write_tree(const std::filesystem::path& path, const std::filesystem::path& centroid_path,
                const CodeTree& tree, const std::string& config_hash) {
  Matrix centroids(static_cast<Index>(tree.nodes().size()), tree.root().centroid.size());
  for (std::size_t n = 0; n < tree.nodes().size(); ++n) {
    centroids.row(static_cast<Index>(n)) = tree.nodes()[n].centroid.transpose();
  }
  write_cvm(centroid_path, centroids);

  Json doc;
  doc["format"] = "gif-code-tree/1";
  doc["l"] = tree.l();
  doc["v"] = tree.v();
  doc["m"] = tree.m();
  doc["config_hash"] = config_hash;
  doc["centroids"] = centroid_path.filename().string();
  doc["root"] = node_to_json(tree, 0);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
}

CodeTree read_tree(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw FormatError("tree file " + path.string() + ": " + e.what());
  }
  try {
    const int l = doc.at("l").get<int>();
    const int v = doc.at("v").get<int>();
    const int m = doc.at("m").get<int>();
    const Matrix centroids = read_cvm(path.parent_path() / doc.at("centroids").get<std::string>());
    std::vector<CodeTree::Node> nodes;
    json_to_nodes(doc.at("root"), -1, v, l, centroids, nodes);
    return CodeTree(l, v, m, std::move(nodes));
  } catch (const Json::exception& e) {
    throw FormatError("tree file " + path.string() + ": " + e.what());
  }
}

}  // namespace gif
