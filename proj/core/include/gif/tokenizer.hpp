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

#pragma once

// Hierarchical spherical k-means tokenization of code vectors into
// fixed-length identity codes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gif/sphere.hpp"

namespace gif {

struct KMeansConfig {
  std::uint64_t seed = 0;
  int max_iters = 100;
  int restarts = 8;
};

struct KMeansResult {
  std::vector<int> assignment;  // point -> cluster in [0, k)
  Matrix centroids;             // k x d, unit rows
  double objective = 0.0;       // sum of cos(point, assigned centroid)
};

/// Lloyd iterations under cosine similarity, seeded by k-means++ on even
/// restarts and by uniformly drawn points on odd ones, then
/// single-point transfer refinement, over `restarts` independent runs; the
/// best objective wins. Problems with k^n <= 65536 are solved exactly by
/// enumeration. Empty clusters are
/// reseeded at the point farthest from its centroid. When k >= n every
/// point gets its own cluster (point i -> cluster i) and the unused
/// centroids are set to the first point's direction.
/// `points` rows must be unit norm.
KMeansResult spherical_kmeans(const Matrix& points, int k, const KMeansConfig& cfg);

struct TokenizerConfig {
  int l = 0;  // code length
  int v = 0;  // token range
  std::uint64_t seed = 0;
  int kmeans_iters = 100;
  int restarts = 8;
};

struct IdentityCode {
  int identity = -1;
  std::vector<int> tokens;

  bool operator==(const IdentityCode&) const = default;
};

/// Tree over identities. Depth 0 is the root; nodes at depth j (1..l) sit
/// under token c_j, so a root-to-leaf path spells a full code. Leaves at
/// depth l each hold one identity.
class CodeTree {
 public:
  struct Node {
    int depth = 0;
    int parent = -1;
    int token = -1;             // index under parent, -1 for the root
    Vector centroid;            // unit norm
    std::vector<int> children;  // size v, -1 where empty (internal nodes only)
    std::vector<int> members;   // identities in this subtree, ascending
    int identity = -1;          // leaves only
  };

  CodeTree(int l, int v, int m, std::vector<Node> nodes);

  int l() const { return l_; }
  int v() const { return v_; }
  int m() const { return m_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_.front(); }
  /// Leaf node index of every identity.
  const std::vector<int>& leaf_of() const { return leaf_of_; }

  /// Throws CapacityError / FormatError when a structural invariant fails:
  /// path length l, one leaf per identity, depth-j capacity v^(l-j).
  void validate() const;

  /// Builds a tree from an explicit code assignment (codes[y] for identity
  /// y). Node centroids are the normalized member means of `h`.
  static CodeTree from_codes(const std::vector<IdentityCode>& codes, const CodeVectorMatrix& h,
                             int l, int v);

 private:
  int l_, v_, m_;
  std::vector<Node> nodes_;
  std::vector<int> leaf_of_;
};

/// v^l, saturating at INT64_MAX.
std::int64_t vocabulary_size(int v, int l);

/// Recursive spherical k-means (k = v) for levels 1..l-1, capacity
/// rebalancing, and a deterministic leaf rule: members of a depth l-1 node
/// are numbered by descending cosine similarity to that node's centroid.
/// Throws CapacityError when v^l < m.
CodeTree build_code_tree(const CodeVectorMatrix& h, const TokenizerConfig& cfg);

/// Codes of every identity, indexed by identity.
std::vector<IdentityCode> assign_codes(const CodeTree& tree);

/// Identity at the leaf spelled by `tokens`, or nullopt if that path is not
/// populated. Throws RangeError on a token outside [0, v) and
/// DimensionError on a length other than l.
std::optional<int> decode(std::span<const int> tokens, const CodeTree& tree);
inline std::optional<int> decode(const IdentityCode& code, const CodeTree& tree) {
  return decode(code.tokens, tree);
}

struct LengthSuggestion {
  int l = 0;
  int v = 0;
  bool in_band = false;  // false -> fallback to the nearest-band candidate
};

/// Picks (l, v = ceil(m^(1/l))) for l >= 2 with 5 < v < 25, preferring the
/// candidate whose v is closest to the middle of the band; falls back to
/// the candidate nearest the band (flagged) when none qualifies.
LengthSuggestion suggest_length(std::int64_t m);

/// Random injective codes drawn uniformly from [0, v)^l (atomic codes).
std::vector<IdentityCode> random_codes(int m, int l, int v, std::uint64_t seed);

// Codes file: header "#l=<l> v=<v> m=<m>", optional further '#' lines, then
// one "identity,c_1,...,c_l" line per identity.
struct CodesFile {
  int l = 0, v = 0, m = 0;
  std::vector<IdentityCode> codes;
  std::string config_hash;
};

void write_codes(const std::filesystem::path& path, const std::vector<IdentityCode>& codes,
                 int l, int v, const std::string& config_hash = {});
CodesFile read_codes(const std::filesystem::path& path);

/// Tree file: nested JSON node records. Centroids go to a CVM1 sidecar at
/// `centroid_path`; each node refers to its row there.
void write_tree(const std::filesystem::path& path, const std::filesystem::path& centroid_path,
                const CodeTree& tree, const std::string& config_hash = {});
CodeTree read_tree(const std::filesystem::path& path);

}  // namespace gif
