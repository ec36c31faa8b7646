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

#include "gif/cost_model.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "gif/error.hpp"
#include "gif/tokenizer.hpp"

namespace gif {
namespace {

constexpr double kFloatBytes = 4.0;
// weights + gradient + momentum
constexpr double kOptimizerCopies = 3.0;

void check_md(std::int64_t m, std::int64_t d) {
  if (m < 1 || d < 1) throw ConfigError("cost model needs m >= 1 and d >= 1");
}

Method resolve(const Method& method, std::int64_t m) {
  Method r = method;
  if (r.kind == MethodKind::kGif && (r.l <= 0 || r.v <= 0)) {
    if (m < 2) {
      r.l = 1;
      r.v = 2;
    } else {
      const auto s = suggest_length(m);
      r.l = s.l;
      r.v = s.v;
    }
  }
  return r;
}

}  // namespace

std::string Method::tag() const {
  std::ostringstream os;
  switch (kind) {
    case MethodKind::kFc:
      os << "fc";
      break;
    case MethodKind::kSubset:
      os << "subset:" << alpha;
      break;
    case MethodKind::kGif:
      os << "gif:" << l << "x" << v;
      break;
  }
  return os.str();
}

double classifier_params(const Method& method, std::int64_t m, std::int64_t d) {
  check_md(m, d);
  const double md = static_cast<double>(m) * static_cast<double>(d);
  switch (method.kind) {
    case MethodKind::kFc:
      return md;
    case MethodKind::kSubset:
      if (!(method.alpha > 0.0 && method.alpha < 1.0)) {
        throw ConfigError("subset softmax needs 0 < alpha < 1");
      }
      return md;
    case MethodKind::kGif: {
      const Method r = resolve(method, m);
      if (r.l < 1 || r.v < 2) throw ConfigError("gif needs l >= 1 and v >= 2");
      if (vocabulary_size(r.v, r.l) < m) {
        throw CapacityError("gif vocabulary " + std::to_string(r.v) + "^" + std::to_string(r.l) +
                            " cannot hold m = " + std::to_string(m));
      }
      return static_cast<double>(r.l) * r.v * static_cast<double>(d);
    }
  }
  return 0.0;
}

CostProfile cost_profile(const Method& method, std::int64_t m, std::int64_t d,
                         const CostOptions& opts) {
  const Method r = resolve(method, m);
  CostProfile p;
  p.method = r.tag();
  p.m = m;
  p.d = d;
  p.classifier_params = classifier_params(r, m, d);
  const double dd = static_cast<double>(d);
  const double batch = static_cast<double>(opts.batch_size);
  double logits = 0.0;  // logits computed per sample
  double trained = 0.0; // weights that carry gradient and momentum
  switch (r.kind) {
    case MethodKind::kFc:
      logits = static_cast<double>(m);
      trained = p.classifier_params;
      break;
    case MethodKind::kSubset:
      logits = r.alpha * static_cast<double>(m);
      trained = r.alpha * p.classifier_params;
      break;
    case MethodKind::kGif:
      p.l = r.l;
      p.v = r.v;
      logits = static_cast<double>(r.l) * r.v;
      trained = p.classifier_params;
      // three d x d layers with bias per token head
      p.head_params = static_cast<double>(r.l) * 3.0 * (dd * dd + dd);
      break;
  }
  p.per_sample_logit_flops = 2.0 * logits * dd;
  p.estimated_classifier_bytes = kFloatBytes * (p.classifier_params +
                                                (kOptimizerCopies - 1.0) * trained +
                                                2.0 * batch * logits);
  return p;
}

std::vector<CostProfile> scaling_table(std::span<const std::int64_t> m_list, std::int64_t d,
                                       std::span<const Method> methods, const CostOptions& opts) {
  for (std::size_t i = 1; i < m_list.size(); ++i) {
    if (m_list[i] < m_list[i - 1]) throw ConfigError("scaling_table needs ascending m values");
  }
  std::vector<CostProfile> rows;
  for (std::int64_t m : m_list) {
    for (const auto& method : methods) rows.push_back(cost_profile(method, m, d, opts));
  }
  return rows;
}

void write_scaling_csv(std::ostream& out, std::span<const CostProfile> rows) {
  out << "m,method,params,flops,bytes\n";
  out << std::setprecision(15);
  for (const auto& r : rows) {
    out << r.m << ',' << r.method << ',' << r.classifier_params << ','
        << r.per_sample_logit_flops << ',' << r.estimated_classifier_bytes << '\n';
  }
}

}  // namespace gif
