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

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "gif/cost_model.hpp"
#include "gif/error.hpp"
#include "gif/tokenizer.hpp"

using namespace gif;

TEST_SUITE("cost_model") {

TEST_CASE("classifier parameter examples") {
  CHECK(classifier_params(Method::fc(), 1000000, 512) == 5.12e8);
  CHECK(classifier_params(Method::gif(6, 10), 1000000, 512) == 30720.0);
  CHECK(classifier_params(Method::gif(1, 5000), 5000, 64) == classifier_params(Method::fc(), 5000, 64));
  CHECK(classifier_params(Method::subset(0.3), 1000, 8) == 8000.0);
  CHECK_THROWS_AS(classifier_params(Method::gif(2, 10), 101, 8), CapacityError);
  CHECK_THROWS_AS(classifier_params(Method::subset(1.0), 10, 8), ConfigError);
  CHECK_THROWS_AS(classifier_params(Method::fc(), 0, 8), ConfigError);
}

TEST_CASE("profile fields") {
  const auto fc = cost_profile(Method::fc(), 1000, 64);
  CHECK(fc.method == "fc");
  CHECK(fc.per_sample_logit_flops == 2.0 * 1000 * 64);
  CHECK(fc.estimated_classifier_bytes == 4.0 * 3.0 * 1000 * 64);
  const auto sub = cost_profile(Method::subset(0.3), 1000, 64);
  CHECK(sub.method == "subset:0.3");
  CHECK(sub.per_sample_logit_flops == doctest::Approx(0.3 * fc.per_sample_logit_flops));
  const auto gif = cost_profile(Method::gif(), 1000, 64);
  CHECK(gif.l == 3);
  CHECK(gif.v == 10);
  CHECK(gif.method == "gif:3x10");
  CHECK(gif.head_params == 3.0 * 3.0 * (64.0 * 64.0 + 64.0));
  CHECK(gif.classifier_params == 3 * 10 * 64);
}

TEST_CASE("gif counts do not depend on m once l and v are fixed") {
  for (std::int64_t m : {10, 100, 999, 1000}) {
    CHECK(cost_profile(Method::gif(3, 10), m, 32).classifier_params == 960.0);
  }
}

TEST_CASE("scaling table shape") {
  const std::vector<std::int64_t> ms{1000, 10000, 100000, 1000000, 10000000};
  const std::vector<Method> methods{Method::fc(), Method::subset(0.3), Method::gif()};
  const auto rows = scaling_table(ms, 512, methods);
  REQUIRE(rows.size() == 15);
  for (std::size_t i = 1; i < ms.size(); ++i) {
    const auto& fc_prev = rows[3 * (i - 1)];
    const auto& fc_cur = rows[3 * i];
    CHECK(fc_cur.classifier_params == 10.0 * fc_prev.classifier_params);
    const auto& g_prev = rows[3 * (i - 1) + 2];
    const auto& g_cur = rows[3 * i + 2];
    CHECK(g_cur.classifier_params / g_prev.classifier_params <= 2.0);
    CHECK(rows[3 * i + 1].per_sample_logit_flops == doctest::Approx(0.3 * fc_cur.per_sample_logit_flops));
  }
  const std::vector<std::int64_t> bad{10, 5};
  CHECK_THROWS_AS(scaling_table(bad, 8, methods), ConfigError);
}

TEST_CASE("doubling m doubles fc params while fixed gif heads stay flat") {
  for (std::int64_t m = 1000; m <= 100000000; m *= 7) {
    CHECK(classifier_params(Method::fc(), 2 * m, 128) == 2.0 * classifier_params(Method::fc(), m, 128));
    CHECK(classifier_params(Method::gif(9, 10), 2 * m, 128) == classifier_params(Method::gif(9, 10), m, 128));
  }
}

TEST_CASE("squaring a large m at most doubles suggested gif params") {
  for (std::int64_t m : {100000LL, 300000LL, 1000000LL, 10000000LL, 100000000LL, 1000000000LL}) {
    CAPTURE(m);
    const double a = classifier_params(Method::gif(), m, 128);
    const double b = classifier_params(Method::gif(), m * m, 128);
    CHECK(b / a <= 2.5);
  }
}

TEST_CASE("out-of-memory regime") {
  const double budget = 8.0 * 80e9;
  CostOptions opts;
  opts.batch_size = 8 * 512;
  const auto fc1 = cost_profile(Method::fc(), 1000000, 512, opts);
  const auto fc64 = cost_profile(Method::fc(), 64000000, 512, opts);
  const auto g64 = cost_profile(Method::gif(), 64000000, 512, opts);
  CHECK(fc1.estimated_classifier_bytes < budget);
  CHECK(fc64.estimated_classifier_bytes > budget);
  CHECK(g64.classifier_params * 4.0 < 1e6);
  // Weights, gradient and momentum alone.
  CHECK(cost_profile(Method::fc(), 64000000, 512).estimated_classifier_bytes == 4.0 * 3.0 * 64e6 * 512);
}

TEST_CASE("csv output") {
  const std::vector<std::int64_t> ms{100};
  const std::vector<Method> methods{Method::fc(), Method::gif(2, 10)};
  const auto rows = scaling_table(ms, 4, methods);
  std::ostringstream os;
  write_scaling_csv(os, rows);
  CHECK(os.str() == "m,method,params,flops,bytes\n100,fc,400,800,4800\n100,gif:2x10,80,160,960\n");
}

}  // TEST_SUITE
