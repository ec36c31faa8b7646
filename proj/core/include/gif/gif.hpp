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

#include "gif/baseline_ce.hpp"
#include "gif/checkpoint.hpp"
#include "gif/cost_model.hpp"
#include "gif/cvm_io.hpp"
#include "gif/data_synth.hpp"
#include "gif/error.hpp"
#include "gif/gif_model.hpp"
#include "gif/nn.hpp"
#include "gif/sphere.hpp"
#include "gif/tokenizer.hpp"
