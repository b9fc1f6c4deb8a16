// Copyright 2026 The calikit Authors.
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

#ifndef CALIKIT_CALIKIT_HPP_
#define CALIKIT_CALIKIT_HPP_

#include "calikit/calirare.hpp"
#include "calikit/error.hpp"
#include "calikit/gcn.hpp"
#include "calikit/graph.hpp"
#include "calikit/graph_io.hpp"
#include "calikit/influence.hpp"
#include "calikit/jackknife.hpp"
#include "calikit/metrics.hpp"
#include "calikit/model.hpp"
#include "calikit/random.hpp"
#include "calikit/train.hpp"
#include "calikit/uncertainty.hpp"

#endif  // CALIKIT_CALIKIT_HPP_
