/* Copyright 2026 The bigraph Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "bigraph/builders.hpp"
#include "bigraph/config.hpp"
#include "bigraph/cost_sim.hpp"
#include "bigraph/dispatcher.hpp"
#include "bigraph/error.hpp"
#include "bigraph/frame.hpp"
#include "bigraph/graph.hpp"
#include "bigraph/graph_json.hpp"
#include "bigraph/kernels.hpp"
#include "bigraph/kinds.hpp"
#include "bigraph/location.hpp"
#include "bigraph/partition.hpp"
#include "bigraph/profiler.hpp"
#include "bigraph/registry.hpp"
#include "bigraph/schedule.hpp"
#include "bigraph/tensor.hpp"
#include "bigraph/transport.hpp"
