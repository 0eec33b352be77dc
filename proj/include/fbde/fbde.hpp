// Copyright 2026 The fbde Authors.
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

#ifndef FBDE_FBDE_HPP
#define FBDE_FBDE_HPP

#include "fbde/boosted_density.hpp"
#include "fbde/data.hpp"
#include "fbde/engine.hpp"
#include "fbde/guarantees.hpp"
#include "fbde/numeric.hpp"
#include "fbde/serialize.hpp"
#include "fbde/tabular.hpp"
#include "fbde/weak_learner.hpp"

#endif  // FBDE_FBDE_HPP
