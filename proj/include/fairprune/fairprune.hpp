// Copyright 2026 The fairprune Authors.
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

#include "fairprune/dual.hpp"
#include "fairprune/data.hpp"
#include "fairprune/model.hpp"
#include "fairprune/train.hpp"
#include "fairprune/diff.hpp"
#include "fairprune/spectrum.hpp"
#include "fairprune/prune.hpp"
#include "fairprune/audit.hpp"
#include "fairprune/mitigate.hpp"
#include "fairprune/stats.hpp"
#include "fairprune/io.hpp"
#include "fairprune/harness.hpp"
