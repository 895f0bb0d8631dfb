// Copyright 2026 The SOMNet Authors. All Rights Reserved.
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

// Umbrella header.

#pragma once

#include "somnet/config.hpp"
#include "somnet/data_model.hpp"
#include "somnet/dataset_io.hpp"
#include "somnet/error.hpp"
#include "somnet/eval.hpp"
#include "somnet/inspect.hpp"
#include "somnet/kmeans.hpp"
#include "somnet/memory.hpp"
#include "somnet/metrics.hpp"
#include "somnet/model.hpp"
#include "somnet/random.hpp"
#include "somnet/trainer.hpp"
