/* Copyright 2026 The RPT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Umbrella header.

#pragma once

#include "rpt/adapt.hpp"
#include "rpt/color.hpp"
#include "rpt/config.hpp"
#include "rpt/error.hpp"
#include "rpt/metrics.hpp"
#include "rpt/parallel.hpp"
#include "rpt/random.hpp"
#include "rpt/regularizers.hpp"
#include "rpt/render.hpp"
#include "rpt/scene.hpp"
#include "rpt/seg_model.hpp"
#include "rpt/slic.hpp"
#include "rpt/spatial_logic.hpp"
#include "rpt/statistics.hpp"
#include "rpt/tensor.hpp"
#include "rpt/tensor_io.hpp"
