/* Copyright 2026 The MLN Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#ifndef MLN_MLN_HPP_
#define MLN_MLN_HPP_

#include "mln/adam.hpp"
#include "mln/autodiff.hpp"
#include "mln/checkpoint.hpp"
#include "mln/config.hpp"
#include "mln/embedding.hpp"
#include "mln/episodes.hpp"
#include "mln/error.hpp"
#include "mln/evaluator.hpp"
#include "mln/linalg.hpp"
#include "mln/matrix.hpp"
#include "mln/model.hpp"
#include "mln/nulling_head.hpp"
#include "mln/rng.hpp"
#include "mln/trainer.hpp"

#endif  // MLN_MLN_HPP_
