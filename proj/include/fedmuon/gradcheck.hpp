#pragma once

#include <functional>

#include "fedmuon/param_set.hpp"

namespace fedmuon {

using Objective = std::function<double(const ParamSet&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h over every scalar.
ParamSet finite_diff_grad(const Objective& objective, const ParamSet& at, double step);

/// ||a - b|| / max(||b||, tiny).
double relative_error(const ParamSet& a, const ParamSet& b);

}  // namespace fedmuon
