#pragma once

#include <functional>
#include <string>

#include "pointhead/graph.hpp"

namespace pointhead {

/// Builds a scalar loss root over the given parameters. Must be a pure
/// function of the store contents: two calls at identical parameter values
/// have to produce bit-identical losses.
using LossBuilder = std::function<NodeId(Graph&, const ParameterStore&)>;

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::string worst_path;
    std::int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::int64_t checked = 0;
    double loss = 0.0;
};

/// Compares the analytic gradient of loss_builder against central finite
/// differences on `sample` randomly chosen parameter coordinates. Relative
/// error uses max(|analytic|, |numeric|, 1e-12) as the denominator.
///
/// `tamper_for_tests` lets a negative-control test corrupt the analytic
/// gradient map before comparison; production callers leave it empty.
FiniteDiffReport finite_difference_check(
    const LossBuilder& loss_builder, ParameterStore& params, double eps, std::int64_t sample,
    std::uint64_t seed = 0,
    const std::function<void(GradientMap&)>& tamper_for_tests = nullptr);

} // namespace pointhead
