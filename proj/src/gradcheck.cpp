#include "pointhead/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pointhead {

namespace {

double evaluate_loss(const LossBuilder& builder, const ParameterStore& params) {
    Graph g;
    const NodeId root = builder(g, params);
    return g.value(root).item();
}

} // namespace

FiniteDiffReport finite_difference_check(
    const LossBuilder& loss_builder, ParameterStore& params, double eps, std::int64_t sample,
    std::uint64_t seed, const std::function<void(GradientMap&)>& tamper_for_tests) {
    if (!(eps > 0.0)) {
        throw ContractError("finite_difference_check: eps must be positive");
    }
    if (sample < 1) {
        throw ContractError("finite_difference_check: sample must be >= 1");
    }

    Graph g;
    const NodeId root = loss_builder(g, params);
    const double loss = g.value(root).item();
    GradientMap analytic = g.backward(root);
    if (tamper_for_tests) {
        tamper_for_tests(analytic);
    }

    const double replay = evaluate_loss(loss_builder, params);
    if (replay != loss) {
        throw DeterminismError("loss builder is nondeterministic: " + std::to_string(loss) +
                               " vs " + std::to_string(replay) + " at identical parameters");
    }

    // Flat index space over all coordinates, in sorted path order.
    struct Span {
        std::string path;
        std::int64_t count;
    };
    std::vector<Span> spans;
    std::int64_t total = 0;
    for (const auto& [path, entry] : params) {
        spans.push_back({path, entry.value.numel()});
        total += entry.value.numel();
    }
    if (total == 0) {
        throw ContractError("finite_difference_check: empty parameter store");
    }

    std::vector<std::int64_t> picks;
    if (sample >= total) {
        picks.resize(static_cast<std::size_t>(total));
        for (std::int64_t i = 0; i < total; ++i) picks[static_cast<std::size_t>(i)] = i;
    } else {
        std::mt19937_64 rng(mix_seed(seed, 0xFD15A3C7ULL));
        std::vector<std::int64_t> all(static_cast<std::size_t>(total));
        for (std::int64_t i = 0; i < total; ++i) all[static_cast<std::size_t>(i)] = i;
        for (std::int64_t i = 0; i < sample; ++i) {
            std::uniform_int_distribution<std::int64_t> dist(i, total - 1);
            std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(dist(rng))]);
        }
        picks.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(sample));
        std::sort(picks.begin(), picks.end());
    }

    FiniteDiffReport report;
    report.loss = loss;
    for (std::int64_t flat : picks) {
        std::int64_t offset = flat;
        std::size_t si = 0;
        while (offset >= spans[si].count) {
            offset -= spans[si].count;
            ++si;
        }
        TensorValue& value = params.at(spans[si].path);
        const double saved = value[offset];
        value[offset] = saved + eps;
        const double plus = evaluate_loss(loss_builder, params);
        value[offset] = saved - eps;
        const double minus = evaluate_loss(loss_builder, params);
        value[offset] = saved;

        const double numeric = (plus - minus) / (2.0 * eps);
        const double exact = analytic.at(spans[si].path)[offset];
        const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-12});
        const double rel = std::abs(exact - numeric) / denom;
        ++report.checked;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_path = spans[si].path;
            report.worst_index = offset;
            report.worst_analytic = exact;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

} // namespace pointhead
