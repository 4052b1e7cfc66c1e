#pragma once

#include <string>

#include "pointhead/graph.hpp"

namespace pointhead {

enum class TaskTokenKind { None, Class, Iou, Visibility };

/// Learnable token prepended to the point tokens. The embedding lives in the
/// parameter store under `param_path`; kind None consumes no parameter.
struct TaskTokenSpec {
    TaskTokenKind kind = TaskTokenKind::None;
    std::string param_path;
};

struct EncoderConfig {
    std::int64_t blocks = 2;
    std::int64_t width = 64;
    std::int64_t heads = 4;
    std::int64_t mlp_ratio = 4;

    void validate() const;
};

/// Declares LN/attention/MLP parameters for `cfg.blocks` pre-norm blocks
/// under `prefix`. Weight matrices draw from uniform(-1/sqrt(fan_in), ..)
/// streams derived from (seed, path); biases start at zero, LN gains at one.
void declare_encoder_params(ParameterStore& store, const std::string& prefix,
                            const EncoderConfig& cfg, std::uint64_t seed);

/// Prepends the task embedding as token 0; returns the input unchanged for
/// kind None.
NodeId attach_task_token(Graph& g, NodeId point_tokens, const TaskTokenSpec& spec,
                         const ParameterStore& store);

/// Pre-norm encoder stack: per block, LN -> MHSA -> residual add, then
/// LN -> MLP -> residual add. No positional embeddings are added, so the map
/// is permutation-equivariant over tokens.
NodeId encode(Graph& g, NodeId tokens, const EncoderConfig& cfg, const ParameterStore& store,
              const std::string& prefix);

} // namespace pointhead
