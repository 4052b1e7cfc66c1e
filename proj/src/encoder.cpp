#include "pointhead/encoder.hpp"

#include <cmath>

namespace pointhead {

void EncoderConfig::validate() const {
    if (blocks < 0) {
        throw ConfigError("encoder block count must be >= 0");
    }
    if (width < 1 || heads < 1 || width % heads != 0) {
        throw ConfigError("encoder width " + std::to_string(width) +
                          " must be a positive multiple of head count " + std::to_string(heads));
    }
    if (mlp_ratio < 1) {
        throw ConfigError("encoder mlp_ratio must be >= 1");
    }
}

namespace {

InitDesc fan_in_uniform(std::int64_t fan_in, std::uint64_t seed) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return InitDesc::uniform(-a, a, seed);
}

std::string block_prefix(const std::string& prefix, std::int64_t l) {
    return prefix + ".blk" + std::to_string(l);
}

} // namespace

void declare_encoder_params(ParameterStore& store, const std::string& prefix,
                            const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::int64_t d = cfg.width;
    const std::int64_t m = cfg.width * cfg.mlp_ratio;
    for (std::int64_t l = 0; l < cfg.blocks; ++l) {
        const std::string b = block_prefix(prefix, l);
        store.define(b + ".ln1.g", {d}, InitDesc::constant(1.0));
        store.define(b + ".ln1.b", {d}, InitDesc::zero());
        store.define(b + ".attn.wq", {d, d}, fan_in_uniform(d, seed));
        store.define(b + ".attn.bq", {d}, InitDesc::zero());
        store.define(b + ".attn.wk", {d, d}, fan_in_uniform(d, seed));
        store.define(b + ".attn.bk", {d}, InitDesc::zero());
        store.define(b + ".attn.wv", {d, d}, fan_in_uniform(d, seed));
        store.define(b + ".attn.bv", {d}, InitDesc::zero());
        store.define(b + ".attn.wo", {d, d}, fan_in_uniform(d, seed));
        store.define(b + ".attn.bo", {d}, InitDesc::zero());
        store.define(b + ".ln2.g", {d}, InitDesc::constant(1.0));
        store.define(b + ".ln2.b", {d}, InitDesc::zero());
        store.define(b + ".mlp.w1", {d, m}, fan_in_uniform(d, seed));
        store.define(b + ".mlp.b1", {m}, InitDesc::zero());
        store.define(b + ".mlp.w2", {m, d}, fan_in_uniform(m, seed));
        store.define(b + ".mlp.b2", {d}, InitDesc::zero());
    }
}

NodeId attach_task_token(Graph& g, NodeId point_tokens, const TaskTokenSpec& spec,
                         const ParameterStore& store) {
    if (spec.kind == TaskTokenKind::None) {
        return point_tokens;
    }
    const TensorValue& pf = g.value(point_tokens);
    if (pf.rank() != 2) {
        throw ShapeError("attach_task_token: point features must be K x d, got " + pf.shape_str());
    }
    const NodeId embedding = g.parameter(store, spec.param_path);
    const TensorValue& e = g.value(embedding);
    if (e.rank() != 1 || e.shape()[0] != pf.shape()[1]) {
        throw ShapeError("attach_task_token: embedding " + e.shape_str() +
                         " does not match token width " + std::to_string(pf.shape()[1]));
    }
    const NodeId row = g.reshape(embedding, {1, pf.shape()[1]});
    return g.concat({row, point_tokens}, 0);
}

NodeId encode(Graph& g, NodeId tokens, const EncoderConfig& cfg, const ParameterStore& store,
              const std::string& prefix) {
    cfg.validate();
    const TensorValue& z = g.value(tokens);
    if (z.rank() != 2 || z.shape()[1] != cfg.width) {
        throw ShapeError("encode: tokens must be T x " + std::to_string(cfg.width) + ", got " +
                         z.shape_str());
    }
    const std::int64_t d = cfg.width;
    const std::int64_t dh = d / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    NodeId h = tokens;
    for (std::int64_t l = 0; l < cfg.blocks; ++l) {
        const std::string b = block_prefix(prefix, l);
        auto p = [&](const std::string& name) { return g.parameter(store, b + name); };

        const NodeId a = g.layernorm(h, p(".ln1.g"), p(".ln1.b"));
        const NodeId q = g.add(g.matmul(a, p(".attn.wq")), p(".attn.bq"));
        const NodeId k = g.add(g.matmul(a, p(".attn.wk")), p(".attn.bk"));
        const NodeId v = g.add(g.matmul(a, p(".attn.wv")), p(".attn.bv"));

        std::vector<NodeId> head_outs;
        head_outs.reserve(static_cast<std::size_t>(cfg.heads));
        const NodeId scale_node = g.constant_scalar(scale);
        for (std::int64_t i = 0; i < cfg.heads; ++i) {
            const NodeId qh = g.slice(q, 1, i * dh, (i + 1) * dh);
            const NodeId kh = g.slice(k, 1, i * dh, (i + 1) * dh);
            const NodeId vh = g.slice(v, 1, i * dh, (i + 1) * dh);
            const NodeId scores = g.mul(g.matmul(qh, kh, /*transpose_b=*/true), scale_node);
            const NodeId attn = g.softmax(scores, -1);
            head_outs.push_back(g.matmul(attn, vh));
        }
        const NodeId merged =
            cfg.heads == 1 ? head_outs[0]
                           : g.concat(std::span<const NodeId>(head_outs.data(), head_outs.size()),
                                      1);
        const NodeId attended = g.add(g.matmul(merged, p(".attn.wo")), p(".attn.bo"));
        h = g.add(h, attended);

        const NodeId n2 = g.layernorm(h, p(".ln2.g"), p(".ln2.b"));
        const NodeId hidden = g.gelu(g.add(g.matmul(n2, p(".mlp.w1")), p(".mlp.b1")));
        const NodeId mlp_out = g.add(g.matmul(hidden, p(".mlp.w2")), p(".mlp.b2"));
        h = g.add(h, mlp_out);
    }
    return h;
}

} // namespace pointhead
