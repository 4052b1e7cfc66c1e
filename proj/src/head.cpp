#include "pointhead/head.hpp"

#include <cmath>

namespace pointhead {

HeadConfig HeadConfig::defaults(Task task) {
    HeadConfig cfg;
    cfg.task = task;
    switch (task) {
        case Task::Classification: cfg.k = 16; break;
        case Task::Detection: cfg.k = 16; break;
        case Task::Segmentation: cfg.k = 36; break;
        case Task::Pose: cfg.k = 17; break;
    }
    return cfg;
}

void HeadConfig::validate() const {
    if (k < 1) throw ConfigError("head: K must be >= 1");
    if (task == Task::Detection && k % 4 != 0) {
        throw ConfigError("head: detection needs K divisible by 4, got " + std::to_string(k));
    }
    if (num_classes < 1) throw ConfigError("head: num_classes must be >= 1");
    if (channels < 1 || in_channels < 1 || offset_hidden < 1) {
        throw ConfigError("head: channel widths must be >= 1");
    }
    cls_encoder().validate();
    loc_encoder().validate();
}

std::int64_t HeadConfig::class_logit_count() const {
    return task == Task::Classification ? num_classes : num_classes + 1;
}

namespace {

InitDesc fan_in_uniform(std::int64_t fan_in, std::uint64_t seed) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return InitDesc::uniform(-a, a, seed);
}

bool has_loc_branch(const HeadConfig& cfg) {
    return cfg.task != Task::Classification;
}

TaskTokenKind loc_token_kind(const HeadConfig& cfg) {
    if (!cfg.use_task_token) return TaskTokenKind::None;
    if (cfg.task == Task::Detection) return TaskTokenKind::Iou;
    if (cfg.task == Task::Pose) return TaskTokenKind::Visibility;
    return TaskTokenKind::None;
}

} // namespace

void declare_head_params(ParameterStore& store, const HeadConfig& cfg, std::uint64_t seed,
                         const std::vector<Point2>* pose_bias_stats) {
    cfg.validate();
    const std::int64_t c = cfg.channels;
    const std::int64_t d = cfg.width;

    store.define("stem.c1.w", {c, 3, 3, cfg.in_channels},
                 fan_in_uniform(9 * cfg.in_channels, seed));
    store.define("stem.c1.b", {c}, InitDesc::zero());
    store.define("stem.c2.w", {c, 3, 3, c}, fan_in_uniform(9 * c, seed));
    store.define("stem.c2.b", {c}, InitDesc::zero());

    // Offset generator: last layer starts at zero weights, so initial points
    // sit exactly on the task's bias table.
    store.define("offset.w1", {c, cfg.offset_hidden}, fan_in_uniform(c, seed));
    store.define("offset.b1", {cfg.offset_hidden}, InitDesc::zero());
    store.define("offset.w2", {cfg.offset_hidden, 2 * cfg.k}, InitDesc::zero());
    const std::vector<Point2> table = initial_bias_table(cfg.task, cfg.k, pose_bias_stats, seed);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(2 * cfg.k));
    for (const Point2& p : table) {
        flat.push_back(p.x);
        flat.push_back(p.y);
    }
    store.define("offset.b2", {2 * cfg.k}, InitDesc::bias_table(std::move(flat)));

    store.define("proj.w", {c, d}, fan_in_uniform(c, seed));
    store.define("proj.b", {d}, InitDesc::zero());

    store.define("token.cls", {d}, InitDesc::uniform(-0.02, 0.02, seed));
    declare_encoder_params(store, "enc_cls", cfg.cls_encoder(), seed);

    store.define("cls_head.w", {d, cfg.class_logit_count()}, fan_in_uniform(d, seed));
    store.define("cls_head.b", {cfg.class_logit_count()}, InitDesc::zero());

    if (has_loc_branch(cfg)) {
        declare_encoder_params(store, "enc_loc", cfg.loc_encoder(), seed);
        store.define("refine.w", {d, 2}, InitDesc::zero());
        store.define("refine.b", {2}, InitDesc::zero());
        if (cfg.task == Task::Detection && cfg.use_task_token) {
            store.define("token.iou", {d}, InitDesc::uniform(-0.02, 0.02, seed));
            store.define("iou_head.w", {d, 1}, fan_in_uniform(d, seed));
            store.define("iou_head.b", {1}, InitDesc::zero());
        }
        if (cfg.task == Task::Pose) {
            if (cfg.use_task_token) {
                store.define("token.vis", {d}, InitDesc::uniform(-0.02, 0.02, seed));
                store.define("vis_head.wt", {d, 1}, fan_in_uniform(d, seed));
            }
            store.define("vis_head.wp", {d, 1}, fan_in_uniform(d, seed));
            store.define("vis_head.b", {1}, InitDesc::zero());
        }
    }
}

NodeId backbone_forward(Graph& g, NodeId raster, const ParameterStore& params,
                        const HeadConfig& cfg) {
    const TensorValue& x = g.value(raster);
    if (x.rank() != 3 || x.shape()[2] != cfg.in_channels) {
        throw ShapeError("backbone: raster must be H x W x " + std::to_string(cfg.in_channels) +
                         ", got " + x.shape_str());
    }
    if (x.shape()[0] % 4 != 0 || x.shape()[1] % 4 != 0) {
        throw ShapeError("backbone: extents must be divisible by the total stride 4, got " +
                         x.shape_str());
    }
    NodeId h = g.conv2d(raster, g.parameter(params, "stem.c1.w"), g.parameter(params, "stem.c1.b"),
                        2);
    h = g.relu(h);
    h = g.conv2d(h, g.parameter(params, "stem.c2.w"), g.parameter(params, "stem.c2.b"), 2);
    return g.relu(h);
}

PointFeatures generate_point_features(Graph& g, const CandidateContext& ctx, NodeId fmap,
                                      const ParameterStore& params, const HeadConfig& cfg) {
    const TensorValue& f = g.value(ctx.feature);
    if (f.rank() != 2 || f.shape()[0] != 1 || f.shape()[1] != cfg.channels) {
        throw ShapeError("context feature must be 1 x " + std::to_string(cfg.channels) + ", got " +
                         f.shape_str());
    }
    if (!(ctx.scale_x > 0.0) || !(ctx.scale_y > 0.0)) {
        throw ContractError("candidate scale must be positive");
    }

    NodeId hidden = g.relu(g.add(g.matmul(ctx.feature, g.parameter(params, "offset.w1")),
                                 g.parameter(params, "offset.b1")));
    NodeId deltas = g.add(g.matmul(hidden, g.parameter(params, "offset.w2")),
                          g.parameter(params, "offset.b2"));
    deltas = g.reshape(deltas, {cfg.k, 2});

    const NodeId scale = g.constant(TensorValue::of({2}, {ctx.scale_x, ctx.scale_y}));
    const NodeId anchor = g.constant(TensorValue::of({2}, {ctx.anchor.x, ctx.anchor.y}));
    const NodeId points = g.add(g.mul(deltas, scale), anchor);

    const NodeId sampled = g.bilinear_sample(fmap, points);
    const NodeId tokens =
        g.add(g.matmul(sampled, g.parameter(params, "proj.w")), g.parameter(params, "proj.b"));
    return {points, tokens};
}

namespace {

// Shared classification branch: T_cls token, L_cls blocks, logits from the
// task token output.
NodeId class_branch(Graph& g, NodeId point_tokens, const ParameterStore& params,
                    const HeadConfig& cfg) {
    const NodeId z0 = attach_task_token(g, point_tokens, {TaskTokenKind::Class, "token.cls"},
                                        params);
    const NodeId encoded = encode(g, z0, cfg.cls_encoder(), params, "enc_cls");
    const NodeId t = g.slice(encoded, 0, 0, 1);
    return g.add(g.matmul(t, g.parameter(params, "cls_head.w")),
                 g.parameter(params, "cls_head.b"));
}

struct LocBranch {
    NodeId point_tokens = -1; // [K,d] encoded point outputs
    NodeId task_token = -1;   // [1,d] or -1 when no token attached
};

LocBranch loc_branch(Graph& g, NodeId point_tokens, const ParameterStore& params,
                     const HeadConfig& cfg) {
    const TaskTokenKind kind = loc_token_kind(cfg);
    TaskTokenSpec spec{kind, kind == TaskTokenKind::Iou ? "token.iou" : "token.vis"};
    const NodeId z0 = attach_task_token(g, point_tokens, spec, params);
    const NodeId encoded = encode(g, z0, cfg.loc_encoder(), params, "enc_loc");
    LocBranch out;
    if (kind == TaskTokenKind::None) {
        out.point_tokens = encoded;
    } else {
        out.task_token = g.slice(encoded, 0, 0, 1);
        out.point_tokens = g.slice(encoded, 0, 1, cfg.k + 1);
    }
    return out;
}

// P' = P + MLP(F') (.) (s_x, s_y); the refinement affine is shared across
// point indices.
NodeId refine(Graph& g, NodeId points, NodeId encoded_tokens, const CandidateContext& ctx,
              const ParameterStore& params) {
    const NodeId offsets = g.add(g.matmul(encoded_tokens, g.parameter(params, "refine.w")),
                                 g.parameter(params, "refine.b"));
    const NodeId scale = g.constant(TensorValue::of({2}, {ctx.scale_x, ctx.scale_y}));
    return g.add(points, g.mul(offsets, scale));
}

} // namespace

NodeId forward_classification(Graph& g, NodeId fmap, const ParameterStore& params,
                              const HeadConfig& cfg) {
    if (cfg.task != Task::Classification) {
        throw ContractError("forward_classification requires a classification-task config");
    }
    const TensorValue& f = g.value(fmap);
    if (f.rank() != 3) {
        throw ShapeError("feature map must be H x W x C, got " + f.shape_str());
    }
    const double h = static_cast<double>(f.shape()[0]);
    const double w = static_cast<double>(f.shape()[1]);
    CandidateContext ctx;
    ctx.anchor = {0.5 * (w - 1.0), 0.5 * (h - 1.0)};
    ctx.scale_x = w;
    ctx.scale_y = h;
    const NodeId center = g.constant(TensorValue::of({1, 2}, {ctx.anchor.x, ctx.anchor.y}));
    ctx.feature = g.bilinear_sample(fmap, center);

    const PointFeatures pf = generate_point_features(g, ctx, fmap, params, cfg);
    return class_branch(g, pf.tokens, params, cfg);
}

DetectionOutput forward_detection(Graph& g, const CandidateContext& ctx, NodeId fmap,
                                  const ParameterStore& params, const HeadConfig& cfg) {
    if (cfg.task != Task::Detection) {
        throw ContractError("forward_detection requires a detection-task config");
    }
    const PointFeatures pf = generate_point_features(g, ctx, fmap, params, cfg);
    DetectionOutput out;
    out.class_logits = class_branch(g, pf.tokens, params, cfg);
    // The localization branch shares z0 (pf.tokens) with classification.
    const LocBranch loc = loc_branch(g, pf.tokens, params, cfg);
    out.points = refine(g, pf.points, loc.point_tokens, ctx, params);
    out.box = g.box_minmax(out.points);
    if (loc.task_token >= 0) {
        out.iou_logit = g.add(g.matmul(loc.task_token, g.parameter(params, "iou_head.w")),
                              g.parameter(params, "iou_head.b"));
    }
    return out;
}

SegmentationOutput forward_segmentation(Graph& g, const CandidateContext& ctx, NodeId fmap,
                                        const ParameterStore& params, const HeadConfig& cfg) {
    if (cfg.task != Task::Segmentation) {
        throw ContractError("forward_segmentation requires a segmentation-task config");
    }
    const PointFeatures pf = generate_point_features(g, ctx, fmap, params, cfg);
    SegmentationOutput out;
    out.class_logits = class_branch(g, pf.tokens, params, cfg);
    const LocBranch loc = loc_branch(g, pf.tokens, params, cfg);
    out.points = refine(g, pf.points, loc.point_tokens, ctx, params);
    return out;
}

PoseOutput forward_pose(Graph& g, const CandidateContext& ctx, NodeId fmap,
                        const ParameterStore& params, const HeadConfig& cfg) {
    if (cfg.task != Task::Pose) {
        throw ContractError("forward_pose requires a pose-task config");
    }
    const PointFeatures pf = generate_point_features(g, ctx, fmap, params, cfg);
    PoseOutput out;
    out.class_logits = class_branch(g, pf.tokens, params, cfg);
    const LocBranch loc = loc_branch(g, pf.tokens, params, cfg);
    out.points = refine(g, pf.points, loc.point_tokens, ctx, params);
    // Visibility reads each point token, plus the visibility token's output
    // when attached, through one shared affine.
    NodeId vis = g.matmul(loc.point_tokens, g.parameter(params, "vis_head.wp"));
    if (loc.task_token >= 0) {
        const NodeId token_term = g.matmul(loc.task_token, g.parameter(params, "vis_head.wt"));
        vis = g.add(vis, token_term);
    }
    out.visibility_logits = g.add(vis, g.parameter(params, "vis_head.b"));
    return out;
}

double fuse_detection_score(double class_prob, double iou_logit) {
    if (!(class_prob >= 0.0 && class_prob <= 1.0)) {
        throw ContractError("fuse_detection_score: class probability outside [0,1]");
    }
    const double s = iou_logit >= 0.0 ? 1.0 / (1.0 + std::exp(-iou_logit))
                                      : std::exp(iou_logit) / (1.0 + std::exp(iou_logit));
    return class_prob * s;
}

TensorValue one_hot_row(std::int64_t index, std::int64_t count) {
    if (index < 0 || index >= count) {
        throw ContractError("one_hot_row: index " + std::to_string(index) + " outside [0," +
                            std::to_string(count) + ")");
    }
    TensorValue t = TensorValue::zeros({1, count});
    t[index] = 1.0;
    return t;
}

NodeId classification_loss(Graph& g, NodeId logits, std::int64_t class_id) {
    const TensorValue& l = g.value(logits);
    return g.cross_entropy_with_softmax(logits, g.constant(one_hot_row(class_id, l.shape()[1])));
}

NodeId detection_candidate_loss(Graph& g, const DetectionOutput& out,
                                const std::optional<DetTarget>& target, const HeadConfig& cfg) {
    if (!target.has_value()) {
        return classification_loss(g, out.class_logits, cfg.background_index());
    }
    NodeId loss = classification_loss(g, out.class_logits, target->class_id);
    const NodeId gt = g.constant(
        TensorValue::of({4}, {target->box.x1, target->box.y1, target->box.x2, target->box.y2}));
    const NodeId box_term = cfg.det_loss == HeadConfig::DetLoss::Giou ? g.giou_loss(out.box, gt)
                                                                      : g.l1(out.box, gt);
    loss = g.add(loss, g.mul(box_term, g.constant_scalar(cfg.w_loc)));
    if (out.iou_logit >= 0) {
        const NodeId iou_target = g.constant(TensorValue::full({1, 1}, target->iou_target));
        const NodeId iou_term = g.bce_with_logits(out.iou_logit, iou_target);
        loss = g.add(loss, g.mul(iou_term, g.constant_scalar(cfg.w_iou)));
    }
    return loss;
}

NodeId segmentation_candidate_loss(Graph& g, const SegmentationOutput& out,
                                   const SegmTarget& target, const HeadConfig& cfg) {
    if (static_cast<std::int64_t>(target.contour.size()) != cfg.k) {
        throw ContractError("segmentation target needs exactly K contour points");
    }
    NodeId loss = classification_loss(g, out.class_logits, target.class_id);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(2 * cfg.k));
    for (const Point2& p : target.contour) {
        flat.push_back(p.x);
        flat.push_back(p.y);
    }
    const NodeId gt = g.constant(TensorValue::of({cfg.k, 2}, std::move(flat)));
    const NodeId pts_term = g.l1(out.points, gt);
    return g.add(loss, g.mul(pts_term, g.constant_scalar(cfg.w_loc)));
}

NodeId pose_candidate_loss(Graph& g, const PoseOutput& out, const PoseTarget& target,
                           const HeadConfig& cfg) {
    if (static_cast<std::int64_t>(target.keypoints.size()) != cfg.k ||
        static_cast<std::int64_t>(target.visibility.size()) != cfg.k) {
        throw ContractError("pose target needs exactly K keypoints with visibility flags");
    }
    NodeId loss = classification_loss(g, out.class_logits, target.class_id);

    // Keypoint L1 over visible ground truth only: mask both sides, then
    // rescale the mean so it averages over visible coordinates.
    std::int64_t visible = 0;
    std::vector<double> mask, gt, labels;
    mask.reserve(static_cast<std::size_t>(2 * cfg.k));
    gt.reserve(static_cast<std::size_t>(2 * cfg.k));
    labels.reserve(static_cast<std::size_t>(cfg.k));
    for (std::int64_t i = 0; i < cfg.k; ++i) {
        const bool vis = target.visibility[static_cast<std::size_t>(i)] > 0;
        visible += vis ? 1 : 0;
        mask.push_back(vis ? 1.0 : 0.0);
        mask.push_back(vis ? 1.0 : 0.0);
        gt.push_back(vis ? target.keypoints[static_cast<std::size_t>(i)].x : 0.0);
        gt.push_back(vis ? target.keypoints[static_cast<std::size_t>(i)].y : 0.0);
        labels.push_back(vis ? 1.0 : 0.0);
    }
    if (visible > 0) {
        const NodeId mask_node = g.constant(TensorValue::of({cfg.k, 2}, std::move(mask)));
        const NodeId masked_pred = g.mul(out.points, mask_node);
        const NodeId gt_node = g.constant(TensorValue::of({cfg.k, 2}, std::move(gt)));
        NodeId term = g.l1(masked_pred, gt_node);
        const double rescale =
            cfg.w_loc * static_cast<double>(cfg.k) / static_cast<double>(visible);
        term = g.mul(term, g.constant_scalar(rescale));
        loss = g.add(loss, term);
    }

    const NodeId label_node = g.constant(TensorValue::of({cfg.k, 1}, std::move(labels)));
    const NodeId vis_term = g.bce_with_logits(out.visibility_logits, label_node);
    return g.add(loss, g.mul(vis_term, g.constant_scalar(cfg.w_vis)));
}

} // namespace pointhead
