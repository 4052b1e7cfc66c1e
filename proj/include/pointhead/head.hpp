#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pointhead/encoder.hpp"
#include "pointhead/geometry.hpp"
#include "pointhead/graph.hpp"

namespace pointhead {

/// Per-task head configuration. K defaults follow the task; the two encoder
/// stacks, the model width, and the task-token switch are the ablation axes.
struct HeadConfig {
    Task task = Task::Detection;
    std::int64_t k = 16;
    std::int64_t l_cls = 2;
    std::int64_t l_loc = 3;
    std::int64_t channels = 32;      // stem output width C (context feature width)
    std::int64_t in_channels = 3;    // raster channels
    std::int64_t width = 64;         // token width d
    std::int64_t heads = 4;
    std::int64_t mlp_ratio = 4;
    std::int64_t offset_hidden = 64; // hidden width of the offset generator MLP
    std::int64_t num_classes = 4;    // foreground classes
    bool use_task_token = true;

    enum class DetLoss { L1, Giou };
    DetLoss det_loss = DetLoss::L1;

    // Loss term weights (classification CE always weight 1).
    double w_loc = 2.0;
    double w_iou = 0.25;
    double w_vis = 0.5;

    static HeadConfig defaults(Task task);
    void validate() const;

    // Detection/segmentation/pose classifier emits a trailing background
    // class; plain classification does not.
    std::int64_t class_logit_count() const;
    std::int64_t background_index() const { return num_classes; }

    EncoderConfig cls_encoder() const { return {l_cls, width, heads, mlp_ratio}; }
    EncoderConfig loc_encoder() const { return {l_loc, width, heads, mlp_ratio}; }
};

/// Declares every parameter the configured head consumes, including the
/// task-specific offset bias table. Pose needs the dataset's mean keypoint
/// offsets for its table.
void declare_head_params(ParameterStore& store, const HeadConfig& cfg, std::uint64_t seed,
                         const std::vector<Point2>* pose_bias_stats = nullptr);

/// Anchor context lifted into a graph: the anchor and scale are plain
/// values, the context feature is a recorded [1,C] node.
struct CandidateContext {
    Point2 anchor;
    double scale_x = 1.0;
    double scale_y = 1.0;
    NodeId feature = -1;
};

// Two 3x3 conv+ReLU stages, stride 2 each (total stride 4).
NodeId backbone_forward(Graph& g, NodeId raster, const ParameterStore& params,
                        const HeadConfig& cfg);

struct PointFeatures {
    NodeId points = -1; // [K,2] scattered points, feature-map coordinates
    NodeId tokens = -1; // [K,d] sampled + projected point representations
};

// Offsets from the context feature, scatter around the anchor, bilinear
// sampling, projection to token width.
PointFeatures generate_point_features(Graph& g, const CandidateContext& ctx, NodeId fmap,
                                      const ParameterStore& params, const HeadConfig& cfg);

struct DetectionOutput {
    NodeId class_logits = -1; // [1, num_classes+1]
    NodeId iou_logit = -1;    // [1,1]; -1 when the IoU token is disabled
    NodeId points = -1;       // [K,2] refined points
    NodeId box = -1;          // [4] min/max box
};

struct SegmentationOutput {
    NodeId class_logits = -1;
    NodeId points = -1; // [K,2] refined contour points
};

struct PoseOutput {
    NodeId class_logits = -1;
    NodeId points = -1;            // [K,2] refined keypoints
    NodeId visibility_logits = -1; // [K,1]
};

// Classification consumes the whole map: anchor at the map center, scale set
// to the map extents. Returns [1, num_classes] logits.
NodeId forward_classification(Graph& g, NodeId fmap, const ParameterStore& params,
                              const HeadConfig& cfg);

DetectionOutput forward_detection(Graph& g, const CandidateContext& ctx, NodeId fmap,
                                  const ParameterStore& params, const HeadConfig& cfg);
SegmentationOutput forward_segmentation(Graph& g, const CandidateContext& ctx, NodeId fmap,
                                        const ParameterStore& params, const HeadConfig& cfg);
PoseOutput forward_pose(Graph& g, const CandidateContext& ctx, NodeId fmap,
                        const ParameterStore& params, const HeadConfig& cfg);

// score = class probability * sigmoid(iou logit)
double fuse_detection_score(double class_prob, double iou_logit);

// --- loss builders ----------------------------------------------------------

TensorValue one_hot_row(std::int64_t index, std::int64_t count);

NodeId classification_loss(Graph& g, NodeId logits, std::int64_t class_id);

struct DetTarget {
    std::int64_t class_id = 0;
    BoxXYXY box;              // feature-map coordinates
    double iou_target = 0.0;  // supervision for the IoU token, fixed per step
};

// Background candidates (no target) contribute only the classification term.
NodeId detection_candidate_loss(Graph& g, const DetectionOutput& out,
                                const std::optional<DetTarget>& target, const HeadConfig& cfg);

struct SegmTarget {
    std::int64_t class_id = 0;
    PointSet contour; // K ordered targets, feature-map coordinates
};

NodeId segmentation_candidate_loss(Graph& g, const SegmentationOutput& out,
                                   const SegmTarget& target, const HeadConfig& cfg);

struct PoseTarget {
    std::int64_t class_id = 0;
    PointSet keypoints;          // K keypoints, feature-map coordinates
    std::vector<int> visibility; // K flags in {0,1}
};

NodeId pose_candidate_loss(Graph& g, const PoseOutput& out, const PoseTarget& target,
                           const HeadConfig& cfg);

} // namespace pointhead
