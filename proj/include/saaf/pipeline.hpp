#pragma once

#include "saaf/facade_data.hpp"
#include "saaf/model.hpp"
#include "saaf/objective.hpp"
#include "saaf/optim.hpp"
#include "saaf/vision_encoder.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace saaf {

/// Training configuration. Defaults follow the reference fine-tuning recipe
/// (Adam at 1e-4, per-device batch 2, 10 accumulation steps, loss weights
/// 0.8 / 0.8 / 2.0 / 0.5); that recipe ran 100,000 steps at batch 24, which
/// the desk-scale presets replace with at most a few thousand steps.
struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int max_steps = 2000;
    int per_device_batch = 2;
    int grad_accum = 10;
    LossWeights weights;
    ModelConfig model;
    std::string data;
    std::uint64_t seed = 0;
    std::uint64_t encoder_seed = 1234;
    std::string checkpoint_out = "saaf.ckpt";
    int log_every = 50;

    int effective_batch() const { return per_device_batch * grad_accum; }
    void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& config);

struct Checkpoint {
    ModelBundle bundle;
    std::string rng_state;
    std::uint64_t step = 0;
};

inline constexpr char kCheckpointMagic[5] = {'S', 'A', 'A', 'F', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256 over the serialized `vision.encoder.*` parameter table.
std::string encoder_hash(const ModelBundle& bundle);

struct SampleLoss {
    Tensor text;
    Tensor mask;
    Tensor total;
    Tensor mask_logits;
};

/// Teacher-forced forward pass of one dialogue through the whole model.
SampleLoss sample_loss(const ModelBundle& bundle, const FeatureMap& features, const TokenSequence& dialogue,
                       const BinaryMask& target, const LossWeights& weights);

struct LossRecord {
    int step = 0;
    double text = 0.0;
    double mask = 0.0;
    double total = 0.0;
};

/// `step,L_t,L_m,L` with 17 significant digits.
std::string format_loss_record(const LossRecord& r);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRecord> log;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Joint text + mask training on the train split. Each step averages
/// per_device_batch * grad_accum teacher-forced samples, accumulates their
/// gradients, and applies one Adam update to the trainable set.
TrainResult train(const TrainConfig& config, const std::filesystem::path& root, const DatasetManifest& manifest,
                  const ProgressFn& progress = {});

struct SampleMetrics {
    std::string id;
    FacadeStyle style = FacadeStyle::Photo;
    TargetClass target = TargetClass::Window;
    IouResult iou;
    double pixel_accuracy = 0.0;
};

struct MetricsSummary {
    size_t samples = 0;
    double iou_window = 0.0;
    double iou_wall = 0.0;
    double miou = 0.0;
    double pixel_accuracy = 0.0;
};

struct MetricsReport {
    std::vector<SampleMetrics> per_sample;
    MetricsSummary overall;
    std::map<FacadeStyle, MetricsSummary> per_style;
};

/// Aggregates per-sample results in input order: mean-of-classes per sample,
/// then the mean over samples.
MetricsReport summarize(std::vector<SampleMetrics> per_sample);
std::string format_report(const MetricsReport& report);

using Predictor = std::function<BinaryMask(const LoadedSample&)>;

/// Scores `predict` on every record of `split`. Predictions are optionally
/// written as `<dump_dir>/<id>.pgm`.
MetricsReport evaluate_with(const std::filesystem::path& root, const DatasetManifest& manifest, Split split,
                            const Predictor& predict, const std::optional<std::filesystem::path>& dump_dir = {});

struct EvalOptions {
    double threshold = 0.5;
    /// Locate <SEG> by greedy decoding instead of the teacher-forced answer.
    bool free_decode = false;
    std::optional<std::filesystem::path> dump_dir;
};

MetricsReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& root, const DatasetManifest& manifest,
                       Split split, const EvalOptions& options = {});

/// Mask logits for a sample with <SEG> located via the teacher-forced answer.
Tensor predict_teacher_forced(const ModelBundle& bundle, const Image& image, std::string_view description);

struct SegmentResult {
    std::string answer;
    bool seg_generated = false;
    BinaryMask mask;
};

inline constexpr int kMaxAnswerTokens = 32;

/// Free-running inference: greedy-decode the answer, then decode the mask
/// from the first generated <SEG> (or an appended one under `force_seg`).
SegmentResult segment(const ModelBundle& bundle, const Image& image, std::string_view description, bool force_seg,
                      double threshold = 0.5);

struct GradcheckOptions {
    std::uint64_t seed = 0;
    double tol = 1e-4;
    double h = 1e-5;
};

/// Finite-difference check of the full joint loss on one synthetic sample,
/// for every trainable parameter of a freshly initialized toy model.
CheckReport gradcheck(const GradcheckOptions& options, const ModelConfig& model = {});

} // namespace saaf
