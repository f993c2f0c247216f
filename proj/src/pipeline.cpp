#include "saaf/pipeline.hpp"

#include "saaf/error.hpp"
#include "saaf/ops.hpp"
#include "saaf/seg_head.hpp"
#include "saaf/text_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <random>
#include <sstream>

namespace saaf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
    if (!(lr > 0.0) || max_steps <= 0 || per_device_batch <= 0 || grad_accum <= 0 || log_every <= 0) {
        throw Error(ErrorKind::BadConfig, "lr, max_steps, per_device_batch, grad_accum, log_every must be positive");
    }
    weights.validate();
    try {
        model.validate();
        AdamState probe(AdamOptions{lr, beta1, beta2, adam_eps});
    } catch (const std::invalid_argument& e) {
        throw Error(ErrorKind::BadConfig, e.what());
    }
}

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T out{};
    in >> out;
    if (!in || !(in >> std::ws).eof()) {
        throw Error(ErrorKind::BadConfig, "bad value for '" + key + "': " + value);
    }
    return out;
}

} // namespace

TrainConfig parse_config(std::istream& in) {
    TrainConfig c;
    std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters;
    auto num = [&](auto& field) {
        return [&field](const std::string& k, const std::string& v) {
            field = parse_number<std::remove_reference_t<decltype(field)>>(k, v);
        };
    };
    setters["lr"] = num(c.lr);
    setters["beta1"] = num(c.beta1);
    setters["beta2"] = num(c.beta2);
    setters["adam_eps"] = num(c.adam_eps);
    setters["max_steps"] = num(c.max_steps);
    setters["per_device_batch"] = num(c.per_device_batch);
    setters["grad_accum"] = num(c.grad_accum);
    setters["theta_t"] = num(c.weights.text);
    setters["theta_m"] = num(c.weights.mask);
    setters["theta_bce"] = num(c.weights.bce);
    setters["theta_dice"] = num(c.weights.dice);
    setters["lora_rank"] = num(c.model.lora_rank);
    setters["lora_alpha"] = num(c.model.lora_alpha);
    setters["n_layers"] = num(c.model.lm.n_layers);
    setters["d_model"] = num(c.model.lm.d_model);
    setters["n_heads"] = num(c.model.lm.n_heads);
    setters["max_seq_len"] = num(c.model.lm.max_seq_len);
    setters["image_size"] = num(c.model.vision.image_size);
    setters["patch_size"] = num(c.model.vision.patch_size);
    setters["d_vision"] = num(c.model.vision.d_vision);
    setters["vision_blocks"] = num(c.model.vision.n_blocks);
    setters["vision_heads"] = num(c.model.vision.n_heads);
    setters["seg_dim"] = num(c.model.seg_dim);
    setters["position_std"] = num(c.model.position_std);
    setters["seed"] = num(c.seed);
    setters["encoder_seed"] = num(c.encoder_seed);
    setters["log_every"] = num(c.log_every);
    setters["data"] = [&](const std::string&, const std::string& v) { c.data = v; };
    setters["checkpoint_out"] = [&](const std::string&, const std::string& v) { c.checkpoint_out = v; };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) {
            throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        it->second(key, value);
    }
    c.validate();
    return c;
}

TrainConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingFile, "cannot open config " + path.string());
    }
    return parse_config(in);
}

std::string format_config(const TrainConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "lr = " << c.lr << "\nbeta1 = " << c.beta1 << "\nbeta2 = " << c.beta2 << "\nadam_eps = " << c.adam_eps
        << "\nmax_steps = " << c.max_steps << "\nper_device_batch = " << c.per_device_batch
        << "\ngrad_accum = " << c.grad_accum << "\ntheta_t = " << c.weights.text << "\ntheta_m = " << c.weights.mask
        << "\ntheta_bce = " << c.weights.bce << "\ntheta_dice = " << c.weights.dice
        << "\nlora_rank = " << c.model.lora_rank << "\nlora_alpha = " << c.model.lora_alpha
        << "\nn_layers = " << c.model.lm.n_layers << "\nd_model = " << c.model.lm.d_model
        << "\nn_heads = " << c.model.lm.n_heads << "\nmax_seq_len = " << c.model.lm.max_seq_len
        << "\nimage_size = " << c.model.vision.image_size << "\npatch_size = " << c.model.vision.patch_size
        << "\nd_vision = " << c.model.vision.d_vision << "\nvision_blocks = " << c.model.vision.n_blocks
        << "\nvision_heads = " << c.model.vision.n_heads << "\nseg_dim = " << c.model.seg_dim
        << "\nposition_std = " << c.model.position_std << "\nseed = " << c.seed
        << "\nencoder_seed = " << c.encoder_seed << "\nlog_every = " << c.log_every;
    if (!c.data.empty()) {
        out << "\ndata = " << c.data;
    }
    out << "\ncheckpoint_out = " << c.checkpoint_out << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Checkpoint format (all integers and floats little-endian):
//
//   "SAAF1" | u32 version
//   config: 12 x i32 dims, f64 lora_alpha, f64 position_std, u64 init_seed
//   u32 adapter count, per adapter: str target, i32 rank, f64 alpha
//   u32 param count, per param: str name, u8 trainable, u32 rank, rank x u64 dims, numel x f64
//   u64 encoder freeze seed | str RNG state | u64 step
//
// where str = u32 length + bytes.

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class ByteWriter {
  public:
    template <typename T>
    void put(T value) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_str(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void put_raw(const void* data, size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

  private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
  public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string get_str() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void get_raw(void* out, size_t n) {
        need(n);
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

  private:
    void need(size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorKind::TruncatedFile, "checkpoint ends early");
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    size_t pos_ = 0;
};

void put_param_table(ByteWriter& w, const ParamRegistry& params, std::string_view prefix) {
    std::uint32_t n = 0;
    for (const auto& [name, p] : params) {
        n += name.starts_with(prefix) ? 1 : 0;
    }
    w.put<std::uint32_t>(n);
    for (const auto& [name, p] : params) {
        if (!name.starts_with(prefix)) {
            continue;
        }
        w.put_str(name);
        w.put<std::uint8_t>(p.trainable ? 1 : 0);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
        for (Index d : p.value.shape()) {
            w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
        }
        w.put_raw(p.value.data().data(), static_cast<size_t>(p.value.numel()) * sizeof(double));
    }
}

} // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    const ModelBundle& b = ckpt.bundle;
    const ModelConfig& mc = b.config;
    ByteWriter w;
    w.put_raw(kCheckpointMagic, sizeof kCheckpointMagic);
    w.put<std::uint32_t>(kCheckpointVersion);
    for (int v : {mc.lm.n_layers, mc.lm.d_model, mc.lm.n_heads, mc.lm.max_seq_len, mc.lm.vocab_size,
                  mc.vision.image_size, mc.vision.patch_size, mc.vision.d_vision, mc.vision.n_blocks,
                  mc.vision.n_heads, mc.seg_dim, mc.lora_rank}) {
        w.put<std::int32_t>(v);
    }
    w.put<double>(mc.lora_alpha);
    w.put<double>(mc.position_std);
    w.put<std::uint64_t>(b.init_seed);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(b.adapters.size()));
    for (const auto& a : b.adapters) {
        w.put_str(a.target);
        w.put<std::int32_t>(a.rank);
        w.put<double>(a.alpha);
    }
    put_param_table(w, b.params, "");
    w.put<std::uint64_t>(b.encoder_seed);
    w.put_str(ckpt.rng_state);
    w.put<std::uint64_t>(ckpt.step);
    return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof kCheckpointMagic ||
        std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        throw Error(ErrorKind::BadMagic, "not a SAAF1 checkpoint");
    }
    ByteReader r(bytes);
    char magic[sizeof kCheckpointMagic];
    r.get_raw(magic, sizeof magic);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                    std::to_string(kCheckpointVersion));
    }
    Checkpoint ckpt;
    ModelBundle& b = ckpt.bundle;
    ModelConfig& mc = b.config;
    for (int* field : {&mc.lm.n_layers, &mc.lm.d_model, &mc.lm.n_heads, &mc.lm.max_seq_len, &mc.lm.vocab_size,
                       &mc.vision.image_size, &mc.vision.patch_size, &mc.vision.d_vision, &mc.vision.n_blocks,
                       &mc.vision.n_heads, &mc.seg_dim, &mc.lora_rank}) {
        *field = r.get<std::int32_t>();
    }
    mc.lora_alpha = r.get<double>();
    mc.position_std = r.get<double>();
    b.init_seed = r.get<std::uint64_t>();
    const auto n_adapters = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_adapters; ++i) {
        LoraAdapter a;
        a.target = r.get_str();
        a.rank = r.get<std::int32_t>();
        a.alpha = r.get<double>();
        b.adapters.push_back(std::move(a));
    }
    const auto n_params = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::string name = r.get_str();
        const bool trainable = r.get<std::uint8_t>() != 0;
        const auto rank = r.get<std::uint32_t>();
        if (rank == 0 || rank > 8) {
            throw Error(ErrorKind::TruncatedFile, "implausible tensor rank for " + name);
        }
        Shape shape;
        for (std::uint32_t k = 0; k < rank; ++k) {
            shape.push_back(static_cast<Index>(r.get<std::uint64_t>()));
        }
        const Index n = numel_of(shape);
        if (n <= 0 || n > (Index{1} << 28)) {
            throw Error(ErrorKind::TruncatedFile, "implausible tensor size for " + name);
        }
        Vector values(n);
        r.get_raw(values.data(), static_cast<size_t>(n) * sizeof(double));
        b.params.add(name, Tensor::from(std::move(shape), std::move(values)), trainable);
    }
    b.encoder_seed = r.get<std::uint64_t>();
    ckpt.rng_state = r.get_str();
    ckpt.step = r.get<std::uint64_t>();
    if (!r.at_end()) {
        throw Error(ErrorKind::TruncatedFile, "trailing bytes after checkpoint");
    }
    mc.validate();
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const fs::path& path) { return deserialize_checkpoint(read_file(path)); }

std::string encoder_hash(const ModelBundle& bundle) {
    ByteWriter w;
    put_param_table(w, bundle.params, "vision.encoder.");
    return sha256_hex(w.take());
}

// ---------------------------------------------------------------------------
// Training

SampleLoss sample_loss(const ModelBundle& bundle, const FeatureMap& features, const TokenSequence& dialogue,
                       const BinaryMask& target, const LossWeights& weights) {
    Tensor image_tokens = project_to_lm(bundle, features);
    LmOutput out = lm_forward(bundle, dialogue, image_tokens);
    Tensor lt = text_loss(out.logits, out.spliced);
    Tensor q = project_seg(bundle, extract_seg_embedding(out.hidden, out.spliced));
    Tensor logits = decode_mask(bundle, q, features);
    Tensor lm = mask_loss(logits, target, weights);
    Tensor total = total_loss(lt, lm, weights);
    return {lt, lm, total, logits};
}

std::string format_loss_record(const LossRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g", r.step, r.text, r.mask, r.total);
    return buf;
}

namespace {

struct TrainItem {
    FeatureMap features;
    TokenSequence dialogue;
    BinaryMask mask;
};

} // namespace

TrainResult train(const TrainConfig& config, const fs::path& root, const DatasetManifest& manifest,
                  const ProgressFn& progress) {
    config.validate();
    const auto records = manifest.select(Split::Train);
    if (records.empty()) {
        throw Error(ErrorKind::EmptySplit, "manifest has no training samples");
    }
    ModelBundle bundle = init_model(config.model, config.seed, config.encoder_seed);

    // The encoder is frozen, so its features are computed once per image.
    std::vector<TrainItem> items;
    items.reserve(records.size());
    for (const ReferringSample* rec : records) {
        LoadedSample loaded = load_sample(root, *rec);
        items.push_back({encode(bundle, loaded.image), encode_dialogue(rec->prompt, rec->answer), loaded.mask});
    }

    AdamState adam(AdamOptions{config.lr, config.beta1, config.beta2, config.adam_eps});
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<size_t> order(items.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    size_t cursor = order.size();
    auto next_index = [&]() {
        if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        return order[cursor++];
    };

    TrainResult result;
    const double share = 1.0 / config.effective_batch();
    for (int step = 1; step <= config.max_steps; ++step) {
        bundle.params.zero_grad();
        LossRecord rec{step, 0.0, 0.0, 0.0};
        for (int micro = 0; micro < config.grad_accum; ++micro) {
            for (int b = 0; b < config.per_device_batch; ++b) {
                const TrainItem& item = items[next_index()];
                SampleLoss sl = sample_loss(bundle, item.features, item.dialogue, item.mask, config.weights);
                scale(sl.total, share).backward();
                rec.text += sl.text.item() * share;
                rec.mask += sl.mask.item() * share;
                rec.total += sl.total.item() * share;
            }
        }
        adam_step(bundle.params, adam);
        result.log.push_back(rec);
        if (progress) {
            progress(rec);
        }
    }
    std::ostringstream rng_state;
    rng_state << rng;
    result.checkpoint = Checkpoint{std::move(bundle), rng_state.str(), static_cast<std::uint64_t>(config.max_steps)};
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct Accumulator {
    size_t n = 0;
    double miou = 0.0;
    double pa = 0.0;
    double window = 0.0;
    size_t window_n = 0;
    double wall = 0.0;
    size_t wall_n = 0;

    void add(const SampleMetrics& m) {
        ++n;
        miou += m.iou.miou;
        pa += m.pixel_accuracy;
        // The referred class is the foreground; the other class is background.
        const bool window_is_fg = m.target == TargetClass::Window;
        const bool window_present = window_is_fg ? m.iou.foreground_present : m.iou.background_present;
        const bool wall_present = window_is_fg ? m.iou.background_present : m.iou.foreground_present;
        if (window_present) {
            window += window_is_fg ? m.iou.iou_foreground : m.iou.iou_background;
            ++window_n;
        }
        if (wall_present) {
            wall += window_is_fg ? m.iou.iou_background : m.iou.iou_foreground;
            ++wall_n;
        }
    }

    MetricsSummary summary() const {
        MetricsSummary s;
        s.samples = n;
        if (n > 0) {
            s.miou = miou / static_cast<double>(n);
            s.pixel_accuracy = pa / static_cast<double>(n);
        }
        s.iou_window = window_n ? window / static_cast<double>(window_n) : 0.0;
        s.iou_wall = wall_n ? wall / static_cast<double>(wall_n) : 0.0;
        return s;
    }
};

} // namespace

MetricsReport summarize(std::vector<SampleMetrics> per_sample) {
    Accumulator all;
    std::map<FacadeStyle, Accumulator> styles;
    for (const auto& m : per_sample) {
        all.add(m);
        styles[m.style].add(m);
    }
    MetricsReport report;
    report.per_sample = std::move(per_sample);
    report.overall = all.summary();
    for (const auto& [style, acc] : styles) {
        report.per_style[style] = acc.summary();
    }
    return report;
}

std::string format_report(const MetricsReport& report) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %8s %10s %10s %8s %8s\n", "style", "samples", "IoU_window", "IoU_wall",
                  "mIoU", "PA");
    out << buf;
    auto row = [&](std::string_view name, const MetricsSummary& s) {
        std::snprintf(buf, sizeof buf, "%-14s %8zu %10.4f %10.4f %8.4f %8.4f\n", std::string(name).c_str(), s.samples,
                      s.iou_window, s.iou_wall, s.miou, s.pixel_accuracy);
        out << buf;
    };
    for (const auto& [style, s] : report.per_style) {
        row(to_string(style), s);
    }
    row("all", report.overall);
    return out.str();
}

MetricsReport evaluate_with(const fs::path& root, const DatasetManifest& manifest, Split split,
                            const Predictor& predict, const std::optional<fs::path>& dump_dir) {
    const auto records = manifest.select(split);
    if (records.empty()) {
        throw Error(ErrorKind::EmptySplit, "split '" + std::string(to_string(split)) + "' is empty");
    }
    std::vector<SampleMetrics> per_sample;
    per_sample.reserve(records.size());
    for (const ReferringSample* rec : records) {
        const LoadedSample loaded = load_sample(root, *rec);
        const BinaryMask pred = predict(loaded);
        if (pred.height() != loaded.mask.height() || pred.width() != loaded.mask.width()) {
            throw Error(ErrorKind::DimsMismatch, "prediction dims differ for " + rec->id);
        }
        if (dump_dir) {
            write_mask(pred, *dump_dir / (rec->id + ".pgm"));
        }
        per_sample.push_back(
            {rec->id, rec->style, rec->target_class, miou(pred, loaded.mask), pixel_accuracy(pred, loaded.mask)});
    }
    return summarize(std::move(per_sample));
}

Tensor predict_teacher_forced(const ModelBundle& bundle, const Image& image, std::string_view description) {
    const FeatureMap f = encode(bundle, image);
    const TokenSequence dialogue = encode_dialogue(render_prompt(description), kAnswer);
    const LmOutput out = lm_forward(bundle, dialogue, project_to_lm(bundle, f));
    return decode_mask(bundle, project_seg(bundle, extract_seg_embedding(out.hidden, out.spliced)), f);
}

MetricsReport evaluate(const Checkpoint& ckpt, const fs::path& root, const DatasetManifest& manifest, Split split,
                       const EvalOptions& options) {
    const ModelBundle& bundle = ckpt.bundle;
    Predictor predict = [&](const LoadedSample& s) {
        if (options.free_decode) {
            return segment(bundle, s.image, s.record->description, false, options.threshold).mask;
        }
        return binarize(predict_teacher_forced(bundle, s.image, s.record->description), options.threshold);
    };
    return evaluate_with(root, manifest, split, predict, options.dump_dir);
}

SegmentResult segment(const ModelBundle& bundle, const Image& image, std::string_view description, bool force_seg,
                      double threshold) {
    const FeatureMap f = encode(bundle, image);
    const Tensor image_tokens = project_to_lm(bundle, f);
    const TokenSequence prompt = encode_prompt(render_prompt(description));
    TokenSequence seq = greedy_decode(bundle, prompt, image_tokens, kMaxAnswerTokens);

    SegmentResult result;
    std::vector<int> generated(seq.ids.begin() + static_cast<std::ptrdiff_t>(prompt.size()), seq.ids.end());
    if (!generated.empty() && generated.back() == vocab::kEos) {
        generated.pop_back();
    }
    result.answer = detokenize(generated);
    result.seg_generated = std::find(generated.begin(), generated.end(), vocab::kSeg) != generated.end();

    // Keep only prompt + generated answer (without <EOS>) as LM context.
    TokenSequence context = prompt;
    for (int id : generated) {
        context.push_back(id);
    }
    if (!result.seg_generated) {
        if (!force_seg) {
            throw Error(ErrorKind::NoSegToken, "model answered without a <SEG> token: \"" + result.answer + "\"");
        }
        context.push_back(vocab::kSeg);
    }
    const LmOutput out = lm_forward(bundle, context, image_tokens);
    // First <SEG> after the prompt; the prompt itself carries none.
    const Tensor logits = decode_mask(bundle, project_seg(bundle, extract_seg_embedding(out.hidden, out.spliced)), f);
    result.mask = binarize(logits, threshold);
    return result;
}

// ---------------------------------------------------------------------------
// Gradient check

CheckReport gradcheck(const GradcheckOptions& options, const ModelConfig& model) {
    ModelBundle bundle = init_model(model, options.seed, options.seed + 1);
    std::mt19937_64 rng(options.seed);
    // Move the adapters off their zero init so every LoRA path carries gradient.
    std::normal_distribution<double> small(0.0, 0.2);
    for (const auto& adapter : bundle.adapters) {
        for (Index i = 0; i < bundle.param(adapter.b_name()).numel(); ++i) {
            bundle.params.at(adapter.b_name()).value.mutable_data()[i] = small(rng);
        }
    }
    const FacadeSpec spec = FacadeSpec::sample(FacadeStyle::Photo, model.vision.image_size, rng);
    const FacadeRender render = generate_facade(spec, rng());
    const TargetClass target = (rng() & 1U) ? TargetClass::Window : TargetClass::Wall;
    const std::string& description = description_pool(target).front();
    const FeatureMap features = encode(bundle, render.image);
    const TokenSequence dialogue = encode_dialogue(render_prompt(description), kAnswer);
    const BinaryMask& mask = target == TargetClass::Window ? render.window : render.wall;
    const LossWeights weights;

    auto loss_fn = [&]() { return sample_loss(bundle, features, dialogue, mask, weights).total; };
    CheckOptions check;
    check.h = options.h;
    check.tol = options.tol;
    check.seed = options.seed;
    return finite_diff_check(loss_fn, bundle.params, check);
}

} // namespace saaf
