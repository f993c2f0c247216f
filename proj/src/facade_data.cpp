#include "saaf/facade_data.hpp"

#include "saaf/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace saaf {

namespace fs = std::filesystem;

std::string_view to_string(FacadeStyle style) {
    switch (style) {
    case FacadeStyle::Photo: return "photo";
    case FacadeStyle::LineDrawing: return "line_drawing";
    case FacadeStyle::NoisyPhoto: return "noisy_photo";
    }
    return "photo";
}

std::string_view to_string(TargetClass target) {
    return target == TargetClass::Window ? "window" : "wall";
}

std::string_view to_string(Split split) {
    switch (split) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Val: return "val";
    }
    return "train";
}

FacadeStyle parse_style(std::string_view text) {
    if (text == "photo") {
        return FacadeStyle::Photo;
    }
    if (text == "line_drawing") {
        return FacadeStyle::LineDrawing;
    }
    if (text == "noisy_photo") {
        return FacadeStyle::NoisyPhoto;
    }
    throw Error(ErrorKind::MalformedRecord, "unknown style '" + std::string(text) + "'");
}

TargetClass parse_target(std::string_view text) {
    if (text == "window") {
        return TargetClass::Window;
    }
    if (text == "wall") {
        return TargetClass::Wall;
    }
    throw Error(ErrorKind::UnknownClass, "unknown target class '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
    if (text == "train") {
        return Split::Train;
    }
    if (text == "test") {
        return Split::Test;
    }
    if (text == "val") {
        return Split::Val;
    }
    throw Error(ErrorKind::MalformedRecord, "unknown split '" + std::string(text) + "'");
}

void FacadeSpec::validate() const {
    const bool ranges_ok = 0.0 <= wall_min && wall_min <= wall_max && wall_max <= 1.0 && 0.0 <= window_min &&
                           window_min <= window_max && window_max <= 1.0 && 0.0 < fill_min &&
                           fill_min <= fill_max && fill_max <= 1.0 && noise >= 0.0 && margin >= 0.0 && margin < 0.5;
    if (!ranges_ok || size <= 0 || rows < 1 || cols < 1) {
        throw Error(ErrorKind::SpecInfeasible, "facade spec ranges are invalid");
    }
    const int margin_px = static_cast<int>(std::lround(margin * size));
    const int interior = size - 2 * margin_px;
    // Every cell needs room for a window plus a one-pixel separator.
    if (interior / rows < 3 || interior / cols < 3) {
        throw Error(ErrorKind::SpecInfeasible, std::to_string(rows) + "x" + std::to_string(cols) +
                                                   " windows do not fit a " + std::to_string(size) + " px facade");
    }
}

FacadeSpec FacadeSpec::sample(FacadeStyle style, int size, std::mt19937_64& rng, int max_rows, int max_cols) {
    if (max_rows < 1 || max_rows > 4 || max_cols < 1 || max_cols > 5) {
        throw Error(ErrorKind::SpecInfeasible, "layout limits must be within 1..4 rows and 1..5 cols");
    }
    FacadeSpec spec;
    spec.size = size;
    spec.style = style;
    spec.rows = std::uniform_int_distribution<int>(1, max_rows)(rng);
    spec.cols = std::uniform_int_distribution<int>(1, max_cols)(rng);
    switch (style) {
    case FacadeStyle::Photo: spec.noise = 0.02; break;
    case FacadeStyle::NoisyPhoto: spec.noise = 0.08; break;
    case FacadeStyle::LineDrawing: spec.noise = 0.0; break;
    }
    return spec;
}

namespace {

struct Rect {
    int y0;
    int x0;
    int h;
    int w;
};

std::vector<Rect> layout_windows(const FacadeSpec& spec, std::mt19937_64& rng) {
    const int margin_px = static_cast<int>(std::lround(spec.margin * spec.size));
    const double interior = spec.size - 2 * margin_px;
    const double cell_h = interior / spec.rows;
    const double cell_w = interior / spec.cols;
    std::uniform_real_distribution<double> fill(spec.fill_min, spec.fill_max);
    const double fill_h = fill(rng);
    const double fill_w = fill(rng);

    std::vector<Rect> rects;
    for (int r = 0; r < spec.rows; ++r) {
        const int y_begin = margin_px + static_cast<int>(std::floor(r * cell_h));
        const int y_end = margin_px + static_cast<int>(std::floor((r + 1) * cell_h));
        for (int c = 0; c < spec.cols; ++c) {
            const int x_begin = margin_px + static_cast<int>(std::floor(c * cell_w));
            const int x_end = margin_px + static_cast<int>(std::floor((c + 1) * cell_w));
            // Last row/column of each cell stays wall.
            const int usable_h = y_end - y_begin - 1;
            const int usable_w = x_end - x_begin - 1;
            const int h = std::clamp(static_cast<int>(std::lround(fill_h * (y_end - y_begin))), 1, usable_h);
            const int w = std::clamp(static_cast<int>(std::lround(fill_w * (x_end - x_begin))), 1, usable_w);
            const int oy = std::uniform_int_distribution<int>(0, usable_h - h)(rng);
            const int ox = std::uniform_int_distribution<int>(0, usable_w - w)(rng);
            rects.push_back({y_begin + oy, x_begin + ox, h, w});
        }
    }
    return rects;
}

} // namespace

FacadeRender generate_facade(const FacadeSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    const int n = spec.size;
    const std::vector<Rect> rects = layout_windows(spec, rng);

    BinaryMask window = BinaryMask::filled(n, n, false);
    for (const Rect& r : rects) {
        for (int y = r.y0; y < r.y0 + r.h; ++y) {
            for (int x = r.x0; x < r.x0 + r.w; ++x) {
                window.set(y, x, true);
            }
        }
    }

    Vector hwc(static_cast<Index>(n) * n * 3);
    if (spec.style == FacadeStyle::LineDrawing) {
        hwc.setOnes();
        const double ink = 0.1;
        for (const Rect& r : rects) {
            for (int y = r.y0; y < r.y0 + r.h; ++y) {
                for (int x = r.x0; x < r.x0 + r.w; ++x) {
                    const bool edge = y == r.y0 || y == r.y0 + r.h - 1 || x == r.x0 || x == r.x0 + r.w - 1;
                    if (edge) {
                        for (int c = 0; c < 3; ++c) {
                            hwc[(static_cast<Index>(y) * n + x) * 3 + c] = ink;
                        }
                    }
                }
            }
        }
    } else {
        std::uniform_real_distribution<double> wall_tone(spec.wall_min, spec.wall_max);
        std::uniform_real_distribution<double> window_tone(spec.window_min, spec.window_max);
        std::uniform_real_distribution<double> tint(-0.03, 0.03);
        double wall_rgb[3];
        double window_rgb[3];
        const double wall_base = wall_tone(rng);
        const double window_base = window_tone(rng);
        for (int c = 0; c < 3; ++c) {
            wall_rgb[c] = std::clamp(wall_base + tint(rng), spec.wall_min, spec.wall_max);
            window_rgb[c] = std::clamp(window_base + tint(rng), spec.window_min, spec.window_max);
        }
        std::normal_distribution<double> noise(0.0, 1.0);
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const double* base = window.at(y, x) ? window_rgb : wall_rgb;
                for (int c = 0; c < 3; ++c) {
                    const double v = base[c] + spec.noise * noise(rng);
                    hwc[(static_cast<Index>(y) * n + x) * 3 + c] = std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    FacadeRender out{Image(n, n, std::move(hwc)), window, window.complement()};
    return out;
}

const std::vector<std::string>& description_pool(TargetClass target) {
    static const std::vector<std::string> windows{"daylight-admitting components", "glazed sections",
                                                  "transparent surfaces", "fenestration elements"};
    static const std::vector<std::string> walls{"opaque envelope surfaces", "masonry regions", "solid wall areas"};
    return target == TargetClass::Window ? windows : walls;
}

std::string render_prompt(std::string_view description) {
    std::string out(kPromptHead);
    out += description;
    out += kPromptTail;
    return out;
}

TokenSequence encode_prompt(std::string_view prompt) {
    std::string text(prompt);
    const auto at = text.find(kImagePlaceholder);
    if (at != std::string::npos) {
        text.replace(at, kImagePlaceholder.size(), vocab::kSpecialSpellings[vocab::kImg]);
    }
    TokenSequence out;
    out.push_back(vocab::kBos);
    out.append(tokenize(text));
    return out;
}

TokenSequence encode_dialogue(std::string_view prompt, std::string_view answer) {
    TokenSequence out = encode_prompt(prompt);
    TokenSequence reply = tokenize(answer);
    for (size_t i = 0; i < reply.size(); ++i) {
        out.push_back(reply.ids[i], true);
    }
    out.push_back(vocab::kEos, true);
    return out;
}

ReferringSample make_referring_sample(std::string id, TargetClass target, std::string description) {
    if (target != TargetClass::Window && target != TargetClass::Wall) {
        throw Error(ErrorKind::UnknownClass, "target class must be window or wall");
    }
    if (description.empty()) {
        throw Error(ErrorKind::EmptyDescription, "description must not be empty");
    }
    ReferringSample s;
    s.image = "images/" + id + ".ppm";
    s.mask = "masks/" + id + "_" + std::string(to_string(target)) + ".pgm";
    s.id = std::move(id);
    s.target_class = target;
    s.prompt = render_prompt(description);
    s.answer = std::string(kAnswer);
    s.description = std::move(description);
    return s;
}

size_t DatasetManifest::count(Split split) const {
    return static_cast<size_t>(
        std::count_if(samples.begin(), samples.end(), [&](const ReferringSample& s) { return s.split == split; }));
}

std::vector<const ReferringSample*> DatasetManifest::select(Split split) const {
    std::vector<const ReferringSample*> out;
    for (const auto& s : samples) {
        if (s.split == split) {
            out.push_back(&s);
        }
    }
    return out;
}

void DatasetManifest::validate() const {
    std::map<std::string, Split> seen;
    for (const auto& s : samples) {
        auto [it, inserted] = seen.emplace(s.sha256, s.split);
        if (!inserted && it->second != s.split) {
            throw Error(ErrorKind::DuplicateAcrossSplits, "content hash " + s.sha256 + " appears in " +
                                                              std::string(to_string(it->second)) + " and " +
                                                              std::string(to_string(s.split)));
        }
    }
}

DatasetManifest split_and_dedup(std::vector<ReferringSample> samples, std::uint64_t seed) {
    std::vector<ReferringSample> unique;
    std::set<std::string> hashes;
    for (auto& s : samples) {
        if (hashes.insert(s.sha256).second) {
            unique.push_back(std::move(s));
        }
    }
    if (unique.size() < 10) {
        throw Error(ErrorKind::TooFewSamples, "need at least 10 unique samples, got " + std::to_string(unique.size()));
    }
    const size_t n = unique.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const size_t n_test = n * 2 / 10;
    const size_t n_val = n / 10;
    for (size_t rank = 0; rank < n; ++rank) {
        Split split = Split::Train;
        if (rank < n_test) {
            split = Split::Test;
        } else if (rank < n_test + n_val) {
            split = Split::Val;
        }
        unique[order[rank]].split = split;
    }
    return DatasetManifest{std::move(unique)};
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    std::string text;
    for (const auto& s : manifest.samples) {
        nlohmann::json j{{"id", s.id},
                         {"image", s.image},
                         {"mask", s.mask},
                         {"target_class", to_string(s.target_class)},
                         {"description", s.description},
                         {"split", to_string(s.split)},
                         {"sha256", s.sha256},
                         {"style", to_string(s.style)}};
        text += j.dump();
        text += '\n';
    }
    write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingFile, "cannot open manifest " + path.string());
    }
    DatasetManifest manifest;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no);
        try {
            const auto j = nlohmann::json::parse(line);
            for (const char* key : {"id", "image", "mask", "target_class", "description", "split", "sha256"}) {
                if (!j.contains(key) || !j[key].is_string()) {
                    throw Error(ErrorKind::MalformedRecord, where + ": missing string field '" + key + "'");
                }
            }
            ReferringSample s = make_referring_sample(j["id"].get<std::string>(),
                                                      parse_target(j["target_class"].get<std::string>()),
                                                      j["description"].get<std::string>());
            s.image = j["image"].get<std::string>();
            s.mask = j["mask"].get<std::string>();
            s.split = parse_split(j["split"].get<std::string>());
            s.sha256 = j["sha256"].get<std::string>();
            if (j.contains("style")) {
                s.style = parse_style(j["style"].get<std::string>());
            }
            manifest.samples.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::MalformedRecord, where + ": " + e.what());
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::MalformedRecord) {
                throw;
            }
            throw Error(ErrorKind::MalformedRecord, where + ": " + e.what());
        }
    }
    manifest.validate();
    return manifest;
}

namespace {

std::vector<std::uint8_t> netpbm_header(const char* magic, Index width, Index height) {
    const std::string head = std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    return {head.begin(), head.end()};
}

struct NetpbmHeader {
    Index width = 0;
    Index height = 0;
    size_t payload_offset = 0;
};

NetpbmHeader parse_netpbm(const std::vector<std::uint8_t>& bytes, std::string_view magic) {
    if (bytes.size() < 2 || bytes[0] != static_cast<std::uint8_t>(magic[0]) ||
        bytes[1] != static_cast<std::uint8_t>(magic[1])) {
        throw Error(ErrorKind::BadMagic, "expected " + std::string(magic) + " file");
    }
    size_t pos = 2;
    auto read_number = [&]() -> long {
        while (pos < bytes.size() && std::isspace(bytes[pos])) {
            ++pos;
        }
        long v = 0;
        size_t digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            ++digits;
            if (v > 1'000'000) {
                throw Error(ErrorKind::MalformedRecord, "header value too large");
            }
        }
        if (digits == 0) {
            throw Error(ErrorKind::TruncatedFile, "incomplete header");
        }
        return v;
    };
    NetpbmHeader h;
    h.width = read_number();
    h.height = read_number();
    const long maxval = read_number();
    if (maxval != 255 || h.width <= 0 || h.height <= 0) {
        throw Error(ErrorKind::MalformedRecord, "only positive dims with maxval 255 are supported");
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw Error(ErrorKind::TruncatedFile, "incomplete header");
    }
    h.payload_offset = pos + 1;
    return h;
}

} // namespace

std::vector<std::uint8_t> encode_pgm(const BinaryMask& mask) {
    auto out = netpbm_header("P5", mask.width(), mask.height());
    for (std::uint8_t b : mask.bits()) {
        out.push_back(b ? 255 : 0);
    }
    return out;
}

BinaryMask decode_pgm(const std::vector<std::uint8_t>& bytes) {
    const NetpbmHeader h = parse_netpbm(bytes, "P5");
    const auto n = static_cast<size_t>(h.width * h.height);
    if (bytes.size() - h.payload_offset < n) {
        throw Error(ErrorKind::TruncatedFile, "mask payload is truncated");
    }
    std::vector<std::uint8_t> bits(n);
    for (size_t i = 0; i < n; ++i) {
        const std::uint8_t v = bytes[h.payload_offset + i];
        if (v != 0 && v != 255) {
            throw Error(ErrorKind::NonBinaryMaskValue,
                        "mask byte " + std::to_string(v) + " at offset " + std::to_string(i));
        }
        bits[i] = v == 255 ? 1 : 0;
    }
    return BinaryMask(h.height, h.width, std::move(bits));
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
    auto out = netpbm_header("P6", image.width(), image.height());
    for (Index i = 0; i < image.data().size(); ++i) {
        out.push_back(static_cast<std::uint8_t>(std::lround(image.data()[i] * 255.0)));
    }
    return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
    const NetpbmHeader h = parse_netpbm(bytes, "P6");
    const auto n = static_cast<size_t>(h.width * h.height * 3);
    if (bytes.size() - h.payload_offset < n) {
        throw Error(ErrorKind::TruncatedFile, "image payload is truncated");
    }
    Vector hwc(static_cast<Index>(n));
    for (size_t i = 0; i < n; ++i) {
        hwc[static_cast<Index>(i)] = bytes[h.payload_offset + i] / 255.0;
    }
    return Image(h.height, h.width, std::move(hwc));
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::MissingFile, "cannot write " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(ErrorKind::MissingFile, "short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

void write_mask(const BinaryMask& mask, const fs::path& path) { write_file_atomic(path, encode_pgm(mask)); }

BinaryMask read_mask(const fs::path& path) { return decode_pgm(read_file(path)); }

void write_image(const Image& image, const fs::path& path) { write_file_atomic(path, encode_ppm(image)); }

Image read_image(const fs::path& path) { return decode_ppm(read_file(path)); }

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

DatasetManifest generate_dataset(const fs::path& root, const GenerateOptions& options) {
    if (options.count <= 0 || options.styles.empty()) {
        throw Error(ErrorKind::TooFewSamples, "count must be positive and at least one style given");
    }
    std::vector<ReferringSample> samples;
    for (int i = 0; i < options.count; ++i) {
        // Independent stream per sample: depends only on (seed, index).
        std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                          static_cast<std::uint32_t>(i)};
        std::mt19937_64 rng(seq);
        const FacadeStyle style = options.styles[static_cast<size_t>(i) % options.styles.size()];
        const FacadeSpec spec = FacadeSpec::sample(style, options.size, rng, options.max_rows, options.max_cols);
        const FacadeRender render = generate_facade(spec, rng());
        const TargetClass target = (rng() & 1U) ? TargetClass::Window : TargetClass::Wall;
        const auto& pool = description_pool(target);
        const std::string description =
            pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];

        char id[16];
        std::snprintf(id, sizeof id, "f%05d", i);
        ReferringSample sample = make_referring_sample(id, target, description);
        sample.style = style;
        const auto image_bytes = encode_ppm(render.image);
        sample.sha256 = sha256_hex(image_bytes);
        write_file_atomic(root / sample.image, image_bytes);
        write_mask(render.window, root / "masks" / (std::string(id) + "_window.pgm"));
        write_mask(render.wall, root / "masks" / (std::string(id) + "_wall.pgm"));
        samples.push_back(std::move(sample));
    }
    DatasetManifest manifest = split_and_dedup(std::move(samples), options.seed);
    write_manifest(manifest, root / "manifest.jsonl");
    return manifest;
}

LoadedSample load_sample(const fs::path& root, const ReferringSample& record) {
    LoadedSample out;
    out.record = &record;
    out.image = read_image(root / record.image);
    out.mask = read_mask(root / record.mask);
    if (out.mask.height() != out.image.height() || out.mask.width() != out.image.width()) {
        throw Error(ErrorKind::DimsMismatch, "mask and image dims differ for " + record.id);
    }
    return out;
}

} // namespace saaf
