#pragma once

#include "saaf/image.hpp"
#include "saaf/text_model.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace saaf {

enum class FacadeStyle { Photo, LineDrawing, NoisyPhoto };
enum class TargetClass { Window, Wall };
enum class Split { Train, Test, Val };

std::string_view to_string(FacadeStyle style);
std::string_view to_string(TargetClass target);
std::string_view to_string(Split split);
FacadeStyle parse_style(std::string_view text);
TargetClass parse_target(std::string_view text);
Split parse_split(std::string_view text);

/// Layout and appearance of one synthetic facade.
struct FacadeSpec {
    int size = 64;
    int rows = 2;  // 1..4
    int cols = 3;  // 1..5
    double margin = 0.08;  // fraction of the side left as wall on each edge
    double fill_min = 0.55;  // window extent as a fraction of its grid cell
    double fill_max = 0.85;
    double wall_min = 0.5;
    double wall_max = 0.8;
    double window_min = 0.1;
    double window_max = 0.3;
    double noise = 0.02;
    FacadeStyle style = FacadeStyle::Photo;

    void validate() const;
    /// Random layout (rows in 1..max_rows, cols in 1..max_cols) for a style,
    /// appearance ranges at defaults.
    static FacadeSpec sample(FacadeStyle style, int size, std::mt19937_64& rng, int max_rows = 4, int max_cols = 5);
};

struct FacadeRender {
    Image image;
    BinaryMask window;
    BinaryMask wall;
};

/// Windows are axis-aligned rectangles, one per grid cell, jittered inside the
/// cell with at least one wall pixel between neighbours. Deterministic in (spec, seed).
FacadeRender generate_facade(const FacadeSpec& spec, std::uint64_t seed);

// Question-answer template pieces. The full dialogue is
//   kPromptHead + description + kPromptTail + kAnswer
inline constexpr std::string_view kPromptHead = "User: <Image> Help me segment the objects in this image according to ";
inline constexpr std::string_view kPromptTail = "? SAAF: ";
inline constexpr std::string_view kAnswer = "Understood, it is <SEG>.";
inline constexpr std::string_view kImagePlaceholder = "<Image>";

const std::vector<std::string>& description_pool(TargetClass target);
std::string render_prompt(std::string_view description);

/// <BOS> + prompt, with the <Image> placeholder mapped to the <IMG> token.
TokenSequence encode_prompt(std::string_view prompt);
/// encode_prompt(prompt) + answer + <EOS>, answer and <EOS> supervised.
TokenSequence encode_dialogue(std::string_view prompt, std::string_view answer);

struct ReferringSample {
    std::string id;
    std::string image;  // relative to the dataset root
    std::string mask;   // mask of target_class, relative to the dataset root
    TargetClass target_class = TargetClass::Window;
    std::string description;
    std::string prompt;
    std::string answer;
    Split split = Split::Train;
    std::string sha256;  // of the image file bytes
    FacadeStyle style = FacadeStyle::Photo;

    bool operator==(const ReferringSample&) const = default;
};

ReferringSample make_referring_sample(std::string id, TargetClass target, std::string description);

struct DatasetManifest {
    std::vector<ReferringSample> samples;

    size_t count(Split split) const;
    std::vector<const ReferringSample*> select(Split split) const;
    /// Throws DuplicateAcrossSplits when one content hash sits in two splits.
    void validate() const;

    bool operator==(const DatasetManifest&) const = default;
};

/// Drops repeated content hashes (first occurrence wins), then assigns splits
/// after a seeded shuffle: test = floor(0.2 n), val = floor(0.1 n), train = rest.
DatasetManifest split_and_dedup(std::vector<ReferringSample> samples, std::uint64_t seed);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_pgm(const BinaryMask& mask);
BinaryMask decode_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& image);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);

void write_mask(const BinaryMask& mask, const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

struct GenerateOptions {
    int count = 100;
    std::uint64_t seed = 0;
    int size = 64;
    std::vector<FacadeStyle> styles{FacadeStyle::Photo};
    int max_rows = 4;  // 1..4
    int max_cols = 5;  // 1..5
};

/// Renders `count` facades (one referring sample each) under `root`, writes
/// images/, masks/ and manifest.jsonl, and returns the split manifest.
/// A pure function of the options.
DatasetManifest generate_dataset(const std::filesystem::path& root, const GenerateOptions& options);

struct LoadedSample {
    const ReferringSample* record = nullptr;
    Image image;
    BinaryMask mask;
};

LoadedSample load_sample(const std::filesystem::path& root, const ReferringSample& record);

} // namespace saaf
