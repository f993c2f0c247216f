#pragma once

#include "saaf/model.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace saaf {

/// Character vocabulary: five specials, newline, then printable ASCII.
///
///   0 <PAD>   1 <BOS>   2 <EOS>   3 <IMG>   4 <SEG>
///   5 '\n'    6..100 ' ' (0x20) .. '~' (0x7e)
namespace vocab {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kImg = 3;
inline constexpr int kSeg = 4;
inline constexpr int kNewline = 5;
inline constexpr int kFirstPrintable = 6;
inline constexpr int kSize = 101;

inline constexpr std::array<std::string_view, 5> kSpecialSpellings{"<PAD>", "<BOS>", "<EOS>", "<IMG>", "<SEG>"};

int id_of(char c);
std::string spelling(int id);

} // namespace vocab

struct TokenSequence {
    std::vector<int> ids;
    /// True only on answer positions, i.e. the tokens the LM is trained to emit.
    std::vector<bool> supervise;
    /// Index of the first <SEG>, if any.
    std::optional<size_t> seg_position;

    size_t size() const { return ids.size(); }
    void push_back(int id, bool supervised = false);
    void append(const TokenSequence& other);
    void refresh_seg_position();
};

TokenSequence tokenize(std::string_view text);
std::string detokenize(const std::vector<int>& ids);

/// Sequence aligned with the LM's hidden rows once `n_image` image tokens
/// replace the single <IMG> placeholder (image rows are <IMG>, unsupervised).
TokenSequence splice_tokens(const TokenSequence& tokens, Index n_image);

struct LmOutput {
    Tensor hidden;          // [T, d_model], after the final layer norm
    Tensor logits;          // [T, vocab]
    TokenSequence spliced;  // row-aligned with hidden/logits
};

/// Causal LM over the token sequence with `image_tokens` ([n, d_model], may be
/// undefined) spliced in at the <IMG> placeholder.
LmOutput lm_forward(const ModelBundle& bundle, const TokenSequence& tokens, const Tensor& image_tokens);

/// Folds every adapter into its base weight, W + (alpha / r) B A, and drops
/// the adapters. The input bundle is left untouched.
ModelBundle lora_merge(const ModelBundle& bundle);

/// Attaches a fresh adapter (A ~ N(0, 1/d_in), B = 0) to an existing weight.
void attach_lora(ModelBundle& bundle, const std::string& target, int rank, double alpha, std::uint64_t seed);

/// Appends argmax tokens (ties to the lowest id) until <EOS> is emitted,
/// `max_new` tokens were added, or the context is full.
TokenSequence greedy_decode(const ModelBundle& bundle, const TokenSequence& prompt, const Tensor& image_tokens,
                            int max_new);

} // namespace saaf
