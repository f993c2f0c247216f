#include "saaf/text_model.hpp"

#include "saaf/detail/init.hpp"
#include "saaf/error.hpp"
#include "saaf/ops.hpp"
#include "saaf/transformer.hpp"

#include <cmath>
#include <random>

namespace saaf {

namespace vocab {

int id_of(char c) {
    if (c == '\n') {
        return kNewline;
    }
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x20 && u <= 0x7e) {
        return kFirstPrintable + (u - 0x20);
    }
    throw Error(ErrorKind::UnsupportedCharacter, "byte " + std::to_string(u) + " is outside the vocabulary");
}

std::string spelling(int id) {
    if (id < 0 || id >= kSize) {
        throw Error(ErrorKind::IdOutOfRange, "token id " + std::to_string(id));
    }
    if (id < kNewline) {
        return std::string(kSpecialSpellings[static_cast<size_t>(id)]);
    }
    if (id == kNewline) {
        return "\n";
    }
    return std::string(1, static_cast<char>(0x20 + id - kFirstPrintable));
}

} // namespace vocab

void TokenSequence::push_back(int id, bool supervised) {
    ids.push_back(id);
    supervise.push_back(supervised);
    if (id == vocab::kSeg && !seg_position) {
        seg_position = ids.size() - 1;
    }
}

void TokenSequence::append(const TokenSequence& other) {
    for (size_t i = 0; i < other.size(); ++i) {
        push_back(other.ids[i], other.supervise[i]);
    }
}

void TokenSequence::refresh_seg_position() {
    seg_position.reset();
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == vocab::kSeg) {
            seg_position = i;
            return;
        }
    }
}

TokenSequence tokenize(std::string_view text) {
    TokenSequence out;
    size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        if (text[i] == '<') {
            for (size_t s = 0; s < vocab::kSpecialSpellings.size(); ++s) {
                if (text.substr(i).starts_with(vocab::kSpecialSpellings[s])) {
                    out.push_back(static_cast<int>(s));
                    i += vocab::kSpecialSpellings[s].size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) {
            out.push_back(vocab::id_of(text[i]));
            ++i;
        }
    }
    return out;
}

std::string detokenize(const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        out += vocab::spelling(id);
    }
    return out;
}

namespace {

std::optional<size_t> image_slot(const TokenSequence& tokens) {
    std::optional<size_t> slot;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens.ids[i] == vocab::kImg) {
            if (slot) {
                throw Error(ErrorKind::MultipleImgPlaceholders, "more than one <IMG> token");
            }
            slot = i;
        }
    }
    return slot;
}

} // namespace

TokenSequence splice_tokens(const TokenSequence& tokens, Index n_image) {
    if (n_image == 0) {
        return tokens;
    }
    const auto slot = image_slot(tokens);
    if (!slot) {
        throw Error(ErrorKind::MissingImgPlaceholder, "image tokens given but no <IMG> token in the sequence");
    }
    TokenSequence out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i == *slot) {
            for (Index k = 0; k < n_image; ++k) {
                out.push_back(vocab::kImg, false);
            }
        } else {
            out.push_back(tokens.ids[i], tokens.supervise[i]);
        }
    }
    return out;
}

LmOutput lm_forward(const ModelBundle& bundle, const TokenSequence& tokens, const Tensor& image_tokens) {
    const LmConfig& cfg = bundle.config.lm;
    if (tokens.size() == 0) {
        throw Error(ErrorKind::ShapeMismatch, "empty token sequence");
    }
    const Index n_image = image_tokens.defined() ? image_tokens.dim(0) : 0;
    if (n_image > 0 && (image_tokens.rank() != 2 || image_tokens.dim(1) != cfg.d_model)) {
        throw Error(ErrorKind::ShapeMismatch, "image tokens must be [n, d_model]");
    }
    TokenSequence spliced = splice_tokens(tokens, n_image);
    const auto length = static_cast<Index>(spliced.size());
    if (length > cfg.max_seq_len) {
        throw Error(ErrorKind::SequenceTooLong, "spliced length " + std::to_string(length) + " exceeds " +
                                                    std::to_string(cfg.max_seq_len));
    }

    Tensor x;
    if (n_image > 0) {
        const size_t slot = *image_slot(tokens);
        std::vector<Tensor> parts;
        if (slot > 0) {
            parts.push_back(embedding(bundle.param("lm.embed_tokens"),
                                      std::span<const int>(tokens.ids.data(), slot)));
        }
        parts.push_back(image_tokens);
        if (slot + 1 < tokens.size()) {
            parts.push_back(embedding(bundle.param("lm.embed_tokens"),
                                      std::span<const int>(tokens.ids.data() + slot + 1, tokens.size() - slot - 1)));
        }
        x = concat(parts, 0);
    } else {
        x = embedding(bundle.param("lm.embed_tokens"), tokens.ids);
    }
    x = add(x, slice(bundle.param("lm.pos_embed"), 0, 0, length));
    for (int i = 0; i < cfg.n_layers; ++i) {
        x = transformer_block(bundle, "lm.layer" + std::to_string(i), x, cfg.n_heads, true);
    }
    Tensor hidden = layer_norm(x, bundle.param("lm.ln_final.gain"), bundle.param("lm.ln_final.bias"));
    Tensor logits = matmul(hidden, transpose(bundle.param("lm.lm_head")));
    return {hidden, logits, std::move(spliced)};
}

ModelBundle lora_merge(const ModelBundle& bundle) {
    for (const auto& adapter : bundle.adapters) {
        if (!bundle.params.contains(adapter.target)) {
            throw Error(ErrorKind::TargetNotFound, "adapter target " + adapter.target + " does not exist");
        }
        const Tensor& w = bundle.param(adapter.target);
        const Tensor& a = bundle.param(adapter.a_name());
        const Tensor& b = bundle.param(adapter.b_name());
        if (w.rank() != 2 || a.rank() != 2 || b.rank() != 2 || a.dim(1) != w.dim(1) || b.dim(0) != w.dim(0) ||
            a.dim(0) != b.dim(1)) {
            throw Error(ErrorKind::ShapeMismatch, "adapter shapes do not conform to " + adapter.target);
        }
    }
    ModelBundle merged = bundle.clone();
    for (const auto& adapter : bundle.adapters) {
        Tensor& w = merged.params.at(adapter.target).value;
        const RowMatrix delta =
            adapter.scale() * (bundle.param(adapter.b_name()).matrix() * bundle.param(adapter.a_name()).matrix());
        w.mutable_data() += Eigen::Map<const Vector>(delta.data(), delta.size());
        merged.params.erase(adapter.a_name());
        merged.params.erase(adapter.b_name());
    }
    merged.adapters.clear();
    return merged;
}

void attach_lora(ModelBundle& bundle, const std::string& target, int rank, double alpha, std::uint64_t seed) {
    if (!bundle.params.contains(target)) {
        throw Error(ErrorKind::TargetNotFound, "adapter target " + target + " does not exist");
    }
    if (rank < 1 || bundle.find_adapter(target)) {
        throw std::invalid_argument("attach_lora: bad rank or adapter already attached");
    }
    const Tensor& w = bundle.param(target);
    std::mt19937_64 rng(seed);
    LoraAdapter adapter{target, rank, alpha};
    bundle.params.add(adapter.a_name(),
                      detail::normal_tensor({rank, w.dim(1)}, 1.0 / std::sqrt(static_cast<double>(w.dim(1))), rng),
                      true);
    bundle.params.add(adapter.b_name(), Tensor::zeros({w.dim(0), rank}), true);
    bundle.adapters.push_back(adapter);
}

TokenSequence greedy_decode(const ModelBundle& bundle, const TokenSequence& prompt, const Tensor& image_tokens,
                            int max_new) {
    if (max_new <= 0) {
        throw std::invalid_argument("greedy_decode: max_new must be positive");
    }
    const Index n_image = image_tokens.defined() ? image_tokens.dim(0) : 0;
    const Index extra = n_image > 0 ? n_image - 1 : 0;
    const Index capacity = bundle.config.lm.max_seq_len;
    if (static_cast<Index>(prompt.size()) + extra > capacity) {
        throw Error(ErrorKind::SequenceTooLong, "prompt does not fit the context");
    }
    TokenSequence seq = prompt;
    for (int step = 0; step < max_new && static_cast<Index>(seq.size()) + extra < capacity; ++step) {
        const LmOutput out = lm_forward(bundle, seq, image_tokens);
        const auto logits = out.logits.matrix();
        const Index last = logits.rows() - 1;
        int best = 0;
        for (Index v = 1; v < logits.cols(); ++v) {
            if (logits(last, v) > logits(last, best)) {
                best = static_cast<int>(v);
            }
        }
        seq.push_back(best, false);
        if (best == vocab::kEos) {
            break;
        }
    }
    return seq;
}

} // namespace saaf
