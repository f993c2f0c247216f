#include "saaf/vision_encoder.hpp"

#include "saaf/error.hpp"
#include "saaf/ops.hpp"
#include "saaf/transformer.hpp"

namespace saaf {

Tensor patchify(const Image& image, int patch) {
    if (patch <= 0 || image.height() % patch != 0 || image.width() % patch != 0) {
        throw Error(ErrorKind::NonDivisibleDims, "image " + std::to_string(image.height()) + "x" +
                                                     std::to_string(image.width()) + " is not divisible by patch " +
                                                     std::to_string(patch));
    }
    const Index gh = image.height() / patch;
    const Index gw = image.width() / patch;
    const Index row_len = static_cast<Index>(patch) * patch * 3;
    Vector out(gh * gw * row_len);
    Index k = 0;
    for (Index gy = 0; gy < gh; ++gy) {
        for (Index gx = 0; gx < gw; ++gx) {
            for (Index dy = 0; dy < patch; ++dy) {
                for (Index dx = 0; dx < patch; ++dx) {
                    for (Index c = 0; c < 3; ++c) {
                        out[k++] = image.at(gy * patch + dy, gx * patch + dx, c);
                    }
                }
            }
        }
    }
    return Tensor::from({gh * gw, row_len}, std::move(out));
}

Image unpatchify(const Tensor& patches, Index height, Index width, int patch) {
    if (patch <= 0 || height % patch != 0 || width % patch != 0) {
        throw Error(ErrorKind::NonDivisibleDims, "target dims not divisible by patch");
    }
    const Index gh = height / patch;
    const Index gw = width / patch;
    if (patches.shape() != Shape{gh * gw, static_cast<Index>(patch) * patch * 3}) {
        throw Error(ErrorKind::ShapeMismatch, "patch matrix does not match target dims");
    }
    Vector hwc(height * width * 3);
    Index k = 0;
    for (Index gy = 0; gy < gh; ++gy) {
        for (Index gx = 0; gx < gw; ++gx) {
            for (Index dy = 0; dy < patch; ++dy) {
                for (Index dx = 0; dx < patch; ++dx) {
                    for (Index c = 0; c < 3; ++c) {
                        hwc[((gy * patch + dy) * width + gx * patch + dx) * 3 + c] = patches[k++];
                    }
                }
            }
        }
    }
    return Image(height, width, std::move(hwc));
}

FeatureMap encode(const ModelBundle& bundle, const Image& image) {
    const VisionConfig& vc = bundle.config.vision;
    Tensor x = patchify(image, vc.patch_size);
    if (image.height() != vc.image_size || image.width() != vc.image_size) {
        throw Error(ErrorKind::DimsMismatch, "encoder expects " + std::to_string(vc.image_size) + "x" +
                                                 std::to_string(vc.image_size) + " images");
    }
    x = linear(bundle, x, "vision.encoder.patch_embed.weight", "vision.encoder.patch_embed.bias");
    x = add(x, bundle.param("vision.encoder.pos_embed"));
    for (int i = 0; i < vc.n_blocks; ++i) {
        x = transformer_block(bundle, "vision.encoder.block" + std::to_string(i), x, vc.n_heads, false);
    }
    return {image.height() / vc.patch_size, image.width() / vc.patch_size, x};
}

Tensor project_to_lm(const ModelBundle& bundle, const FeatureMap& f) {
    const Tensor& w = bundle.param("vision.projector.weight");
    if (f.features.rank() != 2 || f.features.dim(0) != f.grid_h * f.grid_w || f.features.dim(1) != w.dim(1)) {
        throw Error(ErrorKind::ShapeMismatch, "feature map does not match the projector");
    }
    return linear(bundle, f.features, "vision.projector.weight", "vision.projector.bias");
}

} // namespace saaf
