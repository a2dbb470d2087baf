#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "sage/rng.hpp"
#include "sage/style_align.hpp"
#include "sage/tensor.hpp"

namespace sage {

enum class Activation { None, Relu, Tanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseSpec {
    int in = 0;
    int out = 0;
    Activation act = Activation::Tanh;
};

struct ConvSpec {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    Activation act = Activation::Tanh;
};

using LayerSpec = std::variant<DenseSpec, ConvSpec>;

// Shared feature extractor description. `input_shape` is the per-sample
// shape: {d} for vector data or {K,H,W} for image-like data. Style
// alignment slots in after the layers named in `insertion_points`; those
// layers must produce image-shaped ([K,H,W]) outputs.
struct ExtractorSpec {
    Shape input_shape;
    std::vector<LayerSpec> layers;
    std::vector<int> insertion_points;
    int feature_dim = 0;

    // Checks the dimension chain and insertion points; returns the
    // per-sample output shape of each layer. Throws ConfigError.
    std::vector<Shape> validate() const;
};

// Linear per-domain classifier; evidence = exp(clamp(W f + bias)).
struct DomainHead {
    Tensor weight;  // [d, C]
    Tensor bias;    // [C]
    double clip_bound = 10.0;
};

class Model {
public:
    // Weights ~ N(0, 1/sqrt(fan_in)) drawn element-wise in storage order
    // from `init_rng`; biases zero. Layer parameters first, heads after,
    // in declaration order.
    Model(ExtractorSpec spec, int num_classes, int num_domains, StyleAlignConfig style_cfg,
          double clip_bound, Rng init_rng);

    // x is [B, ...input_shape]. In train_mode the insertion-point style
    // modules run (drawing from style_rng) and the graph is recorded.
    Tensor forward_features(const Tensor& x, bool train_mode, Rng& style_rng) const;

    Tensor head_logits(const Tensor& features, int head) const;    // clamped, [B,C]
    Tensor head_evidence(const Tensor& features, int head) const;  // exp(logits), [B,C]
    // Single feature vector [d] -> evidence [C].
    Tensor head_evidence_vec(const Tensor& feature, int head) const;
    std::vector<Tensor> forward_all_heads(const Tensor& features) const;

    int num_classes() const { return num_classes_; }
    int num_domains() const { return static_cast<int>(heads_.size()); }
    int feature_dim() const { return spec_.feature_dim; }
    const ExtractorSpec& spec() const { return spec_; }
    const StyleAlignConfig& style_config() const { return style_cfg_; }
    StyleAlignConfig& style_config() { return style_cfg_; }
    const DomainHead& head(int i) const { return heads_.at(i); }

    // Disables the insertion-point modules regardless of tau (ablation).
    void set_style_enabled(bool on) { style_enabled_ = on; }
    bool style_enabled() const { return style_enabled_; }

    // Handles to every parameter tensor in declaration order.
    std::vector<Tensor> parameters() const;
    std::uint64_t parameter_checksum() const;

    void save_checkpoint(const std::string& path) const;
    static Model load_checkpoint(const std::string& path);

private:
    ExtractorSpec spec_;
    int num_classes_ = 0;
    StyleAlignConfig style_cfg_;
    bool style_enabled_ = true;
    struct LayerParams {
        Tensor weight;
        Tensor bias;
    };
    std::vector<LayerParams> layers_;
    std::vector<DomainHead> heads_;
};

}  // namespace sage
