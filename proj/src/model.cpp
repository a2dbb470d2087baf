#include "sage/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "sage/errors.hpp"
#include "sage/serialize.hpp"

namespace sage {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::None: return "none";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "none";
}

Activation activation_from_name(const std::string& name) {
    if (name == "none") return Activation::None;
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation '" + name + "'");
}

namespace {

Tensor activate(const Tensor& t, Activation a) {
    switch (a) {
        case Activation::None: return t;
        case Activation::Relu: return relu(t);
        case Activation::Tanh: return tanh(t);
    }
    return t;
}

Tensor gaussian_init(const Shape& shape, double scale, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = scale * rng.normal();
    Tensor t = Tensor::from(shape, std::move(v));
    t.set_requires_grad(true);
    return t;
}

Tensor zero_init(const Shape& shape) {
    Tensor t = Tensor::zeros(shape);
    t.set_requires_grad(true);
    return t;
}

}  // namespace

std::vector<Shape> ExtractorSpec::validate() const {
    if (input_shape.size() != 1 && input_shape.size() != 3) {
        throw ConfigError("model.input_shape must be {d} or {K,H,W}");
    }
    if (feature_dim < 1) throw ConfigError("model.feature_dim must be >= 1");
    std::vector<Shape> outputs;
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (std::holds_alternative<DenseSpec>(layers[i])) {
            const auto& d = std::get<DenseSpec>(layers[i]);
            const std::int64_t flat = shape_numel(cur);
            if (d.in != flat) {
                throw ConfigError("model.layers[" + std::to_string(i) + "]: dense expects in=" +
                                  std::to_string(flat) + ", spec says " + std::to_string(d.in));
            }
            if (d.out < 1) throw ConfigError("model.layers[" + std::to_string(i) + "]: out must be >= 1");
            cur = Shape{d.out};
        } else {
            const auto& c = std::get<ConvSpec>(layers[i]);
            if (cur.size() != 3) {
                throw ConfigError("model.layers[" + std::to_string(i) +
                                  "]: conv requires an image-shaped input");
            }
            if (c.in_ch != cur[0]) {
                throw ConfigError("model.layers[" + std::to_string(i) + "]: conv expects in=" +
                                  std::to_string(cur[0]) + ", spec says " + std::to_string(c.in_ch));
            }
            const int ho = (cur[1] + 2 * c.pad - c.kernel) / c.stride + 1;
            const int wo = (cur[2] + 2 * c.pad - c.kernel) / c.stride + 1;
            if (c.kernel < 1 || c.stride < 1 || ho < 1 || wo < 1) {
                throw ConfigError("model.layers[" + std::to_string(i) + "]: degenerate conv geometry");
            }
            cur = Shape{c.out_ch, ho, wo};
        }
        outputs.push_back(cur);
    }
    for (int p : insertion_points) {
        if (p < 0 || p >= static_cast<int>(layers.size())) {
            throw ConfigError("model.insertion_points: index " + std::to_string(p) +
                              " does not name a layer");
        }
        if (outputs[p].size() != 3) {
            throw ConfigError("model.insertion_points: layer " + std::to_string(p) +
                              " output is not image-shaped");
        }
    }
    if (shape_numel(cur) != feature_dim) {
        throw ConfigError("model.feature_dim = " + std::to_string(feature_dim) +
                          " but the layer stack produces " + std::to_string(shape_numel(cur)));
    }
    return outputs;
}

Model::Model(ExtractorSpec spec, int num_classes, int num_domains, StyleAlignConfig style_cfg,
             double clip_bound, Rng init_rng)
    : spec_(std::move(spec)), num_classes_(num_classes), style_cfg_(style_cfg) {
    if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
    if (num_domains < 1) throw ConfigError("model: need at least 1 domain head");
    spec_.validate();
    for (const LayerSpec& l : spec_.layers) {
        LayerParams p;
        if (std::holds_alternative<DenseSpec>(l)) {
            const auto& d = std::get<DenseSpec>(l);
            p.weight = gaussian_init(Shape{d.in, d.out}, 1.0 / std::sqrt(double(d.in)), init_rng);
            p.bias = zero_init(Shape{d.out});
        } else {
            const auto& c = std::get<ConvSpec>(l);
            const double fan_in = double(c.in_ch) * c.kernel * c.kernel;
            p.weight = gaussian_init(Shape{c.out_ch, c.in_ch, c.kernel, c.kernel},
                                     1.0 / std::sqrt(fan_in), init_rng);
            p.bias = zero_init(Shape{c.out_ch});
        }
        layers_.push_back(std::move(p));
    }
    for (int h = 0; h < num_domains; ++h) {
        DomainHead head;
        head.weight = gaussian_init(Shape{spec_.feature_dim, num_classes},
                                    1.0 / std::sqrt(double(spec_.feature_dim)), init_rng);
        head.bias = zero_init(Shape{num_classes});
        head.clip_bound = clip_bound;
        heads_.push_back(std::move(head));
    }
}

Tensor Model::forward_features(const Tensor& x, bool train_mode, Rng& style_rng) const {
    const Shape& xs = x.shape();
    Shape expected;
    expected.push_back(xs.empty() ? 0 : xs[0]);
    expected.insert(expected.end(), spec_.input_shape.begin(), spec_.input_shape.end());
    if (xs != expected) {
        throw ShapeError("forward_features: input " + shape_str(xs) + " does not match [B]+" +
                         shape_str(spec_.input_shape));
    }
    const int batch = xs[0];
    Tensor cur = x;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const LayerParams& p = layers_[i];
        if (std::holds_alternative<DenseSpec>(l)) {
            const auto& d = std::get<DenseSpec>(l);
            if (cur.shape().size() != 2) {
                cur = reshape(cur, Shape{batch, static_cast<int>(cur.numel() / batch)});
            }
            cur = activate(matmul(cur, p.weight) + bc_row(p.bias, batch), d.act);
        } else {
            const auto& c = std::get<ConvSpec>(l);
            cur = activate(conv2d(cur, p.weight, p.bias, c.stride, c.pad), c.act);
        }
        if (style_enabled_ &&
            std::find(spec_.insertion_points.begin(), spec_.insertion_points.end(),
                      static_cast<int>(i)) != spec_.insertion_points.end()) {
            cur = apply_module(cur, style_cfg_, style_rng, train_mode);
        }
    }
    if (cur.shape().size() != 2) {
        cur = reshape(cur, Shape{batch, static_cast<int>(cur.numel() / batch)});
    }
    if (cur.shape()[1] != spec_.feature_dim) {
        throw ShapeError("forward_features produced feature dim " +
                         std::to_string(cur.shape()[1]) + ", expected " +
                         std::to_string(spec_.feature_dim));
    }
    return cur;
}

Tensor Model::head_logits(const Tensor& features, int head) const {
    const DomainHead& h = heads_.at(head);
    const int batch = features.shape().at(0);
    Tensor logits = matmul(features, h.weight) + bc_row(h.bias, batch);
    return clamp(logits, -h.clip_bound, h.clip_bound);
}

Tensor Model::head_evidence(const Tensor& features, int head) const {
    return exp(head_logits(features, head));
}

Tensor Model::head_evidence_vec(const Tensor& feature, int head) const {
    if (feature.shape().size() != 1) throw ShapeError("head_evidence_vec expects a 1-D feature");
    Tensor row = reshape(feature, Shape{1, feature.shape()[0]});
    return reshape(head_evidence(row, head), Shape{num_classes_});
}

std::vector<Tensor> Model::forward_all_heads(const Tensor& features) const {
    std::vector<Tensor> out;
    out.reserve(heads_.size());
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        out.push_back(head_evidence(features, static_cast<int>(h)));
    }
    return out;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> ps;
    for (const LayerParams& p : layers_) {
        ps.push_back(p.weight);
        ps.push_back(p.bias);
    }
    for (const DomainHead& h : heads_) {
        ps.push_back(h.weight);
        ps.push_back(h.bias);
    }
    return ps;
}

std::uint64_t Model::parameter_checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const Tensor& p : parameters()) {
        const auto& v = p.values();
        h = fnv1a64(v.data(), v.size() * sizeof(double), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// checkpoint format: magic, version, JSON header, raw parameter payload,
// trailing FNV-1a checksum of the payload
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'A', 'G', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint: truncated file");
}

}  // namespace

void Model::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    json header{{"format_version", kVersion},
                {"model", to_json(spec_)},
                {"num_classes", num_classes_},
                {"num_domains", num_domains()},
                {"clip_bound", heads_.empty() ? 10.0 : heads_[0].clip_bound},
                {"style", to_json(style_cfg_)}};
    const std::string hs = header.dump();

    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint64_t>(hs.size()));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));

    const auto params = parameters();
    write_pod(out, static_cast<std::uint64_t>(params.size()));
    std::uint64_t checksum = 0xCBF29CE484222325ULL;
    for (const Tensor& p : params) {
        const Shape& s = p.shape();
        write_pod(out, static_cast<std::uint32_t>(s.size()));
        for (int d : s) write_pod(out, static_cast<std::int32_t>(d));
        const auto& v = p.values();
        write_pod(out, static_cast<std::uint64_t>(v.size()));
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
        checksum = fnv1a64(v.data(), v.size() * sizeof(double), checksum);
    }
    write_pod(out, checksum);
    if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Model Model::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError("'" + path + "' is not a model checkpoint");
    }
    std::uint32_t version;
    read_pod(in, version);
    if (version != kVersion) {
        throw IoError("checkpoint version " + std::to_string(version) + " unsupported");
    }
    std::uint64_t hlen;
    read_pod(in, hlen);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("checkpoint: truncated header");
    json header = json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw IoError("checkpoint: corrupt JSON header");

    Model model(extractor_spec_from_json(require_field(header, "model", "checkpoint")),
                require_field(header, "num_classes", "checkpoint").get<int>(),
                require_field(header, "num_domains", "checkpoint").get<int>(),
                style_config_from_json(require_field(header, "style", "checkpoint")),
                header.value("clip_bound", 10.0), Rng(0));

    std::uint64_t count;
    read_pod(in, count);
    auto params = model.parameters();
    if (count != params.size()) {
        throw IoError("checkpoint parameter count " + std::to_string(count) + " != expected " +
                      std::to_string(params.size()));
    }
    std::uint64_t checksum = 0xCBF29CE484222325ULL;
    for (Tensor& p : params) {
        std::uint32_t ndim;
        read_pod(in, ndim);
        Shape s(ndim);
        for (auto& d : s) {
            std::int32_t v;
            read_pod(in, v);
            d = v;
        }
        std::uint64_t n;
        read_pod(in, n);
        if (s != p.shape() || n != p.values().size()) {
            throw IoError("checkpoint: parameter shape mismatch against model spec");
        }
        std::vector<double>& dst = p.values_mut();
        in.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw IoError("checkpoint: truncated parameter payload");
        checksum = fnv1a64(dst.data(), n * sizeof(double), checksum);
    }
    std::uint64_t stored;
    read_pod(in, stored);
    if (stored != checksum) throw IoError("checkpoint: checksum mismatch");
    return model;
}

}  // namespace sage
