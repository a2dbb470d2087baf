#include "sage/serialize.hpp"

#include "sage/errors.hpp"

namespace sage {

const json& require_field(const json& j, const std::string& key, const std::string& context) {
    if (!j.is_object() || !j.contains(key)) {
        throw ConfigError("missing field '" + (context.empty() ? key : context + "." + key) + "'");
    }
    return j.at(key);
}

json to_json(const StyleAlignConfig& cfg) {
    return json{{"tau", cfg.tau},
                {"eps_cov", cfg.eps_cov},
                {"sigma_floor", cfg.sigma_floor},
                {"eps_div", cfg.eps_div},
                {"diagonal_only", cfg.diagonal_only},
                {"per_sample_gate", cfg.per_sample_gate}};
}

StyleAlignConfig style_config_from_json(const json& j) {
    StyleAlignConfig cfg;
    cfg.tau = j.value("tau", cfg.tau);
    cfg.eps_cov = j.value("eps_cov", cfg.eps_cov);
    cfg.sigma_floor = j.value("sigma_floor", cfg.sigma_floor);
    cfg.eps_div = j.value("eps_div", cfg.eps_div);
    cfg.diagonal_only = j.value("diagonal_only", cfg.diagonal_only);
    cfg.per_sample_gate = j.value("per_sample_gate", cfg.per_sample_gate);
    if (cfg.tau < 0.0 || cfg.tau > 1.0) throw ConfigError("style.tau must lie in [0,1]");
    if (cfg.eps_cov <= 0.0 || cfg.sigma_floor <= 0.0 || cfg.eps_div <= 0.0) {
        throw ConfigError("style eps values must be positive");
    }
    return cfg;
}

json to_json(const ExtractorSpec& spec) {
    json layers = json::array();
    for (const LayerSpec& l : spec.layers) {
        if (std::holds_alternative<DenseSpec>(l)) {
            const auto& d = std::get<DenseSpec>(l);
            layers.push_back({{"type", "dense"},
                              {"in", d.in},
                              {"out", d.out},
                              {"act", activation_name(d.act)}});
        } else {
            const auto& c = std::get<ConvSpec>(l);
            layers.push_back({{"type", "conv"},
                              {"in", c.in_ch},
                              {"out", c.out_ch},
                              {"kernel", c.kernel},
                              {"stride", c.stride},
                              {"pad", c.pad},
                              {"act", activation_name(c.act)}});
        }
    }
    return json{{"input_shape", spec.input_shape},
                {"layers", layers},
                {"insertion_points", spec.insertion_points},
                {"feature_dim", spec.feature_dim}};
}

ExtractorSpec extractor_spec_from_json(const json& j) {
    ExtractorSpec spec;
    spec.input_shape = require_field(j, "input_shape", "model").get<Shape>();
    spec.feature_dim = require_field(j, "feature_dim", "model").get<int>();
    spec.insertion_points = j.value("insertion_points", std::vector<int>{});
    for (const json& lj : j.value("layers", json::array())) {
        const std::string type = require_field(lj, "type", "model.layers[]").get<std::string>();
        const std::string act = lj.value("act", "tanh");
        if (type == "dense") {
            DenseSpec d;
            d.in = require_field(lj, "in", "model.layers[]").get<int>();
            d.out = require_field(lj, "out", "model.layers[]").get<int>();
            d.act = activation_from_name(act);
            spec.layers.emplace_back(d);
        } else if (type == "conv") {
            ConvSpec c;
            c.in_ch = require_field(lj, "in", "model.layers[]").get<int>();
            c.out_ch = require_field(lj, "out", "model.layers[]").get<int>();
            c.kernel = lj.value("kernel", 3);
            c.stride = lj.value("stride", 1);
            c.pad = lj.value("pad", 1);
            c.act = activation_from_name(act);
            spec.layers.emplace_back(c);
        } else {
            throw ConfigError("model.layers[].type must be 'dense' or 'conv', got '" + type + "'");
        }
    }
    return spec;
}

json to_json(const SyntheticSpec& spec) {
    return json{{"name", spec.name},
                {"classes", spec.num_classes},
                {"domains", spec.num_domains},
                {"samples_per_domain", spec.samples_per_domain},
                {"form", spec.form == InputForm::Image ? "image" : "vector"},
                {"channels", spec.channels},
                {"height", spec.height},
                {"width", spec.width},
                {"dim", spec.dim},
                {"noise", spec.noise},
                {"style_noise", spec.style_noise},
                {"style_scale", spec.style_scale},
                {"style_shift", spec.style_shift},
                {"rotation", spec.rotation}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
    SyntheticSpec spec;
    const std::string name = require_field(j, "name", "dataset").get<std::string>();
    if (name == "blobs") {
        spec = SyntheticSpec::blobs_default();
    } else if (name == "wedges") {
        spec = SyntheticSpec::wedges_default();
    } else {
        throw ConfigError("dataset.name must be 'blobs' or 'wedges', got '" + name + "'");
    }
    spec.num_classes = j.value("classes", spec.num_classes);
    spec.num_domains = j.value("domains", spec.num_domains);
    spec.samples_per_domain = j.value("samples_per_domain", spec.samples_per_domain);
    if (j.contains("form")) {
        const std::string f = j.at("form").get<std::string>();
        if (f == "image") {
            spec.form = InputForm::Image;
        } else if (f == "vector") {
            spec.form = InputForm::Vector;
        } else {
            throw ConfigError("dataset.form must be 'image' or 'vector'");
        }
    }
    spec.channels = j.value("channels", spec.channels);
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    spec.dim = j.value("dim", spec.dim);
    spec.noise = j.value("noise", spec.noise);
    spec.style_noise = j.value("style_noise", spec.style_noise);
    if (j.contains("style_scale")) spec.style_scale = j.at("style_scale").get<std::vector<std::vector<double>>>();
    if (j.contains("style_shift")) spec.style_shift = j.at("style_shift").get<std::vector<std::vector<double>>>();
    if (j.contains("rotation")) spec.rotation = j.at("rotation").get<std::vector<double>>();
    spec.validate();
    return spec;
}

json to_json(const AblationSwitches& sw) {
    return json{{"use_va", sw.use_va},
                {"use_dempster", sw.use_dempster},
                {"use_cross_domain", sw.use_cross_domain},
                {"use_evidential", sw.use_evidential}};
}

AblationSwitches ablation_from_json(const json& j) {
    AblationSwitches sw;
    sw.use_va = j.value("use_va", sw.use_va);
    sw.use_dempster = j.value("use_dempster", sw.use_dempster);
    sw.use_cross_domain = j.value("use_cross_domain", sw.use_cross_domain);
    sw.use_evidential = j.value("use_evidential", sw.use_evidential);
    return sw;
}

json to_json(const TrainConfig& cfg) {
    return json{{"learning_rate", cfg.learning_rate},
                {"weight_decay", cfg.weight_decay},
                {"batch_per_domain", cfg.batch_per_domain},
                {"iterations", cfg.iterations},
                {"lambda_kl", cfg.lambda_kl},
                {"ema_momentum", cfg.ema_momentum},
                {"eval_interval", cfg.eval_interval},
                {"ablation", to_json(cfg.ablation)}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.learning_rate = require_field(j, "learning_rate", "train").get<double>();
    cfg.iterations = require_field(j, "iterations", "train").get<int>();
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.batch_per_domain = j.value("batch_per_domain", cfg.batch_per_domain);
    cfg.lambda_kl = j.value("lambda_kl", cfg.lambda_kl);
    cfg.ema_momentum = j.value("ema_momentum", cfg.ema_momentum);
    cfg.eval_interval = j.value("eval_interval", cfg.eval_interval);
    if (j.contains("ablation")) cfg.ablation = ablation_from_json(j.at("ablation"));
    if (cfg.batch_per_domain < 2) throw ConfigError("train.batch_per_domain must be >= 2");
    if (cfg.ema_momentum < 0.0 || cfg.ema_momentum >= 1.0) {
        throw ConfigError("train.ema_momentum must lie in [0,1)");
    }
    if (cfg.lambda_kl < 0.0) throw ConfigError("train.lambda_kl must be >= 0");
    if (cfg.iterations < 1) throw ConfigError("train.iterations must be >= 1");
    return cfg;
}

}  // namespace sage
