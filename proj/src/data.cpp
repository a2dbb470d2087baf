#include "sage/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "sage/errors.hpp"
#include "sage/serialize.hpp"

namespace sage {

Tensor DomainDataset::sample_tensor(std::size_t i) const {
    return Tensor::from(sample_shape, samples.at(i));
}

Shape SyntheticSpec::sample_shape() const {
    return form == InputForm::Image ? Shape{channels, height, width} : Shape{dim};
}

int SyntheticSpec::style_channels() const {
    return form == InputForm::Image ? channels : dim;
}

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw ConfigError("dataset.classes must be >= 2");
    if (num_domains < 1) throw ConfigError("dataset.domains must be >= 1");
    if (samples_per_domain < 1) throw ConfigError("dataset.samples_per_domain must be >= 1");
    if (form == InputForm::Image) {
        if (channels < 1 || height < 1 || width < 1) {
            throw ConfigError("dataset image dimensions must be positive");
        }
    } else if (dim < 1) {
        throw ConfigError("dataset.dim must be >= 1");
    }
    const int k = style_channels();
    auto check_rows = [&](const std::vector<std::vector<double>>& rows, const char* what,
                          bool nonzero) {
        if (rows.empty()) return;
        if (static_cast<int>(rows.size()) != num_domains) {
            throw ConfigError(std::string("dataset.") + what + " must have one row per domain");
        }
        for (const auto& r : rows) {
            if (static_cast<int>(r.size()) != k) {
                throw ConfigError(std::string("dataset.") + what + " rows must have " +
                                  std::to_string(k) + " entries");
            }
            if (nonzero) {
                for (double v : r) {
                    if (v == 0.0) {
                        throw ConfigError(std::string("dataset.") + what +
                                          " must be invertible (nonzero scales)");
                    }
                }
            }
        }
    };
    check_rows(style_scale, "style_scale", true);
    check_rows(style_shift, "style_shift", false);
    if (!rotation.empty() && static_cast<int>(rotation.size()) != num_domains) {
        throw ConfigError("dataset.rotation must have one entry per domain");
    }
}

SyntheticSpec SyntheticSpec::blobs_default() {
    SyntheticSpec s;
    s.name = "blobs";
    s.form = InputForm::Image;
    s.num_classes = 4;
    s.num_domains = 4;
    s.samples_per_domain = 300;
    s.channels = 3;
    s.height = 8;
    s.width = 8;
    s.noise = 0.25;
    s.style_noise = 0.1;
    s.style_scale = {{1.0, 1.0, 1.0}, {2.2, 0.6, 1.3}, {0.5, 1.8, 0.9}, {1.5, 1.2, 0.45}};
    s.style_shift = {{0.0, 0.0, 0.0}, {0.8, -0.3, 0.2}, {-0.5, 0.6, -0.2}, {0.3, 0.9, -0.6}};
    s.rotation = {0.0, 0.0, 0.0, 0.0};
    return s;
}

SyntheticSpec SyntheticSpec::wedges_default() {
    SyntheticSpec s;
    s.name = "wedges";
    s.form = InputForm::Vector;
    s.num_classes = 4;
    s.num_domains = 4;
    s.samples_per_domain = 300;
    s.dim = 2;
    s.noise = 0.1;
    s.style_noise = 0.02;
    s.style_scale = {{1.0, 1.0}, {1.15, 0.9}, {0.85, 1.1}, {1.05, 1.05}};
    s.style_shift = {{0.0, 0.0}, {0.1, -0.1}, {-0.1, 0.05}, {0.05, 0.1}};
    s.rotation = {0.0, 0.25, -0.25, 0.5};
    return s;
}

namespace {

double blob_template(const SyntheticSpec& spec, int cls, int k, int h, int w) {
    const double cy = (spec.height - 1) / 2.0;
    const double cx = (spec.width - 1) / 2.0;
    const double radius = 0.28 * std::min(spec.height, spec.width);
    const double angle = 2.0 * std::numbers::pi * cls / spec.num_classes;
    const double by = cy + radius * std::sin(angle);
    const double bx = cx + radius * std::cos(angle);
    const double d2 = (h - by) * (h - by) + (w - bx) * (w - bx);
    const double amp =
        1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * (cls + 1.3 * k) / spec.num_classes);
    const double spread = 1.3;
    return amp * std::exp(-d2 / (2.0 * spread * spread));
}

DomainDataset gen_blobs_domain(const SyntheticSpec& spec, int domain, Rng rng) {
    DomainDataset ds;
    ds.domain_id = domain;
    ds.sample_shape = spec.sample_shape();
    const int k = spec.channels, hw = spec.height * spec.width;
    const auto& scale = spec.style_scale.empty() ? std::vector<double>(k, 1.0)
                                                 : spec.style_scale[domain];
    const auto& shift = spec.style_shift.empty() ? std::vector<double>(k, 0.0)
                                                 : spec.style_shift[domain];
    for (int i = 0; i < spec.samples_per_domain; ++i) {
        const int cls = i % spec.num_classes;
        std::vector<double> x(static_cast<std::size_t>(k) * hw);
        for (int c = 0; c < k; ++c) {
            for (int h = 0; h < spec.height; ++h) {
                for (int w = 0; w < spec.width; ++w) {
                    x[(static_cast<std::size_t>(c) * spec.height + h) * spec.width + w] =
                        blob_template(spec, cls, c, h, w) + spec.noise * rng.normal();
                }
            }
        }
        // per-channel affine style with within-domain jitter
        for (int c = 0; c < k; ++c) {
            const double sc = scale[c] * (1.0 + spec.style_noise * rng.normal());
            const double sh = shift[c] + spec.style_noise * rng.normal();
            for (int p = 0; p < hw; ++p) {
                double& v = x[static_cast<std::size_t>(c) * hw + p];
                v = sc * v + sh;
            }
        }
        ds.samples.push_back(std::move(x));
        ds.labels.push_back(cls);
    }
    return ds;
}

DomainDataset gen_wedges_domain(const SyntheticSpec& spec, int domain, Rng rng) {
    DomainDataset ds;
    ds.domain_id = domain;
    ds.sample_shape = spec.sample_shape();
    const double rot = spec.rotation.empty() ? 0.0 : spec.rotation[domain];
    const auto& scale = spec.style_scale.empty() ? std::vector<double>(spec.dim, 1.0)
                                                 : spec.style_scale[domain];
    const auto& shift = spec.style_shift.empty() ? std::vector<double>(spec.dim, 0.0)
                                                 : spec.style_shift[domain];
    const int n = spec.samples_per_domain;
    for (int i = 0; i < n; ++i) {
        // stratified angle keeps every wedge populated
        const double theta = 2.0 * std::numbers::pi * (i + rng.uniform()) / n;
        const double radius = 1.0 + spec.noise * rng.normal();
        double a = std::fmod(theta - rot, 2.0 * std::numbers::pi);
        if (a < 0) a += 2.0 * std::numbers::pi;
        const int cls =
            std::min(spec.num_classes - 1,
                     static_cast<int>(a / (2.0 * std::numbers::pi) * spec.num_classes));
        std::vector<double> x(static_cast<std::size_t>(spec.dim), 0.0);
        x[0] = radius * std::cos(theta);
        if (spec.dim > 1) x[1] = radius * std::sin(theta);
        for (int d = 2; d < spec.dim; ++d) x[d] = spec.noise * rng.normal();
        for (int d = 0; d < spec.dim; ++d) {
            const double sc = scale[d] * (1.0 + spec.style_noise * rng.normal());
            const double sh = shift[d] + spec.style_noise * rng.normal();
            x[d] = sc * x[d] + sh;
        }
        ds.samples.push_back(std::move(x));
        ds.labels.push_back(cls);
    }
    return ds;
}

}  // namespace

std::vector<DomainDataset> gen_synthetic_domains(const SyntheticSpec& spec, const Rng& master) {
    spec.validate();
    std::vector<DomainDataset> out;
    out.reserve(spec.num_domains);
    for (int d = 0; d < spec.num_domains; ++d) {
        Rng child = master.fork("data", static_cast<std::uint64_t>(d));
        out.push_back(spec.form == InputForm::Image ? gen_blobs_domain(spec, d, child)
                                                    : gen_wedges_domain(spec, d, child));
    }
    return out;
}

std::pair<DomainDataset, DomainDataset> split_train_val(const DomainDataset& ds, double ratio,
                                                        Rng& rng) {
    const std::size_t n = ds.size();
    if (n < 5) throw std::invalid_argument("split_train_val: need at least 5 samples");
    if (ratio <= 0.0 || ratio >= 1.0) throw std::invalid_argument("split ratio must be in (0,1)");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle_indices(idx, rng);
    const std::size_t n_train = static_cast<std::size_t>(std::floor(n * ratio));
    DomainDataset train, val;
    train.sample_shape = val.sample_shape = ds.sample_shape;
    train.domain_id = val.domain_id = ds.domain_id;
    for (std::size_t i = 0; i < n; ++i) {
        DomainDataset& dst = (i < n_train) ? train : val;
        dst.samples.push_back(ds.samples[idx[i]]);
        dst.labels.push_back(ds.labels[idx[i]]);
    }
    return {std::move(train), std::move(val)};
}

namespace {

Batch batch_from_rows(std::span<const DomainDataset> datasets,
                      const std::vector<std::vector<std::size_t>>& picks) {
    const Shape& ss = datasets[0].sample_shape;
    const std::size_t inner = static_cast<std::size_t>(shape_numel(ss));
    std::size_t total = 0;
    for (const auto& p : picks) total += p.size();

    Batch b;
    std::vector<double> values;
    values.reserve(total * inner);
    int row = 0;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        if (datasets[d].sample_shape != ss) {
            throw ShapeError("batch: datasets disagree on sample shape");
        }
        b.domain_ranges.emplace_back(row, static_cast<int>(picks[d].size()));
        for (std::size_t i : picks[d]) {
            const auto& s = datasets[d].samples[i];
            values.insert(values.end(), s.begin(), s.end());
            b.labels.push_back(datasets[d].labels[i]);
            b.domain_ids.push_back(datasets[d].domain_id);
            ++row;
        }
    }
    Shape full;
    full.push_back(row);
    full.insert(full.end(), ss.begin(), ss.end());
    b.inputs = Tensor::from(full, std::move(values));
    return b;
}

}  // namespace

Batch sample_balanced_batch(std::span<const DomainDataset> datasets, int batch_per_domain,
                            Rng& rng) {
    if (datasets.empty()) throw std::invalid_argument("sample_balanced_batch: no datasets");
    if (batch_per_domain < 1) throw std::invalid_argument("batch_per_domain must be >= 1");
    std::vector<std::vector<std::size_t>> picks(datasets.size());
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const std::size_t n = datasets[d].size();
        if (n == 0) {
            throw std::invalid_argument("sample_balanced_batch: domain " +
                                        std::to_string(datasets[d].domain_id) + " is empty");
        }
        picks[d].reserve(batch_per_domain);
        for (int i = 0; i < batch_per_domain; ++i) {
            picks[d].push_back(static_cast<std::size_t>(rng.below(n)));
        }
    }
    return batch_from_rows(datasets, picks);
}

Batch assemble_batch(std::span<const DomainDataset> datasets) {
    if (datasets.empty()) throw std::invalid_argument("assemble_batch: no datasets");
    std::vector<std::vector<std::size_t>> picks(datasets.size());
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        picks[d].resize(datasets[d].size());
        for (std::size_t i = 0; i < picks[d].size(); ++i) picks[d][i] = i;
    }
    return batch_from_rows(datasets, picks);
}

// ---------------------------------------------------------------------------
// dataset cache
// ---------------------------------------------------------------------------

namespace {

constexpr char kDataMagic[8] = {'S', 'A', 'G', 'E', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDataVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("dataset cache: truncated file");
}

}  // namespace

void save_dataset_cache(const std::string& path, const SyntheticSpec& spec, std::uint64_t seed,
                        std::span<const DomainDataset> domains) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    json header{{"format_version", kDataVersion}, {"seed", seed}, {"spec", to_json(spec)}};
    const std::string hs = header.dump();
    out.write(kDataMagic, sizeof(kDataMagic));
    write_pod(out, kDataVersion);
    write_pod(out, static_cast<std::uint64_t>(hs.size()));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_pod(out, static_cast<std::uint32_t>(domains.size()));
    std::uint64_t checksum = 0xCBF29CE484222325ULL;
    for (const DomainDataset& d : domains) {
        write_pod(out, static_cast<std::int32_t>(d.domain_id));
        write_pod(out, static_cast<std::uint32_t>(d.sample_shape.size()));
        for (int s : d.sample_shape) write_pod(out, static_cast<std::int32_t>(s));
        write_pod(out, static_cast<std::uint64_t>(d.size()));
        for (int l : d.labels) {
            const std::int32_t v = l;
            write_pod(out, v);
            checksum = fnv1a64(&v, sizeof(v), checksum);
        }
        for (const auto& s : d.samples) {
            out.write(reinterpret_cast<const char*>(s.data()),
                      static_cast<std::streamsize>(s.size() * sizeof(double)));
            checksum = fnv1a64(s.data(), s.size() * sizeof(double), checksum);
        }
    }
    write_pod(out, checksum);
    if (!out) throw IoError("failed writing dataset cache '" + path + "'");
}

DatasetCache load_dataset_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset cache '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kDataMagic, sizeof(kDataMagic)) != 0) {
        throw IoError("'" + path + "' is not a dataset cache");
    }
    std::uint32_t version;
    read_pod(in, version);
    if (version != kDataVersion) {
        throw IoError("dataset cache version " + std::to_string(version) + " unsupported");
    }
    std::uint64_t hlen;
    read_pod(in, hlen);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("dataset cache: truncated header");
    json header = json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw IoError("dataset cache: corrupt JSON header");

    DatasetCache cache;
    cache.seed = require_field(header, "seed", "cache").get<std::uint64_t>();
    cache.spec = synthetic_spec_from_json(require_field(header, "spec", "cache"));
    std::uint32_t ndomains;
    read_pod(in, ndomains);
    std::uint64_t checksum = 0xCBF29CE484222325ULL;
    for (std::uint32_t d = 0; d < ndomains; ++d) {
        DomainDataset ds;
        std::int32_t id;
        read_pod(in, id);
        ds.domain_id = id;
        std::uint32_t ndim;
        read_pod(in, ndim);
        ds.sample_shape.resize(ndim);
        for (auto& s : ds.sample_shape) {
            std::int32_t v;
            read_pod(in, v);
            s = v;
        }
        std::uint64_t count;
        read_pod(in, count);
        ds.labels.resize(count);
        for (auto& l : ds.labels) {
            std::int32_t v;
            read_pod(in, v);
            l = v;
            checksum = fnv1a64(&v, sizeof(v), checksum);
        }
        const std::size_t inner = static_cast<std::size_t>(shape_numel(ds.sample_shape));
        ds.samples.resize(count);
        for (auto& s : ds.samples) {
            s.resize(inner);
            in.read(reinterpret_cast<char*>(s.data()),
                    static_cast<std::streamsize>(inner * sizeof(double)));
            if (!in) throw IoError("dataset cache: truncated samples");
            checksum = fnv1a64(s.data(), inner * sizeof(double), checksum);
        }
        cache.domains.push_back(std::move(ds));
    }
    std::uint64_t stored;
    read_pod(in, stored);
    if (stored != checksum) throw IoError("dataset cache: checksum mismatch");
    return cache;
}

DomainDataset make_uniform_noise_like(const DomainDataset& reference, int count, Rng& rng) {
    if (reference.size() == 0) throw std::invalid_argument("noise probe: empty reference");
    const Shape& ss = reference.sample_shape;
    const std::size_t inner = reference.samples[0].size();
    const int k = ss.empty() ? 1 : ss[0];
    const std::size_t per_channel = inner / k;
    std::vector<double> lo(k, std::numeric_limits<double>::infinity());
    std::vector<double> hi(k, -std::numeric_limits<double>::infinity());
    for (const auto& s : reference.samples) {
        for (int c = 0; c < k; ++c) {
            for (std::size_t p = 0; p < per_channel; ++p) {
                const double v = s[c * per_channel + p];
                lo[c] = std::min(lo[c], v);
                hi[c] = std::max(hi[c], v);
            }
        }
    }
    DomainDataset out;
    out.sample_shape = ss;
    out.domain_id = -1;
    for (int i = 0; i < count; ++i) {
        std::vector<double> s(inner);
        for (int c = 0; c < k; ++c) {
            for (std::size_t p = 0; p < per_channel; ++p) {
                s[c * per_channel + p] = lo[c] + (hi[c] - lo[c]) * rng.uniform();
            }
        }
        out.samples.push_back(std::move(s));
        out.labels.push_back(0);  // labels meaningless for the probe
    }
    return out;
}

}  // namespace sage
