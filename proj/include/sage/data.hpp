#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sage/rng.hpp"
#include "sage/tensor.hpp"

namespace sage {

// Labeled samples from one source domain.
struct DomainDataset {
    Shape sample_shape;                        // per-sample shape
    std::vector<std::vector<double>> samples;  // flat values per sample
    std::vector<int> labels;
    int domain_id = 0;

    std::size_t size() const { return samples.size(); }
    Tensor sample_tensor(std::size_t i) const;  // untracked [sample_shape]
};

enum class InputForm { Vector, Image };

// Controls for the synthetic multi-domain generators. Semantic content is
// drawn from domain-independent class-conditional patterns; each domain
// applies its own channel-wise affine style and (optionally) rotates the
// label boundary to inject conditional shift.
struct SyntheticSpec {
    std::string name = "blobs";  // "blobs" (image) or "wedges" (vector)
    int num_classes = 4;
    int num_domains = 4;
    int samples_per_domain = 300;
    InputForm form = InputForm::Image;
    int channels = 3, height = 8, width = 8;  // image form
    int dim = 2;                              // vector form
    double noise = 0.25;        // semantic noise scale
    double style_noise = 0.1;   // within-domain jitter on the style transform
    std::vector<std::vector<double>> style_scale;  // [domain][channel]
    std::vector<std::vector<double>> style_shift;  // [domain][channel]
    std::vector<double> rotation;                  // [domain], radians

    void validate() const;
    Shape sample_shape() const;
    int style_channels() const;  // channels (image) or dim (vector)

    static SyntheticSpec blobs_default();
    static SyntheticSpec wedges_default();
};

// Deterministic generation; domain i draws from master.fork("data", i).
std::vector<DomainDataset> gen_synthetic_domains(const SyntheticSpec& spec, const Rng& master);

// Disjoint, exhaustive, seed-deterministic split; train gets
// floor(n * ratio) samples, validation the remainder. Needs n >= 5.
std::pair<DomainDataset, DomainDataset> split_train_val(const DomainDataset& ds, double ratio,
                                                        Rng& rng);

// Balanced batch: exactly batch_per_domain samples per dataset, drawn with
// replacement, laid out as one contiguous block per domain.
struct Batch {
    Tensor inputs;  // [N*batch_per_domain, ...sample_shape]
    std::vector<int> labels;
    std::vector<int> domain_ids;                      // per row
    std::vector<std::pair<int, int>> domain_ranges;   // (start,count) per dataset
};

Batch sample_balanced_batch(std::span<const DomainDataset> datasets, int batch_per_domain,
                            Rng& rng);

// Assembles a whole dataset (or several) into one evaluation batch.
Batch assemble_batch(std::span<const DomainDataset> datasets);

// Versioned binary cache: header (spec echo, seed) + raw arrays.
// Regeneration from the same spec and seed reproduces the file bit-exactly.
void save_dataset_cache(const std::string& path, const SyntheticSpec& spec, std::uint64_t seed,
                        std::span<const DomainDataset> domains);

struct DatasetCache {
    SyntheticSpec spec;
    std::uint64_t seed = 0;
    std::vector<DomainDataset> domains;
};

DatasetCache load_dataset_cache(const std::string& path);

// Uniform-noise probe inputs spanning the per-channel [min, max] envelope
// of `reference` (used for uncertainty-ordering checks).
DomainDataset make_uniform_noise_like(const DomainDataset& reference, int count, Rng& rng);

}  // namespace sage
