#pragma once

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "sage/errors.hpp"
#include "sage/tensor.hpp"

namespace sage {

// Guard for the 1/(1-F) renormalization. Near-total conflict is reported,
// not clamped.
inline constexpr double kConflictEpsilon = 1e-12;

// Non-negative per-class support collected by one classifier head.
struct EvidenceVector {
    std::vector<double> e;

    explicit EvidenceVector(std::vector<double> evidence);
    int num_classes() const { return static_cast<int>(e.size()); }
};

// Subjective-logic opinion: belief mass per class plus uncertainty mass.
// Valid instances satisfy u + sum(b) == 1 and all components >= 0.
struct MassSet {
    std::vector<double> b;
    double u = 1.0;

    int num_classes() const { return static_cast<int>(b.size()); }
    static MassSet vacuous(int num_classes) { return {std::vector<double>(num_classes, 0.0), 1.0}; }
    // Validates non-negativity and the sum-to-one invariant (tolerance `tol`).
    static MassSet checked(std::vector<double> b, double u, double tol = 1e-6);
};

// Dirichlet parameters; alpha = evidence + 1, so every component >= 1.
struct DirichletParams {
    std::vector<double> alpha;
    double strength() const;  // S = sum(alpha)
};

// b = e/S, u = C/S with S = sum(e_c + 1).
MassSet masses_from_evidence(const EvidenceVector& e);

// alpha = e + 1.
DirichletParams dirichlet_from_evidence(const EvidenceVector& e);

// Inverse map S = C/u, alpha = b*S + 1. u == 0 raises SaturationError.
DirichletParams dirichlet_from_masses(const MassSet& m);

// Reduced combination of two opinions with conflict renormalization.
// Raises ConflictError (carrying F) when 1 - F <= kConflictEpsilon.
MassSet combine_pair(const MassSet& m1, const MassSet& m2);

// Left fold of combine_pair; order-invariant up to roundoff.
MassSet combine_all(std::span<const MassSet> ms);

// Component-wise arithmetic mean of opinions (the vanilla-ensemble fallback).
MassSet average_masses(std::span<const MassSet> ms);

// log Dir(p | alpha); p must lie strictly inside the simplex
// (all p_c > 0, sum p = 1 within 1e-9).
double dirichlet_log_density(const DirichletParams& d, std::span<const double> p);

// (argmax_c b_c, u); ties break to the lowest class index.
std::pair<int, double> predict(const MassSet& m);

// ---------------------------------------------------------------------------
// Plain-text exchange format: one opinion per line, C+1 whitespace-separated
// decimals (b_1 ... b_C u). Malformed lines report their 1-based number.
// ---------------------------------------------------------------------------
std::vector<MassSet> parse_mass_sets(std::istream& in);
void write_mass_set(std::ostream& out, const MassSet& m);

// ---------------------------------------------------------------------------
// Differentiable batched mirror of the algebra above, used by the training
// path. Rows are samples. The plain functions are the reference oracle.
// ---------------------------------------------------------------------------

struct MassBatch {
    Tensor b;  // [B, C]
    Tensor u;  // [B]
};

MassBatch masses_from_evidence_batch(const Tensor& evidence);  // [B,C]

// Combines row-wise. Rows whose conflict leaves 1 - F <= kConflictEpsilon
// are flagged in `conflicted` (sized B) and excluded from gradient flow by
// substituting a unit denominator; callers drop those samples.
MassBatch combine_pair_batch(const MassBatch& m1, const MassBatch& m2,
                             std::vector<bool>& conflicted);

Tensor dirichlet_from_masses_batch(const MassBatch& m);  // alpha [B,C]

}  // namespace sage
